"""Shared helpers: random instance builders used across the suite."""

from __future__ import annotations

import numpy as np
import pytest

from binlineage.domain import BinaryRecord, Dataset, LineageGraph, Stamp, lineage_from_parent_map
from binlineage.similarity import similarity_matrix


def random_dataset(
    rng: np.random.Generator,
    n: int,
    window: tuple[int, int] = (0, 200),
    feature_pool: int = 40,
    with_seen: bool = True,
) -> Dataset:
    """Random dataset with mixed stamp kinds and optional sightings."""
    t_min, t_max = window
    binaries = []
    for i in range(n):
        true_t = int(rng.integers(t_min, t_max + 1))
        kind = rng.random()
        if kind < 0.5:
            stamp = Stamp.value(true_t)
        elif kind < 0.7:
            stamp = Stamp.value(int(rng.integers(t_min, t_max + 1)))
        elif kind < 0.85:
            stamp = Stamp.empty()
        else:
            stamp = Stamp.missing()
        seen = None
        if with_seen and rng.random() < 0.7:
            seen = min(true_t + int(rng.geometric(0.25)) - 1, t_max)
        n_feats = int(rng.integers(3, 12))
        feats = frozenset(int(f) for f in rng.integers(0, feature_pool, size=n_feats))
        binaries.append(BinaryRecord(f"b{i:03d}", feats or frozenset({0}), stamp, seen))
    return Dataset(tuple(binaries), window)


def random_evidenced_binary(
    rng: np.random.Generator, ident: str, window: tuple[int, int] = (0, 1000)
) -> BinaryRecord:
    """Random binary with mixed stamp kinds and a sighting always present.

    Built for MH-vs-exact validation, so two slow-mixing-by-construction
    posteriors are kept out of the mix (they defeat any correct sampler with
    the pinned +/-7 walk and 50k-sample budget, not just ours):

    * no evidence at all — a uniform posterior over the whole window cannot
      be traversed by a bounded walk in 50k steps, so every binary carries a
      sighting, whose geometric decay bounds the effective support;
    * a value stamp 5..60 ticks before the sighting — that splits the mass
      into two comparable modes (stamp spike vs sighting bump) whose
      switching time exceeds the budget. Stamps elsewhere (at the creation
      tick, far before, or after the sighting) leave one dominant mode.
    """
    t_min, t_max = window
    true_t = int(rng.integers(t_min, t_max + 1))
    seen = min(true_t + min(int(rng.geometric(0.2)) - 1, 12), t_max)
    kind = rng.random()
    if kind < 0.4:
        stamp = Stamp.value(true_t)
    elif kind < 0.6:
        lo, hi = seen - 60, seen - 4
        u = int(rng.integers(t_min, t_max + 1 - (hi - lo)))
        if u >= lo:
            u += hi - lo
        stamp = Stamp.value(u)
    elif kind < 0.8:
        stamp = Stamp.empty()
    else:
        stamp = Stamp.missing()
    return BinaryRecord(ident, frozenset({1, 2}), stamp, seen)


def random_times(rng: np.random.Generator, dataset: Dataset, distinct: bool = True) -> dict[str, int]:
    t_min, t_max = dataset.window
    n = len(dataset.binaries)
    if distinct:
        ticks = rng.choice(t_max - t_min + 1, size=n, replace=False) + t_min
    else:
        ticks = rng.integers(t_min, t_max + 1, size=n)
    return {b.id: int(t) for b, t in zip(dataset.binaries, ticks)}


def feasible_times(rng: np.random.Generator, dataset: Dataset, time_params) -> dict[str, int]:
    """Random times with finite per-binary evidence (never after a sighting)."""
    from binlineage.timemodel import evidence_log_likelihood

    t_min, t_max = dataset.window
    out: dict[str, int] = {}
    for b in dataset.binaries:
        ok = [
            t for t in range(t_min, t_max + 1)
            if evidence_log_likelihood(t, b, time_params) > float("-inf")
        ]
        out[b.id] = int(ok[int(rng.integers(0, len(ok)))])
    return out


def random_lineage(rng: np.random.Generator, ids: list[str], times: dict[str, int], k_max: int = 2) -> LineageGraph:
    """Random valid lineage for the given times."""
    parent_map: dict[str, list[str]] = {}
    for child in ids:
        cands = [j for j in ids if times[j] < times[child]]
        if not cands or rng.random() < 0.3:
            parent_map[child] = []
        else:
            k = int(rng.integers(1, min(k_max, len(cands)) + 1))
            picks = rng.choice(len(cands), size=k, replace=False)
            parent_map[child] = [cands[int(i)] for i in picks]
    return lineage_from_parent_map(ids, parent_map)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260811)
