"""Synthetic malware families with ground-truth lineage, times and labels.

Children borrow their feature sets from their parents (union, then a
mutation_rate fraction resampled from the pool), which is what gives edges a
detectable similarity signal. The generator also emits labeled time examples
so the same families can train the time-model parameters.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .domain import (
    BinaryRecord,
    ConfigError,
    Dataset,
    LineageGraph,
    ParseError,
    Stamp,
    TimeTick,
    lineage_from_parent_map,
)
from .timemodel import LabeledTimeExample

_U64 = 2**64


@dataclass(frozen=True)
class GenConfig:
    """Family-generation knobs; obf_fraction is the sweep's obfuscation dial."""

    n_binaries: int = 30
    window: tuple[TimeTick, TimeTick] = (0, 365)
    p_multi_root: float = 0.1
    p_second_parent: float = 0.2
    feature_pool: int = 400
    mutation_rate: float = 0.1
    obf_fraction: float = 0.0
    p_empty: float = 0.5
    p_lag: float = 0.2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_binaries < 1:
            raise ConfigError("n_binaries must be >= 1")
        for name in ("p_multi_root", "p_second_parent", "obf_fraction", "p_empty"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not (0.0 <= self.mutation_rate < 1.0):
            raise ConfigError("mutation_rate must lie in [0, 1)")
        if not (0.0 < self.p_lag <= 1.0):
            raise ConfigError("p_lag must lie in (0, 1]")
        if self.window[0] >= self.window[1]:
            raise ConfigError("window must satisfy t_min < t_max")
        if self.window[1] - self.window[0] + 1 < self.n_binaries:
            raise ConfigError("window too small to give every binary a distinct tick")
        if self.feature_pool < 4:
            raise ConfigError("feature_pool must be >= 4")


def _draw_ticks(config: GenConfig, rng: np.random.Generator) -> list[int]:
    """Sorted uniform ticks, de-duplicated by +1 nudging, kept inside the window."""
    t_min, t_max = config.window
    ticks = sorted(int(t) for t in rng.integers(t_min, t_max + 1, size=config.n_binaries))
    for i in range(1, len(ticks)):
        if ticks[i] <= ticks[i - 1]:
            ticks[i] = ticks[i - 1] + 1
    n = len(ticks)
    for i in range(n - 1, -1, -1):  # nudging may overflow t_max; fold back
        cap = t_max - (n - 1 - i)
        if ticks[i] > cap:
            ticks[i] = cap
    return ticks


def _obfuscate(
    binaries: list[BinaryRecord],
    window: tuple[TimeTick, TimeTick],
    fraction: float,
    p_empty: float,
    rng: np.random.Generator,
) -> tuple[list[BinaryRecord], dict[str, str]]:
    """Replace exactly round(fraction * N) stamps; returns (binaries, id -> kind)."""
    n = len(binaries)
    n_obf = int(round(fraction * n))
    chosen = sorted(rng.choice(n, size=n_obf, replace=False)) if n_obf else []
    kinds: dict[str, str] = {}
    out = list(binaries)
    for i in chosen:
        b = out[i]
        if rng.random() < p_empty:
            stamp = Stamp.empty()
            kinds[b.id] = "empty"
        else:
            stamp = Stamp.value(int(rng.integers(window[0], window[1] + 1)))
            kinds[b.id] = "random"
        out[i] = replace(b, stamp=stamp)
    return out, kinds


def apply_obfuscation(
    dataset: Dataset, fraction: float, p_empty: float, rng: np.random.Generator
) -> Dataset:
    """New dataset with exactly round(fraction * N) stamps obfuscated.

    Each chosen stamp becomes empty with probability p_empty, else a uniform
    random tick from the window. Unchosen binaries are untouched.
    """
    if not (0.0 <= fraction <= 1.0):
        raise ConfigError(f"fraction must lie in [0, 1], got {fraction}")
    binaries, _ = _obfuscate(list(dataset.binaries), dataset.window, fraction, p_empty, rng)
    return Dataset(tuple(binaries), dataset.window)


def generate_family(
    config: GenConfig,
) -> tuple[Dataset, LineageGraph, dict[str, TimeTick], list[LabeledTimeExample]]:
    """One synthetic family: dataset, true lineage, true times, labeled examples.

    Binaries are created in increasing tick order. The first is a root; each
    later binary starts a fresh root line with probability p_multi_root, else
    inherits from one uniformly chosen earlier binary plus, with probability
    p_second_parent, a second one. Deterministic given config.seed.
    """
    rng = np.random.default_rng(config.seed)
    n = config.n_binaries
    ticks = _draw_ticks(config, rng)
    pool = rng.integers(0, _U64, size=config.feature_pool, dtype=np.uint64)
    root_size = max(4, config.feature_pool // 4)

    ids = [f"bin{i:04d}" for i in range(n)]
    features: list[set[int]] = []
    parent_map: dict[str, list[str]] = {}
    for i in range(n):
        if i == 0 or rng.random() < config.p_multi_root:
            feats = {int(f) for f in rng.choice(pool, size=root_size, replace=False)}
            parent_map[ids[i]] = []
        else:
            first = int(rng.integers(0, i))
            parents = [first]
            if i >= 2 and rng.random() < config.p_second_parent:
                second = int(rng.integers(0, i - 1))
                if second >= first:
                    second += 1
                parents.append(second)
            feats = set()
            for p in parents:
                feats |= features[p]
            n_mut = int(round(config.mutation_rate * len(feats)))
            if n_mut:
                feat_list = sorted(feats)
                drop = rng.choice(len(feat_list), size=min(n_mut, len(feat_list) - 1), replace=False)
                feats -= {feat_list[int(k)] for k in drop}
                fresh = [int(f) for f in pool if int(f) not in feats]
                if fresh:
                    picks = rng.choice(len(fresh), size=min(n_mut, len(fresh)), replace=False)
                    feats |= {fresh[int(k)] for k in picks}
            parent_map[ids[i]] = [ids[p] for p in sorted(parents)]
        features.append(feats)

    t_max = config.window[1]
    binaries: list[BinaryRecord] = []
    for i in range(n):
        lag = int(rng.geometric(config.p_lag)) - 1  # geometric with support {0,1,...}
        binaries.append(
            BinaryRecord(
                id=ids[i],
                features=frozenset(features[i]),
                stamp=Stamp.value(ticks[i]),
                first_seen=min(ticks[i] + lag, t_max),
            )
        )

    binaries, obf_kinds = _obfuscate(binaries, config.window, config.obf_fraction, config.p_empty, rng)

    examples = [
        LabeledTimeExample(
            true_creation=ticks[i],
            stamp=binaries[i].stamp,
            first_seen=binaries[i].first_seen,
            was_obfuscated=binaries[i].id in obf_kinds,
            obfuscation_kind=obf_kinds.get(binaries[i].id),
        )
        for i in range(n)
    ]
    dataset = Dataset(tuple(binaries), config.window)
    truth = lineage_from_parent_map(ids, parent_map)
    times = {ids[i]: ticks[i] for i in range(n)}
    return dataset, truth, times, examples


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def gen_config_to_json(config: GenConfig) -> dict:
    return {
        "n_binaries": config.n_binaries,
        "window": {"t_min": config.window[0], "t_max": config.window[1]},
        "p_multi_root": config.p_multi_root,
        "p_second_parent": config.p_second_parent,
        "feature_pool": config.feature_pool,
        "mutation_rate": config.mutation_rate,
        "obf_fraction": config.obf_fraction,
        "p_empty": config.p_empty,
        "p_lag": config.p_lag,
        "seed": config.seed,
    }


def save_gen_config(config: GenConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(gen_config_to_json(config), indent=2) + "\n", encoding="utf-8")


def load_gen_config(path: str | Path) -> GenConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        base = GenConfig()
        window = obj.get("window")
        win = (int(window["t_min"]), int(window["t_max"])) if window else base.window
        return GenConfig(
            n_binaries=int(obj.get("n_binaries", base.n_binaries)),
            window=win,
            p_multi_root=float(obj.get("p_multi_root", base.p_multi_root)),
            p_second_parent=float(obj.get("p_second_parent", base.p_second_parent)),
            feature_pool=int(obj.get("feature_pool", base.feature_pool)),
            mutation_rate=float(obj.get("mutation_rate", base.mutation_rate)),
            obf_fraction=float(obj.get("obf_fraction", base.obf_fraction)),
            p_empty=float(obj.get("p_empty", base.p_empty)),
            p_lag=float(obj.get("p_lag", base.p_lag)),
            seed=int(obj.get("seed", base.seed)),
        )
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"generator config does not match schema: {exc}") from exc
