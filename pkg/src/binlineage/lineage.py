"""Lineage probability model and the joint MAP search.

Given fixed creation times, the lineage factorizes per child: each binary
either is a root (probability p_root, forced when no earlier binary exists) or
draws k parents (truncated-geometric k) as a subset of its candidate set,
where a subset's probability is proportional to the product of per-parent
weights w_j = exp(lam * sim(child, j)). The per-child factorization makes the
model a proper distribution over lineages (subset sums are normalized
exactly) and keeps every term brute-forceable on small instances.

The joint algorithm alternates two simulated-annealing maximizations —
lineage given times, then times given the undirected skeleton (edge
directions follow the re-inferred times) — from times sampled out of the
per-binary posteriors, with independent restarts; the best-scoring restart
wins.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .domain import (
    Dataset,
    InfeasibleSkeletonError,
    InvalidLineageError,
    InvalidParentSetError,
    LineageGraph,
    ParseError,
    TimeTick,
    TooLargeError,
    UnknownIdError,
    ValidationError,
    lineage_from_parent_map,
    validate_dataset,
    validate_lineage,
)
from .similarity import SimilarityMatrix, similarity_matrix
from .timemodel import (
    NEG_INF,
    TimeModelParams,
    TimePosterior,
    evidence_grid,
    evidence_log_likelihood,
    exact_posterior,
    mh_posterior,
    sample_time,
    seen_log_likelihood,
    stamp_log_likelihood,
)

TimesAssignment = dict[str, TimeTick]


@dataclass(frozen=True)
class LineageModelParams:
    """Structure priors: root probability, parent-count decay, edge weighting.

    lam is the similarity weight temperature; candidate j of a child enters
    subset weights as exp(lam * sim).
    """

    p_root: float = 0.1
    p_k: float = 0.5
    k_max: int = 3
    lam: float = 4.0

    def __post_init__(self) -> None:
        if not (0.0 < self.p_root < 1.0):
            raise ValidationError("p_root must lie in (0, 1)")
        if not (0.0 < self.p_k < 1.0):
            raise ValidationError("p_k must lie in (0, 1)")
        if self.k_max < 1:
            raise ValidationError("k_max must be >= 1")
        if not self.lam > 0.0:
            raise ValidationError("lam must be > 0")


@dataclass(frozen=True)
class AnnealSchedule:
    """Geometric cooling: temperature T0 * alpha**iteration for `iters` steps."""

    t0: float = 5.0
    alpha: float = 0.995
    iters: int = 10_000

    def __post_init__(self) -> None:
        if self.t0 <= 0.0 or not (0.0 < self.alpha <= 1.0) or self.iters < 1:
            raise ValidationError("bad annealing schedule")


@dataclass(frozen=True)
class InferConfig:
    """Knobs of the joint inference loop."""

    restarts: int = 16
    max_rounds: int = 20
    epsilon: float = 1e-6
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    time_inference: str = "exact"  # "exact" | "mh"
    mh_samples: int = 50_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")
        if self.max_rounds < 1:
            raise ValidationError("max_rounds must be >= 1")
        if self.time_inference not in ("exact", "mh"):
            raise ValidationError(f"unknown time_inference {self.time_inference!r}")
        if self.mh_samples < 2:
            raise ValidationError("mh_samples must be >= 2")


@dataclass(frozen=True)
class RestartInfo:
    """Per-restart diagnostics: stream index, rounds run, final joint score.

    round_scores[0] is the joint score of the initial all-roots state at the
    sampled times; each later entry is the score after one full round, so the
    sequence is non-decreasing by construction.
    """

    restart_seed: int
    rounds: int
    joint_log_score: float
    round_scores: tuple[float, ...] = ()


@dataclass(frozen=True)
class LineageResult:
    lineage: LineageGraph
    times: TimesAssignment
    joint_log_score: float
    restarts: tuple[RestartInfo, ...]


# ---------------------------------------------------------------------------
# Per-child scoring
# ---------------------------------------------------------------------------

def candidate_parents(times: Mapping[str, TimeTick], child_id: str) -> set[str]:
    """All binaries with a strictly earlier tick; ties never produce edges."""
    if child_id not in times:
        raise UnknownIdError(child_id)
    tc = times[child_id]
    return {j for j, tj in times.items() if tj < tc}


def _log_truncated_geometric(k: int, k_eff: int, p_k: float) -> float:
    """log P(parent count = k) for geometric(p_k) renormalized to {1..k_eff}."""
    if k < 1 or k > k_eff:
        return NEG_INF
    q = 1.0 - p_k
    norm = sum(q ** (i - 1) for i in range(1, k_eff + 1))
    return (k - 1) * math.log(q) - math.log(norm)


def _log_subset_denominator(log_weights: list[float], k: int) -> float:
    """log of the elementary symmetric polynomial e_k over exp(log_weights).

    Log-space DP; exact for any k, cost O(len * k).
    """
    log_e = [0.0] + [NEG_INF] * k
    for lw in log_weights:
        for i in range(min(k, len(log_weights)), 0, -1):
            log_e[i] = np.logaddexp(log_e[i], log_e[i - 1] + lw)
    return float(log_e[k])


def parent_set_log_prob(
    child: str,
    parents: frozenset[str] | set[str],
    times: Mapping[str, TimeTick],
    sim: SimilarityMatrix,
    params: LineageModelParams,
) -> float:
    """log probability of one child's parent-set choice.

    Empty set means root: probability p_root, or 1 when the child has no
    candidates at all. A non-empty set of size k pays the non-root prior, the
    truncated-geometric count term, and its weight share among all k-subsets
    of the candidate set.
    """
    cands = candidate_parents(times, child)
    parents = frozenset(parents)
    if not parents:
        return 0.0 if not cands else math.log(params.p_root)
    if not parents <= cands:
        raise InvalidParentSetError(
            f"{sorted(parents - cands)} are not strictly-earlier candidates of {child!r}"
        )
    k = len(parents)
    if k > params.k_max:
        raise InvalidParentSetError(f"{k} parents exceeds k_max={params.k_max}")
    k_eff = min(params.k_max, len(cands))
    log_pk = _log_truncated_geometric(k, k_eff, params.p_k)
    cand_list = sorted(cands)
    log_ws = [params.lam * sim.by_id(child, j) for j in cand_list]
    log_num = sum(params.lam * sim.by_id(child, j) for j in sorted(parents))
    log_den = _log_subset_denominator(log_ws, k)
    return math.log(1.0 - params.p_root) + log_pk + log_num - log_den


def lineage_log_score(
    lineage: LineageGraph,
    times: Mapping[str, TimeTick],
    sim: SimilarityMatrix,
    params: LineageModelParams,
) -> float:
    """Sum of per-child parent-set log probabilities.

    Terms are summed in sorted-id order so the score is bit-identical under
    any permutation of the node list.
    """
    violations = validate_lineage(lineage, times)
    if violations:
        raise InvalidLineageError(str(violations[0]))
    parent_map = lineage.parent_map()
    return sum(
        parent_set_log_prob(n, parent_map[n], times, sim, params)
        for n in sorted(lineage.node_ids)
    )


def joint_log_score(
    lineage: LineageGraph,
    times: Mapping[str, TimeTick],
    dataset: Dataset,
    time_params: TimeModelParams,
    lineage_params: LineageModelParams,
    sim: SimilarityMatrix | None = None,
) -> float:
    """Evidence terms at the assigned times plus the lineage structure score.

    The uniform creation-time prior is a constant and omitted. Any impossible
    evidence (e.g. a binary seen before its assigned creation tick) makes the
    whole score -inf.
    """
    if sim is None:
        sim = similarity_matrix(dataset)
    total = 0.0
    for b in dataset.binaries:
        t = times[b.id]
        total += stamp_log_likelihood(t, b.stamp, time_params)
        total += seen_log_likelihood(t, b.first_seen, time_params)
    if total == NEG_INF:
        return NEG_INF
    return total + lineage_log_score(lineage, times, sim, lineage_params)


# ---------------------------------------------------------------------------
# Cached per-child scorer for fixed times (structure annealing)
# ---------------------------------------------------------------------------

class _ChildTerms:
    """Per-child candidate sets, weights and cached normalizers at fixed times."""

    def __init__(
        self,
        dataset: Dataset,
        times: Mapping[str, TimeTick],
        sim: SimilarityMatrix,
        params: LineageModelParams,
    ) -> None:
        self.ids = dataset.ids
        n = len(self.ids)
        ticks = [times[i] for i in self.ids]
        self.params = params
        self.log1m_root = math.log(1.0 - params.p_root)
        self.log_root = math.log(params.p_root)
        self.cand: list[list[int]] = []
        self.k_eff: list[int] = []
        self.log_w = params.lam * np.asarray(sim.values, dtype=float)
        self.log_den: list[list[float]] = []  # [child][k-1]
        self.log_pk: list[list[float]] = []
        for c in range(n):
            cand = [j for j in range(n) if ticks[j] < ticks[c]]
            self.cand.append(cand)
            k_eff = min(params.k_max, len(cand))
            self.k_eff.append(k_eff)
            lws = [float(self.log_w[c, j]) for j in cand]
            dens = [_log_subset_denominator(lws, k) for k in range(1, k_eff + 1)]
            self.log_den.append(dens)
            self.log_pk.append(
                [_log_truncated_geometric(k, k_eff, params.p_k) for k in range(1, k_eff + 1)]
            )

    def term(self, c: int, parents: frozenset[int] | set[int]) -> float:
        if not parents:
            return 0.0 if not self.cand[c] else self.log_root
        k = len(parents)
        log_num = float(sum(self.log_w[c, j] for j in parents))
        return self.log1m_root + self.log_pk[c][k - 1] + log_num - self.log_den[c][k - 1]


def max_lineage_given_times(
    times: Mapping[str, TimeTick],
    dataset: Dataset,
    sim: SimilarityMatrix,
    params: LineageModelParams,
    schedule: AnnealSchedule,
    seed: int,
) -> LineageGraph:
    """Simulated annealing over per-child parent sets at fixed times.

    Starts from the all-roots state (always valid). Each iteration picks a
    child and one of four moves -- toggle-root, add-parent, remove-parent,
    swap-parent -- respecting candidate sets and k_max, and applies the
    Metropolis criterion at the current temperature. Returns the best state
    seen. Deterministic given seed.
    """
    terms_cache = _ChildTerms(dataset, times, sim, params)
    ids = dataset.ids
    n = len(ids)
    rng = np.random.default_rng(seed)

    parents: list[set[int]] = [set() for _ in range(n)]
    terms = [terms_cache.term(c, parents[c]) for c in range(n)]
    total = sum(terms)
    best_total = total
    best_parents = [frozenset(s) for s in parents]

    temp = schedule.t0
    for _ in range(schedule.iters):
        c = int(rng.integers(0, n))
        move = int(rng.integers(0, 4))
        cur = parents[c]
        cand = terms_cache.cand[c]
        proposal: set[int] | None = None
        if move == 0:  # toggle-root
            if cur:
                proposal = set()
            elif cand:
                proposal = {cand[int(rng.integers(0, len(cand)))]}
        elif move == 1:  # add-parent
            if len(cur) < terms_cache.k_eff[c]:
                free = [j for j in cand if j not in cur]
                if free:
                    proposal = set(cur)
                    proposal.add(free[int(rng.integers(0, len(free)))])
        elif move == 2:  # remove-parent
            if cur:
                victim = sorted(cur)[int(rng.integers(0, len(cur)))]
                proposal = set(cur)
                proposal.discard(victim)
        else:  # swap-parent
            if cur and len(cand) > len(cur):
                victim = sorted(cur)[int(rng.integers(0, len(cur)))]
                free = [j for j in cand if j not in cur]
                proposal = set(cur)
                proposal.discard(victim)
                proposal.add(free[int(rng.integers(0, len(free)))])
        if proposal is not None:
            new_term = terms_cache.term(c, proposal)
            delta = new_term - terms[c]
            if delta >= 0.0 or rng.random() < math.exp(delta / temp):
                parents[c] = proposal
                terms[c] = new_term
                total += delta
                if total > best_total:
                    best_total = total
                    best_parents = [frozenset(s) for s in parents]
        temp *= schedule.alpha
    return lineage_from_parent_map(
        ids, {ids[c]: [ids[j] for j in best_parents[c]] for c in range(n)}
    )


# ---------------------------------------------------------------------------
# Vectorized joint objective for the times annealer
# ---------------------------------------------------------------------------

class _JointObjective:
    """Joint score of (times, redirected skeleton), vectorized over children.

    For k_max <= 3 the subset normalizers use the closed forms of the
    elementary symmetric polynomials in the candidate weight power sums;
    larger k_max falls back to the per-child log-space DP.
    """

    def __init__(
        self,
        dataset: Dataset,
        skeleton: np.ndarray,
        sim: SimilarityMatrix,
        time_params: TimeModelParams,
        lineage_params: LineageModelParams,
    ) -> None:
        self.n = len(dataset.binaries)
        self.t_min, self.t_max = time_params.window
        self.skeleton = skeleton
        self.params = lineage_params
        self.log_w = lineage_params.lam * np.asarray(sim.values, dtype=float)
        self.w = np.exp(self.log_w)
        self.w2 = self.w * self.w
        self.w3 = self.w2 * self.w
        np.fill_diagonal(self.w, 0.0)  # diagonal never a candidate; keep sums clean
        np.fill_diagonal(self.w2, 0.0)
        np.fill_diagonal(self.w3, 0.0)
        self.evidence = np.stack([evidence_grid(b, time_params) for b in dataset.binaries])
        q = 1.0 - lineage_params.p_k
        self.geo_cum = np.cumsum(q ** np.arange(lineage_params.k_max))
        self.log_geo = np.arange(lineage_params.k_max) * math.log(q)
        self.log_root = math.log(lineage_params.p_root)
        self.log1m_root = math.log(1.0 - lineage_params.p_root)
        self._rows = np.arange(self.n)

    def parent_mask(self, ticks: np.ndarray) -> np.ndarray | None:
        """Skeleton edges directed earlier -> later; None when a tie blocks one."""
        eq = ticks[None, :] == ticks[:, None]
        if np.any(self.skeleton & eq):
            return None
        lt = ticks[None, :] < ticks[:, None]
        return self.skeleton & lt

    def _log_esym(self, cand: np.ndarray, k_count: np.ndarray) -> np.ndarray:
        """log e_k of each child's candidate weights, selected at k_count[c]."""
        kmax = self.params.k_max
        if kmax <= 3:
            s1 = (self.w * cand).sum(axis=1)
            cols = [s1]
            if kmax >= 2:
                s2 = (self.w2 * cand).sum(axis=1)
                cols.append((s1 * s1 - s2) / 2.0)
            if kmax >= 3:
                s3 = (self.w3 * cand).sum(axis=1)
                cols.append((s1**3 - 3.0 * s1 * s2 + 2.0 * s3) / 6.0)
            es = np.stack(cols, axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                log_es = np.log(np.maximum(es, 0.0))
        else:
            log_es = np.full((self.n, kmax), NEG_INF)
            for c in range(self.n):
                lws = [float(self.log_w[c, j]) for j in np.nonzero(cand[c])[0]]
                for k in range(1, min(kmax, len(lws)) + 1):
                    log_es[c, k - 1] = _log_subset_denominator(lws, k)
        out = np.zeros(self.n)
        nz = k_count > 0
        out[nz] = log_es[nz, k_count[nz] - 1]
        return out

    def structure_score(self, ticks: np.ndarray, parents: np.ndarray) -> float:
        """Lineage log score of the directed skeleton at the given ticks."""
        k_count = parents.sum(axis=1)
        if np.any(k_count > self.params.k_max):
            return NEG_INF
        cand = ticks[None, :] < ticks[:, None]
        np.fill_diagonal(cand, False)
        n_cand = cand.sum(axis=1)
        k_eff = np.minimum(self.params.k_max, n_cand)
        is_root = k_count == 0
        terms = np.where(is_root, np.where(n_cand > 0, self.log_root, 0.0), 0.0)
        nz = ~is_root
        if np.any(nz):
            log_den = self._log_esym(cand, k_count)
            log_num = (self.log_w * parents).sum(axis=1)
            log_pk = self.log_geo[k_count[nz] - 1] - np.log(self.geo_cum[k_eff[nz] - 1])
            terms[nz] = self.log1m_root + log_pk + log_num[nz] - log_den[nz]
        return float(terms.sum())

    def joint(self, ticks: np.ndarray) -> float:
        parents = self.parent_mask(ticks)
        if parents is None:
            return NEG_INF
        ev = float(self.evidence[self._rows, ticks - self.t_min].sum())
        if ev == NEG_INF:
            return NEG_INF
        return ev + self.structure_score(ticks, parents)


#: Half-width of the random-walk tick proposal in the times annealer.
TIME_STEP = 14


def max_times_given_skeleton(
    lineage: LineageGraph,
    times: Mapping[str, TimeTick],
    dataset: Dataset,
    sim: SimilarityMatrix,
    time_params: TimeModelParams,
    lineage_params: LineageModelParams,
    schedule: AnnealSchedule,
    seed: int,
) -> tuple[TimesAssignment, LineageGraph]:
    """Simulated annealing over creation times with the edge set held as an
    undirected skeleton.

    ``times`` is the initial assignment (must make ``lineage`` valid). Each
    move re-proposes one binary's tick by a +/-14 random-walk step clipped to
    the window; the skeleton is re-directed from earlier to later endpoint,
    and states where a tie leaves an edge undirectable or a node exceeds
    k_max parents score -inf. (Cycles cannot arise: directions follow
    strictly increasing times.) Returns the best times seen and the lineage
    they induce. Deterministic given seed.
    """
    ids = dataset.ids
    index = {b: i for i, b in enumerate(ids)}
    n = len(ids)
    skeleton = np.zeros((n, n), dtype=bool)
    for p, c in lineage.edges:
        skeleton[index[p], index[c]] = True
        skeleton[index[c], index[p]] = True

    objective = _JointObjective(dataset, skeleton, sim, time_params, lineage_params)
    ticks = np.array([times[i] for i in ids], dtype=np.int64)
    score = objective.joint(ticks)
    if score == NEG_INF:
        raise InfeasibleSkeletonError("initial times do not direct the skeleton feasibly")
    best_score = score
    best_ticks = ticks.copy()

    rng = np.random.default_rng(seed)
    who = rng.integers(0, n, size=schedule.iters)
    steps = rng.integers(-TIME_STEP, TIME_STEP + 1, size=schedule.iters)
    log_us = np.log(rng.random(schedule.iters))

    t_min, t_max = time_params.window
    temp = schedule.t0
    for it in range(schedule.iters):
        c = int(who[it])
        proposed = int(np.clip(ticks[c] + steps[it], t_min, t_max))
        if proposed != ticks[c]:
            old = int(ticks[c])
            ticks[c] = proposed
            new_score = objective.joint(ticks)
            delta = new_score - score
            if delta >= 0.0 or log_us[it] < delta / temp:
                score = new_score
                if score > best_score:
                    best_score = score
                    best_ticks = ticks.copy()
            else:
                ticks[c] = old
        temp *= schedule.alpha

    parents = objective.parent_mask(best_ticks)
    assert parents is not None  # best state is feasible by construction
    parent_map = {
        ids[c]: [ids[j] for j in np.nonzero(parents[c])[0]] for c in range(n)
    }
    out_lineage = lineage_from_parent_map(ids, parent_map)
    out_times = {ids[i]: int(best_ticks[i]) for i in range(n)}
    return out_times, out_lineage


# ---------------------------------------------------------------------------
# The full joint algorithm
# ---------------------------------------------------------------------------

def compute_posteriors(
    dataset: Dataset, time_params: TimeModelParams, config: InferConfig, seed: int
) -> dict[str, TimePosterior]:
    """Step-1 per-binary posteriors, exact or MH per the config."""
    out: dict[str, TimePosterior] = {}
    for i, b in enumerate(dataset.binaries):
        if config.time_inference == "exact":
            out[b.id] = exact_posterior(b, time_params)
        else:
            mh_seed = int(np.random.SeedSequence([seed, 0, i]).generate_state(1)[0])
            out[b.id] = mh_posterior(
                b, time_params, config.mh_samples, config.mh_samples // 10, mh_seed
            )
    return out


def _sample_times(
    dataset: Dataset,
    posteriors: dict[str, TimePosterior],
    time_params: TimeModelParams,
    rng: np.random.Generator,
) -> TimesAssignment:
    times: TimesAssignment = {}
    for b in dataset.binaries:
        post = posteriors[b.id]
        t = sample_time(post, rng)
        for _ in range(100):
            if evidence_log_likelihood(t, b, time_params) > NEG_INF:
                break
            t = sample_time(post, rng)
        else:
            t = post.mode()
        times[b.id] = t
    return times


def infer_lineage(
    dataset: Dataset,
    time_params: TimeModelParams,
    lineage_params: LineageModelParams,
    config: InferConfig,
    seed: int,
) -> LineageResult:
    """Joint MAP inference of creation times and lineage.

    Per restart: sample times from the per-binary posteriors, then alternate
    annealed maximization of lineage-given-times and times-given-skeleton
    until the joint log score improves by less than config.epsilon or
    config.max_rounds is hit. The best restart wins, ties broken by the
    lowest restart index. Fully deterministic given seed.
    """
    validate_dataset(dataset)
    sim = similarity_matrix(dataset)
    posteriors = compute_posteriors(dataset, time_params, config, seed)

    best: tuple[float, int, LineageGraph, TimesAssignment] | None = None
    infos: list[RestartInfo] = []
    for r in range(config.restarts):
        rng = np.random.default_rng([seed, 1, r])
        times = _sample_times(dataset, posteriors, time_params, rng)
        # All-roots is valid for any times and is the annealer's own start
        # state, so it anchors both convergence and per-round monotonicity.
        lineage = lineage_from_parent_map(dataset.ids, {})
        lineage_score_at_times = lineage_log_score(lineage, times, sim, lineage_params)
        joint = joint_log_score(lineage, times, dataset, time_params, lineage_params, sim)
        round_scores = [joint]
        rounds = 0
        for _ in range(config.max_rounds):
            rounds += 1
            seed3 = int(rng.integers(0, 2**63))
            seed4 = int(rng.integers(0, 2**63))
            candidate = max_lineage_given_times(
                times, dataset, sim, lineage_params, config.anneal, seed3
            )
            candidate_score = lineage_log_score(candidate, times, sim, lineage_params)
            if candidate_score >= lineage_score_at_times:
                lineage = candidate
            times, lineage = max_times_given_skeleton(
                lineage, times, dataset, sim, time_params, lineage_params,
                config.anneal, seed4,
            )
            lineage_score_at_times = lineage_log_score(lineage, times, sim, lineage_params)
            new_joint = joint_log_score(
                lineage, times, dataset, time_params, lineage_params, sim
            )
            improvement = new_joint - joint
            joint = new_joint
            round_scores.append(joint)
            if improvement < config.epsilon:
                break
        infos.append(RestartInfo(r, rounds, joint, tuple(round_scores)))
        if best is None or joint > best[0]:
            best = (joint, r, lineage, times)
    assert best is not None
    return LineageResult(
        lineage=best[2], times=best[3], joint_log_score=best[0], restarts=tuple(infos)
    )


# ---------------------------------------------------------------------------
# Exhaustive oracle
# ---------------------------------------------------------------------------

def brute_force_lineage(
    times: Mapping[str, TimeTick],
    dataset: Dataset,
    sim: SimilarityMatrix,
    params: LineageModelParams,
) -> LineageGraph:
    """Exact argmax lineage at fixed times by enumerating per-child choices.

    The score factorizes per child, so enumerating each child's options
    (root, or every candidate subset up to k_max) covers every valid lineage.
    Ties are broken per child by the lexicographically smallest sorted parent
    tuple (root first), giving a canonical edge set. Bounded to N <= 8 and
    k_max <= 2.
    """
    n = len(dataset.binaries)
    if n > 8 or params.k_max > 2:
        raise TooLargeError(f"N={n}, k_max={params.k_max} exceeds the N<=8, k_max<=2 bound")
    parent_map: dict[str, tuple[str, ...]] = {}
    for b in dataset.binaries:
        cands = sorted(candidate_parents(times, b.id))
        options: list[tuple[str, ...]] = [()]
        for k in range(1, min(params.k_max, len(cands)) + 1):
            options.extend(itertools.combinations(cands, k))
        best_opt: tuple[str, ...] | None = None
        best_score = NEG_INF
        for opt in options:
            s = parent_set_log_prob(b.id, frozenset(opt), times, sim, params)
            if best_opt is None or s > best_score or (s == best_score and opt < best_opt):
                best_opt = opt
                best_score = s
        parent_map[b.id] = best_opt or ()
    return lineage_from_parent_map(dataset.ids, parent_map)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def lineage_params_to_json(params: LineageModelParams) -> dict:
    return {
        "p_root": params.p_root,
        "p_k": params.p_k,
        "k_max": params.k_max,
        "lambda": params.lam,
    }


def save_lineage_params(params: LineageModelParams, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(lineage_params_to_json(params), indent=2) + "\n", encoding="utf-8"
    )


def load_lineage_params(path: str | Path) -> LineageModelParams:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return LineageModelParams(
            p_root=float(obj.get("p_root", 0.1)),
            p_k=float(obj.get("p_k", 0.5)),
            k_max=int(obj.get("k_max", 3)),
            lam=float(obj.get("lambda", 4.0)),
        )
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(f"lineage-params document does not match schema: {exc}") from exc


def infer_config_to_json(config: InferConfig) -> dict:
    return {
        "restarts": config.restarts,
        "max_rounds": config.max_rounds,
        "epsilon": config.epsilon,
        "anneal": {
            "t0": config.anneal.t0,
            "alpha": config.anneal.alpha,
            "iters": config.anneal.iters,
        },
        "time_inference": config.time_inference,
        "mh_samples": config.mh_samples,
        "seed": config.seed,
    }


def save_infer_config(config: InferConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(infer_config_to_json(config), indent=2) + "\n", encoding="utf-8")


def load_infer_config(path: str | Path) -> InferConfig:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        anneal_obj = obj.get("anneal", {})
        defaults = AnnealSchedule()
        anneal = AnnealSchedule(
            t0=float(anneal_obj.get("t0", defaults.t0)),
            alpha=float(anneal_obj.get("alpha", defaults.alpha)),
            iters=int(anneal_obj.get("iters", defaults.iters)),
        )
        base = InferConfig()
        return InferConfig(
            restarts=int(obj.get("restarts", base.restarts)),
            max_rounds=int(obj.get("max_rounds", base.max_rounds)),
            epsilon=float(obj.get("epsilon", base.epsilon)),
            anneal=anneal,
            time_inference=str(obj.get("time_inference", base.time_inference)),
            mh_samples=int(obj.get("mh_samples", base.mh_samples)),
            seed=int(obj.get("seed", base.seed)),
        )
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(f"inference-config document does not match schema: {exc}") from exc
