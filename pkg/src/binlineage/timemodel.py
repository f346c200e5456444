"""Per-binary creation-time model: priors, likelihoods, posteriors, learning.

Generative story for one binary with hidden creation tick t (uniform prior
over the dataset window):

* time stamp — with probability (1 - p_obf) the author leaves the compiler
  stamp alone and it equals t exactly; with probability p_obf * p_empty the
  stamp field is blanked ("empty"); with probability p_obf * (1 - p_empty) it
  is overwritten with a tick drawn uniformly from the window. An unreadable
  header ("missing") carries no evidence at all.
* first seen — when present, the sighting lags creation by a Geometric(p_lag)
  number of ticks (support 0, 1, 2, ...); a sighting before creation is
  impossible.

The window is small enough that the posterior is exactly enumerable on the
tick grid; the random-walk Metropolis sampler is kept alongside as the
inference path that scales past the grid, validated against it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .domain import (
    BinaryRecord,
    DegenerateEvidenceError,
    EmptyTrainingSetError,
    OutOfWindowError,
    ParseError,
    Stamp,
    TimeTick,
    ValidationError,
    _stamp_from_json,
    _stamp_to_json,
)

NEG_INF = float("-inf")

#: Half-width of the symmetric random-walk proposal used by mh_posterior.
MH_STEP = 7


@dataclass(frozen=True)
class TimeModelParams:
    """Stamp-obfuscation priors and the first-seen lag rate.

    p_obf     probability the stamp is obfuscated
    p_empty   probability an obfuscated stamp is blanked (vs randomized)
    p_lag     geometric rate of the first-seen lag, in (0, 1]
    window    inclusive (t_min, t_max) tick range of the dataset
    """

    p_obf: float
    p_empty: float
    p_lag: float
    window: tuple[TimeTick, TimeTick]

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_obf <= 1.0 and 0.0 <= self.p_empty <= 1.0):
            raise ValidationError("p_obf and p_empty must lie in [0, 1]")
        if not (0.0 < self.p_lag <= 1.0):
            raise ValidationError("p_lag must lie in (0, 1]")
        if self.window[0] >= self.window[1]:
            raise ValidationError("window must satisfy t_min < t_max")

    @property
    def window_size(self) -> int:
        return self.window[1] - self.window[0] + 1


def _check_in_window(t: TimeTick, params: TimeModelParams) -> None:
    if not (params.window[0] <= t <= params.window[1]):
        raise OutOfWindowError(f"tick {t} outside window {params.window}")


def stamp_log_likelihood(t: TimeTick, stamp: Stamp, params: TimeModelParams) -> float:
    """log P(stamp | creation = t), marginalizing the obfuscation variables.

    Missing stamps return 0.0 (log 1, no evidence). Empty stamps are constant
    in t. A value stamp mixes the exact clean branch with the uniform
    randomized branch.
    """
    _check_in_window(t, params)
    if stamp.kind == Stamp.MISSING:
        return 0.0
    if stamp.kind == Stamp.EMPTY:
        p = params.p_obf * params.p_empty
        return math.log(p) if p > 0.0 else NEG_INF
    v = stamp.tick
    p = 0.0
    if params.window[0] <= v <= params.window[1]:
        p += params.p_obf * (1.0 - params.p_empty) / params.window_size
    if v == t:
        p += 1.0 - params.p_obf
    return math.log(p) if p > 0.0 else NEG_INF


def seen_log_likelihood(t: TimeTick, seen: TimeTick | None, params: TimeModelParams) -> float:
    """log P(first_seen | creation = t) under the geometric lag model.

    Absent sightings contribute nothing; a sighting before creation is
    impossible (-inf).
    """
    _check_in_window(t, params)
    if seen is None:
        return 0.0
    lag = seen - t
    if lag < 0:
        return NEG_INF
    if params.p_lag == 1.0:
        return 0.0 if lag == 0 else NEG_INF
    return math.log(params.p_lag) + lag * math.log(1.0 - params.p_lag)


def evidence_log_likelihood(t: TimeTick, binary: BinaryRecord, params: TimeModelParams) -> float:
    """Total per-binary evidence term at creation tick t."""
    return stamp_log_likelihood(t, binary.stamp, params) + seen_log_likelihood(
        t, binary.first_seen, params
    )


@dataclass(frozen=True)
class TimePosterior:
    """Discrete creation-time distribution aligned to the dataset window."""

    window: tuple[TimeTick, TimeTick]
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", probs)
        if probs.shape != (self.window[1] - self.window[0] + 1,):
            raise ValidationError("posterior length must match the window")
        if np.any(probs < 0.0) or abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValidationError("posterior must be non-negative and sum to 1")

    def ticks(self) -> np.ndarray:
        return np.arange(self.window[0], self.window[1] + 1)

    def prob_of(self, t: TimeTick) -> float:
        if not (self.window[0] <= t <= self.window[1]):
            return 0.0
        return float(self.probs[t - self.window[0]])

    def mean(self) -> float:
        return float(np.dot(self.ticks(), self.probs))

    def mode(self) -> TimeTick:
        return int(self.window[0] + int(np.argmax(self.probs)))


def total_variation(a: TimePosterior, b: TimePosterior) -> float:
    """TV distance between two posteriors on the same window."""
    if a.window != b.window:
        raise ValidationError("posteriors live on different windows")
    return 0.5 * float(np.abs(a.probs - b.probs).sum())


def _evidence_grid(binary: BinaryRecord, params: TimeModelParams) -> np.ndarray:
    t_min, t_max = params.window
    return np.array(
        [evidence_log_likelihood(t, binary, params) for t in range(t_min, t_max + 1)]
    )


def evidence_grid(binary: BinaryRecord, params: TimeModelParams) -> np.ndarray:
    """Vectorized per-tick evidence log likelihood across the whole window.

    Equal to evaluating evidence_log_likelihood at every tick; used where the
    grid is rebuilt in inner loops.
    """
    t_min, t_max = params.window
    width = t_max - t_min + 1
    stamp = binary.stamp
    if stamp.kind == Stamp.MISSING:
        out = np.zeros(width)
    elif stamp.kind == Stamp.EMPTY:
        p = params.p_obf * params.p_empty
        out = np.full(width, math.log(p) if p > 0.0 else NEG_INF)
    else:
        floor = 0.0
        if t_min <= stamp.tick <= t_max:
            floor = params.p_obf * (1.0 - params.p_empty) / width
        probs = np.full(width, floor)
        if t_min <= stamp.tick <= t_max:
            probs[stamp.tick - t_min] += 1.0 - params.p_obf
        with np.errstate(divide="ignore"):
            out = np.log(probs)
    if binary.first_seen is not None:
        lag = binary.first_seen - np.arange(t_min, t_max + 1)
        if params.p_lag == 1.0:
            seen = np.where(lag == 0, 0.0, NEG_INF)
        else:
            seen = np.where(
                lag >= 0,
                math.log(params.p_lag) + lag * math.log1p(-params.p_lag),
                NEG_INF,
            )
        out = out + seen
    return out


def exact_posterior(binary: BinaryRecord, params: TimeModelParams) -> TimePosterior:
    """Exact grid posterior over creation ticks (uniform prior over window)."""
    logp = _evidence_grid(binary, params)
    if np.all(np.isneginf(logp)):
        raise DegenerateEvidenceError(
            f"binary {binary.id!r}: evidence rules out every tick in the window"
        )
    logz = logsumexp(logp)
    probs = np.exp(logp - logz)
    probs /= probs.sum()
    return TimePosterior(params.window, probs)


def mh_posterior(
    binary: BinaryRecord,
    params: TimeModelParams,
    n_samples: int,
    burn_in: int,
    seed: int,
) -> TimePosterior:
    """Random-walk Metropolis histogram of the creation-time posterior.

    Proposal: symmetric integer step ~ Uniform{-7..+7} \\ {0}, reflected at the
    window bounds. Target is the evidence likelihood times the uniform prior.
    Deterministic given ``seed``. n_samples counts post-initialization chain
    states; the first ``burn_in`` of them are discarded from the histogram.
    """
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    if not (0 <= burn_in < n_samples):
        raise ValidationError("burn_in must satisfy 0 <= burn_in < n_samples")
    logp = _evidence_grid(binary, params)
    if np.all(np.isneginf(logp)):
        raise DegenerateEvidenceError(
            f"binary {binary.id!r}: evidence rules out every tick in the window"
        )
    width = logp.shape[0]

    # Deterministic start at the likeliest grid point; starting on a
    # low-mass evidence spike can strand the chain for thousands of steps.
    start = int(np.argmax(logp))

    rng = np.random.default_rng(seed)
    raw_steps = rng.integers(0, 2 * MH_STEP, size=n_samples)
    log_us = np.log(rng.random(n_samples))

    counts = np.zeros(width, dtype=np.int64)
    cur = start
    cur_lp = float(logp[cur])
    hi = width - 1
    for i in range(n_samples):
        s = int(raw_steps[i])
        step = s - MH_STEP if s < MH_STEP else s - MH_STEP + 1
        nxt = cur + step
        while nxt < 0 or nxt > hi:
            if nxt < 0:
                nxt = -nxt
            if nxt > hi:
                nxt = 2 * hi - nxt
        nxt_lp = float(logp[nxt])
        if nxt_lp - cur_lp >= 0.0 or log_us[i] < nxt_lp - cur_lp:
            cur = nxt
            cur_lp = nxt_lp
        if i >= burn_in:
            counts[cur] += 1
    probs = counts / counts.sum()
    return TimePosterior(params.window, probs)


def sample_time(posterior: TimePosterior, rng: np.random.Generator) -> TimeTick:
    """Inverse-CDF draw; the returned tick always has posterior mass > 0."""
    cdf = np.cumsum(posterior.probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    idx = min(idx, len(posterior.probs) - 1)
    while posterior.probs[idx] <= 0.0:  # guard against cdf float plateaus
        idx += 1
    return int(posterior.window[0] + idx)


# ---------------------------------------------------------------------------
# Parameter learning
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledTimeExample:
    """One training record with known creation time and obfuscation labels."""

    true_creation: TimeTick
    stamp: Stamp
    first_seen: TimeTick | None
    was_obfuscated: bool
    obfuscation_kind: str | None  # "empty" | "random" | None

    def __post_init__(self) -> None:
        if self.obfuscation_kind not in (None, "empty", "random"):
            raise ValidationError(f"bad obfuscation kind {self.obfuscation_kind!r}")
        if not self.was_obfuscated and (
            not self.stamp.is_value or self.stamp.tick != self.true_creation
        ):
            raise ValidationError("clean example must carry its true creation tick as stamp")


def learn_params(
    examples: list[LabeledTimeExample], window: tuple[TimeTick, TimeTick]
) -> TimeModelParams:
    """Add-one-smoothed estimates of the obfuscation and lag parameters.

    p_obf   = (1 + #obfuscated) / (2 + #examples)          Beta(1,1) mean
    p_empty = (1 + #empty) / (2 + #obfuscated)             Beta(1,1) mean
    p_lag   = (1 + #seen) / (1 + #seen + total lag)

    Smoothing keeps every branch probability strictly inside (0, 1) so no
    later likelihood evaluation can hit an impossible branch.
    """
    if not examples:
        raise EmptyTrainingSetError("learn_params needs at least one example")
    n = len(examples)
    k_obf = sum(1 for e in examples if e.was_obfuscated)
    k_empty = sum(1 for e in examples if e.was_obfuscated and e.obfuscation_kind == "empty")
    n_seen = 0
    total_lag = 0
    for e in examples:
        if e.first_seen is not None:
            n_seen += 1
            total_lag += max(0, e.first_seen - e.true_creation)
    p_obf = (1 + k_obf) / (2 + n)
    p_empty = (1 + k_empty) / (2 + k_obf)
    p_lag = (1 + n_seen) / (1 + n_seen + total_lag)
    return TimeModelParams(p_obf=p_obf, p_empty=p_empty, p_lag=p_lag, window=window)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def time_params_to_json(params: TimeModelParams) -> dict:
    # The window is dataset-scoped and deliberately not serialized.
    return {"p_obf": params.p_obf, "p_empty": params.p_empty, "p_lag": params.p_lag}


def save_time_params(params: TimeModelParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(time_params_to_json(params), indent=2) + "\n", encoding="utf-8")


def load_time_params(path: str | Path, window: tuple[TimeTick, TimeTick]) -> TimeModelParams:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        return TimeModelParams(
            p_obf=float(obj["p_obf"]),
            p_empty=float(obj["p_empty"]),
            p_lag=float(obj["p_lag"]),
            window=window,
        )
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"time-params document does not match schema: {exc}") from exc


def example_to_json(example: LabeledTimeExample) -> dict:
    return {
        "true_creation": example.true_creation,
        "stamp": _stamp_to_json(example.stamp),
        "first_seen": example.first_seen,
        "was_obfuscated": example.was_obfuscated,
        "obfuscation_kind": example.obfuscation_kind,
    }


def example_from_json(obj: object) -> LabeledTimeExample:
    try:
        return LabeledTimeExample(
            true_creation=int(obj["true_creation"]),  # type: ignore[index]
            stamp=_stamp_from_json(obj["stamp"]),  # type: ignore[index]
            first_seen=obj.get("first_seen"),  # type: ignore[union-attr]
            was_obfuscated=bool(obj["was_obfuscated"]),  # type: ignore[index]
            obfuscation_kind=obj.get("obfuscation_kind"),  # type: ignore[union-attr]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"training example does not match schema: {exc}") from exc


def save_training_set(examples: list[LabeledTimeExample], path: str | Path) -> None:
    payload = json.dumps([example_to_json(e) for e in examples], indent=2) + "\n"
    Path(path).write_text(payload, encoding="utf-8")


def load_training_set(path: str | Path) -> list[LabeledTimeExample]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(obj, list):
        raise ParseError("training set must be a JSON list")
    return [example_from_json(e) for e in obj]
