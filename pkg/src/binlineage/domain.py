"""Core data types shared by every module, plus dataset/lineage serialization.

Time is discretized to integer ticks (days since a dataset-local epoch), which
keeps every creation-time posterior exactly enumerable on a grid. All types are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

TimeTick = int

_UINT64_MAX = 2**64 - 1


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class BinLineageError(Exception):
    """Base class for all package errors."""


class ParseError(BinLineageError):
    """Malformed JSON or a document that does not match its schema."""


class ValidationError(BinLineageError):
    """Structurally well-formed input that violates a domain invariant."""


class UnknownIdError(BinLineageError):
    """A referenced binary id is not present where it is required."""


class EmptyFeatureSetError(BinLineageError):
    """Similarity over an empty feature set is undefined."""


class InputTooShortError(BinLineageError):
    """Byte input shorter than the requested n-gram width."""


class OutOfWindowError(BinLineageError):
    """A tick outside the dataset window where the window is required."""


class DegenerateEvidenceError(BinLineageError):
    """Evidence assigns zero probability to every tick in the window."""


class EmptyTrainingSetError(BinLineageError):
    """Parameter learning needs at least one labeled example."""


class InvalidParentSetError(BinLineageError):
    """Parent set violates the candidate set or the parent-count cap."""


class InvalidLineageError(BinLineageError):
    """Lineage fails validation against the given creation times."""


class InfeasibleSkeletonError(BinLineageError):
    """No feasible re-direction of the skeleton was found."""


class TooLargeError(BinLineageError):
    """Instance exceeds the exhaustive-enumeration bound."""


class NodeSetMismatchError(BinLineageError):
    """Predicted and true lineages cover different node sets."""


class IdMismatchError(BinLineageError):
    """Two time assignments cover different binary ids."""


class ConfigError(BinLineageError):
    """Invalid generator or inference configuration."""


# ---------------------------------------------------------------------------
# Stamps and binaries
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stamp:
    """Observed compiler time stamp: a tick, a zeroed field, or unreadable.

    ``empty`` models a blanked/zeroed header field (evidence of the "empty"
    obfuscation branch); ``missing`` means the header could not be read at all
    and contributes no likelihood term.
    """

    kind: str  # "value" | "empty" | "missing"
    tick: TimeTick | None = None

    VALUE = "value"
    EMPTY = "empty"
    MISSING = "missing"

    def __post_init__(self) -> None:
        if self.kind not in (self.VALUE, self.EMPTY, self.MISSING):
            raise ValidationError(f"unknown stamp kind {self.kind!r}")
        if self.kind == self.VALUE and self.tick is None:
            raise ValidationError("value stamp requires a tick")
        if self.kind != self.VALUE and self.tick is not None:
            raise ValidationError(f"{self.kind} stamp must not carry a tick")

    @classmethod
    def value(cls, tick: TimeTick) -> "Stamp":
        return cls(cls.VALUE, int(tick))

    @classmethod
    def empty(cls) -> "Stamp":
        return cls(cls.EMPTY)

    @classmethod
    def missing(cls) -> "Stamp":
        return cls(cls.MISSING)

    @property
    def is_value(self) -> bool:
        return self.kind == self.VALUE


@dataclass(frozen=True)
class BinaryRecord:
    """One malware sample: feature tokens plus noisy time evidence."""

    id: str
    features: frozenset[int]
    stamp: Stamp
    first_seen: TimeTick | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", frozenset(self.features))


@dataclass(frozen=True)
class Dataset:
    """An ordered set of binaries with a shared time window (inclusive)."""

    binaries: tuple[BinaryRecord, ...]
    window: tuple[TimeTick, TimeTick]

    def __post_init__(self) -> None:
        object.__setattr__(self, "binaries", tuple(self.binaries))
        object.__setattr__(self, "window", (int(self.window[0]), int(self.window[1])))

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(b.id for b in self.binaries)

    def by_id(self, binary_id: str) -> BinaryRecord:
        for b in self.binaries:
            if b.id == binary_id:
                return b
        raise UnknownIdError(binary_id)

    def __len__(self) -> int:
        return len(self.binaries)


def validate_dataset(dataset: Dataset) -> None:
    """Raise ValidationError unless every dataset invariant holds."""
    t_min, t_max = dataset.window
    if t_min >= t_max:
        raise ValidationError(f"window must satisfy t_min < t_max, got ({t_min}, {t_max})")
    if len(dataset.binaries) < 1:
        raise ValidationError("dataset needs at least one binary")
    seen_ids: set[str] = set()
    for b in dataset.binaries:
        if b.id in seen_ids:
            raise ValidationError(f"duplicate binary id {b.id!r}")
        seen_ids.add(b.id)
        if not b.features:
            raise ValidationError(f"binary {b.id!r} has an empty feature set")
        if b.first_seen is not None and not (t_min <= b.first_seen <= t_max):
            raise ValidationError(
                f"binary {b.id!r} first_seen {b.first_seen} outside window ({t_min}, {t_max})"
            )


# ---------------------------------------------------------------------------
# Lineage graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LineageGraph:
    """Multi-root DAG over binaries; edge (p, c) means c evolved partly from p."""

    node_ids: tuple[str, ...]
    edges: frozenset[tuple[str, str]]
    roots: frozenset[str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "node_ids", tuple(self.node_ids))
        object.__setattr__(self, "edges", frozenset(tuple(e) for e in self.edges))
        object.__setattr__(self, "roots", frozenset(self.roots))

    def parents_of(self, child: str) -> frozenset[str]:
        return frozenset(p for p, c in self.edges if c == child)

    def parent_map(self) -> dict[str, frozenset[str]]:
        out: dict[str, set[str]] = {n: set() for n in self.node_ids}
        for p, c in self.edges:
            out.setdefault(c, set()).add(p)
        return {n: frozenset(ps) for n, ps in out.items()}


def lineage_from_parent_map(node_ids: Iterable[str], parents: Mapping[str, Iterable[str]]) -> LineageGraph:
    """Build a LineageGraph from per-child parent sets; roots are the parentless."""
    node_ids = tuple(node_ids)
    edges = set()
    roots = set()
    for n in node_ids:
        ps = tuple(parents.get(n, ()))
        if ps:
            edges.update((p, n) for p in ps)
        else:
            roots.add(n)
    return LineageGraph(node_ids, frozenset(edges), frozenset(roots))


@dataclass(frozen=True)
class Violation:
    """One failed lineage check; ``kind`` is a stable machine-readable tag."""

    kind: str  # "unknown-endpoint" | "root-incoming" | "orphan" | "root-mismatch" | "cycle" | "temporal"
    nodes: tuple[str, ...] = ()
    detail: str = ""


def structural_violations(lineage: LineageGraph) -> list[Violation]:
    """Check the time-free LineageGraph invariants."""
    out: list[Violation] = []
    nodes = set(lineage.node_ids)
    incoming: dict[str, int] = {n: 0 for n in lineage.node_ids}
    for p, c in sorted(lineage.edges):
        if p not in nodes or c not in nodes:
            out.append(Violation("unknown-endpoint", (p, c)))
            continue
        incoming[c] += 1
    for n in lineage.node_ids:
        if n in lineage.roots and incoming[n] > 0:
            out.append(Violation("root-incoming", (n,)))
        if n not in lineage.roots and incoming[n] == 0:
            out.append(Violation("orphan", (n,), "non-root node without incoming edges"))
    extra_roots = lineage.roots - nodes
    if extra_roots:
        out.append(Violation("root-mismatch", tuple(sorted(extra_roots)), "root not in node set"))
    if _has_cycle(lineage):
        out.append(Violation("cycle", ()))
    return out


def _has_cycle(lineage: LineageGraph) -> bool:
    # Kahn's algorithm over the subgraph with valid endpoints.
    nodes = set(lineage.node_ids)
    indeg = {n: 0 for n in nodes}
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for p, c in lineage.edges:
        if p in nodes and c in nodes:
            indeg[c] += 1
            succ[p].append(c)
    queue = [n for n, d in indeg.items() if d == 0]
    removed = 0
    while queue:
        n = queue.pop()
        removed += 1
        for c in succ[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return removed != len(nodes)


def validate_lineage(lineage: LineageGraph, times: Mapping[str, TimeTick]) -> list[Violation]:
    """Return all structural and temporal violations (empty list == valid).

    Every edge (p, c) must satisfy times[p] < times[c]; ties forbid an edge in
    either direction. Raises UnknownIdError if ``times`` misses a node.
    """
    for n in lineage.node_ids:
        if n not in times:
            raise UnknownIdError(f"times missing node {n!r}")
    out = structural_violations(lineage)
    nodes = set(lineage.node_ids)
    for p, c in sorted(lineage.edges):
        if p in nodes and c in nodes and times[p] >= times[c]:
            out.append(Violation("temporal", (p, c), f"parent tick {times[p]} >= child tick {times[c]}"))
    return out


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------

def _stamp_to_json(stamp: Stamp) -> dict:
    if stamp.is_value:
        return {"kind": "value", "tick": stamp.tick}
    return {"kind": stamp.kind}


def _stamp_from_json(obj: object) -> Stamp:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ParseError(f"bad stamp object: {obj!r}")
    kind = obj["kind"]
    if kind == "value":
        tick = obj.get("tick")
        if not isinstance(tick, int) or isinstance(tick, bool):
            raise ParseError(f"value stamp requires integer tick, got {tick!r}")
        return Stamp.value(tick)
    if kind in (Stamp.EMPTY, Stamp.MISSING):
        return Stamp(kind)
    raise ParseError(f"unknown stamp kind {kind!r}")


def dataset_to_json(dataset: Dataset) -> dict:
    return {
        "window": {"t_min": dataset.window[0], "t_max": dataset.window[1]},
        "binaries": [
            {
                "id": b.id,
                "features": sorted(b.features),
                "stamp": _stamp_to_json(b.stamp),
                "first_seen": b.first_seen,
            }
            for b in dataset.binaries
        ],
    }


def dataset_from_json(obj: object) -> Dataset:
    try:
        window = obj["window"]  # type: ignore[index]
        t_min, t_max = int(window["t_min"]), int(window["t_max"])
        binaries = []
        for rec in obj["binaries"]:  # type: ignore[index]
            ident = rec["id"]
            if not isinstance(ident, str):
                raise ParseError(f"binary id must be a string, got {ident!r}")
            features = rec["features"]
            for f in features:
                if not isinstance(f, int) or isinstance(f, bool) or not (0 <= f <= _UINT64_MAX):
                    raise ParseError(f"feature token out of uint64 range: {f!r}")
            first_seen = rec.get("first_seen")
            if first_seen is not None and (not isinstance(first_seen, int) or isinstance(first_seen, bool)):
                raise ParseError(f"first_seen must be an integer or null, got {first_seen!r}")
            binaries.append(
                BinaryRecord(
                    id=ident,
                    features=frozenset(features),
                    stamp=_stamp_from_json(rec["stamp"]),
                    first_seen=first_seen,
                )
            )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"dataset document does not match schema: {exc}") from exc
    dataset = Dataset(tuple(binaries), (t_min, t_max))
    validate_dataset(dataset)
    return dataset


def load_dataset(path: str | Path) -> Dataset:
    """Load and fully validate a dataset JSON file."""
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError:
        raise
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return dataset_from_json(obj)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    validate_dataset(dataset)
    Path(path).write_text(json.dumps(dataset_to_json(dataset), indent=2) + "\n", encoding="utf-8")


def lineage_to_json(
    lineage: LineageGraph,
    times: Mapping[str, TimeTick] | None = None,
    log_score: float | None = None,
) -> dict:
    out: dict = {
        "nodes": list(lineage.node_ids),
        "roots": sorted(lineage.roots),
        "edges": [list(e) for e in sorted(lineage.edges)],
    }
    if times is not None:
        missing = [n for n in lineage.node_ids if n not in times]
        if missing:
            raise UnknownIdError(f"times missing nodes {missing}")
        out["times"] = {n: int(times[n]) for n in lineage.node_ids}
    if log_score is not None:
        out["log_score"] = float(log_score)
    return out


def lineage_from_json(obj: object) -> tuple[LineageGraph, dict[str, TimeTick] | None, float | None]:
    try:
        nodes = tuple(str(n) for n in obj["nodes"])  # type: ignore[index]
        edges = frozenset((str(p), str(c)) for p, c in obj["edges"])  # type: ignore[index]
        roots = frozenset(str(r) for r in obj["roots"])  # type: ignore[index]
        times_obj = obj.get("times")  # type: ignore[union-attr]
        times = {str(k): int(v) for k, v in times_obj.items()} if times_obj is not None else None
        score_obj = obj.get("log_score")  # type: ignore[union-attr]
        log_score = float(score_obj) if score_obj is not None else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"lineage document does not match schema: {exc}") from exc
    return LineageGraph(nodes, edges, roots), times, log_score


def save_lineage(
    lineage: LineageGraph,
    path: str | Path,
    times: Mapping[str, TimeTick] | None = None,
    log_score: float | None = None,
) -> None:
    """Write a lineage JSON file; structural invariants are checked first."""
    violations = structural_violations(lineage)
    if violations:
        raise ValidationError(f"refusing to save invalid lineage: {violations[0]}")
    payload = json.dumps(lineage_to_json(lineage, times, log_score), indent=2) + "\n"
    Path(path).write_text(payload, encoding="utf-8")


def load_lineage(path: str | Path) -> tuple[LineageGraph, dict[str, TimeTick] | None, float | None]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    lineage, times, log_score = lineage_from_json(obj)
    violations = structural_violations(lineage)
    if violations:
        raise ValidationError(f"{path}: invalid lineage: {violations[0]}")
    return lineage, times, log_score


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

def export_dot(lineage: LineageGraph, times: Mapping[str, TimeTick] | None = None) -> str:
    """Render the lineage as a Graphviz digraph.

    Pure function of its inputs: nodes and edges are emitted in lexicographic
    order so identical lineages serialize byte-identically.
    """
    def q(s: str) -> str:
        return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'

    lines = ["digraph lineage {"]
    for n in sorted(lineage.node_ids):
        if times is not None and n in times:
            lines.append(f"  {q(n)} [label={q(f'{n} (t={times[n]})')}];")
        else:
            lines.append(f"  {q(n)};")
    for p, c in sorted(lineage.edges):
        lines.append(f"  {q(p)} -> {q(c)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
