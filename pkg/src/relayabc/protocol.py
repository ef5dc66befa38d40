"""Honest-node state machine: relay merge and trimmed-mean update."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .auth import Signer, Verifier
from .errors import BadCardinality

INITIAL_MARKER = -1


@dataclass(frozen=True)
class StateRecord:
    """A signed state value: ``origin`` produced ``value`` at iteration ``marker``."""

    origin: int
    value: float
    marker: int
    signature: bytes

    def to_list(self) -> list:
        return [self.origin, self.value, self.marker, self.signature.hex()]

    @classmethod
    def from_list(cls, item) -> StateRecord:
        origin, value, marker, sig = item
        return cls(int(origin), float(value), int(marker), bytes.fromhex(sig))


@dataclass(frozen=True)
class LocalView:
    """Node ``owner``'s freshest known record for every origin.

    ``records[j] is None`` means nothing valid was ever received for ``j``;
    the slot then reads as ``default_value``.
    """

    owner: int
    records: tuple[StateRecord | None, ...]
    default_value: float = 0.0

    @property
    def m(self) -> int:
        return len(self.records)

    @property
    def own(self) -> StateRecord:
        return self.records[self.owner]

    def value(self, j: int) -> float:
        rec = self.records[j]
        return self.default_value if rec is None else rec.value

    def marker(self, j: int) -> int | None:
        rec = self.records[j]
        return None if rec is None else rec.marker

    def payload(self) -> tuple[StateRecord, ...]:
        """What the owner broadcasts: every record it actually holds."""
        return tuple(r for r in self.records if r is not None)


def initial_view(owner: int, m: int, value: float, signer: Signer, default_value: float = 0.0) -> LocalView:
    own = StateRecord(owner, float(value), INITIAL_MARKER, signer.sign(owner, value, INITIAL_MARKER))
    records = tuple(own if j == owner else None for j in range(m))
    return LocalView(owner, records, default_value)


@dataclass(frozen=True)
class TrimEntry:
    """One of the ``m`` values entering the trimmed mean.

    ``marker`` is ``None`` for a slot that fell back to the default value.
    """

    origin: int
    value: float
    marker: int | None
    honest: bool = True

    def to_list(self) -> list:
        return [self.origin, self.value, self.marker, self.honest]

    @classmethod
    def from_list(cls, item) -> TrimEntry:
        origin, value, marker, honest = item
        return cls(int(origin), float(value), None if marker is None else int(marker), bool(honest))


@dataclass(frozen=True)
class TrimOutcome:
    """Result of sorting a view and dropping ``b`` values from each end."""

    b: int
    low: tuple[TrimEntry, ...]
    survivors: tuple[TrimEntry, ...]
    high: tuple[TrimEntry, ...]

    @property
    def sorted_entries(self) -> tuple[TrimEntry, ...]:
        return self.low + self.survivors + self.high

    @property
    def faulty(self) -> int:
        return sum(1 for e in self.survivors if not e.honest)

    @property
    def value(self) -> float:
        return _mean_in_range([e.value for e in self.survivors])

    def survived(self, origin: int) -> bool:
        return any(e.origin == origin for e in self.survivors)

    def to_dict(self) -> dict:
        return {
            "b": self.b,
            "low": [e.to_list() for e in self.low],
            "survivors": [e.to_list() for e in self.survivors],
            "high": [e.to_list() for e in self.high],
        }

    @classmethod
    def from_dict(cls, doc) -> TrimOutcome:
        return cls(
            int(doc["b"]),
            tuple(TrimEntry.from_list(x) for x in doc["low"]),
            tuple(TrimEntry.from_list(x) for x in doc["survivors"]),
            tuple(TrimEntry.from_list(x) for x in doc["high"]),
        )


def _mean_in_range(sorted_values: Sequence[float]) -> float:
    # clamp absorbs rounding so the result never leaves [min, max]
    mean = math.fsum(sorted_values) / len(sorted_values)
    return min(max(mean, sorted_values[0]), sorted_values[-1])


def trimmed_mean(values: Sequence[float], b: int) -> float:
    """Drop the ``b`` smallest and ``b`` largest values and average the rest."""
    m = len(values)
    if m <= 2 * b:
        raise BadCardinality(f"need more than 2b={2 * b} values, got {m}")
    ordered = sorted(float(v) for v in values)
    return _mean_in_range(ordered[b : m - b])


def trim_view(view: LocalView, b: int, byzantine: Iterable[int] = ()) -> TrimOutcome:
    """Sort the view by ``(value, origin)`` and split it into low/survivor/high.

    ``byzantine`` only tags entries for later analysis; the honest node itself
    never uses it.
    """
    m = view.m
    if m <= 2 * b:
        raise BadCardinality(f"need more than 2b={2 * b} values, got {m}")
    byz = frozenset(byzantine)
    entries = sorted(
        (TrimEntry(j, view.value(j), view.marker(j), j not in byz) for j in range(m)),
        key=lambda e: (e.value, e.origin),
    )
    return TrimOutcome(b, tuple(entries[:b]), tuple(entries[b : m - b]), tuple(entries[m - b :]))


def _proper(rec, m: int, t: int, verifier: Verifier) -> bool:
    if not isinstance(rec, StateRecord):
        return False
    if not isinstance(rec.origin, int) or not 0 <= rec.origin < m:
        return False
    if not isinstance(rec.marker, int) or not INITIAL_MARKER <= rec.marker < t:
        return False
    if not isinstance(rec.value, float) or not math.isfinite(rec.value):
        return False
    return verifier.verify(rec.origin, rec.value, rec.marker, rec.signature)


def merge_views_counting(
    current: LocalView,
    incoming: Iterable[tuple[int, Iterable]],
    t: int,
    verifier: Verifier,
) -> tuple[LocalView, int]:
    """Merge received payloads into ``current``; also return the rejection count.

    A record is acceptable when it verifies and its marker lies in
    ``[-1, t)``. Per slot the highest marker wins and the held record wins
    ties. Several incoming records sharing the winning marker (equivocation)
    are resolved by smallest ``(value, signature)``, so inbox order never
    matters.
    """
    m = current.m
    best: dict[int, StateRecord] = {}
    rejected = 0
    for _sender, payload in incoming:
        for rec in payload:
            if isinstance(rec, StateRecord) and rec.origin == current.owner:
                continue  # own slot is never overwritten; echoes are not rejections
            if not _proper(rec, m, t, verifier):
                rejected += 1
                continue
            held = best.get(rec.origin)
            if held is None or (rec.marker, -rec.value, _neg(rec.signature)) > (
                held.marker,
                -held.value,
                _neg(held.signature),
            ):
                best[rec.origin] = rec
    records = list(current.records)
    for j, rec in best.items():
        held = records[j]
        if held is None or rec.marker > held.marker:
            records[j] = rec
    return LocalView(current.owner, tuple(records), current.default_value), rejected


def _neg(sig: bytes) -> tuple[int, ...]:
    return tuple(-x for x in sig)


def merge_views(current: LocalView, incoming, t: int, verifier: Verifier) -> LocalView:
    return merge_views_counting(current, incoming, t, verifier)[0]


@dataclass(frozen=True)
class StepResult:
    view: LocalView
    payload: tuple[StateRecord, ...]
    merged: LocalView
    outcome: TrimOutcome | None
    rejected: int


def step_honest_node(
    node: LocalView,
    inbox,
    t: int,
    D: int,
    b: int,
    signer: Signer,
    verifier: Verifier,
    byzantine: Iterable[int] = (),
) -> StepResult:
    """One iteration of an honest node: merge the inbox, then update when ``t >= D``.

    ``merged`` is the view the trimmed mean was computed on; ``view`` is the
    post-update view whose records form the next broadcast.
    """
    if t < 0:
        raise ValueError("iteration index must be >= 0")
    merged, rejected = merge_views_counting(node, inbox, t, verifier)
    outcome = None
    view = merged
    if t >= D:
        outcome = trim_view(merged, b, byzantine)
        value = outcome.value
        own = StateRecord(node.owner, value, t, signer.sign(node.owner, value, t))
        records = list(merged.records)
        records[node.owner] = own
        view = LocalView(node.owner, tuple(records), node.default_value)
    return StepResult(view, view.payload(), merged, outcome, rejected)
