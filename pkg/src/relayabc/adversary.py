"""Byzantine behaviours.

Every strategy is a deterministic function of its seed, what the node has
received so far, and the iteration index. A strategy can sign only with its
own key (through a :class:`~relayabc.auth.Signer`) and can check any
signature through the public :class:`~relayabc.auth.Verifier`.

Payloads are plain sequences of :class:`~relayabc.protocol.StateRecord`;
nothing forces them to resemble an honest view.
"""

from __future__ import annotations

import bisect
import json
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .auth import Signer, Verifier
from .protocol import INITIAL_MARKER, StateRecord

STRATEGY_KINDS = (
    "silent",
    "constant_extreme",
    "random_equivocate",
    "replay_stale",
    "forge_attempt",
    "future_marker",
    "scripted",
)


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    params: Mapping = field(default_factory=dict)
    seed_offset: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")

    def to_document(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed_offset": self.seed_offset}

    @classmethod
    def from_document(cls, doc) -> StrategySpec:
        if isinstance(doc, str):
            return cls(doc)
        return cls(doc["kind"], dict(doc.get("params", {})), int(doc.get("seed_offset", 0)))


@dataclass
class AdversaryMemory:
    """Private state of one byzantine node."""

    node: int
    signer: Signer
    verifier: Verifier
    rng: np.random.Generator
    honest: tuple[int, ...]
    received: list[list[tuple[int, tuple]]] = field(default_factory=list)
    # genuine records per origin, strictly increasing markers
    history: dict[int, list[StateRecord]] = field(default_factory=dict)

    def record_inbox(self, inbox) -> None:
        inbox = [(s, tuple(p)) for s, p in inbox]
        self.received.append(inbox)
        for _sender, payload in inbox:
            for rec in payload:
                if not isinstance(rec, StateRecord) or rec.origin == self.node:
                    continue
                seq = self.history.setdefault(rec.origin, [])
                if seq and rec.marker <= seq[-1].marker:
                    continue
                if self.verifier.verify(rec.origin, rec.value, rec.marker, rec.signature):
                    seq.append(rec)


def make_memory(node: int, signer: Signer, verifier: Verifier, seed: int, spec: StrategySpec, honest) -> AdversaryMemory:
    rng = np.random.default_rng([seed, spec.seed_offset, node])
    return AdversaryMemory(node, signer, verifier, rng, tuple(honest))


def _own(mem: AdversaryMemory, value: float, marker: int) -> StateRecord:
    value = float(value)
    return StateRecord(mem.node, value, marker, mem.signer.sign(mem.node, value, marker))


def _latest_marker(t: int) -> int:
    # freshest marker an honest receiver accepts at iteration t
    return max(t - 1, INITIAL_MARKER)


def _freshest_relay(mem: AdversaryMemory) -> list[StateRecord]:
    return [mem.history[k][-1] for k in sorted(mem.history)]


def _same_for_all(records, neighbors) -> dict[int, tuple[StateRecord, ...]]:
    payload = tuple(records)
    return {n: payload for n in neighbors}


def silent(spec, mem, t, neighbors):
    return {}


def constant_extreme(spec, mem, t, neighbors):
    records = [_own(mem, spec.params.get("value", 100.0), _latest_marker(t))]
    if spec.params.get("relay", False):
        records += _freshest_relay(mem)
    return _same_for_all(records, neighbors)


def random_equivocate(spec, mem, t, neighbors):
    low = float(spec.params.get("low", -100.0))
    high = float(spec.params.get("high", 100.0))
    relay = _freshest_relay(mem) if spec.params.get("relay", False) else []
    out = {}
    for n in neighbors:
        value = mem.rng.uniform(low, high)
        out[n] = tuple([_own(mem, value, _latest_marker(t))] + relay)
    return out


def replay_stale(spec, mem, t, neighbors):
    """Re-send genuinely signed honest records at least ``age`` iterations old."""
    age = int(spec.params.get("age", 3))
    cutoff = t - 1 - age
    records = []
    for k in sorted(mem.history):
        seq = mem.history[k]
        pos = bisect.bisect_right(seq, cutoff, key=lambda r: r.marker)
        if pos:
            records.append(seq[pos - 1])
    if "value" in spec.params:
        records.insert(0, _own(mem, spec.params["value"], _latest_marker(t)))
    return _same_for_all(records, neighbors)


def forge_attempt(spec, mem, t, neighbors):
    """Claim extreme values for honest origins, signed with the wrong (own) key."""
    value = float(spec.params.get("value", 1000.0))
    marker = _latest_marker(t)
    forged = [
        StateRecord(k, value, marker, mem.signer.sign(k, value, marker)) for k in mem.honest
    ]
    return _same_for_all([_own(mem, value, marker)] + forged, neighbors)


def future_marker(spec, mem, t, neighbors):
    """Self-signed records stamped at or beyond the current iteration."""
    lead = max(int(spec.params.get("lead", 0)), 0)
    value = float(spec.params.get("value", 100.0))
    return _same_for_all([_own(mem, value, t + lead)], neighbors)


def scripted(spec, mem, t, neighbors):
    """Replay a payload table.

    ``params["table"]`` (or a JSON file named by ``params["path"]``) maps an
    iteration (as a string) to ``{neighbor or "*": [[origin, value, marker], ...]}``.
    Records are signed with the node's own key unless an explicit hex
    ``signature`` is given as a fourth element.
    """
    table = spec.params.get("table")
    if table is None:
        table = load_payload_table(spec.params["path"])
    row = table.get(str(t), {})
    out = {}
    for n in neighbors:
        items = row.get(str(n), row.get("*"))
        if items is None:
            continue
        recs = []
        for item in items:
            origin, value, marker = int(item[0]), float(item[1]), int(item[2])
            if len(item) > 3:
                sig = bytes.fromhex(item[3])
            else:
                sig = mem.signer.sign(origin, value, marker)
            recs.append(StateRecord(origin, value, marker, sig))
        out[n] = tuple(recs)
    return out


def load_payload_table(path) -> dict:
    return json.loads(Path(path).read_text())


STRATEGIES: dict[str, Callable] = {
    "silent": silent,
    "constant_extreme": constant_extreme,
    "random_equivocate": random_equivocate,
    "replay_stale": replay_stale,
    "forge_attempt": forge_attempt,
    "future_marker": future_marker,
    "scripted": scripted,
}


def byzantine_outbox(
    spec: StrategySpec, state: AdversaryMemory, t: int, neighbors: Sequence[int]
) -> dict[int, tuple[StateRecord, ...]]:
    """Per-neighbour payloads a byzantine node sends in iteration ``t``."""
    return STRATEGIES[spec.kind](spec, state, t, list(neighbors))
