"""Lockstep scheduler and the execution trace it records.

Iteration ``t`` runs in three barriers: every node emits its outbox (honest
nodes resend the view they ended ``t-1`` with), all messages are delivered,
then every node processes its inbox in node-id order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adversary import StrategySpec, byzantine_outbox, make_memory
from .auth import Signer, Verifier, make_scheme
from .config import FORMAT_VERSION, ScenarioConfig
from .errors import TraceCorrupt
from .protocol import (
    INITIAL_MARKER,
    StateRecord,
    TrimOutcome,
    initial_view,
    step_honest_node,
)

RECORD_HEADER_BYTES = 24  # origin, value, marker as 8 bytes each


@dataclass
class NodeStep:
    """What one honest node did in one iteration."""

    view: tuple[StateRecord | None, ...]  # merged view the update read
    outcome: TrimOutcome | None
    value: float


@dataclass
class SimulationTrace:
    config: dict
    m: int
    b: int
    D: int
    T: int
    honest: tuple[int, ...]
    byzantine: tuple[int, ...]
    initial: np.ndarray
    states: np.ndarray  # (T, h) post-update honest states
    steps: list[list[NodeStep]]
    byzantine_outboxes: list[dict[int, dict[int, tuple[StateRecord, ...]]]]
    rejected: list[int]
    bytes_sent: list[int]
    signing_log: list[tuple[int, float, int]] = field(default_factory=list)
    default_value: float = 0.0

    @property
    def h(self) -> int:
        return len(self.honest)

    @property
    def honest_index(self) -> dict[int, int]:
        return {node: k for k, node in enumerate(self.honest)}

    def state_at(self, t: int) -> np.ndarray:
        """Honest states after iteration ``t``; ``t = -1`` gives the initial values."""
        return self.initial.copy() if t < 0 else self.states[t].copy()

    def outcome(self, t: int, k: int) -> TrimOutcome | None:
        return self.steps[t][k].outcome

    def all_states(self) -> np.ndarray:
        """Initial values stacked on top of every iteration's states."""
        return np.vstack([self.initial[None, :], self.states])

    # -- persistence ----------------------------------------------------

    def iter_lines(self):
        header = {
            "kind": "header",
            "format_version": FORMAT_VERSION,
            "config": self.config,
            "m": self.m,
            "b": self.b,
            "D": self.D,
            "T": self.T,
            "honest": list(self.honest),
            "byzantine": list(self.byzantine),
            "initial": [float(x) for x in self.initial],
            "default_value": self.default_value,
        }
        yield header
        n_initial = self.h
        for origin, value, marker in self.signing_log[:n_initial]:
            yield {"kind": "signed", "origin": origin, "value": value, "marker": marker}
        log = iter(self.signing_log[n_initial:])
        for t in range(self.T):
            for k, step in enumerate(self.steps[t]):
                yield {
                    "kind": "step",
                    "t": t,
                    "node": self.honest[k],
                    "view": [None if r is None else r.to_list() for r in step.view],
                    "trim": None if step.outcome is None else step.outcome.to_dict(),
                    "value": float(step.value),
                }
                if step.outcome is not None:
                    origin, value, marker = next(log)
                    yield {"kind": "signed", "origin": origin, "value": value, "marker": marker}
            yield {
                "kind": "iteration",
                "t": t,
                "rejected": self.rejected[t],
                "bytes": self.bytes_sent[t],
                "byzantine": {
                    str(z): {str(n): [r.to_list() for r in p] for n, p in sorted(box.items())}
                    for z, box in sorted(self.byzantine_outboxes[t].items())
                },
            }
        yield {"kind": "end", "iterations": self.T}

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for item in self.iter_lines():
                fh.write(json.dumps(item, sort_keys=True, separators=(",", ":")))
                fh.write("\n")

    def write_states_csv(self, path) -> None:
        lines = ["iteration," + ",".join(f"node_{k}" for k in range(self.h))]
        for t in range(self.T):
            lines.append(f"{t}," + ",".join(repr(float(x)) for x in self.states[t]))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> SimulationTrace:
        try:
            with open(path) as fh:
                items = [json.loads(line) for line in fh if line.strip()]
        except (OSError, UnicodeDecodeError) as exc:
            raise TraceCorrupt(f"cannot read trace {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise TraceCorrupt(f"trace {path} is not valid JSON lines: {exc}") from exc
        try:
            return cls._from_items(items)
        except TraceCorrupt:
            raise
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TraceCorrupt(f"trace {path} is malformed: {exc!r}") from exc

    @classmethod
    def _from_items(cls, items) -> SimulationTrace:
        if not items or items[0].get("kind") != "header":
            raise TraceCorrupt("trace has no header")
        if items[-1].get("kind") != "end":
            raise TraceCorrupt("trace is truncated (no end marker)")
        head = items[0]
        if head.get("format_version") != FORMAT_VERSION:
            raise TraceCorrupt(f"unsupported trace format {head.get('format_version')!r}")
        T = int(head["T"])
        honest = tuple(head["honest"])
        h = len(honest)
        index = {node: k for k, node in enumerate(honest)}
        steps: list[list[NodeStep | None]] = [[None] * h for _ in range(T)]
        states = np.full((T, h), np.nan)
        boxes: list[dict] = [{} for _ in range(T)]
        rejected = [0] * T
        sent = [0] * T
        log = []
        seen_iterations = set()
        for item in items[1:-1]:
            kind = item["kind"]
            if kind == "signed":
                log.append((int(item["origin"]), float(item["value"]), int(item["marker"])))
            elif kind == "step":
                t, k = int(item["t"]), index[item["node"]]
                view = tuple(None if r is None else StateRecord.from_list(r) for r in item["view"])
                outcome = None if item["trim"] is None else TrimOutcome.from_dict(item["trim"])
                steps[t][k] = NodeStep(view, outcome, float(item["value"]))
                states[t, k] = float(item["value"])
            elif kind == "iteration":
                t = int(item["t"])
                seen_iterations.add(t)
                rejected[t] = int(item["rejected"])
                sent[t] = int(item["bytes"])
                boxes[t] = {
                    int(z): {int(n): tuple(StateRecord.from_list(r) for r in p) for n, p in box.items()}
                    for z, box in item["byzantine"].items()
                }
            else:
                raise TraceCorrupt(f"unknown trace entry kind {kind!r}")
        if int(items[-1]["iterations"]) != T or len(seen_iterations) != T:
            raise TraceCorrupt("trace iteration count does not match its header")
        if any(s is None for row in steps for s in row):
            raise TraceCorrupt("trace is missing node steps")
        return cls(
            config=head["config"],
            m=int(head["m"]),
            b=int(head["b"]),
            D=int(head["D"]),
            T=T,
            honest=honest,
            byzantine=tuple(head["byzantine"]),
            initial=np.array(head["initial"], dtype=float),
            states=states,
            steps=steps,
            byzantine_outboxes=boxes,
            rejected=rejected,
            bytes_sent=sent,
            signing_log=log,
            default_value=float(head["default_value"]),
        )


def run_simulation(config: ScenarioConfig) -> SimulationTrace:
    """Execute a validated scenario and record everything that happened."""
    net, D = config.validate()
    m, T = net.m, int(config.T)
    honest = net.honest
    byzantine = tuple(sorted(net.byzantine))
    scheme = make_scheme(config.scheme, m, config.seed)
    verifier = Verifier(scheme)
    signers = {i: Signer(scheme, i) for i in honest}

    views = {}
    signing_log = []
    for k, node in enumerate(honest):
        value = float(config.initial_values[k])
        views[node] = initial_view(node, m, value, signers[node], config.default_value)
        signing_log.append((node, value, INITIAL_MARKER))

    memories = {}
    specs = {}
    for z in byzantine:
        specs[z] = config.strategies.get(z, StrategySpec("silent"))
        memories[z] = make_memory(z, Signer(scheme, z), verifier, config.seed, specs[z], honest)

    out_nbrs = {i: net.out_neighbors(i) for i in range(m)}
    in_nbrs = {i: net.in_neighbors(i) for i in range(m)}
    record_bytes = RECORD_HEADER_BYTES + scheme.signature_size

    states = np.empty((T, len(honest)))
    steps: list[list[NodeStep]] = []
    boxes_log, rejected_log, bytes_log = [], [], []

    for t in range(T):
        outbox: dict[int, dict[int, tuple]] = {}
        for node in honest:
            payload = views[node].payload()
            outbox[node] = {n: payload for n in out_nbrs[node]}
        byz_boxes = {}
        for z in byzantine:
            box = byzantine_outbox(specs[z], memories[z], t, out_nbrs[z])
            box = {n: tuple(p) for n, p in sorted(box.items()) if n in out_nbrs[z]}
            outbox[z] = box
            byz_boxes[z] = box

        sent = sum(len(p) for box in outbox.values() for p in box.values())
        bytes_log.append(sent * record_bytes)

        def inbox_of(i):
            if config.neighbor_mode == "out":
                return [(j, outbox[j].get(i, ())) for j in out_nbrs[i]]
            return [(j, outbox[j][i]) for j in in_nbrs[i] if i in outbox[j]]

        row = []
        rejected = 0
        for k, node in enumerate(honest):
            res = step_honest_node(
                views[node], inbox_of(node), t, D, net.b, signers[node], verifier, byzantine
            )
            rejected += res.rejected
            views[node] = res.view
            own = res.view.own
            states[t, k] = own.value
            row.append(NodeStep(res.merged.records, res.outcome, own.value))
            if res.outcome is not None:
                signing_log.append((node, own.value, own.marker))
        for z in byzantine:
            memories[z].record_inbox(inbox_of(z))
        steps.append(row)
        boxes_log.append(byz_boxes)
        rejected_log.append(rejected)

    return SimulationTrace(
        config=config.to_document(),
        m=m,
        b=net.b,
        D=D,
        T=T,
        honest=honest,
        byzantine=byzantine,
        initial=np.array([float(v) for v in config.initial_values]),
        states=states,
        steps=steps,
        byzantine_outboxes=boxes_log,
        rejected=rejected_log,
        bytes_sent=bytes_log,
        signing_log=signing_log,
        default_value=float(config.default_value),
    )
