"""Phase transition matrices rebuilt from a trace, and the structural checks on them.

Phase ``p`` is the half-open block of iterations ``[(p-1)D, pD)``. Its state
vector has ``hD`` entries; entry ``q*h + i`` is honest node ``i``'s state
after relative iteration ``q``. Phase 0 is ``D`` copies of the initial
values and so is phase 1, because nobody updates before iteration ``D``.

``construct_phase_matrix(trace, p)`` returns the matrix ``M`` with
``v[p] = M @ v[p-1]``; it exists for ``p >= 2``.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import IndexOutOfRange, InconsistentTrace, PhaseTooEarly
from .graph import (
    count_reduced_graphs,
    dominated_reduced_graph,
    honest_subgraph,
    network_from_document,
    shortest_distances,
)
from .protocol import TrimOutcome

POSITIVE = 1e-12


# -- state vectors -------------------------------------------------------


def phase_vector(trace, phase: int) -> np.ndarray:
    h, D = trace.h, trace.D
    if phase < 0 or phase > trace.T // D:
        raise IndexOutOfRange(f"phase {phase} is not complete in a {trace.T}-iteration trace")
    if phase <= 1:
        return np.tile(trace.initial, D)
    start = (phase - 1) * D
    return trace.states[start : start + D].reshape(h * D).copy()


def complete_phases(trace) -> range:
    """Phases with a transition matrix: ``2..T//D``."""
    return range(2, trace.T // trace.D + 1)


def spread(values) -> float:
    values = np.asarray(values, dtype=float)
    return float(values.max() - values.min())


# -- G rows ---------------------------------------------------------------


@dataclass
class GRow:
    """Weights an update places on honest origins.

    ``markers[k]`` is the iteration marker of the record through which
    origin ``k`` contributes; ``None`` where the weight is zero.
    """

    node: int
    weights: np.ndarray
    markers: list[int | None]
    outcome: TrimOutcome
    case: int
    s_star: int | None = None
    l_star: int | None = None
    gammas: dict[int, float] = field(default_factory=dict)


def build_g_row(outcome: TrimOutcome, honest_index: Mapping[int, int], node: int | None = None) -> GRow:
    """Express a trimmed-mean update as a convex combination of honest records.

    Honest survivors get ``1/(m-2b)`` each. A faulty survivor of value ``x``
    is rewritten as ``gamma*s + (1-gamma)*l`` where ``s`` is the largest
    honest value trimmed low and ``l`` the smallest honest value trimmed high.
    """
    h = len(honest_index)
    n = len(outcome.survivors)
    weights = np.zeros(h)
    markers: list[int | None] = [None] * h

    def credit(entry, w):
        if entry.marker is None:
            raise InconsistentTrace(f"honest origin {entry.origin} was never heard from")
        k = honest_index[entry.origin]
        weights[k] += w
        markers[k] = entry.marker

    faulty = [e for e in outcome.survivors if not e.honest]
    for e in outcome.survivors:
        if e.honest:
            credit(e, 1.0 / n)
    if not faulty:
        return GRow(node, weights, markers, outcome, case=1)

    low = [e for e in outcome.low if e.honest]
    high = [e for e in outcome.high if e.honest]
    if not low or not high:
        raise InconsistentTrace("faulty survivor without honest values on both trimmed sides")
    s, l = low[-1], high[0]
    row = GRow(node, weights, markers, outcome, case=2,
               s_star=honest_index[s.origin], l_star=honest_index[l.origin])
    for e in faulty:
        x = e.value
        if not s.value <= x <= l.value:
            raise InconsistentTrace(
                f"faulty survivor {x} from node {e.origin} outside [{s.value}, {l.value}]"
            )
        gamma = 1.0 if l.value == s.value else (l.value - x) / (l.value - s.value)
        gamma = min(max(gamma, 0.0), 1.0)
        row.gammas[e.origin] = gamma
        credit(s, gamma / n)
        credit(l, (1.0 - gamma) / n)
    for k in range(h):
        if weights[k] == 0.0:
            markers[k] = None
    return row


# -- matrix construction -------------------------------------------------


@dataclass
class TransitionMatrix:
    phase: int
    matrix: np.ndarray
    h: int
    D: int
    self_survived: np.ndarray  # per row: node's own value survived that update
    cases: np.ndarray = None

    @property
    def shape(self):
        return self.matrix.shape

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def _honest_distances(trace) -> np.ndarray:
    net = network_from_document(trace.config["graph"])
    return shortest_distances(honest_subgraph(net))


def construct_phase_matrix(trace, phase: int, mode: str = "trace") -> TransitionMatrix:
    """Build the ``hD x hD`` matrix mapping ``v[phase-1]`` to ``v[phase]``.

    ``mode="trace"`` places every contribution at the iteration its record
    was actually produced (read from the record's marker). ``mode="distance"``
    assumes origin ``k``'s freshest record reached node ``i`` along a shortest
    honest path, i.e. was produced ``dist(k, i)`` iterations earlier; it agrees
    with ``"trace"`` whenever byzantine nodes do not relay fresher records.
    """
    if phase < 2:
        raise PhaseTooEarly(f"phase {phase}: matrices start at phase 2")
    h, D = trace.h, trace.D
    if phase > trace.T // D:
        raise IndexOutOfRange(f"phase {phase} is not complete in a {trace.T}-iteration trace")
    if mode not in ("trace", "distance"):
        raise ValueError(f"unknown construction mode {mode!r}")
    index = trace.honest_index
    dist = _honest_distances(trace) if mode == "distance" else None
    start = (phase - 1) * D
    prev_start = start - D
    size = h * D
    M = np.zeros((size, size))
    survived = np.zeros(size, dtype=bool)
    cases = np.zeros(size, dtype=np.int8)

    for q in range(D):
        t = start + q
        for i in range(h):
            row = q * h + i
            outcome = trace.steps[t][i].outcome
            if outcome is None:
                raise InconsistentTrace(f"no update recorded for node {i} at iteration {t}")
            g = build_g_row(outcome, index, i)
            survived[row] = outcome.survived(trace.honest[i])
            cases[row] = g.case
            for k in np.flatnonzero(g.weights):
                w = g.weights[k]
                if mode == "trace":
                    marker = g.markers[k]
                    rel = None if marker < start else marker - start
                    if rel is None:
                        if marker >= prev_start:
                            col = (marker - prev_start) * h + k
                        elif marker == -1 and phase == 2:
                            col = (D - 1) * h + k
                        else:
                            raise InconsistentTrace(
                                f"record of node {k} with marker {marker} is older than phase {phase - 1}"
                            )
                else:
                    lag = 1 if k == i else int(dist[k, i])
                    rel = q - lag
                    if rel < 0:
                        col = (rel % D) * h + k
                        rel = None
                if rel is None:
                    M[row, col] += w
                else:
                    if rel >= q:
                        raise InconsistentTrace(f"record of node {k} is not older than iteration {t}")
                    M[row] += w * M[rel * h + k]
    return TransitionMatrix(phase, M, h, D, survived, cases)


def verify_phase_equation(trace, phase: int, M) -> float:
    """Largest elementwise gap between ``v[phase]`` and ``M @ v[phase-1]``."""
    M = np.asarray(M)
    prev = phase_vector(trace, phase - 1)
    cur = phase_vector(trace, phase)
    return float(np.max(np.abs(cur - M @ prev)))


def reconstruct_states(trace, mode: str = "trace") -> tuple[np.ndarray, float]:
    """Roll ``v[0]`` forward through the phase matrices.

    Returns the reconstructed ``(phases, hD)`` array for phases ``0..T//D``
    and the largest deviation from the recorded states.
    """
    vectors = [phase_vector(trace, 0), phase_vector(trace, 1)]
    worst = 0.0
    for p in complete_phases(trace):
        M = construct_phase_matrix(trace, p, mode).matrix
        vectors.append(M @ vectors[-1])
        worst = max(worst, float(np.max(np.abs(vectors[-1] - phase_vector(trace, p)))))
    return np.array(vectors), worst


# -- structural checks -----------------------------------------------------


def row_sum_residual(M) -> float:
    M = np.asarray(M)
    return float(np.max(np.abs(M.sum(axis=1) - 1.0)))


def check_row_stochastic(M, tol: float = 1e-12, neg_tol: float | None = None) -> bool:
    """Rows sum to one within ``tol`` and no entry is below ``-neg_tol``."""
    M = np.asarray(M, dtype=float)
    neg_tol = tol if neg_tol is None else neg_tol
    if M.ndim != 2 or M.shape[0] == 0:
        return False
    return row_sum_residual(M) <= tol and float(M.min()) >= -neg_tol


def _chain(survived: np.ndarray, h: int, D: int, first: int) -> np.ndarray:
    """Row ``q*h+i`` is True when node i kept its own value at every q' in [first, q]."""
    s = survived.reshape(D, h)
    out = np.ones((D, h), dtype=bool)
    for q in range(D):
        ok = np.ones(h, dtype=bool) if q < first else s[q]
        out[q] = ok if q == 0 else out[q - 1] & ok
    return out.reshape(D * h)


@dataclass
class RowCheck:
    """Per-row outcome of a structural property.

    ``applies`` marks the rows the property is asserted on; ``holds`` is
    evaluated on every row so violations outside ``applies`` stay visible.
    """

    name: str
    holds: np.ndarray
    applies: np.ndarray
    threshold: float = POSITIVE

    @property
    def ok(self) -> bool:
        return bool(np.all(self.holds[self.applies]))

    @property
    def exempt_rows(self) -> list[int]:
        return [int(r) for r in np.flatnonzero(~self.applies)]

    @property
    def unconditional_violations(self) -> list[int]:
        return [int(r) for r in np.flatnonzero(~self.holds)]

    def summary(self) -> dict:
        return {
            "name": self.name,
            "ok": self.ok,
            "rows": int(self.holds.size),
            "exempt_rows": self.exempt_rows,
            "violations": [int(r) for r in np.flatnonzero(~self.holds & self.applies)],
            "unconditional_violations": self.unconditional_violations,
            "threshold": self.threshold,
        }


def _unpack(M, h, D):
    if isinstance(M, TransitionMatrix):
        return M.matrix, M.h, M.D, M.self_survived
    M = np.asarray(M, dtype=float)
    if h is None or D is None:
        raise ValueError("h and D are required for a bare array")
    return M, h, D, np.ones(h * D, dtype=bool)


def check_diagonal_property(M, h: int | None = None, D: int | None = None,
                            threshold: float = POSITIVE) -> RowCheck:
    """Row ``k*h+i`` should weigh column ``h(D-1)+i`` (node i's last previous state).

    Asserted only on rows where node i kept its own value at every update of
    the phase up to that row; bare arrays count every row as surviving.
    """
    A, h, D, survived = _unpack(M, h, D)
    rows = np.arange(h * D)
    holds = A[rows, h * (D - 1) + rows % h] > threshold
    return RowCheck("diagonal", holds, _chain(survived, h, D, first=0), threshold)


def check_row_inheritance(M, h: int | None = None, D: int | None = None,
                          threshold: float = POSITIVE) -> RowCheck:
    """A Node-i row below the first block keeps every positive column of row i."""
    A, h, D, survived = _unpack(M, h, D)
    holds = np.ones(h * D, dtype=bool)
    for z in range(h, h * D):
        i = z % h
        base = A[i] > threshold
        holds[z] = bool(np.all(A[z][base] > threshold))
    return RowCheck("row_inheritance", holds, _chain(survived, h, D, first=1), threshold)


def row_support_origins(M, h: int, threshold: float = POSITIVE) -> np.ndarray:
    """Number of distinct origins (column mod h) with positive weight, per row."""
    A = np.asarray(M)
    out = np.zeros(A.shape[0], dtype=int)
    for r in range(A.shape[0]):
        out[r] = len({int(c) % h for c in np.flatnonzero(A[r] > threshold)})
    return out


def check_row_support(M, b: int, h: int | None = None, D: int | None = None,
                      threshold: float = POSITIVE) -> RowCheck:
    """Every row touches at least ``h - b`` distinct origins."""
    A, h, D, _ = _unpack(M, h, D)
    holds = row_support_origins(A, h, threshold) >= h - b
    return RowCheck("row_support", holds, np.ones(h * D, dtype=bool), threshold)


def check_convexity(M, vectors: np.ndarray) -> bool:
    """Every row maps each vector into that vector's ``[min, max]`` (up to rounding)."""
    A = np.asarray(M)
    for v in np.atleast_2d(vectors):
        out = A @ v
        slack = 1e-12 * max(1.0, float(np.max(np.abs(v))))
        if out.min() < v.min() - slack or out.max() > v.max() + slack:
            return False
    return True


# -- splicing, reduced graphs and scrambling ---------------------------------


def matrix_splice(M, a: int, b: int, c: int, d: int) -> np.ndarray:
    """Rows ``a..b`` and columns ``c..d``, all inclusive."""
    A = np.asarray(M)
    n_rows, n_cols = A.shape
    if not (0 <= a <= b < n_rows and 0 <= c <= d < n_cols):
        raise IndexOutOfRange(f"splice [{a},{b}:{c},{d}] outside a {n_rows}x{n_cols} matrix")
    return A[a : b + 1, c : d + 1].copy()


def bottom_block(M, h: int) -> np.ndarray:
    """Bottom-right ``h x h`` block: last-iteration rows against last-iteration columns."""
    A = np.asarray(M)
    n = A.shape[0]
    return matrix_splice(A, n - h, n - 1, n - h, n - 1)


def block_dominates_reduced_graph(M1, M2, h: int, b: int, threshold: float = POSITIVE) -> int | None:
    """Index of the first reduced graph whose adjacency fits under ``M1 @ M2``'s bottom block.

    Pass the later phase's matrix as ``M1`` so the product is the two-phase
    transition ``v[p+1] = M1 @ M2 @ v[p-1]``.
    """
    P = np.asarray(M1) @ np.asarray(M2)
    pattern = bottom_block(P, h) > threshold
    rg = dominated_reduced_graph(pattern, b)
    return None if rg is None else rg.index


def product_nonzero_column(ms: Sequence, threshold: float = POSITIVE) -> int | None:
    """Multiply ``ms[0] @ ms[1] @ ...`` and find a column with every entry above threshold.

    The last ``h`` columns are searched first (``h`` inferred from
    ``TransitionMatrix`` inputs, else the whole width is one block).
    """
    if not ms:
        raise ValueError("need at least one matrix")
    P = np.asarray(ms[0], dtype=float)
    for A in ms[1:]:
        P = P @ np.asarray(A, dtype=float)
    h = ms[0].h if isinstance(ms[0], TransitionMatrix) else P.shape[1]
    n = P.shape[1]
    positive = np.all(P > threshold, axis=0)
    for c in list(range(n - h, n)) + list(range(0, n - h)):
        if positive[c]:
            return c
    return None


def scrambling_window(h: int, b: int, D: int) -> int:
    """Number of consecutive phase matrices whose product must be scrambling: ``2rD + 1``."""
    return 2 * count_reduced_graphs(h, b) * D + 1


def scrambling_windows(matrices: Sequence[TransitionMatrix], window: int,
                       threshold: float = POSITIVE) -> list[int | None]:
    """Positive-column index for every run of ``window`` consecutive matrices.

    ``matrices`` are in phase order; each window is multiplied latest-first,
    which is the order they act on the state vector.
    """
    out = []
    for s in range(len(matrices) - window + 1):
        chunk = list(reversed(matrices[s : s + window]))
        out.append(product_nonzero_column(chunk, threshold))
    return out


def worked_examples() -> dict[str, np.ndarray]:
    """Worked example matrices (``h = 3``, ``D = 2``).

    The diagonal example and the full-column example have identical entries.
    """
    t, n = 1 / 3, 1 / 9
    diagonal = np.array([
        [0, 0, t, t, t, 0],
        [0, 0, 0, t, t, t],
        [t, 0, 0, 0, t, t],
        [0, 0, n, 2 * n, 2 * n, 4 * n],
        [n, 0, n, 2 * n, t, 2 * n],
        [n, 0, 0, 4 * n, 2 * n, 2 * n],
    ])
    partial = np.array([
        [0, t, t, t, 0, 0],
        [0, 0, 0, t, t, t],
        [t, 0, t, 0, 0, t],
        [0, 0, n, 2 * n, 2 * n, 4 * n],
        [n, 0, n, 2 * n, t, 2 * n],
        [n, 0, 0, 4 * n, 2 * n, 2 * n],
    ])
    full = np.array([
        [0, 0, t, t, t, 0],
        [0, 0, 0, t, t, t],
        [t, 0, 0, 0, t, t],
        [0, 0, n, 2 * n, 2 * n, 4 * n],
        [n, 0, n, 2 * n, t, 2 * n],
        [n, 0, 0, 4 * n, 2 * n, 2 * n],
    ])
    splice = np.arange(9, dtype=float).reshape(3, 3)
    return {"splice": splice, "diagonal": diagonal, "partial_column": partial, "full_column": full}
