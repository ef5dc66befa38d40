"""Network topology, honest-subgraph extraction and reduced-graph combinatorics.

Node ids are ``0..m-1``. An edge ``(i, j)`` means ``i`` may send to ``j``.
Self-delivery is implicit and never stored as an edge.

Reduced graphs live on re-indexed honest ids ``0..h-1``. Each one is the
complete graph on the honest nodes with exactly ``b`` incoming edges dropped
per node, plus an implicit self-loop. They are stored as the set of *kept*
in-neighbours of every node.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .errors import NoSource, NotStronglyConnected, TooLarge

DEFAULT_ENUMERATION_CAP = 1_000_000


@dataclass(frozen=True)
class DirectedNetwork:
    """A static directed network with a byzantine labelling.

    ``labels[k]`` is the id node ``k`` had in the network this one was
    derived from (identity for networks built directly).
    """

    m: int
    byzantine: frozenset[int] = frozenset()
    edges: frozenset[tuple[int, int]] = frozenset()
    labels: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"node count must be >= 1, got {self.m}")
        object.__setattr__(self, "byzantine", frozenset(int(x) for x in self.byzantine))
        edges = frozenset((int(i), int(j)) for i, j in self.edges if i != j)
        object.__setattr__(self, "edges", edges)
        for node in self.byzantine:
            if not 0 <= node < self.m:
                raise ValueError(f"byzantine id {node} out of range for m={self.m}")
        for i, j in edges:
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise ValueError(f"edge ({i}, {j}) out of range for m={self.m}")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(self.m)))

    @property
    def b(self) -> int:
        return len(self.byzantine)

    @property
    def h(self) -> int:
        return self.m - self.b

    @property
    def honest(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.m) if i not in self.byzantine)

    def in_neighbors(self, node: int) -> tuple[int, ...]:
        return tuple(sorted(i for i, j in self.edges if j == node))

    def out_neighbors(self, node: int) -> tuple[int, ...]:
        return tuple(sorted(j for i, j in self.edges if i == node))

    def adjacency(self) -> np.ndarray:
        """0/1 matrix with ``A[i, j] = 1`` iff ``i -> j`` is an edge."""
        a = np.zeros((self.m, self.m), dtype=np.int8)
        for i, j in self.edges:
            a[i, j] = 1
        return a

    def to_document(self) -> dict:
        return {
            "m": self.m,
            "byzantine": sorted(self.byzantine),
            "edges": [list(e) for e in sorted(self.edges)],
        }


def network_from_document(doc: Mapping) -> DirectedNetwork:
    """Build a network from ``{"m", "byzantine", "edges"}`` or a preset document.

    Preset documents look like ``{"preset": "complete", "h": 4, "b": 1}``.
    """
    if "preset" in doc:
        name = doc["preset"]
        params = {k: v for k, v in doc.items() if k != "preset"}
        try:
            builder = GRAPH_PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown graph preset {name!r}") from None
        return builder(**params)
    return DirectedNetwork(
        m=int(doc["m"]),
        byzantine=frozenset(doc.get("byzantine", ())),
        edges=frozenset(tuple(e) for e in doc.get("edges", ())),
    )


def _byzantine_wiring(h: int, b: int) -> tuple[frozenset[int], set[tuple[int, int]]]:
    # byzantine nodes take ids h..m-1 and are wired to and from everyone
    m = h + b
    byz = frozenset(range(h, m))
    edges = set()
    for z in byz:
        for k in range(m):
            if k != z:
                edges.add((z, k))
                edges.add((k, z))
    return byz, edges


def complete_network(h: int, b: int = 0) -> DirectedNetwork:
    m = h + b
    edges = {(i, j) for i in range(m) for j in range(m) if i != j}
    return DirectedNetwork(m, frozenset(range(h, m)), frozenset(edges))


def honest_cycle_plus_byz(h: int, b: int = 1) -> DirectedNetwork:
    """Directed honest cycle ``0 -> 1 -> ... -> h-1 -> 0``; byzantine nodes talk to all.

    Every honest node has exactly one honest in-neighbour.
    """
    byz, edges = _byzantine_wiring(h, b)
    edges |= {(i, (i + 1) % h) for i in range(h)}
    return DirectedNetwork(h + b, byz, frozenset(edges))


def bidirectional_path_plus_byz(h: int, b: int = 1) -> DirectedNetwork:
    byz, edges = _byzantine_wiring(h, b)
    for i in range(h - 1):
        edges.add((i, i + 1))
        edges.add((i + 1, i))
    return DirectedNetwork(h + b, byz, frozenset(edges))


GRAPH_PRESETS = {
    "complete": complete_network,
    "honest_cycle_plus_byz": honest_cycle_plus_byz,
    "bidirectional_path_plus_byz": bidirectional_path_plus_byz,
}


def honest_subgraph(net: DirectedNetwork) -> DirectedNetwork:
    """Drop byzantine nodes and every edge touching them; re-index to ``0..h-1``.

    The returned network's ``labels`` map new ids back to ids in ``net``.
    """
    keep = net.honest
    index = {old: new for new, old in enumerate(keep)}
    edges = frozenset(
        (index[i], index[j]) for i, j in net.edges if i in index and j in index
    )
    labels = tuple(net.labels[k] for k in keep)
    return DirectedNetwork(len(keep), frozenset(), edges, labels)


def shortest_distances(g: DirectedNetwork) -> np.ndarray:
    """Hop counts ``dist[i, j]`` from ``i`` to ``j``; ``inf`` when unreachable."""
    if not g.edges:
        d = np.full((g.m, g.m), np.inf)
        np.fill_diagonal(d, 0.0)
        return d
    rows, cols = zip(*sorted(g.edges))
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(g.m, g.m))
    return shortest_path(adj, directed=True, unweighted=True)


def diameter(g: DirectedNetwork) -> int:
    d = shortest_distances(g)
    if np.isinf(d).any():
        i, j = np.argwhere(np.isinf(d))[0]
        raise NotStronglyConnected(f"no directed path from node {i} to node {j}")
    return int(d.max())


# -- reduced graphs ---------------------------------------------------------


@dataclass(frozen=True)
class ReducedGraph:
    """Complete honest graph minus ``b`` in-edges per node.

    ``kept_in[i]`` holds the ``h-1-b`` honest nodes whose edge into ``i``
    survives; the self-loop is implicit.
    """

    h: int
    b: int
    kept_in: tuple[frozenset[int], ...]
    index: int | None = field(default=None, compare=False)

    def adjacency(self) -> np.ndarray:
        """``A[i, j] = 1`` iff ``j`` feeds ``i`` (rows are receivers); unit diagonal."""
        a = np.eye(self.h, dtype=np.int8)
        for i, kept in enumerate(self.kept_in):
            for j in kept:
                a[i, j] = 1
        return a

    def reaches_all(self, source: int) -> bool:
        seen = {source}
        frontier = [source]
        while frontier:
            node = frontier.pop()
            for i, kept in enumerate(self.kept_in):
                if node in kept and i not in seen:
                    seen.add(i)
                    frontier.append(i)
        return len(seen) == self.h


def count_reduced_graphs(h: int, b: int) -> int:
    _check_reducible(h, b)
    return math.comb(h - 1, b) ** h


def _check_reducible(h: int, b: int) -> None:
    if b < 0 or h < 2 * b + 1:
        raise ValueError(f"reduced graphs need h >= 2b + 1, got h={h}, b={b}")


def _choices(h: int, b: int, node: int) -> list[tuple[int, ...]]:
    others = [k for k in range(h) if k != node]
    return list(itertools.combinations(others, h - 1 - b))


def enumerate_reduced_graphs(
    h: int, b: int, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[ReducedGraph]:
    """Yield every reduced graph once, lexicographically over kept-edge subsets.

    Node 0's subset is the most significant digit. Raises ``TooLarge`` up
    front when the count exceeds ``cap``.
    """
    r = count_reduced_graphs(h, b)
    if r > cap:
        raise TooLarge(f"{r} reduced graphs for h={h}, b={b} exceeds cap {cap}")
    per_node = [_choices(h, b, i) for i in range(h)]
    for idx, combo in enumerate(itertools.product(*per_node)):
        yield ReducedGraph(h, b, tuple(frozenset(c) for c in combo), idx)


def reduced_graph_at(h: int, b: int, index: int) -> ReducedGraph:
    r = count_reduced_graphs(h, b)
    if not 0 <= index < r:
        raise IndexError(f"reduced graph index {index} outside [0, {r})")
    radix = math.comb(h - 1, b)
    digits = []
    rest = index
    for _ in range(h):
        rest, d = divmod(rest, radix)
        digits.append(d)
    digits.reverse()
    kept = tuple(frozenset(_choices(h, b, i)[d]) for i, d in enumerate(digits))
    return ReducedGraph(h, b, kept, index)


def reduced_graph_index(rg: ReducedGraph) -> int:
    radix = math.comb(rg.h - 1, rg.b)
    idx = 0
    for i, kept in enumerate(rg.kept_in):
        idx = idx * radix + _choices(rg.h, rg.b, i).index(tuple(sorted(kept)))
    return idx


def sample_reduced_graphs(h: int, b: int, n: int, seed: int) -> list[ReducedGraph]:
    """Draw ``n`` reduced graphs uniformly (with replacement), reproducibly."""
    _check_reducible(h, b)
    rng = np.random.default_rng(seed)
    per_node = [_choices(h, b, i) for i in range(h)]
    out = []
    for _ in range(n):
        picks = [c[int(rng.integers(len(c)))] for c in per_node]
        rg = ReducedGraph(h, b, tuple(frozenset(p) for p in picks))
        out.append(ReducedGraph(h, b, rg.kept_in, reduced_graph_index(rg)))
    return out


def find_source_component(rg: ReducedGraph) -> int:
    """Smallest node with a directed path to every node."""
    for node in range(rg.h):
        if rg.reaches_all(node):
            return node
    raise NoSource(f"reduced graph {rg.index} has no source component")


def dominated_reduced_graph(pattern: np.ndarray, b: int) -> ReducedGraph | None:
    """First reduced graph (enumeration order) whose adjacency is <= ``pattern``.

    ``pattern`` is an ``h x h`` 0/1 (or boolean) matrix with receivers on rows.
    Works digit by digit instead of scanning the enumeration: the earliest
    match takes, for every node, the lexicographically first admissible subset.
    """
    pattern = np.asarray(pattern).astype(bool)
    h = pattern.shape[0]
    _check_reducible(h, b)
    if not pattern.diagonal().all():
        return None
    kept = []
    for i in range(h):
        allowed = [j for j in range(h) if j != i and pattern[i, j]]
        need = h - 1 - b
        if len(allowed) < need:
            return None
        kept.append(frozenset(allowed[:need]))
    rg = ReducedGraph(h, b, tuple(kept))
    return ReducedGraph(h, b, rg.kept_in, reduced_graph_index(rg))


def source_histogram(graphs: Iterable[ReducedGraph]) -> dict[int, int]:
    hist: dict[int, int] = {}
    for rg in graphs:
        s = find_source_component(rg)
        hist[s] = hist.get(s, 0) + 1
    return hist
