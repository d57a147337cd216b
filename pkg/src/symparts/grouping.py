"""Grouping discs of a weighted graph into symmetric parts.

Two strategies: agglomerative clustering on dissimilarity 1 - A, and a
best-first search for the cheapest linear sequence of discs.
"""

from __future__ import annotations

import heapq
import math
from operator import attrgetter
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError
from .segmentation import DiscGraph

TripleFn = Callable[[int, int, int], float]


@dataclass(frozen=True)
class SequenceParams:
    lam: float = 0.3  # reward per edge
    mu: float = 0.5  # weight of the triple (transition) terms
    max_labels: int | None = None  # cap on partial sequences kept per directed edge; None is exhaustive


@dataclass(frozen=True, eq=False)
class PartDetection:
    discs: tuple[int, ...]
    cost: float
    mask: np.ndarray | None = None
    axis: tuple[tuple[float, float], ...] = ()
    kind: str = "sequence"  # or "cluster"

    def to_json(self, rank: int) -> dict:
        return {"rank": rank, "cost": self.cost, "disc_ids": list(self.discs),
                "axis": [list(p) for p in self.axis]}


def default_triple(graph: DiscGraph) -> TripleFn:
    """Stand-in transition affinity for graphs without region data: geometric mean of the two pair affinities."""
    def triple(a: int, b: int, c: int) -> float:
        return math.sqrt(graph.affinity(a, b) * graph.affinity(b, c))
    return triple


# ---------------------------------------------------------------------------
# agglomerative clustering


def _fh_merge(graph: DiscGraph, k_param: float) -> tuple[dict[int, int], list[tuple[int, int, float]]]:
    if k_param <= 0:
        raise ValueError("k_param must be positive")
    parent = {i: i for i in graph.ids}
    size = {i: 1 for i in graph.ids}
    internal = {i: 0.0 for i in graph.ids}

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    merged = []
    for d, i, j in sorted((1.0 - a, i, j) for i, j, a in graph.edges):
        ri, rj = find(i), find(j)
        if ri == rj:
            continue
        if d <= min(internal[ri] + k_param / size[ri], internal[rj] + k_param / size[rj]):
            if size[ri] < size[rj] or (size[ri] == size[rj] and rj < ri):
                ri, rj = rj, ri
            parent[rj] = ri
            size[ri] += size[rj]
            internal[ri] = max(internal[ri], internal[rj], d)
            merged.append((i, j, 1.0 - d))
    return {i: find(i) for i in graph.ids}, merged


def agglomerative_cluster(graph: DiscGraph, k_param: float) -> list[list[int]]:
    """Felzenszwalb-Huttenlocher merging on d = 1 - A, edges ascending by (d, ids)."""
    roots, _ = _fh_merge(graph, k_param)
    groups: dict[int, list[int]] = {}
    for i in graph.ids:
        groups.setdefault(roots[i], []).append(i)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def cluster_detections(graph: DiscGraph, k_param: float, lam: float) -> list[PartDetection]:
    """Clusters of two or more discs as detections.

    A cluster costs the sum of (1 - A - lam) over the edges that merged it, the
    sequence cost with the spanning tree standing in for the chain.
    """
    roots, merged = _fh_merge(graph, k_param)
    cost: dict[int, float] = {}
    for i, _, a in merged:
        cost[roots[i]] = cost.get(roots[i], 0.0) + (1.0 - a) - lam
    members: dict[int, list[int]] = {}
    for i in graph.ids:
        members.setdefault(roots[i], []).append(i)
    dets = []
    for root, ids in members.items():
        if len(ids) < 2:
            continue
        ordered = _order_by_principal_axis(graph, ids)
        dets.append(_detection(graph, tuple(ordered), cost[root], kind="cluster"))
    dets.sort(key=lambda d: (d.cost, d.discs))
    return dets


def _order_by_principal_axis(graph: DiscGraph, ids: list[int]) -> list[int]:
    if not graph.discs:
        return sorted(ids)
    pts = np.array([graph.discs[i].centroid for i in ids])
    d = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    proj = d @ vt[0]
    return [ids[k] for k in np.lexsort((np.array(ids), proj))]


# ---------------------------------------------------------------------------
# sequences


def _check_sequence(seq: Sequence[int], graph: DiscGraph) -> None:
    if len(seq) < 2:
        raise ContractError("a sequence needs at least one edge")
    if len(set(seq)) != len(seq):
        raise ContractError(f"sequence {tuple(seq)} repeats a disc")
    for a, b in zip(seq, seq[1:]):
        if not graph.has_edge(a, b):
            raise ContractError(f"sequence {tuple(seq)} uses non-adjacent discs {a}, {b}")


def sequence_cost(seq: Sequence[int], graph: DiscGraph, params: SequenceParams,
                  triple: TripleFn | None = None) -> float:
    """Sum of (1 - A) over edges, plus mu * (1 - A3) over consecutive triples, minus lam per edge."""
    _check_sequence(seq, graph)
    cost = 0.0
    for k in range(1, len(seq)):
        cost += _step(graph, params, triple, seq[k - 2] if k >= 2 else None, seq[k - 1], seq[k])
    return cost


def _step(graph: DiscGraph, params: SequenceParams, triple: TripleFn | None,
          prev: int | None, a: int, b: int) -> float:
    step = (1.0 - graph.affinity(a, b)) - params.lam
    if prev is not None and params.mu != 0.0:
        fn = triple or default_triple(graph)
        step += params.mu * (1.0 - fn(prev, a, b))
    return step


class _Label:
    """Partial sequence ending at directed edge (prev, node); ``key`` orders the queue."""

    __slots__ = ("key", "cost", "prev", "node", "mask", "parent", "alive")

    def __init__(self, cost: float, edge_rank: int, length: int, serial: int, prev: int, node: int,
                 mask: int, parent: "_Label | None" = None):
        self.key = (cost, edge_rank, length, serial)
        self.cost = cost
        self.prev = prev
        self.node = node
        self.mask = mask
        self.parent = parent
        self.alive = True

    @property
    def length(self) -> int:
        return self.key[2]

    def path(self) -> list[int]:
        out = [self.node]
        lab = self
        while lab.parent is not None:
            lab = lab.parent
            out.append(lab.node)
        out.append(lab.prev)
        return out[::-1]


_KEY = attrgetter("key")


def _search(graph: DiscGraph, params: SequenceParams, triple: TripleFn | None) -> list[_Label]:
    """Best-first label correction over directed edges; returns every label ever accepted, best first.

    Every unit-length sequence seeds the queue.  The cheapest partial sequence
    is extended at its end by each neighbour not already on it; a candidate
    survives when no kept sequence ending at the same directed edge is both
    cheaper and uses a subset of its discs.  Without the per-edge cap
    (``max_labels``) the kept sets end up as exact Pareto fronts over all
    simple sequences.
    """
    if params.mu != 0.0 and triple is None:
        triple = default_triple(graph)
    adj = graph.adjacency
    bit = {node: 1 << k for k, node in enumerate(graph.ids)}
    order = {}
    for i, j, _ in graph.edges:
        order[(i, j)] = len(order)
        order[(j, i)] = len(order)
    kept: dict[tuple[int, int], list[_Label]] = {}
    heap: list[tuple[tuple, _Label]] = []
    accepted: list[_Label] = []
    serial = 0

    def offer(lab: _Label) -> None:
        key = (lab.prev, lab.node)
        bucket = kept.setdefault(key, [])
        for other in bucket:
            if other.cost <= lab.cost and other.mask & ~lab.mask == 0:
                return
        survivors = []
        for other in bucket:
            if lab.cost <= other.cost and lab.mask & ~other.mask == 0:
                other.alive = False
            else:
                survivors.append(other)
        survivors.append(lab)
        if params.max_labels is not None and len(survivors) > params.max_labels:
            survivors.sort(key=_KEY)
            for other in survivors[params.max_labels:]:
                other.alive = False
            survivors = survivors[:params.max_labels]
        kept[key] = survivors
        if lab.alive:
            heapq.heappush(heap, (lab.key, lab))
            accepted.append(lab)

    def dominated(key: tuple[int, int], cost: float, mask: int) -> bool:
        for other in kept.get(key, ()):
            if other.cost <= cost and other.mask & ~mask == 0:
                return True
        return False

    for i, j, a in graph.edges:
        for p, q in ((i, j), (j, i)):
            serial += 1
            offer(_Label((1.0 - a) - params.lam, order[(p, q)], 1, serial, p, q, bit[p] | bit[q]))

    while heap:
        lab = heapq.heappop(heap)[1]
        if not lab.alive:
            continue
        for nxt, a in adj[lab.node].items():
            if lab.mask & bit[nxt]:
                continue
            key = (lab.node, nxt)
            mask = lab.mask | bit[nxt]
            cost = lab.cost + (1.0 - a) - params.lam
            # triple terms are >= 0, so the bound without them is a valid pre-check
            if dominated(key, cost, mask):
                continue
            if params.mu != 0.0:
                cost += params.mu * (1.0 - triple(lab.prev, lab.node, nxt))
            serial += 1
            offer(_Label(cost, order[key], lab.length + 1, serial, lab.node, nxt, mask, lab))

    # labels evicted after acceptance are still valid sequences with exact costs
    accepted.sort(key=_KEY)
    return accepted


def find_best_sequence(graph: DiscGraph, params: SequenceParams = SequenceParams(),
                       triple: TripleFn | None = None) -> PartDetection | None:
    """Cheapest simple disc sequence, or None for a graph without edges."""
    if not graph.edges:
        return None
    best = _search(graph, params, triple)[0]
    seq = tuple(best.path())
    return _detection(graph, seq, sequence_cost(seq, graph, params, triple))


def _detection(graph: DiscGraph, seq: tuple[int, ...], cost: float, kind: str = "sequence") -> PartDetection:
    if graph.discs:
        first = graph.discs[seq[0]]
        mask = np.zeros(first.image_shape, dtype=bool)
        for i in seq:
            d = graph.discs[i]
            mask[d.ys, d.xs] = True
        axis = tuple(graph.discs[i].centroid for i in seq)
    else:
        mask, axis = None, ()
    return PartDetection(seq, cost, mask, axis, kind)


def extract_parts(graph: DiscGraph, params: SequenceParams = SequenceParams(), cost_max: float = 0.0,
                  triple: TripleFn | None = None, top_n: int | None = None) -> list[PartDetection]:
    """Repeatedly take the cheapest sequence and delete its discs until the cost exceeds ``cost_max``.

    Deleting discs never breaks a dominance relation (a dominating label uses
    a subset of the dominated label's discs), so the labels of one search,
    filtered to those avoiding every deleted disc, answer each later round.
    """
    if math.isnan(cost_max):
        raise ValueError("cost_max must be a number")
    if params.mu != 0.0 and triple is None:
        triple = default_triple(graph)
    if not graph.edges or top_n == 0:
        return []
    dets: list[PartDetection] = []
    removed = 0
    bit = {node: 1 << k for k, node in enumerate(graph.ids)}
    for lab in _search(graph, params, triple):
        if top_n is not None and len(dets) >= top_n:
            break
        if lab.mask & removed:
            continue
        if lab.cost > cost_max:
            break
        seq = tuple(lab.path())
        dets.append(_detection(graph, seq, sequence_cost(seq, graph, params, triple)))
        for i in seq:
            removed |= bit[i]
    dets.sort(key=lambda d: d.cost)
    return dets


def validate_detection(det: PartDetection, graph: DiscGraph, params: SequenceParams,
                       triple: TripleFn | None = None) -> None:
    """Raise ContractError unless ``det`` is a valid sequence whose cost is exact."""
    cost = sequence_cost(det.discs, graph, params, triple)
    if cost != det.cost:
        raise ContractError(f"detection cost {det.cost} differs from recomputed {cost}")
