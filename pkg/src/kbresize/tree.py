"""Master semantic tree: hyperbolic MST, leaf-pruning order, exports."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from ._backend import kernels
from .errors import DomainError, InvalidInputError


@dataclass(frozen=True, eq=False)
class SemanticTree:
    """Rooted spanning tree over point indices ``0 .. node_count - 1``.

    ``parent[root] == -1`` and ``weight[root] == 0``; every other entry holds
    the parent index and the hyperbolic length of the edge to it.
    ``attach_order`` lists nodes in the order Prim's algorithm added them.
    """

    root: int
    parent: np.ndarray
    weight: np.ndarray
    attach_order: np.ndarray
    children: tuple = field(init=False, repr=False)

    def __post_init__(self):
        kids = [[] for _ in range(self.node_count)]
        for child, p in enumerate(self.parent.tolist()):
            if p >= 0:
                kids[p].append(child)
        object.__setattr__(self, "children", tuple(tuple(k) for k in kids))

    @property
    def node_count(self) -> int:
        return int(self.parent.shape[0])

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weight))

    def edges(self):
        """``(child, parent, weight)`` for every non-root node, by child index."""
        return [(int(c), int(self.parent[c]), float(self.weight[c]))
                for c in range(self.node_count) if c != self.root]


@dataclass(frozen=True)
class RemovalOrder:
    """Non-root nodes in the order leaf pruning removes them (first removed first)."""

    sequence: tuple
    root: int


def as_point_set(points) -> np.ndarray:
    """Validate an embedded point set: 2-D, finite, every norm < 1."""
    arr = np.ascontiguousarray(geometry.as_float_array(points, "points"))
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise InvalidInputError(f"points must have shape (n, dim), got {arr.shape}")
    if arr.shape[0] < 1:
        raise InvalidInputError("point set is empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("points contain non-finite values")
    if np.any(np.einsum("ij,ij->i", arr, arr) >= 1.0):
        raise DomainError("points must lie strictly inside the unit ball")
    return arr


def select_root(points) -> int:
    """Index of the point closest to the origin; ties go to the smallest index."""
    pts = as_point_set(points)
    return int(np.argmin(geometry.distance_to_origin(pts)))


def build_mst(points) -> SemanticTree:
    """Minimum spanning tree of the complete hyperbolic-distance graph.

    Dense Prim from :func:`select_root`, O(n^2) time and O(n) memory.  On
    equal attachment distances the smaller frontier index is taken, attached
    to the smallest tree index achieving that distance.
    """
    pts = as_point_set(points)
    root = select_root(pts)
    one_minus_sq = 1.0 - np.einsum("ij,ij->i", pts, pts)
    parent, delta, order, n_evals = kernels.prim_mst(pts, one_minus_sq, root)
    geometry._record_distances(n_evals)
    weight = geometry.arcosh1p(delta)
    weight[root] = 0.0
    return SemanticTree(root=root, parent=np.asarray(parent, dtype=np.int64),
                        weight=weight, attach_order=np.asarray(order, dtype=np.int64))


def compute_removal_order(tree: SemanticTree, points) -> RemovalOrder:
    """Leaf-pruning order: repeatedly drop the current leaf farthest from the origin.

    Ties in origin distance go to the larger node index.  The root is never
    removed, so the sequence holds every other node exactly once.
    """
    pts = as_point_set(points)
    n = tree.node_count
    if pts.shape[0] != n:
        raise InvalidInputError(f"tree has {n} nodes but {pts.shape[0]} points were given")
    radius = geometry.distance_to_origin(pts)
    remaining_children = np.array([len(c) for c in tree.children], dtype=np.int64)
    heap = [(-radius[i], -i) for i in range(n) if i != tree.root and remaining_children[i] == 0]
    heapq.heapify(heap)
    sequence = []
    while heap:
        _, neg = heapq.heappop(heap)
        node = -neg
        sequence.append(node)
        p = int(tree.parent[node])
        remaining_children[p] -= 1
        if remaining_children[p] == 0 and p != tree.root:
            heapq.heappush(heap, (-radius[p], -p))
    return RemovalOrder(sequence=tuple(sequence), root=tree.root)


def first_invalid_removal(tree: SemanticTree, order: RemovalOrder):
    """Replay ``order`` on ``tree``.

    Returns ``None`` when every entry is a non-root leaf at its step,
    otherwise ``(step, reason)`` for the first violation.
    """
    n = tree.node_count
    if order.root != tree.root:
        return 0, f"order root {order.root} differs from tree root {tree.root}"
    if len(order.sequence) != n - 1:
        return 0, f"sequence has {len(order.sequence)} entries, expected {n - 1}"
    remaining_children = np.array([len(c) for c in tree.children], dtype=np.int64)
    removed = np.zeros(n, dtype=bool)
    for step, node in enumerate(order.sequence):
        node = int(node)
        if not 0 <= node < n:
            return step, f"index {node} out of range"
        if node == tree.root:
            return step, "root removed"
        if removed[node]:
            return step, f"node {node} removed twice"
        if remaining_children[node] != 0:
            return step, f"node {node} is not a leaf"
        removed[node] = True
        remaining_children[tree.parent[node]] -= 1
    return None


def prune_to_size(tree: SemanticTree, order: RemovalOrder, size: int) -> frozenset:
    """Nodes left after removing the first ``node_count - size`` entries of ``order``."""
    n = tree.node_count
    if not isinstance(size, (int, np.integer)) or not 1 <= size <= n:
        raise InvalidInputError(f"size must be an integer in [1, {n}], got {size!r}")
    if len(order.sequence) != n - 1:
        raise InvalidInputError("removal order does not match the tree")
    dropped = set(order.sequence[: n - size])
    return frozenset(i for i in range(n) if i not in dropped)


def to_edge_list(tree: SemanticTree) -> str:
    """One ``child parent weight`` line per non-root node, weights to 17 significant digits."""
    return "".join(f"{c} {p} {w:.17g}\n" for c, p, w in tree.edges())


def to_dot(tree: SemanticTree, name: str = "semantic_tree") -> str:
    """Graphviz description with parent -> child edges labelled by weight."""
    lines = [f"digraph {name} {{", f'  {tree.root} [shape=doublecircle, label="{tree.root} (root)"];']
    for c, p, w in tree.edges():
        lines.append(f'  {p} -> {c} [label="{w:.6g}", weight="{w:.17g}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
