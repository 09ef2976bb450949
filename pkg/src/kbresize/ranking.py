"""Importance rankings: compute once per parent codebook, resize to any size."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import geometry
from .codebook import EuclideanCodebook, atomic_write
from .errors import DecodeError, InvalidInputError, StaleRankingError
from .tree import RemovalOrder, build_mst, compute_removal_order, first_invalid_removal

KBR_VERSION = 1


@dataclass(frozen=True)
class ImportanceRanking:
    """Parent indices from most to least important, bound to one parent codebook.

    The first ``K`` entries are exactly the nodes that survive pruning the
    semantic tree down to ``K`` nodes.
    """

    parent_fingerprint: str
    survival_order: tuple

    @property
    def root(self) -> int:
        return self.survival_order[0]

    @property
    def size(self) -> int:
        return len(self.survival_order)

    def removal_order(self) -> RemovalOrder:
        return RemovalOrder(sequence=tuple(reversed(self.survival_order[1:])), root=self.root)

    def to_text(self) -> str:
        """KBR document: JSON with one field per line and the order on a single line."""
        order = ", ".join(str(i) for i in self.survival_order)
        return (
            "{\n"
            f'  "version": {KBR_VERSION},\n'
            f'  "parent_fingerprint": "{self.parent_fingerprint}",\n'
            f'  "root": {self.root},\n'
            f'  "survival_order": [{order}]\n'
            "}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "ImportanceRanking":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DecodeError(f"KBR is not valid JSON: {exc.msg}", offset=exc.pos) from None
        if not isinstance(doc, dict):
            raise DecodeError("KBR document must be an object")
        missing = {"version", "parent_fingerprint", "root", "survival_order"} - doc.keys()
        if missing:
            raise DecodeError(f"KBR missing field(s): {', '.join(sorted(missing))}")
        if doc["version"] != KBR_VERSION:
            raise DecodeError(f"unsupported KBR version {doc['version']!r}")
        fp = doc["parent_fingerprint"]
        if not isinstance(fp, str) or len(fp) != 64 or any(c not in "0123456789abcdef" for c in fp):
            raise DecodeError("parent_fingerprint must be 64 lowercase hex digits")
        order = doc["survival_order"]
        if not isinstance(order, list) or not order or not all(type(i) is int for i in order):
            raise DecodeError("survival_order must be a nonempty list of integers")
        if doc["root"] != order[0]:
            raise DecodeError(f"root {doc['root']!r} does not match survival_order[0] = {order[0]}")
        return cls(parent_fingerprint=fp, survival_order=tuple(order))


def compute_ranking(parent: EuclideanCodebook) -> ImportanceRanking:
    """Embed, build the hyperbolic MST, prune leaves, and record the survival order.

    The tree is built from :attr:`EuclideanCodebook.canonical_vectors`, so
    the ranking depends only on the bytes its fingerprint covers.

    O(K^2 * dim) time, O(K * dim) memory.
    """
    if not isinstance(parent, EuclideanCodebook):
        raise InvalidInputError("parent must be an EuclideanCodebook")
    points = geometry.exp_map(parent.canonical_vectors)
    tree = build_mst(points)
    removal = compute_removal_order(tree, points)
    order = (tree.root,) + tuple(reversed(removal.sequence))
    return ImportanceRanking(parent_fingerprint=parent.fingerprint, survival_order=order)


def _check_binding(parent: EuclideanCodebook, ranking: ImportanceRanking):
    if ranking.parent_fingerprint != parent.fingerprint:
        raise StaleRankingError(
            f"ranking was computed for parent {ranking.parent_fingerprint[:12]}..., "
            f"not {parent.fingerprint[:12]}..."
        )
    if ranking.size != parent.size:
        raise StaleRankingError(f"ranking covers {ranking.size} vectors, parent has {parent.size}")


def resize(parent: EuclideanCodebook, ranking: ImportanceRanking, size: int) -> EuclideanCodebook:
    """Child codebook of the ``size`` most important parent vectors, most important first.

    Vectors go through the exponential map and back, so each equals its
    parent vector up to rounding (norms above ~14 are clamped).  No tree
    work happens here.
    """
    _check_binding(parent, ranking)
    if isinstance(size, bool) or not isinstance(size, (int, np.integer)) or not 1 <= size <= parent.size:
        raise InvalidInputError(f"size must be an integer in [1, {parent.size}], got {size!r}")
    keep = np.fromiter(ranking.survival_order[:size], dtype=np.int64, count=size)
    return EuclideanCodebook(geometry.log_map(geometry.exp_map(parent.vectors[keep])))


@dataclass(frozen=True)
class RankingReport:
    ok: bool
    reason: str = ""
    step: int | None = None

    def __bool__(self):
        return self.ok


def verify_ranking(parent: EuclideanCodebook, ranking: ImportanceRanking) -> RankingReport:
    """Check fingerprint, permutation validity and leaf-by-leaf replay validity.

    Replay rebuilds the semantic tree of ``parent`` (quadratic cost).
    ``step`` in a failing report indexes the removal sequence, i.e. the
    survival order read from the end.
    """
    try:
        fp = parent.fingerprint
        order = tuple(ranking.survival_order)
    except Exception as exc:
        return RankingReport(False, f"unreadable input: {exc}")
    if ranking.parent_fingerprint != fp:
        return RankingReport(False, "fingerprint mismatch")
    if len(order) != parent.size:
        return RankingReport(False, f"survival_order has {len(order)} entries, parent has {parent.size}")
    if sorted(order) != list(range(parent.size)):
        return RankingReport(False, "survival_order is not a permutation")
    points = geometry.exp_map(parent.canonical_vectors)
    tree = build_mst(points)
    if order[0] != tree.root:
        return RankingReport(False, f"survival_order[0] = {order[0]} is not the tree root {tree.root}")
    bad = first_invalid_removal(tree, ranking.removal_order())
    if bad is not None:
        step, reason = bad
        return RankingReport(False, f"removal step {step}: {reason}", step)
    return RankingReport(True)


def read_ranking(path) -> ImportanceRanking:
    with open(os.fspath(path), encoding="utf-8") as fh:
        return ImportanceRanking.from_text(fh.read())


def write_ranking(path, ranking: ImportanceRanking) -> None:
    atomic_write(path, ranking.to_text())
