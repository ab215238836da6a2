"""Hierarchical bisection meshes on an interval.

Every element is a node of a binary refinement tree rooted at a uniform
partition of (a, b) into ``n_root`` cells. An element is identified by the
pair ``(level, index)``: it covers

    [a + index * H / 2**level, a + (index + 1) * H / 2**level],  H = (b - a) / n_root.

The pair doubles as the path id in the tree (the binary digits of ``index``
below the root index are the left/right turns), so ids are stable across
meshes. That makes the coarsest common refinement of several meshes the set
union of their tree paths, and lets fields living on different meshes be
evaluated on a common grid without any interpolation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

import numpy as np

ElementId = tuple[int, int]


class StaleMeshError(KeyError):
    """Raised when a refinement request names an element that is not a leaf."""


class MeshMismatchError(ValueError):
    """Raised when meshes over different domains or root partitions are combined."""


def _parent(eid: ElementId) -> ElementId:
    level, index = eid
    return (level - 1, index >> 1)


def _children(eid: ElementId) -> tuple[ElementId, ElementId]:
    level, index = eid
    return (level + 1, 2 * index), (level + 1, 2 * index + 1)


def _sibling(eid: ElementId) -> ElementId:
    level, index = eid
    return (level, index ^ 1)


class Mesh1D:
    """Immutable adaptive interval mesh.

    Args:
        domain: The interval (a, b).
        n_root: Number of root cells of the uniform base partition.
        leaves: Element ids of the leaves; defaults to the root partition.
        max_grading: Largest allowed level difference between neighbours,
            enforced by :func:`apply_delta` (not by the constructor, so that
            common refinements of graded meshes can be represented).
    """

    def __init__(self, domain=(0.0, 1.0), n_root: int = 8, leaves: Iterable[ElementId] | None = None,
                 max_grading: int = 2):
        a, b = float(domain[0]), float(domain[1])
        if not b > a:
            raise ValueError(f"invalid domain ({a}, {b})")
        if n_root < 1:
            raise ValueError("n_root must be positive")
        self.domain = (a, b)
        self.n_root = int(n_root)
        self.max_grading = int(max_grading)
        if leaves is None:
            leaves = [(0, i) for i in range(self.n_root)]
        ids = sorted({(int(l), int(i)) for l, i in leaves}, key=self._left_fraction)
        self._ids = tuple(ids)
        self._levels = np.array([l for l, _ in ids], dtype=int)
        idx = np.array([i for _, i in ids], dtype=float)
        H = (b - a) / self.n_root
        scale = H / 2.0 ** self._levels
        self._left = a + idx * scale
        self._right = a + (idx + 1) * scale
        self._right[-1] = b
        self._check_partition()
        self._pos = {eid: k for k, eid in enumerate(self._ids)}
        self._tree: frozenset | None = None
        self._parent_cache: dict = {}

    @staticmethod
    def _left_fraction(eid: ElementId) -> Fraction:
        level, index = eid
        return Fraction(index, 2 ** level)

    def _check_partition(self):
        ids = self._ids
        if not ids:
            raise ValueError("mesh has no elements")
        cursor = Fraction(0)
        for level, index in ids:
            if level < 0 or index < 0:
                raise ValueError(f"invalid element id {(level, index)}")
            left = Fraction(index, 2 ** level)
            if left != cursor:
                raise ValueError(f"leaves do not partition the domain near element {(level, index)}")
            cursor = Fraction(index + 1, 2 ** level)
        if cursor != self.n_root:
            raise ValueError("leaves do not cover the domain")

    # basic geometry -------------------------------------------------------
    @property
    def ids(self) -> tuple[ElementId, ...]:
        return self._ids

    @property
    def n_elements(self) -> int:
        return len(self._ids)

    def __len__(self) -> int:
        return len(self._ids)

    @property
    def levels(self) -> np.ndarray:
        return self._levels

    @property
    def x_left(self) -> np.ndarray:
        return self._left

    @property
    def x_right(self) -> np.ndarray:
        return self._right

    @property
    def h(self) -> np.ndarray:
        return self._right - self._left

    @property
    def nodes(self) -> np.ndarray:
        """Element breakpoints, length n_elements + 1."""
        return np.append(self._left, self._right[-1])

    def position(self, eid: ElementId) -> int:
        try:
            return self._pos[eid]
        except KeyError:
            raise StaleMeshError(f"element {eid} is not a leaf of this mesh") from None

    def __contains__(self, eid) -> bool:
        return eid in self._pos

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mesh1D):
            return NotImplemented
        return (self.domain, self.n_root, self._ids) == (other.domain, other.n_root, other._ids)

    def __hash__(self) -> int:
        return hash((self.domain, self.n_root, self._ids))

    def __repr__(self) -> str:
        return (f"Mesh1D(domain={self.domain}, n_root={self.n_root}, n_elements={self.n_elements}, "
                f"levels={self._levels.min()}..{self._levels.max()})")

    def same_family(self, other: "Mesh1D") -> bool:
        return self.domain == other.domain and self.n_root == other.n_root

    # point location ---------------------------------------------------------
    def locate_index(self, x) -> np.ndarray:
        """Positions of the leaves containing x (interior nodes belong to the right element)."""
        x = np.asarray(x, dtype=float)
        a, b = self.domain
        if np.any(x < a) or np.any(x > b):
            raise ValueError(f"points outside the domain {self.domain}")
        pos = np.searchsorted(self._left, x, side="right") - 1
        return np.clip(pos, 0, self.n_elements - 1)

    def locate(self, x: float) -> ElementId:
        """Id of the unique leaf containing x; x = b maps to the last element."""
        return self._ids[int(self.locate_index(float(x)))]

    # tree structure --------------------------------------------------------
    def tree_nodes(self) -> frozenset[ElementId]:
        """All refinement-tree nodes on the paths from the roots to the leaves."""
        if self._tree is None:
            out = set()
            for eid in self._ids:
                while eid not in out:
                    out.add(eid)
                    if eid[0] == 0:
                        break
                    eid = _parent(eid)
            self._tree = frozenset(out)
        return self._tree

    def refines(self, other: "Mesh1D") -> bool:
        """True if every leaf of this mesh lies inside a leaf of ``other``."""
        if not self.same_family(other):
            return False
        return other.tree_nodes() <= self.tree_nodes()

    def parent_positions(self, coarse: "Mesh1D") -> np.ndarray:
        """For each leaf here, the position of the leaf of ``coarse`` containing it."""
        key = (coarse.domain, coarse.n_root, coarse.ids)
        cached = self._parent_cache.get(key)
        if cached is None:
            if not self.refines(coarse):
                raise MeshMismatchError("mesh does not refine the requested coarse mesh")
            mid = 0.5 * (self._left + self._right)
            cached = coarse.locate_index(mid)
            if len(self._parent_cache) > 8:
                self._parent_cache.clear()
            self._parent_cache[key] = cached
        return cached

    # serialisation -----------------------------------------------------------
    def to_text(self) -> str:
        """One "x_left x_right level" line per leaf."""
        lines = [f"{float(xl)!r} {float(xr)!r} {int(lv)}" for xl, xr, lv in zip(self._left, self._right, self._levels)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, n_root: int | None = None) -> "Mesh1D":
        rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        xl = np.array([float(r[0]) for r in rows])
        xr = np.array([float(r[1]) for r in rows])
        lv = np.array([int(r[2]) for r in rows])
        a, b = xl[0], xr[-1]
        if n_root is None:
            # root cell width is h * 2**level for every leaf
            H = float(np.median((xr - xl) * 2.0 ** lv))
            n_root = int(round((b - a) / H))
        H = (b - a) / n_root
        idx = np.rint((xl - a) / H * 2.0 ** lv).astype(int)
        return cls((a, b), n_root, list(zip(lv.tolist(), idx.tolist())))

    def with_leaves(self, leaves: Iterable[ElementId]) -> "Mesh1D":
        return Mesh1D(self.domain, self.n_root, leaves, self.max_grading)


@dataclass(frozen=True)
class MeshDelta:
    """Refinement and coarsening requests keyed by element id."""

    refine: frozenset = field(default_factory=frozenset)
    coarsen: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "refine", frozenset(self.refine))
        object.__setattr__(self, "coarsen", frozenset(self.coarsen) - frozenset(self.refine))

    @property
    def empty(self) -> bool:
        return not self.refine and not self.coarsen


def uniform_mesh(domain=(0.0, 1.0), n_root: int = 8, level: int = 0, max_grading: int = 2) -> Mesh1D:
    """Root partition refined uniformly ``level`` times."""
    leaves = [(level, i) for i in range(n_root * 2 ** level)]
    return Mesh1D(domain, n_root, leaves, max_grading)


def _graded_closure(leaves: set[ElementId], max_grading: int) -> set[ElementId]:
    """Bisect coarse neighbours until adjacent levels differ by at most ``max_grading``."""
    while True:
        ordered = sorted(leaves, key=Mesh1D._left_fraction)
        levels = [e[0] for e in ordered]
        bad = set()
        for k in range(len(ordered) - 1):
            diff = levels[k + 1] - levels[k]
            if diff > max_grading:
                bad.add(ordered[k])
            elif diff < -max_grading:
                bad.add(ordered[k + 1])
        if not bad:
            return leaves
        for eid in bad:
            leaves.discard(eid)
            leaves.update(_children(eid))


def apply_delta(mesh: Mesh1D, delta: MeshDelta, max_level: int | None = None) -> Mesh1D:
    """Bisect requested leaves and merge jointly-requested sibling pairs.

    Refinement is applied first and closed under the grading rule. A sibling
    pair is merged only when both halves asked for coarsening, neither asked
    for refinement, both are still leaves after the grading closure, and the
    merged parent respects the grading rule against its neighbours.

    Raises:
        StaleMeshError: if a requested id is not a leaf of ``mesh``.
    """
    for eid in delta.refine | delta.coarsen:
        if eid not in mesh:
            raise StaleMeshError(f"element {eid} is not a leaf of this mesh (stale indicator data?)")
    leaves = set(mesh.ids)
    for eid in delta.refine:
        if max_level is not None and eid[0] >= max_level:
            continue
        leaves.discard(eid)
        leaves.update(_children(eid))
    leaves = _graded_closure(leaves, mesh.max_grading)

    candidates = sorted(
        {_parent(e) for e in delta.coarsen
         if e[0] > 0 and _sibling(e) in delta.coarsen and e in leaves and _sibling(e) in leaves},
        key=lambda e: (-e[0], e[1]),
    )
    # doubly linked list over the ordered leaves so each merge is O(1)
    ordered = sorted(leaves, key=Mesh1D._left_fraction)
    prev = {e: (ordered[i - 1] if i else None) for i, e in enumerate(ordered)}
    nxt = {e: (ordered[i + 1] if i + 1 < len(ordered) else None) for i, e in enumerate(ordered)}
    for par in candidates:
        c0, c1 = _children(par)
        if c0 not in leaves or c1 not in leaves:
            continue
        left, right = prev[c0], nxt[c1]
        if any(n is not None and abs(n[0] - par[0]) > mesh.max_grading for n in (left, right)):
            continue
        leaves -= {c0, c1}
        leaves.add(par)
        prev[par], nxt[par] = left, right
        if left is not None:
            nxt[left] = par
        if right is not None:
            prev[right] = par
    return Mesh1D(mesh.domain, mesh.n_root, leaves, mesh.max_grading)


def common_refinement(*meshes: Mesh1D) -> Mesh1D:
    """Coarsest mesh refining every input: the leaves of the union of tree paths.

    Raises:
        MeshMismatchError: for meshes over different domains or root partitions.
    """
    if not meshes:
        raise ValueError("need at least one mesh")
    first = meshes[0]
    for other in meshes[1:]:
        if not first.same_family(other):
            raise MeshMismatchError("meshes differ in domain or root partition")
    if all(m == first for m in meshes[1:]):
        return first
    nodes = set()
    for m in meshes:
        nodes |= m.tree_nodes()
    leaves = [e for e in nodes if _children(e)[0] not in nodes]
    return Mesh1D(first.domain, first.n_root, leaves, first.max_grading)
