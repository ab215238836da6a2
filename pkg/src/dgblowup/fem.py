"""Continuous piecewise-polynomial finite elements on a :class:`Mesh1D`.

Each element carries the Gauss-Lobatto nodal basis of degree p; the shared
endpoint nodes give global continuity and the two domain endpoints are the
homogeneous Dirichlet nodes, so the unknowns are the ``p * n_elements - 1``
interior nodes numbered left to right. The global matrices are therefore
banded with half-bandwidth p and are stored in LAPACK upper-banded form.

Fields are evaluated on :class:`SampleGrid` objects: a fixed set of reference
points replicated on every element of some mesh. A grid may live on any mesh
that refines the field's mesh, which is how fields from consecutive time
slabs (different meshes) are compared and combined on a common refinement.
"""
from __future__ import annotations

from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from numpy.polynomial import Legendre
from numpy.polynomial import legendre as npleg

from .mesh import Mesh1D
from .time_basis import gauss_legendre


class ReferenceElement:
    """Gauss-Lobatto nodal basis of degree p on [-1, 1].

    Evaluation goes through the Legendre modal basis (``V^{-1}`` maps nodal
    to modal coefficients), which keeps p = 8 well conditioned.
    """

    def __init__(self, p: int):
        if p < 1:
            raise ValueError(f"polynomial degree must be >= 1, got {p}")
        self.p = p
        interior = np.sort(Legendre.basis(p).deriv().roots().real) if p > 1 else np.array([])
        self.nodes = np.concatenate([[-1.0], interior, [1.0]])
        V = npleg.legvander(self.nodes, p)
        self.nodal_to_modal = np.linalg.inv(V)
        # modal derivative operators: column k holds the modal coefficients of L_k^(d)
        self._dmodal = [np.eye(p + 1)]
        for _ in range(2):
            prev = self._dmodal[-1]
            D = np.zeros((p + 1, p + 1))
            for k in range(p + 1):
                d = npleg.legder(prev[:, k])
                D[: len(d), k] = d
            self._dmodal.append(D)

    def modal_derivative(self, deriv: int) -> np.ndarray:
        if deriv > 2:
            raise ValueError("only derivatives up to order 2 are supported")
        return self._dmodal[deriv]

    def basis(self, xi, deriv: int = 0) -> np.ndarray:
        """Nodal basis (or its reference derivative) at points xi, shape (len(xi), p + 1)."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        return npleg.legvander(xi, self.p) @ self.modal_derivative(deriv) @ self.nodal_to_modal


@lru_cache(maxsize=16)
def reference_element(p: int) -> ReferenceElement:
    return ReferenceElement(p)


class SampleGrid:
    """The reference points ``xi`` mapped onto every element of ``mesh``.

    Args:
        mesh: Carrier mesh.
        xi: Reference points in [-1, 1]; endpoints may be included, in which
            case node values are one-sided limits from the owning element.
        weights: Optional reference quadrature weights matching ``xi``.
    """

    def __init__(self, mesh: Mesh1D, xi, weights=None):
        self.mesh = mesh
        self.xi = np.asarray(xi, dtype=float)
        self.ref_weights = None if weights is None else np.asarray(weights, dtype=float)
        self.x = mesh.x_left[:, None] + 0.5 * (self.xi[None, :] + 1.0) * mesh.h[:, None]

    @classmethod
    def sampling(cls, mesh: Mesh1D, n_interior: int) -> "SampleGrid":
        """Element endpoints plus ``n_interior`` equispaced interior points."""
        return cls(mesh, np.linspace(-1.0, 1.0, n_interior + 2))

    @classmethod
    def gauss(cls, mesh: Mesh1D, n: int) -> "SampleGrid":
        q = gauss_legendre(n)
        return cls(mesh, q.points, q.weights)

    @property
    def shape(self) -> tuple[int, int]:
        return self.x.shape

    @cached_property
    def weights(self) -> np.ndarray:
        """Physical quadrature weights, shape (n_elements, n_points)."""
        if self.ref_weights is None:
            raise ValueError("grid carries no quadrature weights")
        return 0.5 * self.mesh.h[:, None] * self.ref_weights[None, :]

    @cached_property
    def key(self):
        return (self.mesh.domain, self.mesh.n_root, self.mesh.ids, self.xi.tobytes())


def grid_values(obj, grid: SampleGrid, deriv: int = 0) -> np.ndarray:
    """Evaluate a field-like object on a grid.

    Anything with an ``eval_grid`` method is asked directly; plain callables
    are treated as functions of x (derivatives are not available for them).
    """
    if hasattr(obj, "eval_grid"):
        return obj.eval_grid(grid, deriv)
    if deriv != 0:
        raise ValueError("derivatives of plain callables are not available")
    return np.broadcast_to(np.asarray(obj(grid.x), dtype=float), grid.shape)


class FemSpace:
    """cG(p) space with homogeneous Dirichlet conditions on ``mesh``."""

    def __init__(self, mesh: Mesh1D, p: int):
        self.mesh = mesh
        self.p = int(p)
        self.ref = reference_element(self.p)
        n_el = mesh.n_elements
        self.n_nodes = self.p * n_el + 1
        self.n_dofs = self.n_nodes - 2
        self.dof_map = self.p * np.arange(n_el)[:, None] + np.arange(self.p + 1)[None, :]
        x = mesh.x_left[:, None] + 0.5 * (self.ref.nodes[None, :] + 1.0) * mesh.h[:, None]
        node_x = np.empty(self.n_nodes)
        node_x[self.dof_map] = x
        node_x[0], node_x[-1] = mesh.domain
        self.node_x = node_x
        self.boundary = np.zeros(self.n_nodes, dtype=bool)
        self.boundary[[0, -1]] = True

    def __repr__(self) -> str:
        return f"FemSpace(p={self.p}, n_elements={self.mesh.n_elements}, n_dofs={self.n_dofs})"

    @property
    def interior_x(self) -> np.ndarray:
        return self.node_x[1:-1]

    def full(self, coeffs: np.ndarray) -> np.ndarray:
        """Pad interior coefficients (last axis) with the zero boundary values."""
        coeffs = np.asarray(coeffs, dtype=float)
        pad = [(0, 0)] * (coeffs.ndim - 1) + [(1, 1)]
        return np.pad(coeffs, pad)

    def local(self, coeffs: np.ndarray) -> np.ndarray:
        """Element-local nodal values, shape (..., n_elements, p + 1)."""
        return self.full(coeffs)[..., self.dof_map]

    def modal(self, coeffs: np.ndarray) -> np.ndarray:
        """Element-local Legendre coefficients, shape (..., n_elements, p + 1)."""
        return self.local(coeffs) @ self.ref.nodal_to_modal.T

    def basis_on_grid(self, grid: SampleGrid, deriv: int = 0):
        """Basis functions (physical derivative ``deriv``) at the grid points.

        Returns:
            (parents, B): ``parents[g]`` is the element of this space holding
            grid element g and ``B[g, q, i]`` the value of local basis
            function i at grid point q (shape (n_grid_elements, n_points, p + 1)).
        """
        mesh = self.mesh
        if grid.mesh == mesh:
            parents = np.arange(mesh.n_elements)
            B = self.ref.basis(grid.xi, deriv)[None, :, :]
            scale = (2.0 / mesh.h) ** deriv
            return parents, B * scale[:, None, None]
        parents = grid.mesh.parent_positions(mesh)
        xl = mesh.x_left[parents][:, None]
        h = mesh.h[parents][:, None]
        xi = np.clip(2.0 * (grid.x - xl) / h - 1.0, -1.0, 1.0)
        B = self.ref.basis(xi.ravel(), deriv).reshape(*xi.shape, self.p + 1)
        return parents, B * ((2.0 / h) ** deriv)[:, :, None]

    def eval_coeffs(self, coeffs: np.ndarray, grid: SampleGrid, deriv: int = 0) -> np.ndarray:
        """Evaluate one or several coefficient vectors (last axis = dofs) on a grid.

        Returns:
            Array of shape (..., n_grid_elements, n_points).
        """
        parents, B = self.basis_on_grid(grid, deriv)
        loc = self.local(coeffs)[..., parents, :]
        return np.einsum("...gk,gqk->...gq", loc, np.broadcast_to(B, (len(parents),) + B.shape[1:]))

    def assemble_load(self, values: np.ndarray, grid: SampleGrid) -> np.ndarray:
        """Integrate grid-sampled data against every basis function.

        Args:
            values: Samples on a Gauss grid, shape (..., n_grid_elements, n_points).
            grid: Quadrature grid on a mesh refining this space's mesh.

        Returns:
            Interior load vectors, shape (..., n_dofs).
        """
        parents, B = self.basis_on_grid(grid)
        weighted = np.asarray(values) * grid.weights
        B = np.broadcast_to(B, (len(parents),) + B.shape[1:])
        local = np.einsum("...gq,gqk->...gk", weighted, B)
        lead = local.shape[:-2]
        idx = self.dof_map[parents].ravel()
        flat_loc = local.reshape(-1, idx.size)
        out = np.stack([np.bincount(idx, weights=row, minlength=self.n_nodes) for row in flat_loc])
        return out.reshape(lead + (self.n_nodes,))[..., 1:-1]

    def interpolate(self, func) -> "SpatialField":
        """Nodal interpolant of a callable (boundary values are dropped)."""
        return SpatialField(self, np.asarray(func(self.interior_x), dtype=float))

    def zero(self) -> "SpatialField":
        return SpatialField(self, np.zeros(self.n_dofs))


class SpatialField:
    """A member of a :class:`FemSpace`, given by its interior nodal values."""

    def __init__(self, space: FemSpace, coefficients):
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (space.n_dofs,):
            raise ValueError(f"expected {space.n_dofs} coefficients, got shape {coefficients.shape}")
        self.space = space
        self.coefficients = coefficients

    @property
    def mesh(self) -> Mesh1D:
        return self.space.mesh

    @property
    def nodal_values(self) -> np.ndarray:
        """Values at all nodes, boundary zeros included."""
        return self.space.full(self.coefficients)

    def eval_grid(self, grid: SampleGrid, deriv: int = 0) -> np.ndarray:
        return self.space.eval_coeffs(self.coefficients, grid, deriv)

    def __call__(self, x, deriv: int = 0):
        """Point evaluation (interior nodes use the element to their right)."""
        x = np.asarray(x, dtype=float)
        flat = np.atleast_1d(x).ravel()
        mesh = self.mesh
        pos = mesh.locate_index(flat)
        xi = np.clip(2.0 * (flat - mesh.x_left[pos]) / mesh.h[pos] - 1.0, -1.0, 1.0)
        P = npleg.legvander(xi, self.space.p) @ self.space.ref.modal_derivative(deriv)
        modal = self.space.modal(self.coefficients)[pos]
        vals = np.einsum("nk,nk->n", P, modal) * (2.0 / mesh.h[pos]) ** deriv
        return float(vals[0]) if x.ndim == 0 else vals.reshape(x.shape)

    def __add__(self, other: "SpatialField") -> "SpatialField":
        self._check_same(other)
        return SpatialField(self.space, self.coefficients + other.coefficients)

    def __sub__(self, other: "SpatialField") -> "SpatialField":
        self._check_same(other)
        return SpatialField(self.space, self.coefficients - other.coefficients)

    def __mul__(self, c: float) -> "SpatialField":
        return SpatialField(self.space, c * self.coefficients)

    __rmul__ = __mul__

    def _check_same(self, other):
        if other.space is not self.space and (other.space.mesh != self.space.mesh or other.space.p != self.space.p):
            raise ValueError("fields live in different spaces")


class FunctionField:
    """A closed-form function of x, optionally with known derivatives."""

    def __init__(self, func, *derivatives):
        self._funcs = (func,) + tuple(derivatives)

    def eval_grid(self, grid: SampleGrid, deriv: int = 0) -> np.ndarray:
        if deriv >= len(self._funcs):
            raise ValueError(f"derivative of order {deriv} not supplied")
        return np.broadcast_to(np.asarray(self._funcs[deriv](grid.x), dtype=float), grid.shape)

    def __call__(self, x, deriv: int = 0):
        return self._funcs[deriv](x)


class FieldSum:
    """Lazy linear combination ``sum_i c_i * field_i`` of grid-evaluable fields."""

    def __init__(self, terms):
        self.terms = [(float(c), f) for c, f in terms]

    def eval_grid(self, grid: SampleGrid, deriv: int = 0) -> np.ndarray:
        out = np.zeros(grid.shape)
        for c, f in self.terms:
            if c != 0.0:
                out = out + c * grid_values(f, grid, deriv)
        return out

    def __call__(self, x, deriv: int = 0):
        out = 0.0
        for c, f in self.terms:
            if c != 0.0:
                out = out + c * (f(x, deriv) if deriv else f(x))
        return np.asarray(out, dtype=float)


class BandedOperator:
    """Symmetric banded matrix in LAPACK upper form ``ab[u + i - j, j] = A[i, j]``."""

    def __init__(self, ab: np.ndarray):
        self.ab = np.asarray(ab, dtype=float)
        self._chol = None

    @classmethod
    def from_sparse(cls, A: sp.spmatrix, bandwidth: int) -> "BandedOperator":
        A = sp.csr_matrix(A)
        n = A.shape[0]
        ab = np.zeros((bandwidth + 1, n))
        for d in range(bandwidth + 1):
            ab[bandwidth - d, d:] = A.diagonal(d)
        return cls(ab)

    @property
    def bandwidth(self) -> int:
        return self.ab.shape[0] - 1

    @property
    def n(self) -> int:
        return self.ab.shape[1]

    def toarray(self) -> np.ndarray:
        u, n = self.bandwidth, self.n
        A = np.zeros((n, n))
        for d in range(min(u + 1, n)):
            diag = self.ab[u - d, d:]
            A += np.diag(diag, d)
            if d:
                A += np.diag(diag, -d)
        return A

    @cached_property
    def sparse(self) -> sp.csr_matrix:
        u, n = self.bandwidth, self.n
        offsets = list(range(min(u + 1, n)))
        diags = [self.ab[u - d, d:] for d in offsets]
        upper = sp.diags(diags, offsets, shape=(n, n))
        lower = sp.diags(diags[1:], [-d for d in offsets[1:]], shape=(n, n)) if len(offsets) > 1 else None
        return sp.csr_matrix(upper if lower is None else upper + lower)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return self.sparse @ v

    def __mul__(self, c: float) -> "BandedOperator":
        return BandedOperator(c * self.ab)

    __rmul__ = __mul__

    def __add__(self, other: "BandedOperator") -> "BandedOperator":
        u = max(self.bandwidth, other.bandwidth)
        ab = np.zeros((u + 1, self.n))
        ab[u - self.bandwidth:] += self.ab
        ab[u - other.bandwidth:] += other.ab
        return BandedOperator(ab)

    def cholesky(self) -> np.ndarray:
        """Banded Cholesky factor; raises ``numpy.linalg.LinAlgError`` if not positive definite."""
        if self._chol is None:
            self._chol = sla.cholesky_banded(self.ab, lower=False)
        return self._chol

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.cho_solve_banded((self.cholesky(), False), b)


def element_matrices(p: int) -> tuple[np.ndarray, np.ndarray]:
    """Reference mass and stiffness matrices on [-1, 1] (exact Gauss integration)."""
    ref = reference_element(p)
    q = gauss_legendre(p + 1)
    B = ref.basis(q.points)
    D = ref.basis(q.points, 1)
    return (B.T * q.weights) @ B, (D.T * q.weights) @ D


def assemble(space: FemSpace, kappa: float = 1.0) -> tuple[BandedOperator, BandedOperator]:
    """Mass matrix M and stiffness matrix kappa * K on the interior dofs."""
    Mref, Kref = element_matrices(space.p)
    h = space.mesh.h
    me = 0.5 * h[:, None, None] * Mref[None]
    ke = (2.0 * kappa / h)[:, None, None] * Kref[None]
    rows = np.repeat(space.dof_map, space.p + 1, axis=1).ravel()
    cols = np.tile(space.dof_map, (1, space.p + 1)).ravel()
    shape = (space.n_nodes, space.n_nodes)
    M = sp.coo_matrix((me.ravel(), (rows, cols)), shape=shape).tocsr()[1:-1, 1:-1]
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=shape).tocsr()[1:-1, 1:-1]
    return BandedOperator.from_sparse(M, space.p), BandedOperator.from_sparse(K, space.p)


def load_vector(space: FemSpace, g, n_quad: int | None = None, quad_mesh: Mesh1D | None = None) -> np.ndarray:
    """(g, phi_i) for every interior basis function by element Gauss quadrature.

    Args:
        space: Target space.
        g: Callable of x or grid-evaluable field.
        n_quad: Gauss points per element (default p + 3).
        quad_mesh: Integrate over the elements of this mesh instead; it must
            refine ``space.mesh`` (used when g is piecewise on another mesh).
    """
    n_quad = space.p + 3 if n_quad is None else n_quad
    grid = SampleGrid.gauss(quad_mesh if quad_mesh is not None else space.mesh, n_quad)
    return space.assemble_load(grid_values(g, grid), grid)


def elliptic_solve(space: FemSpace, kappa: float, g, n_quad: int | None = None) -> SpatialField:
    """Galerkin approximation of -kappa w'' = g, w = 0 on the boundary.

    Raises:
        numpy.linalg.LinAlgError: if the stiffness matrix is not positive definite.
    """
    _, K = assemble(space, kappa)
    return SpatialField(space, K.solve(load_vector(space, g, n_quad)))


def energy_projection(space: FemSpace, u0, u0_xx, tol: float = 1e-10) -> SpatialField:
    """Energy projection: (pi u0', v') = (-u0'', v) for all v in the space.

    Raises:
        ValueError: if u0 does not vanish at the domain endpoints (the heat
            problem carries homogeneous Dirichlet data).
    """
    a, b = space.mesh.domain
    ends = np.abs(np.asarray(u0(np.array([a, b])), dtype=float))
    if np.any(ends > tol):
        raise ValueError(
            f"initial datum violates the homogeneous Dirichlet boundary condition: |u0(a)|, |u0(b)| = {ends}")
    _, K = assemble(space, 1.0)
    rhs = load_vector(space, lambda x: -np.asarray(u0_xx(x), dtype=float))
    return SpatialField(space, K.solve(rhs))


def sampling_grid(mesh: Mesh1D, p: int, n_s: int | None = None) -> SampleGrid:
    """Grid used for all L-infinity norms: endpoints plus n_s = p + 3 interior samples."""
    return SampleGrid.sampling(mesh, p + 3 if n_s is None else n_s)


def sup_norm(obj, mesh: Mesh1D | None = None, p: int | None = None, n_s: int | None = None) -> float:
    """Sampled maximum of |obj| over the domain.

    ``mesh`` and ``p`` default to those of a :class:`SpatialField`.
    """
    if mesh is None:
        mesh = obj.space.mesh
    if p is None:
        p = obj.space.p if isinstance(obj, SpatialField) else 1
    return float(np.max(np.abs(grid_values(obj, sampling_grid(mesh, p, n_s)))))


def dump_field(obj, mesh: Mesh1D | None = None, n_per_element: int = 10) -> str:
    """Two-column "x value" table for plotting, ``n_per_element`` interior samples per element."""
    if mesh is None:
        mesh = obj.space.mesh
    grid = SampleGrid.sampling(mesh, n_per_element)
    x = grid.x[:, :-1].ravel()
    v = grid_values(obj, grid)[:, :-1].ravel()
    x = np.append(x, grid.x[-1, -1])
    v = np.append(v, grid_values(obj, grid)[-1, -1])
    return "".join(f"{float(xi)!r} {float(vi)!r}\n" for xi, vi in zip(x, v))
