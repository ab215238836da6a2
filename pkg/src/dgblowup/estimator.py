"""Pointwise residual estimator for -kappa w'' = g in one dimension.

For a continuous piecewise polynomial w_h on a mesh the estimator collects

* an element residual  kappa^{-1} h_K^2 sup_K |g + kappa w_h''|, and
* a node term          h_z |[w_h']_z|  (h_z the larger neighbouring size),

and reports their maximum. Both terms are invariant under (kappa, g) ->
(c kappa, c g), as the discrete solution is. Suprema are taken over the
sampling grid used for every L-infinity norm in the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import SampleGrid, grid_values, sampling_grid
from .mesh import Mesh1D


@dataclass
class EllipticEstimate:
    """Estimator value with its local contributions.

    ``per_element`` has one entry per element of ``mesh`` and ``per_node``
    one per interior node (node i sits between elements i and i + 1).
    """

    total: float
    per_element: np.ndarray
    per_node: np.ndarray
    mesh: Mesh1D

    def local(self) -> np.ndarray:
        """Per-element indicator: element residual or an adjacent node term, whichever is larger."""
        return local_contributions(self.per_element, self.per_node)


def local_contributions(per_element: np.ndarray, per_node: np.ndarray) -> np.ndarray:
    """Attach every node term to both neighbouring elements and take the maximum.

    Works on stacked arrays: the last axis indexes elements / nodes.
    """
    out = np.array(per_element, dtype=float, copy=True)
    if per_node.shape[-1]:
        out[..., :-1] = np.maximum(out[..., :-1], per_node)
        out[..., 1:] = np.maximum(out[..., 1:], per_node)
    return out


def estimate_samples(w_xx: np.ndarray, w_x: np.ndarray, g: np.ndarray, grid: SampleGrid, kappa: float):
    """Estimator from precomputed samples; leading axes are batch axes.

    Args:
        w_xx: Second x-derivative of w_h on ``grid``, shape (..., n_el, n_pts).
        w_x: First x-derivative on ``grid``; the first and last columns must
            be the element endpoint values (one-sided limits).
        g: Right-hand side on ``grid``.
        grid: A sampling grid that includes the element endpoints.
        kappa: Diffusion coefficient.

    Returns:
        (total, per_element, per_node) with the batch shape leading.
    """
    h = grid.mesh.h
    resid = np.max(np.abs(g + kappa * w_xx), axis=-1)
    per_element = resid * h**2 / kappa
    jumps = np.abs(w_x[..., 1:, 0] - w_x[..., :-1, -1])
    per_node = jumps * np.maximum(h[1:], h[:-1])
    total = np.max(per_element, axis=-1)
    if per_node.shape[-1]:
        total = np.maximum(total, np.max(per_node, axis=-1))
    return total, per_element, per_node


def estimate(w_h, g, mesh: Mesh1D, kappa: float, n_s: int | None = None, p: int | None = None) -> EllipticEstimate:
    """Evaluate the estimator E(w_h, g, mesh).

    Args:
        w_h: Grid-evaluable function with two x-derivatives, piecewise smooth
            on a mesh that ``mesh`` refines (e.g. a :class:`SpatialField`).
        g: Right-hand side (callable of x or grid-evaluable).
        mesh: Mesh on which residuals and node jumps are collected.
        kappa: Diffusion coefficient.
        n_s: Interior samples per element (default p + 3).
        p: Degree used for the default sample count; taken from ``w_h`` when
            it is a FEM field.
    """
    if p is None:
        p = getattr(getattr(w_h, "space", None), "p", 1)
    grid = sampling_grid(mesh, p, n_s)
    total, per_el, per_node = estimate_samples(
        grid_values(w_h, grid, 2), grid_values(w_h, grid, 1), grid_values(g, grid), grid, kappa)
    return EllipticEstimate(float(total), per_el, per_node, mesh)
