"""Adaptive dG-in-time / cG-in-space solver for u_t - kappa u_xx = f(u) in 1D.

The solver marches discontinuous Galerkin time slabs of degree r over
conforming degree-p finite element meshes, reconstructs the discrete
solution in time and space, and carries a conditional L-infinity error bound
whose breakdown signals the approach of a finite-time blow-up.
"""
from .adapt import (AdaptConfig, AdaptiveSolver, BlowupEstimate, RunResult, StepRecord,
                    blowup_extrapolate, hp_degree, march, run_adaptive)
from .bound import BoundState, LipschitzModulus, SlabBoundData, advance_psi, delta_root
from .dg import SlabSolution, solve_slab
from .estimator import EllipticEstimate, estimate
from .fem import FemSpace, SampleGrid, SpatialField, elliptic_solve, energy_projection, sup_norm
from .mesh import Mesh1D, MeshDelta, apply_delta, common_refinement, uniform_mesh
from .problems import PRESETS, ProblemDef, preset
from .reconstruct import SlabReconstruction, estimators_for_slab
from .time_basis import IntervalMap, gauss_legendre, lifting_Q

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig", "AdaptiveSolver", "BlowupEstimate", "BoundState", "EllipticEstimate", "FemSpace",
    "IntervalMap", "LipschitzModulus", "Mesh1D", "MeshDelta", "PRESETS", "ProblemDef", "RunResult",
    "SampleGrid", "SlabBoundData", "SlabReconstruction", "SlabSolution", "SpatialField", "StepRecord",
    "advance_psi", "apply_delta", "blowup_extrapolate", "common_refinement", "delta_root",
    "elliptic_solve", "energy_projection", "estimate", "estimators_for_slab", "gauss_legendre",
    "hp_degree", "lifting_Q", "march", "preset", "run_adaptive", "solve_slab", "sup_norm",
    "uniform_mesh",
]
