"""Fractional Ornstein-Uhlenbeck paths, Malliavin calculus and log-Sobolev checks on a grid."""

from __future__ import annotations

from .grid import RngSpec, TimeGrid, VecPath, make_grid, sample_bm_increments
from .kernel import DiscreteKernel, c_H, compute_C2, eval_kernel, fbm_covariance, fit_C1, kernel_matrix
from .fracops import CMElement, apply_K, apply_K_inverse_marchaud, apply_K_inverse_matrix, inner_product
from .simulate import ModelParams, PathBatch, PathBundle, simulate_batch, simulate_batch_arrays, simulate_bundle
from .malliavin import (
    CylindricalFunctional,
    directional_derivative,
    eval_functional,
    functional_by_label,
    k_inv_gradient,
)
from .girsanov import girsanov_density, ibp_check, j_integrand, pullback_drift
from .clark_ocone import eta_integrand, map_j_to_h, p_term, representation_check
from .lsi import entropy_mc, lsi_check, lsi_constants

__version__ = "0.1.0"
