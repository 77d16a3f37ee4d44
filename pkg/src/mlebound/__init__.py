"""Explicit bounds on the multivariate normal approximation of maximum likelihood estimators."""

from .bound import (
    BoundBreakdown,
    XiMoments,
    closed_form_normal,
    compute_K,
    general_bound,
    r1_coefficient,
    r1_term,
    xi_moments_mc,
    xi_moments_normal_exact,
    xi_moments_normal_published,
)
from .matrix import NotPositiveDefinite, inverse, principal_sqrt
from .mc import SimConfig, SimReport, estimate_q_h, expect_h_gaussian, lemma23_check, table1
from .model import DegenerateSample, ModelSpec, NormalModel, NormalParams
from .testfn import TestFunction, inverse_quadratic, seminorm_audit

__version__ = "0.1.0"
