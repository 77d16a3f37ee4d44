"""Smooth bounded test functions and their derivative seminorms.

Seminorms are declared by whoever builds the function; ``seminorm_audit`` can
falsify a declaration numerically but never certifies one.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "AuditFailed",
    "AuditReport",
    "TestFunction",
    "inverse_quadratic",
    "constant",
    "get_test_function",
    "seminorm_audit",
    "TEST_FUNCTIONS",
]


class AuditFailed(AssertionError):
    def __init__(self, message: str, offenders: list):
        super().__init__(message)
        self.offenders = offenders


@dataclass(frozen=True)
class TestFunction:
    """A function h on R^d with declared sup-norm, |h|_1 and |h|_2.

    ``func`` is vectorised over the last axis: an ``(..., d)`` array maps to
    ``(...)``. ``radial`` (optional) gives h as a function of the squared
    radius, which lets Gaussian expectations reduce to a 1-D integral.
    """

    __test__ = False  # keep pytest from collecting this as a test class

    name: str
    dim: int
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    sup_norm: float
    grad_seminorm: float
    hess_seminorm: float
    radial: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, repr=False)

    def __post_init__(self):
        for label in ("sup_norm", "grad_seminorm", "hess_seminorm"):
            value = getattr(self, label)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{label} must be finite and non-negative, got {value}")

    def __call__(self, x) -> np.ndarray:
        return self.func(np.asarray(x, dtype=np.float64))


def _inverse_quadratic(x: np.ndarray) -> np.ndarray:
    return 1.0 / (np.sum(x * x, axis=-1) + 1.0)


def _inverse_quadratic_radial(s: np.ndarray) -> np.ndarray:
    return 1.0 / (s + 1.0)


def inverse_quadratic() -> TestFunction:
    """h(x, y) = 1 / (x^2 + y^2 + 1).

    The gradient peaks at radius 1/sqrt(3) with size 3*sqrt(3)/8; the largest
    second partial is |d^2h/dx^2| = 2 at the origin.
    """
    return TestFunction(
        name="inverse-quadratic",
        dim=2,
        func=_inverse_quadratic,
        sup_norm=1.0,
        grad_seminorm=3.0 * math.sqrt(3.0) / 8.0,
        hess_seminorm=2.0,
        radial=_inverse_quadratic_radial,
    )


def _constant(x: np.ndarray, value: float) -> np.ndarray:
    return np.full(x.shape[:-1], value)


def _constant_radial(s: np.ndarray, value: float) -> np.ndarray:
    return np.full(np.shape(s), value)


def constant(value: float, dim: int = 2) -> TestFunction:
    return TestFunction(
        name=f"constant({value!r})",
        dim=dim,
        func=functools.partial(_constant, value=float(value)),
        sup_norm=abs(float(value)),
        grad_seminorm=0.0,
        hess_seminorm=0.0,
        radial=functools.partial(_constant_radial, value=float(value)),
    )


TEST_FUNCTIONS = {"inverse-quadratic": inverse_quadratic}


def get_test_function(name: str) -> TestFunction:
    try:
        return TEST_FUNCTIONS[name]()
    except KeyError:
        raise KeyError(f"unknown test function {name!r}; choose from {sorted(TEST_FUNCTIONS)}") from None


@dataclass
class AuditReport:
    max_abs_value: float
    max_grad: float
    argmax_grad: tuple
    max_hess: float
    argmax_hess: tuple
    offenders: list

    @property
    def passed(self) -> bool:
        return not self.offenders


def seminorm_audit(
    h: TestFunction,
    grid_halfwidth: float = 5.0,
    grid_points: int = 201,
    step: float = 1e-4,
    rel_tol: float = 1e-3,
    raise_on_failure: bool = True,
) -> AuditReport:
    """Central-difference search for derivatives exceeding the declared seminorms.

    Evaluates on a uniform ``grid_points**d`` grid over ``[-w, w]^d``. Any grid
    estimate above ``declared * (1 + rel_tol)`` is an offender.
    """
    if grid_points < 3:
        raise ValueError("grid_points must be >= 3")
    d = h.dim
    axis = np.linspace(-grid_halfwidth, grid_halfwidth, grid_points)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    eye = np.eye(d) * step

    values = h(grid)
    grads = np.empty((grid.shape[0], d))
    for i in range(d):
        grads[:, i] = (h(grid + eye[i]) - h(grid - eye[i])) / (2 * step)

    hess = np.empty((grid.shape[0], d, d))
    for i, j in itertools.combinations_with_replacement(range(d), 2):
        if i == j:
            est = (h(grid + eye[i]) - 2 * values + h(grid - eye[i])) / step**2
        else:
            est = (
                h(grid + eye[i] + eye[j])
                - h(grid + eye[i] - eye[j])
                - h(grid - eye[i] + eye[j])
                + h(grid - eye[i] - eye[j])
            ) / (4 * step**2)
        hess[:, i, j] = hess[:, j, i] = est

    abs_grad = np.abs(grads).max(axis=1)
    abs_hess = np.abs(hess).reshape(grid.shape[0], -1).max(axis=1)
    ig = int(np.argmax(abs_grad))
    ih = int(np.argmax(abs_hess))

    offenders = []
    checks = (
        ("sup_norm", np.abs(values), h.sup_norm),
        ("grad_seminorm", abs_grad, h.grad_seminorm),
        ("hess_seminorm", abs_hess, h.hess_seminorm),
    )
    for label, observed, declared in checks:
        for idx in np.flatnonzero(observed > declared * (1 + rel_tol) + 1e-12):
            offenders.append((label, tuple(float(v) for v in grid[idx]), float(observed[idx]), declared))

    report = AuditReport(
        max_abs_value=float(np.abs(values).max()),
        max_grad=float(abs_grad[ig]),
        argmax_grad=tuple(float(v) for v in grid[ig]),
        max_hess=float(abs_hess[ih]),
        argmax_hess=tuple(float(v) for v in grid[ih]),
        offenders=offenders,
    )
    if offenders and raise_on_failure:
        shown = ", ".join(f"{lab} at {pt}: {obs:.6g} > {dec:.6g}" for lab, pt, obs, dec in offenders[:5])
        raise AuditFailed(f"{len(offenders)} grid points exceed declared seminorms: {shown}", offenders)
    return report
