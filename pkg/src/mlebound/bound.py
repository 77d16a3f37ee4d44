"""Non-asymptotic bounds on |E h(sqrt(n) I^{1/2} (theta_hat - theta0)) - E h(Z)|.

The bound has three parts:

* ``r1``: a Stein's-method term for the standardized sum
  W = n^{-1/2} sum_i xi_i, driven by moments of
  xi = K^{-1/2} (g(X) - q(theta0)), with K = grad_q I^{-1} grad_q^T;
* ``mse``: 2 ||h|| / eps^2 times the MLE's mean squared error, paying for
  datasets whose largest coordinate error reaches eps;
* ``a1`` + ``a2``: |h|_1 / sqrt(n) times conditional means of the linear
  mismatch term A1 and the curvature term A2, on the event that the largest
  coordinate error stays below eps.

With eps = inf (allowed when q has uniformly bounded second derivatives) the
mse term disappears and the expectations become unconditional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from . import matrix
from ._trials import fit_trials
from .model import ModelSpec, NormalModel
from .testfn import TestFunction

__all__ = [
    "LowAcceptance",
    "XiMoments",
    "BoundBreakdown",
    "ModelMatrices",
    "ATerms",
    "STEIN_CONSTANT",
    "MIN_ACCEPTANCE",
    "compute_K",
    "model_matrices",
    "xi_vector",
    "xi_moments_mc",
    "xi_moments_normal_exact",
    "xi_moments_normal_published",
    "r1_coefficient",
    "r1_term",
    "a_terms_mc",
    "mse_term_mc",
    "general_bound",
    "closed_form_normal",
]

# sup-norm bound on third derivatives of the Stein solution, per unit |h|_2
STEIN_CONSTANT = math.sqrt(math.pi) / (2.0 * math.sqrt(2.0))
MIN_ACCEPTANCE = 0.01
CLOSED_FORM_R1_COEFFICIENT = 7.0


class LowAcceptance(RuntimeError):
    """Too few simulated datasets satisfy |Q_(m)| < eps for a usable conditional mean."""


@dataclass(frozen=True)
class XiMoments:
    """Per-observation moments of xi (identical for every i under i.i.d. sampling).

    ``third_abs[j, k, l] = E|xi_j xi_k xi_l|``, ``second[j, k] = E[xi_j xi_k]``,
    ``first_abs[l] = E|xi_l|``.
    """

    third_abs: np.ndarray
    second: np.ndarray
    first_abs: np.ndarray
    source: str
    std_err: float = 0.0

    def __post_init__(self):
        d = len(self.first_abs)
        if np.shape(self.third_abs) != (d, d, d) or np.shape(self.second) != (d, d):
            raise ValueError("moment arrays have inconsistent shapes")
        if np.any(np.asarray(self.third_abs) < 0) or np.any(np.asarray(self.first_abs) < 0):
            raise ValueError("absolute moments must be non-negative")
        second = np.asarray(self.second)
        if np.any(np.diag(second) < 0) or not np.allclose(second, second.T, rtol=0, atol=1e-12):
            raise ValueError("second moments must be symmetric with non-negative diagonal")
        if np.any(np.asarray(self.first_abs) > np.sqrt(np.diag(second)) * (1 + 1e-12) + 1e-15):
            raise ValueError("E|xi_l| exceeds sqrt(E xi_l^2)")

    @property
    def d(self) -> int:
        return len(self.first_abs)

    def third_aggregate(self) -> float:
        return float(np.sum(self.third_abs))

    def cross_aggregate(self) -> float:
        """sum_{j,k,l} |E xi_j xi_k| E|xi_l|."""
        return float(np.sum(np.abs(self.second)) * np.sum(self.first_abs))


def _symmetrize3(t: np.ndarray) -> np.ndarray:
    perms = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]
    return sum(np.transpose(t, p) for p in perms) / 6.0


@dataclass(frozen=True)
class BoundBreakdown:
    n: int
    mode: str
    r1_term: float
    mse_term: float
    a1_term: float
    a2_term: float
    epsilon: float
    moment_source: str
    std_err: float = 0.0
    """Summed Monte Carlo standard errors of the estimated terms."""

    @property
    def total(self) -> float:
        return self.r1_term + self.mse_term + self.a1_term + self.a2_term

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "mode": self.mode,
            "r1_term": self.r1_term,
            "mse_term": self.mse_term,
            "a1_term": self.a1_term,
            "a2_term": self.a2_term,
            "total": self.total,
            "epsilon": self.epsilon,
            "moment_source": self.moment_source,
            "std_err": self.std_err,
        }


def compute_K(grad_q, fisher) -> np.ndarray:
    """K = grad_q I^{-1} grad_q^T, symmetrized and checked positive definite."""
    grad_q = np.asarray(grad_q, dtype=np.float64)
    k = grad_q @ matrix.inverse(fisher) @ grad_q.T
    k = 0.5 * (k + k.T)
    w = matrix.eigendecompose_sym(k).eigenvalues
    if w[-1] <= matrix.PD_TOL:
        raise matrix.NotPositiveDefinite(f"K has eigenvalue {w[-1]:.3e}")
    return k


@dataclass(frozen=True)
class ModelMatrices:
    """Matrices the bound and the simulations evaluate at theta0."""

    theta0: np.ndarray
    q0: np.ndarray
    fisher: np.ndarray
    fisher_sqrt: np.ndarray
    grad_q: np.ndarray
    K: np.ndarray
    k_inv_sqrt: np.ndarray
    fisher_sqrt_grad_q_inv: np.ndarray = field(repr=False)
    """I^{1/2} [grad_q]^{-1}; equals K^{-1/2} exactly when A1 vanishes."""


def model_matrices(model: ModelSpec, theta0) -> ModelMatrices:
    theta0 = np.asarray(theta0, dtype=np.float64)
    fisher = matrix.as_symmetric(model.fisher(theta0))
    grad_q = np.asarray(model.grad_q(theta0), dtype=np.float64)
    if abs(np.linalg.det(grad_q)) <= 1e-12:
        raise ValueError("grad_q(theta0) is singular")
    k = compute_K(grad_q, fisher)
    fisher_sqrt = matrix.principal_sqrt(fisher)
    return ModelMatrices(
        theta0=theta0,
        q0=np.asarray(model.q(theta0, theta0), dtype=np.float64),
        fisher=fisher,
        fisher_sqrt=fisher_sqrt,
        grad_q=grad_q,
        K=k,
        k_inv_sqrt=matrix.inverse_sqrt(k),
        fisher_sqrt_grad_q_inv=np.linalg.solve(grad_q.T, fisher_sqrt.T).T,
    )


def xi_vector(g_val, q_at_theta0, k_inv_sqrt) -> np.ndarray:
    """K^{-1/2} (g(x) - q(theta0)); also accepts a stack of g values, one per row."""
    diff = np.asarray(g_val, dtype=np.float64) - np.asarray(q_at_theta0, dtype=np.float64)
    return diff @ np.asarray(k_inv_sqrt, dtype=np.float64).T


def xi_moments_mc(model: ModelSpec, theta0, samples: int = 10**6, seed: int = 0) -> XiMoments:
    """Plug-in moment estimates from ``samples`` single-observation draws."""
    if samples < 10**4:
        raise ValueError("xi_moments_mc needs at least 1e4 samples")
    mats = model_matrices(model, theta0)
    x = model.sample(mats.theta0, samples, seed)
    xi = xi_vector(model.g(x, mats.theta0), mats.q0, mats.k_inv_sqrt)
    a = np.abs(xi)
    d = model.d
    third = np.zeros((d, d, d))
    chunk = 1 << 16
    for s in range(0, samples, chunk):
        blk = a[s : s + chunk]
        third += np.einsum("ni,nj,nk->ijk", blk, blk, blk)
    third /= samples
    second = xi.T @ xi / samples
    # standard error of the dominant aggregate, sum_{jkl} |xi_j xi_k xi_l| = (sum_j |xi_j|)^3
    per_obs = a.sum(axis=1) ** 3
    return XiMoments(
        third_abs=_symmetrize3(third),
        second=0.5 * (second + second.T),
        first_abs=a.mean(axis=0),
        source=f"monte-carlo(samples={samples},seed={seed})",
        std_err=float(per_obs.std(ddof=1) / math.sqrt(samples)),
    )


def _normal_expect(f) -> float:
    """E f(Z) for even f, by adaptive quadrature on [0, 1] and [1, inf)."""
    pdf = stats.norm.pdf
    lo, err_lo = integrate.quad(lambda z: f(z) * pdf(z), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)
    hi, err_hi = integrate.quad(lambda z: f(z) * pdf(z), 1.0, np.inf, epsabs=1e-13, epsrel=1e-12)
    if err_lo + err_hi > 1e-9:
        raise RuntimeError("quadrature did not reach 1e-9 accuracy")
    return 2.0 * (lo + hi)


def _third_from_counts(by_count: dict) -> np.ndarray:
    """Fill a 2x2x2 tensor from values keyed by how many indices equal 0 (i.e. point at xi_1)."""
    t = np.empty((2, 2, 2))
    for j in range(2):
        for k in range(2):
            for l in range(2):
                t[j, k, l] = by_count[(j, k, l).count(0)]
    return t


def xi_moments_normal_exact() -> XiMoments:
    """Exact moments for the normal model, where xi = (Z, (Z^2 - 1)/sqrt(2)).

    Mixed absolute moments are integrated directly, without treating |xi_1|
    and |xi_2| as independent. The cross moment E[Z (Z^2 - 1)] is zero by odd
    symmetry.
    """
    r2 = math.sqrt(2.0)
    e = _normal_expect
    first = [e(abs), e(lambda z: abs(z * z - 1)) / r2]
    third = {
        3: e(lambda z: abs(z) ** 3),
        2: e(lambda z: z * z * abs(z * z - 1)) / r2,
        1: e(lambda z: abs(z) * (z * z - 1) ** 2) / 2.0,
        0: e(lambda z: abs(z * z - 1) ** 3) / r2**3,
    }
    second = np.array([[e(lambda z: z * z), 0.0], [0.0, e(lambda z: (z * z - 1) ** 2) / 2.0]])
    return XiMoments(_third_from_counts(third), second, np.array(first), source="analytic-normal")


def xi_moments_normal_published() -> XiMoments:
    """Moment values and Hoelder upper bounds used for the published normal-model constant.

    E|xi_2| <= 1 and E|xi_2|^3 <= 15^{3/4} come from Hoelder's inequality.
    Mixed terms are entered as products, e.g. E|xi_1^2 xi_2| -> E xi_1^2 E|xi_2|,
    which reproduces the published aggregate 5 sqrt(2/pi) + 3 + 15^{3/4}.
    """
    e_abs_z = math.sqrt(2.0 / math.pi)
    first = np.array([e_abs_z, 1.0])
    second = np.eye(2)
    third = {
        3: 2.0 * e_abs_z,
        2: second[0, 0] * first[1],
        1: first[0] * second[1, 1],
        0: 15.0**0.75,
    }
    return XiMoments(_third_from_counts(third), second, first, source="holder-bounds")


def r1_coefficient(moments: XiMoments) -> float:
    """C such that the Stein term equals C |h|_2 / sqrt(n)."""
    return 0.5 * STEIN_CONSTANT * (moments.third_aggregate() + 2.0 * moments.cross_aggregate())


def r1_term(moments: XiMoments, n: int, h2: float) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    # n identical per-observation summands over n^{3/2}
    per_obs = moments.third_aggregate() + 2.0 * moments.cross_aggregate()
    return 0.5 * STEIN_CONSTANT * h2 / n**1.5 * (n * per_obs)


@dataclass(frozen=True)
class ATerms:
    a1_term: float
    a2_term: float
    a1_se: float
    a2_se: float
    accepted: int
    trials: int


def _largest_error(errors: np.ndarray) -> np.ndarray:
    # argmax returns the first maximiser, i.e. smallest-index tie-breaking
    m = np.argmax(np.abs(errors), axis=1)
    return errors[np.arange(errors.shape[0]), m]


def _a_terms_from_fits(model, mats, thetas, n, epsilon, h1) -> ATerms:
    trials = thetas.shape[0]
    errors = thetas - mats.theta0
    keep = np.abs(_largest_error(errors)) < epsilon
    accepted = int(keep.sum())
    if math.isfinite(epsilon) and accepted < MIN_ACCEPTANCE * trials:
        raise LowAcceptance(
            f"only {accepted}/{trials} simulated datasets have max |theta_hat - theta0| < {epsilon}"
        )
    errors = errors[keep]
    q_hat = np.array([model.q(t, mats.theta0) for t in thetas[keep]]).reshape(-1, model.d)

    b = mats.fisher_sqrt_grad_q_inv
    a1 = n * (q_hat - mats.q0) @ (b - mats.k_inv_sqrt).T
    bounds = model.second_deriv_bounds(mats.theta0, epsilon)  # [k, m, l]
    abs_err = np.abs(errors)
    # sum_k |B_jk| sum_{m,l} |d_m||d_l| M_kml: a valid envelope for the unknown intermediate point
    a2 = 0.5 * n * np.einsum("jk,kml,tm,tl->tj", np.abs(b), bounds, abs_err, abs_err)

    a1_per = np.abs(a1).sum(axis=1)
    a2_per = np.abs(a2).sum(axis=1)
    scale = h1 / math.sqrt(n)

    def mean_se(v):
        if v.size == 0:
            return 0.0, 0.0
        se = v.std(ddof=1) / math.sqrt(v.size) if v.size > 1 else 0.0
        return float(scale * v.mean()), float(scale * se)

    a1_mean, a1_se = mean_se(a1_per)
    a2_mean, a2_se = mean_se(a2_per)
    return ATerms(a1_mean, a2_mean, a1_se, a2_se, accepted, trials)


def a_terms_mc(
    model: ModelSpec,
    theta0,
    n: int,
    epsilon: float,
    h1: float,
    trials: int = 10**4,
    seed: int = 0,
    workers=1,
) -> ATerms:
    """Monte Carlo estimate of (|h|_1/sqrt(n)) sum_j (E[|A1_j| | .] + E[|A2_j| | .])."""
    if trials < 100:
        raise ValueError("a_terms_mc needs at least 100 trials")
    mats = model_matrices(model, theta0)
    thetas, _ = fit_trials(model, mats.theta0, n, trials, seed, workers)
    return _a_terms_from_fits(model, mats, thetas, n, epsilon, h1)


def _mse_from_fits(thetas, theta0, epsilon, sup_h) -> tuple[float, float]:
    sq = np.sum((thetas - theta0) ** 2, axis=1)
    factor = 2.0 * sup_h / epsilon**2
    return float(factor * sq.mean()), float(factor * sq.std(ddof=1) / math.sqrt(sq.size))


def mse_term_mc(
    model: ModelSpec,
    theta0,
    n: int,
    epsilon: float,
    sup_h: float,
    trials: int = 10**4,
    seed: int = 0,
    workers=1,
) -> tuple[float, float]:
    """(2 ||h|| / eps^2) E sum_j (theta_hat_j - theta0_j)^2, with its standard error."""
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ValueError("mse term needs a finite positive epsilon")
    theta0 = np.asarray(theta0, dtype=np.float64)
    thetas, _ = fit_trials(model, theta0, n, trials, seed, workers)
    return _mse_from_fits(thetas, theta0, epsilon, sup_h)


def _resolve_moments(model, theta0, moments, moment_samples, seed) -> XiMoments:
    if isinstance(moments, XiMoments):
        return moments
    if moments == "mc":
        return xi_moments_mc(model, theta0, moment_samples, seed)
    if moments in ("analytic", "analytic-normal", "published"):
        if not isinstance(model, NormalModel):
            raise ValueError(f"{moments!r} moments are only available for the normal model")
        return xi_moments_normal_published() if moments == "published" else xi_moments_normal_exact()
    raise ValueError(f"unknown moment source {moments!r}")


def general_bound(
    model: ModelSpec,
    theta0,
    n: int,
    h: TestFunction,
    epsilon: float = math.inf,
    moments="mc",
    trials: int = 10**4,
    moment_samples: int = 10**6,
    seed: int = 0,
    workers=1,
) -> BoundBreakdown:
    """Assemble the full bound for ``model`` at ``theta0``.

    ``moments`` is an ``XiMoments`` or one of ``"mc"``, ``"analytic-normal"``,
    ``"published"``. Simulation-based terms use ``trials`` datasets of size n.
    """
    if h.dim != model.d:
        raise ValueError(f"test function has dim {h.dim}, model has d = {model.d}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if math.isinf(epsilon) and not model.uniformly_bounded_hessian:
        raise ValueError("epsilon = inf needs uniformly bounded second derivatives of q")

    theta0 = np.asarray(theta0, dtype=np.float64)
    m = _resolve_moments(model, theta0, moments, moment_samples, seed)
    r1 = r1_term(m, n, h.hess_seminorm)

    mats = model_matrices(model, theta0)
    thetas, _ = fit_trials(model, theta0, n, trials, seed, workers)
    a = _a_terms_from_fits(model, mats, thetas, n, epsilon, h.grad_seminorm)
    if math.isinf(epsilon):
        mse, mse_se = 0.0, 0.0
    else:
        mse, mse_se = _mse_from_fits(thetas, theta0, epsilon, h.sup_norm)

    if m.source == "holder-bounds":
        mode = "paper_constants"
    elif math.isinf(epsilon):
        mode = "simplified"
    else:
        mode = "general"
    r1_se = 0.5 * STEIN_CONSTANT * h.hess_seminorm / math.sqrt(n) * m.std_err
    return BoundBreakdown(
        n=n,
        mode=mode,
        r1_term=r1,
        mse_term=mse,
        a1_term=a.a1_term,
        a2_term=a.a2_term,
        epsilon=epsilon,
        moment_source=m.source,
        std_err=r1_se + mse_se + a.a1_se + a.a2_se,
    )


def closed_form_normal(n: int, h: TestFunction) -> BoundBreakdown:
    """7 |h|_2 / sqrt(n) + |h|_1 / sqrt(2n); free of (mu, sigma2)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if h.dim != 2:
        raise ValueError("the closed-form normal bound is for d = 2 test functions")
    return BoundBreakdown(
        n=n,
        mode="closed_form_normal",
        r1_term=CLOSED_FORM_R1_COEFFICIENT * h.hess_seminorm / math.sqrt(n),
        mse_term=0.0,
        a1_term=0.0,
        a2_term=h.grad_seminorm / math.sqrt(2.0 * n),
        epsilon=math.inf,
        moment_source="closed-form",
    )
