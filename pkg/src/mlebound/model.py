"""Statistical models whose MLE is a smooth transform of a sample mean.

A model here supplies a closed-form MLE together with maps ``q`` and ``g``
such that, for every dataset ``x`` of size n,

    q(mle(x)) == mean_i g(x_i)

That identity is what the bound engine relies on. ``q`` and ``g`` may depend
on the true parameter, so both take ``theta0`` explicitly.

Regularity (identifiability, differentiability, integrable third-derivative
envelopes of the log-likelihood, zero-mean score, positive definite Fisher
information) is assumed per model and documented, not checked.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateSample",
    "ModelSpec",
    "NormalParams",
    "NormalModel",
    "make_rng",
    "derive_seed",
    "normal_sample",
    "normal_mle",
    "normal_q",
    "normal_g",
    "normal_fisher",
    "normal_grad_q",
    "normal_second_deriv_bound",
]

DEGENERATE_VARIANCE = 1e-300
_UINT64 = 2**64


class DegenerateSample(ValueError):
    """All observations coincide, so the variance MLE is zero."""


def derive_seed(master: int, *keys: int) -> int:
    """Hash ``(master, *keys)`` into an independent 64-bit seed.

    Used to split one master seed into per-trial streams, so a trial's draws
    depend only on its index and never on how many trials ran before it.
    """
    words = [int(master) % _UINT64, *(int(k) % _UINT64 for k in keys)]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator (Philox) keyed by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed) % _UINT64)))


class ModelSpec(ABC):
    """A parametric model with MLE structure ``q(mle(x)) = mean g(x_i)``.

    Array conventions: parameters are length-``d`` vectors, a dataset is an
    ``(n, t)`` array (or length-n for ``t == 1``), and ``g`` maps observations
    row-wise to an ``(n, d)`` array. Index arguments are 0-based.
    """

    d: int
    t: int
    uniformly_bounded_hessian: bool = False

    @abstractmethod
    def sample(self, theta0, n: int, seed: int) -> np.ndarray: ...

    @abstractmethod
    def mle(self, data) -> np.ndarray: ...

    @abstractmethod
    def q(self, theta, theta0) -> np.ndarray: ...

    @abstractmethod
    def g(self, x, theta0) -> np.ndarray: ...

    @abstractmethod
    def grad_q(self, theta0) -> np.ndarray:
        """Jacobian of q at theta0; row j is the gradient of q_j."""

    @abstractmethod
    def fisher(self, theta0) -> np.ndarray:
        """Expected Fisher information of a single observation."""

    @abstractmethod
    def second_deriv_bound(self, j: int, k: int, l: int, theta0, epsilon: float) -> float:
        """Upper bound on |d^2 q_j / d theta_k d theta_l| over the epsilon-box about theta0."""

    def second_deriv_bounds(self, theta0, epsilon: float = math.inf) -> np.ndarray:
        """All bounds as a ``(d, d, d)`` array indexed ``[j, k, l]``."""
        out = np.empty((self.d, self.d, self.d))
        for j in range(self.d):
            for k in range(self.d):
                for l in range(self.d):
                    out[j, k, l] = self.second_deriv_bound(j, k, l, theta0, epsilon)
        return out


@dataclass(frozen=True)
class NormalParams:
    mu: float
    sigma2: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and math.isfinite(self.sigma2)):
            raise ValueError("normal parameters must be finite")
        if self.sigma2 <= 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @classmethod
    def coerce(cls, theta) -> "NormalParams":
        if isinstance(theta, cls):
            return theta
        mu, sigma2 = (float(v) for v in theta)
        return cls(mu, sigma2)

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma2])


def normal_sample(params, n: int, seed: int) -> np.ndarray:
    """n i.i.d. N(mu, sigma2) draws: standard normals, then ``mu + sqrt(sigma2) * z``."""
    params = NormalParams.coerce(params)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    z = make_rng(seed).standard_normal(n)
    return params.mu + math.sqrt(params.sigma2) * z


def normal_mle(data) -> np.ndarray:
    """(mean, biased variance). The variance divisor is n, not n - 1."""
    x = np.asarray(data, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise ValueError("normal MLE needs at least two observations")
    mean = x.mean()
    var = np.mean((x - mean) ** 2)
    if var < DEGENERATE_VARIANCE:
        raise DegenerateSample("sample variance is zero; all observations are equal")
    return np.array([mean, var])


def normal_q(theta, theta0) -> np.ndarray:
    mu = NormalParams.coerce(theta0).mu
    t1, t2 = (float(v) for v in theta)
    return np.array([t1, t2 + (t1 - mu) ** 2])


def normal_g(x, theta0) -> np.ndarray:
    """Row-wise ``(x, (x - mu)^2)``; a scalar ``x`` gives a length-2 vector."""
    mu = NormalParams.coerce(theta0).mu
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, 0]
    return np.stack([x, (x - mu) ** 2], axis=-1)


def normal_fisher(theta0) -> np.ndarray:
    s2 = NormalParams.coerce(theta0).sigma2
    return np.array([[1.0 / s2, 0.0], [0.0, 1.0 / (2.0 * s2 * s2)]])


def normal_grad_q(theta0) -> np.ndarray:
    NormalParams.coerce(theta0)
    # d/dtheta1 of (theta1 - mu)^2 vanishes at theta1 = mu
    return np.eye(2)


def normal_second_deriv_bound(j: int, k: int, l: int, theta0=None, epsilon: float = math.inf) -> float:
    # only d^2 q_2 / d theta_1^2 = 2 is non-zero, everywhere
    for idx in (j, k, l):
        if idx not in (0, 1):
            raise IndexError(f"index {idx} out of range for d = 2")
    return 2.0 if (j, k, l) == (1, 0, 0) else 0.0


@dataclass(frozen=True)
class NormalModel(ModelSpec):
    """i.i.d. N(mu, sigma2) observations with both parameters unknown (d = 2, t = 1).

    ``q(theta) = (theta1, theta2 + (theta1 - mu)^2)`` and ``g(x) = (x, (x - mu)^2)``,
    where mu is the true mean carried in ``theta0``. This q is a device for the
    bound, not an estimator transform usable without knowing mu.
    """

    d: int = 2
    t: int = 1
    uniformly_bounded_hessian: bool = True

    def sample(self, theta0, n, seed):
        return normal_sample(theta0, n, seed)

    def mle(self, data):
        return normal_mle(data)

    def q(self, theta, theta0):
        return normal_q(theta, theta0)

    def g(self, x, theta0):
        return normal_g(x, theta0)

    def grad_q(self, theta0):
        return normal_grad_q(theta0)

    def fisher(self, theta0):
        return normal_fisher(theta0)

    def second_deriv_bound(self, j, k, l, theta0, epsilon):
        return normal_second_deriv_bound(j, k, l, theta0, epsilon)
