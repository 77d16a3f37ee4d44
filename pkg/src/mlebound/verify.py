"""Self-checks run by ``mlebound verify``. Each check carries its own oracle."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import matrix
from .bound import (
    r1_coefficient,
    xi_moments_normal_exact,
    xi_moments_normal_published,
)
from .mc import expect_h_gaussian, lemma23_check
from .model import NormalModel, make_rng
from .testfn import inverse_quadratic, seminorm_audit

FAULT_ENV = "MLEBOUND_FAULT"


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


class UnbiasedVarianceNormal(NormalModel):
    """Fault-injection model: variance divisor n - 1, which breaks the q/g identity."""

    def mle(self, data):
        x = np.asarray(data, dtype=np.float64).reshape(-1)
        return np.array([x.mean(), x.var(ddof=1)])


def random_spd(rng: np.random.Generator, d: int, log10_cond: float = 4.0) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    w = 10.0 ** rng.uniform(-log10_cond / 2, log10_cond / 2, size=d)
    a = (q * w) @ q.T
    return 0.5 * (a + a.T)


def rel_fro(a, b) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def matrix_roundtrips(count: int = 1000, max_dim: int = 6, seed: int = 0) -> dict:
    """Worst relative errors of sqrt^2, A A^{-1} and sqrt(A^{-1}) vs sqrt(A)^{-1} over random SPD A."""
    rng = make_rng(seed)
    worst = {"sqrt": 0.0, "inverse": 0.0, "inv_sqrt_commute": 0.0}
    for _ in range(count):
        d = int(rng.integers(1, max_dim + 1))
        a = random_spd(rng, d)
        s = matrix.principal_sqrt(a)
        inv = matrix.inverse(a)
        worst["sqrt"] = max(worst["sqrt"], rel_fro(s @ s, a))
        worst["inverse"] = max(worst["inverse"], rel_fro(a @ inv, np.eye(d)))
        lhs = matrix.principal_sqrt(inv)
        rhs = matrix.inverse(s)
        worst["inv_sqrt_commute"] = max(worst["inv_sqrt_commute"], rel_fro(lhs, rhs))
    return worst


def structural_identity_gap(model, datasets: int = 200, seed: int = 0, sizes=(2, 50)) -> float:
    """Largest ||q(mle(x)) - mean g(x)||_inf over random parameters and datasets."""
    rng = make_rng(seed)
    worst = 0.0
    for i in range(datasets):
        theta0 = np.array([rng.normal(0.0, 3.0), 10.0 ** rng.uniform(-1, 1)])
        n = int(rng.integers(sizes[0], sizes[1] + 1))
        x = model.sample(theta0, n, int(rng.integers(0, 2**63)))
        lhs = model.q(model.mle(x), theta0)
        rhs = model.g(x, theta0).mean(axis=0)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def run_checks(seed: int = 0, fault: str | None = None) -> list[CheckResult]:
    fault = fault if fault is not None else os.environ.get(FAULT_ENV, "")
    model = UnbiasedVarianceNormal() if fault == "mle-ddof1" else NormalModel()
    k_scale = 0.5 if fault == "k-half" else 1.0
    results = []

    worst = matrix_roundtrips(count=200, seed=seed)
    results.append(
        CheckResult(
            "matrix-roundtrips",
            worst["sqrt"] <= 1e-10 and worst["inverse"] <= 1e-10 and worst["inv_sqrt_commute"] <= 1e-9,
            ", ".join(f"{k}={v:.2e}" for k, v in worst.items()),
        )
    )

    gap = structural_identity_gap(model, seed=seed)
    results.append(CheckResult("structural-identity", gap <= 1e-10, f"max gap {gap:.2e}"))

    rep = lemma23_check(model, [1.0, 1.0], samples=10**5, seed=seed, k_scale=k_scale)
    results.append(
        CheckResult(
            "lemma23-moments",
            rep.passed,
            f"max |mean| z={rep.mean_z.max():.2f}, max |cov - I| z={rep.cov_z.max():.2f}",
        )
    )

    h = inverse_quadratic()
    audit = seminorm_audit(h, raise_on_failure=False)
    results.append(
        CheckResult(
            "seminorm-audit",
            audit.passed,
            f"max|grad|={audit.max_grad:.6f} at {audit.argmax_grad}, max|hess|={audit.max_hess:.6f}",
        )
    )

    results.extend(_constant_checks())

    quad = expect_h_gaussian(h)
    mc = expect_h_gaussian(h, method="mc", samples=10**6, seed=seed)
    z = abs(quad.value - mc.value) / mc.std_err
    results.append(
        CheckResult(
            "ehz-two-method",
            round(quad.value, 3) == 0.461 and z <= 4.0,
            f"quadrature={quad.value:.6f}, mc={mc.value:.6f} +/- {mc.std_err:.1e} (z={z:.2f})",
        )
    )
    return results


def _constant_checks() -> list[CheckResult]:
    out = []
    pdf1 = float(stats.norm.pdf(1.0))
    exact = xi_moments_normal_exact()
    published = xi_moments_normal_published()
    sqrt_2_pi = math.sqrt(2 / math.pi)

    def close(a, b, tol=1e-9):
        return abs(a - b) <= tol

    out.append(CheckResult("E|Z| = sqrt(2/pi)", close(exact.first_abs[0], sqrt_2_pi), f"{exact.first_abs[0]:.12f}"))
    out.append(
        CheckResult("E|Z|^3 = 2 sqrt(2/pi)", close(exact.third_abs[0, 0, 0], 2 * sqrt_2_pi), f"{exact.third_abs[0, 0, 0]:.12f}")
    )
    e_xi2 = exact.first_abs[1]
    out.append(
        CheckResult(
            "E|xi_2| = 4 phi(1)/sqrt(2) <= 1",
            close(e_xi2, 4 * pdf1 / math.sqrt(2)) and e_xi2 <= 1.0,
            f"{e_xi2:.12f}",
        )
    )
    e3 = exact.third_abs[1, 1, 1]
    out.append(CheckResult("E|xi_2|^3 <= 15^(3/4)", e3 <= 15**0.75, f"{e3:.6f} <= {15**0.75:.6f}"))
    agg = published.third_aggregate()
    out.append(
        CheckResult(
            "third-moment aggregate < 14.612",
            agg < 14.612 and close(agg, 5 * sqrt_2_pi + 3 + 15**0.75, 1e-12),
            f"{agg:.6f}",
        )
    )
    cross = published.cross_aggregate()
    out.append(CheckResult("cross aggregate = 2(1 + sqrt(2/pi))", close(cross, 2 * (1 + sqrt_2_pi), 1e-12), f"{cross:.6f}"))
    coef = r1_coefficient(published)
    # the published 6.833 and the final 7 are upper bounds on this coefficient
    out.append(CheckResult("r1 coefficient <= 6.833 <= 7", coef <= 6.833, f"{coef:.6f}"))
    return out
