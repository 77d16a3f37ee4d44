import numpy as np
import pytest

from mlebound.model import ModelSpec, make_rng


class GaussianMeanModel(ModelSpec):
    """N_d(theta, cov) with known cov: the MLE is the sample mean, q = g = identity."""

    uniformly_bounded_hessian = True

    def __init__(self, cov):
        self.cov = np.asarray(cov, dtype=float)
        self.d = self.t = self.cov.shape[0]
        self._chol = np.linalg.cholesky(self.cov)

    def sample(self, theta0, n, seed):
        z = make_rng(seed).standard_normal((n, self.d))
        return np.asarray(theta0) + z @ self._chol.T

    def mle(self, data):
        return np.asarray(data).mean(axis=0)

    def q(self, theta, theta0):
        return np.asarray(theta, dtype=float)

    def g(self, x, theta0):
        return np.asarray(x, dtype=float)

    def grad_q(self, theta0):
        return np.eye(self.d)

    def fisher(self, theta0):
        return np.linalg.inv(self.cov)

    def second_deriv_bound(self, j, k, l, theta0, epsilon):
        return 0.0


class ReparamMeanModel(GaussianMeanModel):
    """Mean L @ theta: the MLE is L^{-1} xbar, q(theta) = L theta, g = identity.

    Non-symmetric L makes I^{1/2} L^{-1} differ from K^{-1/2}, so A1 is non-zero.
    """

    def __init__(self, cov, lmat):
        super().__init__(cov)
        self.lmat = np.asarray(lmat, dtype=float)

    def sample(self, theta0, n, seed):
        return super().sample(self.lmat @ np.asarray(theta0), n, seed)

    def mle(self, data):
        return np.linalg.solve(self.lmat, np.asarray(data).mean(axis=0))

    def q(self, theta, theta0):
        return self.lmat @ np.asarray(theta, dtype=float)

    def grad_q(self, theta0):
        return self.lmat

    def fisher(self, theta0):
        f = self.lmat.T @ np.linalg.inv(self.cov) @ self.lmat
        return 0.5 * (f + f.T)


@pytest.fixture
def mean_model():
    return GaussianMeanModel([[2.0, 0.6, 0.0], [0.6, 1.0, 0.3], [0.0, 0.3, 0.5]])


@pytest.fixture
def reparam_model():
    return ReparamMeanModel([[1.0, 0.4], [0.4, 2.0]], [[1.0, 0.5], [-0.3, 2.0]])


def pytest_addoption(parser):
    parser.addoption(
        "--full-cell",
        action="store_true",
        default=False,
        help="also run the n = 1e6 table cell (1e3 trials, about 1e9 normal draws)",
    )


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record a criterion outcome: prints a PASS/FAIL line, then asserts."""

    def record(label: str, passed: bool, detail: str) -> None:
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        assert passed, line

    return record
