import numpy as np
import pytest


def make_cre(n=60, n1=None, tau=1.0, seed=0):
    """Completely randomized data with a constant-plus-noise effect."""
    rng = np.random.default_rng(seed)
    n1 = n // 2 if n1 is None else n1
    z = np.zeros(n)
    z[rng.choice(n, n1, replace=False)] = 1
    X = rng.normal(size=(n, 2))
    y0 = X @ np.array([1.0, -0.5]) + rng.normal(size=n)
    y = y0 + tau * z + 0.5 * z * X[:, 0]
    return z, y, X


def make_obs(n=500, seed=0, tau=1.0, p=2):
    """Observational data with logistic treatment and linear outcomes."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    beta = np.linspace(0.8, -0.4, p)
    e = 1 / (1 + np.exp(-(0.2 + X @ beta)))
    z = (rng.uniform(size=n) < e).astype(float)
    y = 1 + X @ np.ones(p) + tau * z + rng.normal(size=n)
    return z, y, X, e


def make_iv(n=800, seed=0, tau_c=2.0, pi_c=0.6):
    """Randomized encouragement with never-takers, always-takers and compliers."""
    rng = np.random.default_rng(seed)
    z = rng.binomial(1, 0.5, n).astype(float)
    u = rng.uniform(size=n)
    kind = np.where(u < pi_c, 0, np.where(u < pi_c + (1 - pi_c) / 2, 1, 2))  # c, n, a
    d = np.where(kind == 0, z, np.where(kind == 1, 0.0, 1.0))
    X = rng.normal(size=(n, 1))
    y = 0.5 * kind + X[:, 0] + tau_c * d + rng.normal(size=n)
    return z, d, y, X


def make_mediation(n=600, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 2))
    z = rng.binomial(1, 0.5, n).astype(float)
    pm = 1 / (1 + np.exp(-(-0.3 + 1.2 * z + X[:, 0])))
    m = (rng.uniform(size=n) < pm).astype(float)
    y = 0.5 * z + 1.5 * m + X @ np.array([1.0, 0.5]) + rng.normal(size=n)
    return z, m, y, X


@pytest.fixture
def cre_data():
    return make_cre()


@pytest.fixture
def obs_data():
    return make_obs()


# criterion lines recorded by the acceptance suite, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
