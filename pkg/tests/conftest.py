import math

import numpy as np
import pytest

from minmod import expr, modulus


def factorial4_coeffs(degree=400):
    """Coefficients of sum z^k / (k!)^4 truncated at the given degree.

    Entries whose magnitude falls below double range come out as exact
    zeros; their contribution is below 1e-50 relative for r <= 1e6.
    """
    out = []
    lf = 0.0
    for k in range(degree + 1):
        out.append(math.exp(-4.0 * lf) if 4.0 * lf < 745.0 else 0.0)
        lf += math.log(k + 1)
    return out


@pytest.fixture(scope="session")
def f_doubling():
    return expr.parse("2*z*(1+exp(-z))")


@pytest.fixture(scope="session")
def f_fatou():
    return expr.parse("z+1+exp(-z)")


@pytest.fixture(scope="session")
def f_sine_shift():
    return expr.parse("z + 7*sin(z)")


@pytest.fixture(scope="session")
def f_coshalf():
    return expr.parse("cos(sqrt(z))")


@pytest.fixture(scope="session")
def f_twisted():
    return expr.parse("2*z*cos(sqrt(z))")


@pytest.fixture(scope="session")
def f_fact4():
    return expr.Poly(tuple(factorial4_coeffs()))


@pytest.fixture(scope="session")
def profile_fatou(f_fatou):
    return modulus.build_profile(f_fatou, 1.0, 100.0, grid=192, tol=1e-6)


@pytest.fixture(scope="session")
def profile_doubling(f_doubling):
    return modulus.build_profile(f_doubling, 1.0, 100.0, grid=128, tol=1e-6)


@pytest.fixture(scope="session")
def profile_twisted(f_twisted):
    return modulus.build_profile(f_twisted, 9 * math.pi ** 2, 1e4, grid=192, tol=1e-6)


@pytest.fixture(scope="session")
def profile_coshalf(f_coshalf):
    return modulus.build_profile(f_coshalf, 1.0, 1e4, grid=128, tol=1e-6)


@pytest.fixture(scope="session")
def profile_fact4(f_fact4):
    return modulus.build_profile(f_fact4, 5.0, 1e6, grid=128, tol=1e-6)


def brute_force_extremum(f, r, kind, samples=1_000_000):
    """Dense uniform sampling oracle for circle extrema."""
    half = expr.is_real_symmetric(f)
    thetas = np.linspace(0.0, math.pi if half else 2 * math.pi, samples)
    _, logabs, finite = expr.eval_many(f, r * np.exp(1j * thetas))
    vals = np.where(finite | np.isfinite(logabs), logabs, np.nan)
    if kind == "min":
        return math.exp(float(np.nanmin(vals)))
    return math.exp(float(np.nanmax(vals)))
