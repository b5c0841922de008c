import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irs_wpcn.convex.bounds import (
    energy_lb,
    energy_quadratic,
    interference_log,
    interference_log_ub,
    quad_over_lin,
    quad_over_lin_lb,
)


def _psd(rng, n, rank):
    G = rng.normal(size=(n, rank)) + 1j * rng.normal(size=(n, rank))
    return G @ G.conj().T


def _admissible_v(rng, n):
    v = np.exp(2j * np.pi * rng.random(n)) * rng.random(n)
    v[-1] = 1.0
    return v


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_interference_tangent_is_upper_bound(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(2, 5))
    i = int(rng.integers(K))
    b = rng.exponential(size=K)
    sigma2 = float(rng.uniform(0.01, 1.0))
    p_t = rng.exponential(size=K)
    assert interference_log_ub(p_t, p_t, b, sigma2, i) == pytest.approx(interference_log(p_t, b, sigma2, i), abs=1e-12)
    for _ in range(20):
        p = rng.exponential(size=K) * 3
        assert interference_log_ub(p, p_t, b, sigma2, i) >= interference_log(p, b, sigma2, i) - 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_energy_linearization_is_lower_bound(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    psi = rng.normal(size=(2, n)) + 1j * rng.normal(size=(2, n))
    S = _psd(rng, 2, 2)
    C = psi.T @ S @ psi.conj()
    v_t = _admissible_v(rng, n)
    assert energy_lb(v_t, v_t, C) == pytest.approx(energy_quadratic(v_t, C), rel=1e-12)
    for _ in range(20):
        v = _admissible_v(rng, n)
        assert energy_lb(v, v_t, C) <= energy_quadratic(v, C) + 1e-12 * abs(energy_quadratic(v, C))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_quad_over_lin_linearization_is_lower_bound(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    a = rng.normal(size=n) + 1j * rng.normal(size=n)
    B = float(rng.exponential()) * np.outer(a, a.conj())
    v_t = _admissible_v(rng, n)
    z_t = float(rng.exponential()) + 1e-3
    assert quad_over_lin_lb(v_t, z_t, v_t, z_t, B) == pytest.approx(quad_over_lin(v_t, z_t, B), rel=1e-12)
    for _ in range(20):
        v = _admissible_v(rng, n)
        z = float(rng.exponential()) + 1e-6
        assert quad_over_lin_lb(v, z, v_t, z_t, B) <= quad_over_lin(v, z, B) * (1 + 1e-12) + 1e-12
