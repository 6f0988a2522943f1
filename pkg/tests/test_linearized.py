import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gppd.discretization import Field
from gppd.errors import OrthogonalityError, RegimeError
from gppd.linearized import (BIFURCATION_A0_SQ, bifurcation_slope, build_pair, solve_lminus_perp, solve_lplus)


def test_kernel_of_lminus(pair):
    assert abs(pair.lminus_lambda_min) < pair.kernel_tol
    assert pair.kernel_overlap > 0.999
    g, q = pair.grid, pair.Q0
    assert g.l2(pair.lminus(q)) < 1e-10 * g.l2(q)


def test_spectral_gaps(pair):
    # frozen from the grid computation at the disk(1,1), alpha = 1 balance point
    assert pair.lminus_lambda_2 == pytest.approx(1.733224178354, abs=1e-8)
    assert pair.lplus_lambda_min == pytest.approx(1.026941935038, abs=1e-8)


def test_lplus_on_q0(pair):
    g, q = pair.grid, pair.Q0
    assert g.l2(pair.lplus(q) - 2 * q**3) < 1e-10 * g.l2(2 * q**3)


def smooth(grid, seed):
    rng = np.random.default_rng(seed)
    X, Y = grid.mesh
    c = rng.uniform(-1, 1, 5)
    return np.exp(-0.5 * grid.r2) * (c[0] + c[1] * X + c[2] * Y**2 + c[3] * X * Y + c[4] * np.cos(X))


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10**6))
def test_lplus_solve_roundtrip(pair, seed):
    g = pair.grid
    f = smooth(g, seed)
    u = solve_lplus(pair, f)
    assert g.l2(pair.lplus(u) - f) < 1e-10 * g.l2(f)
    w = solve_lplus(pair, f + 1j * smooth(g, seed + 1))
    assert np.iscomplexobj(w)
    np.testing.assert_allclose(w.real, u, atol=1e-10)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10**6))
def test_lminus_perp_solve(pair, seed):
    g, q = pair.grid, pair.Q0
    f = pair.deflate()(smooth(g, seed))
    u = solve_lminus_perp(pair, f)
    assert abs(g.inner(u, q)) < 1e-10 * g.l2(u) * g.l2(q)
    assert g.l2(pair.lminus(u) - f) < 1e-10 * g.l2(f)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_operators_self_adjoint(pair, a, b):
    g = pair.grid
    u, v = smooth(g, a), smooth(g, b)
    for op in (pair.lminus, pair.lplus):
        assert op.symmetry_defect(u, v) < 1e-10 * (1 + g.l2(op(u)) * g.l2(v))


def test_orthogonality_precondition(pair):
    with pytest.raises(OrthogonalityError) as exc:
        solve_lminus_perp(pair, pair.Q0)
    assert exc.value.inner == pytest.approx(pair.grid.l2sq(pair.Q0), rel=1e-12)


def test_rejects_unconverged_state(pair):
    with pytest.raises(ValueError):
        build_pair(Field(pair.grid, 1.01 * pair.Q0), pair.mu0)
    with pytest.raises(TypeError):
        build_pair(pair.Q0, pair.mu0)


def test_near_singular_lplus_guard(pair):
    from dataclasses import replace
    bad = replace(pair, lplus_lambda_min=1e-9, _cache={})
    with pytest.raises(RegimeError) as exc:
        solve_lplus(bad, pair.Q0)
    assert exc.value.reason == "L+ not invertible"


def test_bifurcation_branch(grid):
    rows = bifurcation_slope([1e-3, 3e-3, 1e-2], grid)
    for r in rows:
        # mu - 2 = M / (2 pi) + O(M^2), i.e. a0^2 = 2 pi
        assert r.eta == pytest.approx(r.M / BIFURCATION_A0_SQ, rel=2 * r.M)
        # L+ = H0 + 3 u^2 - mu: first-order slope 3 a0^2 |phi1|_4^4 - |phi1|_2^2 = +2
        assert r.ratio == pytest.approx(2.0, abs=1e-2)
        # the operator with the cubic sign reversed has slope -4
        assert r.reflected_ratio == pytest.approx(-4.0, abs=1e-2)
    assert BIFURCATION_A0_SQ == pytest.approx(2 * math.pi)
