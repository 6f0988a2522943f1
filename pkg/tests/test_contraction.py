import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gppd.contraction import (ErrorTriple, contraction_ratio, make_context, phi_map, scaling_study,
                              solve_error_terms)
from gppd.discretization import build_grid
from gppd.errors import RegimeError
from gppd.expansion import build_expansion, residual_spe
from gppd.linearized import build_pair
from gppd.pumpbalance import PumpProfile, find_balanced_mass

# Galerkin-Hermite Newton solve of the full complex stationary problem (no expansion),
# Gaussian pump exp(-|x|^2), alpha = 1
GALERKIN_MU = {0.1: 2.481692830423843, 0.2: 2.4816987397271766, 0.4: 2.481722378658962}
GALERKIN_MU0, GALERKIN_MU2 = 2.48169086, 1.96972005e-4


@pytest.fixture(scope="module")
def gauss_context(grid):
    bp = find_balanced_mass(PumpProfile.parse("kind=gaussian,s0=1,w=1"), 1.0, (0.01, 100), 1e-8, grid)
    es = build_expansion(build_pair(bp.Q0, bp.mu0), bp.sigma, 1.0)
    return make_context(es)


def test_gaussian_pump_matches_galerkin_solver(gauss_context):
    es = gauss_context.es
    assert es.mu0 == pytest.approx(GALERKIN_MU0, abs=1e-8)
    assert es.mu2 == pytest.approx(GALERKIN_MU2, rel=1e-7)
    for eps, mu in GALERKIN_MU.items():
        sw = solve_error_terms(gauss_context, eps)
        assert sw.mu == pytest.approx(mu, abs=1e-11)
        assert ("extrapolated" in sw.labels) == (eps > 0.15)


def test_ball_constants_frozen(context):
    c = context.consts
    assert c.C1 == pytest.approx(2.940758231344235e-05, rel=1e-6)
    assert c.C2 == pytest.approx(2.4492894880060834e-04, rel=1e-6)
    assert c.C3 == pytest.approx(3.949389668086653e-05, rel=1e-6)


def test_wave_at_eps_005(wave, context):
    assert wave.residual < 1e-9
    assert max(wave.split_residuals) < 1e-9
    assert wave.iterations <= 10
    assert wave.contraction_ratio < 0.5
    es = context.es
    # the triple stays inside the weighted ball of radius 1
    assert context.consts.weighted(wave.triple.norms(context.grid), 0.05) <= 1.0
    assert wave.mu == pytest.approx(es.mu0 + 0.05**2 * es.mu2, abs=1e-9)
    assert residual_spe(wave.Q, wave.mu, 0.05, es.sigma, es.alpha) == pytest.approx(wave.residual, rel=1e-12)


def test_eps_zero_map_is_zero(context):
    t = phi_map(ErrorTriple.zero(context.grid), context, 0.0)
    assert t.kappa == 0.0 and not t.psi_r.any() and not t.psi_i.any()


def test_divergence_guard(context):
    g = context.grid
    far = ErrorTriple(np.zeros(g.shape), np.zeros(g.shape), 1.0)
    with pytest.raises(RegimeError) as exc:
        phi_map(far, context, 0.05)
    assert exc.value.reason == "contraction diverged"


def test_contraction_ratio_small(context):
    assert contraction_ratio(context, 0.05) < 0.5


def test_rejects_nonpositive_eps(context):
    with pytest.raises(ValueError):
        solve_error_terms(context, 0.0)


G = build_grid(16, 4.0)
arrays = st.integers(0, 10**6).map(lambda s: np.random.default_rng(s).standard_normal(G.shape))


@settings(max_examples=30, deadline=None)
@given(arrays, arrays, st.floats(-1, 1), arrays, arrays, st.floats(-1, 1))
def test_triple_difference_norms(a, b, k, c, d, m):
    s, t = ErrorTriple(a, b, k), ErrorTriple(c, d, m)
    diff = s - t
    assert diff.kappa == k - m
    assert (s - s).norms(G) == (0.0, 0.0, 0.0)
    # triangle inequality in each component
    for x, y, z in zip(diff.norms(G), s.norms(G), t.norms(G)):
        assert x <= y + z + 1e-12


def test_scaling_study(context):
    st_ = scaling_study(context, [0.0125, 0.025, 0.05, 0.1], threads=1)
    assert not st_.failures
    assert st_.slopes["kappa_abs"] == pytest.approx(4.0, abs=0.5)
    assert st_.slopes["psi_r_sigma"] == pytest.approx(4.0, abs=0.5)
    assert st_.slopes["psi_i_sigma"] == pytest.approx(5.0, abs=0.5)
    with pytest.raises(ValueError):
        scaling_study(context, [0.1, 0.2])
