import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gppd.discretization import (Field, HermiteBasis, apply_h0, build_grid, decay_ok, h0_operator,
                                 hermite_functions, lowest_eigenpairs, norms, phi1_reference, sigma_norm)
from gppd.errors import GridError

SMALL = build_grid(64, 8.0)
BASIS = HermiteBasis(SMALL, 16)


def gaussian_mix(grid, coeffs):
    """Smooth decaying test fields: Hermite combinations of low order."""
    K = int(math.isqrt(len(coeffs)))
    C = np.asarray(coeffs[: K * K]).reshape(K, K)
    E = hermite_functions(K, grid.x)
    return E @ C @ E.T


coeff_lists = st.lists(st.floats(-1, 1, allow_nan=False), min_size=9, max_size=9)


def test_grid_layout():
    g = build_grid(128, 8.0)
    assert g.h == 0.125
    assert g.x[0] == -8.0 and g.x[64] == 0.0
    assert g.shape == (128, 128)
    assert g.kmax2 == pytest.approx(2 * (math.pi / g.h) ** 2, rel=1e-12)


@pytest.mark.parametrize("n,L", [(100, 8.0), (8, 8.0), (2048, 8.0), (128, 0.0), (128, -1.0), (128, 2.0), (128, 64.0)])
def test_grid_rejects_bad_parameters(n, L):
    with pytest.raises(GridError):
        build_grid(n, L)


def test_field_rejects_shape_and_nonfinite():
    with pytest.raises(GridError):
        Field(SMALL, np.zeros((3, 3)))
    bad = np.zeros(SMALL.shape)
    bad[1, 1] = np.nan
    with pytest.raises(GridError):
        Field(SMALL, bad)


def test_phi1_is_normalized_eigenfunction():
    g = build_grid(128, 8.0)
    phi = phi1_reference(g).values
    assert g.l2sq(phi) == pytest.approx(1.0, abs=1e-13)
    assert g.l2(g.h0(phi) - 2.0 * phi) < 1e-10
    assert norms(phi1_reference(g)).l4fourth == pytest.approx(1.0 / (2.0 * math.pi), rel=1e-12)


def test_h0_spectrum_degeneracies():
    g = build_grid(128, 8.0)
    vals = [lam for lam, _ in lowest_eigenpairs(h0_operator(g, HermiteBasis(g, 40)), 6)]
    np.testing.assert_allclose(vals, [2, 4, 4, 6, 6, 6], rtol=1e-9)


def test_apply_h0_flags_slow_decay():
    u = np.exp(-0.02 * SMALL.r2)
    assert "boundary-decay" in apply_h0(Field(SMALL, u)).flags
    assert apply_h0(phi1_reference(SMALL)).flags == ()
    assert not decay_ok(SMALL, u)


@settings(max_examples=30, deadline=None)
@given(coeff_lists, coeff_lists)
def test_h0_symmetric(a, b):
    u, v = gaussian_mix(SMALL, a), gaussian_mix(SMALL, b)
    op = h0_operator(SMALL)
    assert op.symmetry_defect(u, v) <= 1e-10 * (1 + SMALL.l2(u) * SMALL.l2(v))


@settings(max_examples=30, deadline=None)
@given(coeff_lists, st.floats(-3, 3, allow_nan=False))
def test_h0_linear_and_bounded_below(a, c):
    u = gaussian_mix(SMALL, a)
    g = SMALL
    assert g.l2(g.h0(c * u) - c * g.h0(u)) <= 1e-12 * (1 + abs(c) * g.l2(g.h0(u)))
    # <H0 u, u> >= 2 |u|^2
    assert g.inner(g.h0(u), u) >= 2.0 * g.l2sq(u) - 1e-10


@settings(max_examples=30, deadline=None)
@given(coeff_lists)
def test_norm_identities(a):
    u = gaussian_mix(SMALL, a)
    nrm = norms((SMALL, u))
    assert nrm.sigma_norm_sq == pytest.approx(nrm.gradsq + nrm.xmomsq + nrm.l2sq, rel=1e-12, abs=1e-14)
    assert sigma_norm(SMALL, u) ** 2 == pytest.approx(nrm.sigma_norm_sq, rel=1e-12, abs=1e-14)
    # <H0 u, u> = |grad u|^2 + |x u|^2
    assert SMALL.inner(SMALL.h0(u), u) == pytest.approx(nrm.gradsq + nrm.xmomsq, rel=1e-9, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=256, max_size=256))
def test_hermite_node_transform_is_orthogonal(c):
    C = np.asarray(c).reshape(16, 16)
    back = BASIS.from_nodes(BASIS.to_nodes(C))
    np.testing.assert_allclose(back, C, atol=1e-11)


def test_hermite_grid_projection_roundtrip():
    C = np.zeros((16, 16))
    C[0, 0], C[2, 1], C[5, 3] = 1.0, -0.5, 0.25
    np.testing.assert_allclose(BASIS.project(BASIS.evaluate(C)), C, atol=1e-12)
    u = BASIS.evaluate(C)
    # h = 0.25 resolves degree-5 Hermite functions to about 1e-9
    np.testing.assert_allclose(SMALL.h0(u), BASIS.evaluate(BASIS.eigenvalues * C), atol=1e-8)


def test_galerkin_matrix_of_constant_is_identity():
    M = BASIS.galerkin(np.ones(SMALL.shape))
    np.testing.assert_allclose(M, np.eye(256), atol=1e-10)
