import numpy as np
import pytest

from gppd.discretization import Field
from gppd.errors import GridError, RegimeError
from gppd.expansion import (CERTIFY_TOL, assemble_approx, compute_mu2, compute_q2r, forcing_fields, q3_rhs, residual_slope,
                            residual_spe, split_residual)


def test_hierarchy_certified(expansion):
    assert set(expansion.defects) == {"Q1i", "Q2r", "Q3i", "Qprime"}
    assert max(expansion.defects.values()) < CERTIFY_TOL


def test_odd_orders_orthogonal_to_q0(expansion):
    g, q = expansion.grid, expansion.Q0
    for f in (expansion.Q1i, expansion.Q3i):
        assert abs(g.inner(f, q)) < 1e-10 * g.l2(f) * g.l2(q)


def test_q3_solvability_holds_at_computed_mu2(expansion, pair):
    es = expansion
    g = es.grid
    rhs = q3_rhs(es.Q0, es.Q1i, es.Q2r, es.mu2, es.sigma, es.alpha)
    assert abs(g.inner(rhs, es.Q0)) < 1e-9 * g.l2(rhs) * g.l2(es.Q0)
    # mu2 enters through Q2; any other value breaks solvability
    mu2 = es.mu2 * 1.01
    Q2 = compute_q2r(pair, mu2, es.Q1i, es.sigma, es.alpha)
    off = q3_rhs(es.Q0, es.Q1i, Q2, mu2, es.sigma, es.alpha)
    assert abs(g.inner(off, es.Q0)) > 1e-6 * g.l2(off) * g.l2(es.Q0)


def test_frozen_scalars(expansion):
    assert expansion.mu2 == pytest.approx(0.004346032330222451, abs=1e-10)
    # solvability denominator measured against |Q0|^2
    assert expansion.denominator_ratio == pytest.approx(1.025964889621364, abs=1e-8)


def test_mu2_recomputed_consistently(expansion, pair):
    mu2, D, ratio = compute_mu2(pair, expansion.Q1i, expansion.sigma, expansion.alpha, expansion.Qprime)
    assert mu2 == pytest.approx(expansion.mu2, rel=1e-10)
    assert D == pytest.approx(expansion.denominator, rel=1e-12)


def test_degenerate_denominator_rejected(pair, expansion):
    with pytest.raises(RegimeError) as exc:
        compute_mu2(pair, expansion.Q1i, expansion.sigma, expansion.alpha, -expansion.Q1i / 1e300)
    # Qprime chosen so that (Q1 + B Q', Q0) = (Q1, Q0) ~ 0
    assert exc.value.reason == "degenerate expansion"


def test_forcing_equals_residual_coefficients(expansion):
    """-g1, -phi2 are the eps^4 real / eps^5 imaginary coefficients of the residual of Q^a.

    (They enter the correction equations as forcing, hence the sign.) The real residual is even in eps and the imaginary one odd, so two step
    sizes eliminate the next order exactly.
    """
    es = expansion
    g = es.grid
    g1, phi2 = forcing_fields(es)
    eps = 0.2  # the eps^0 round-off residual, divided by eps^4, dominates below this
    parts = []
    for e in (eps, 2 * eps):
        Q, mu = assemble_approx(es, e)
        parts.append(split_residual(g, Q.values.real, Q.values.imag, mu, e, es.sigma, es.alpha))
    (ra, ia), (rb, ib) = parts
    c4 = (64 * ra - rb) / (48 * eps**4)
    c5 = (128 * ia - ib) / (96 * eps**5)
    assert g.l2(c4 + g1) < 1e-4 * g.l2(g1)
    assert g.l2(c5 + phi2) < 1e-4 * g.l2(phi2)


def test_residual_order_four(expansion):
    table, slope = residual_slope(expansion)
    assert slope >= 3.5
    assert [e for e, _ in table] == [0.0125, 0.025, 0.05, 0.1]


def test_residual_spe_rejects(expansion):
    g = expansion.grid
    with pytest.raises(TypeError):
        residual_spe(expansion.Q0, 1.0, 0.1, expansion.sigma, 1.0)
    with pytest.raises(GridError):
        residual_spe(Field(g, np.zeros(g.shape)), 1.0, 0.1, expansion.sigma, 1.0)


def test_summary_keys(expansion):
    s = expansion.summary()
    for key in ("mu0", "mu2", "denominator_ratio", "C1", "Q1i_Q0_inner", "defect_Q3i"):
        assert key in s
