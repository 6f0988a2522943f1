import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gppd.errors import RegimeError
from gppd.groundstate import minimize_vm
from gppd.pumpbalance import (PumpProfile, alpha_for_mass, find_balanced_mass, k_scale, k_scan, kfunctional,
                              sign_changes)

# balance mass for a unit Gaussian pump exp(-|x|^2), alpha = 1, from the radial solver
GAUSS_BALANCE_RADIAL = 3.3489334016245618


profiles = st.one_of(
    st.builds(lambda a, r: PumpProfile("disk", amplitude=a, radius=r), st.floats(0.1, 5), st.floats(0.1, 5)),
    st.builds(lambda a, w, cx, cy: PumpProfile("gaussian", amplitude=a, width=w, center=(cx, cy)),
              st.floats(0.1, 5), st.floats(0.1, 5), st.floats(-2, 2), st.floats(-2, 2)),
    st.builds(lambda a: PumpProfile("constant", amplitude=a), st.floats(0.1, 5)),
)


@settings(max_examples=50)
@given(profiles)
def test_describe_parse_roundtrip(p):
    assert PumpProfile.parse(p.describe()) == p


@pytest.mark.parametrize("text", ["disk", "kind=ring", "kind=disk,R=-1", "kind=disk,s0=0", "kind=disk,foo=1",
                                  "kind=gaussian,w=0"])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        PumpProfile.parse(text)


def test_sampling(grid):
    d = PumpProfile.parse("kind=disk,s0=2,R=1").sample(grid)
    assert set(np.unique(d)) == {0.0, 2.0}
    assert d[64, 64] == 2.0 and d[64, 72] == 2.0 and d[64, 73] == 0.0
    gsig = PumpProfile.parse("kind=gaussian,s0=1,w=1").sample(grid)
    assert gsig.max() == 1.0 and PumpProfile.parse("kind=gaussian,s0=3,w=1").sup() == 3.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.0, 3.0))
def test_k_quadratic_quartic_scaling(grid, c, alpha):
    u = np.exp(-0.5 * grid.r2)
    sigma = PumpProfile("disk")
    s = grid.integrate(sigma.sample(grid) * u**2)
    q = grid.integrate(u**4)
    assert kfunctional(grid, c * u, sigma, alpha) == pytest.approx(c**2 * s - alpha * c**4 * q, rel=1e-12, abs=1e-14)
    assert k_scale(grid, c * u, sigma, alpha) == pytest.approx(c**2 * s + alpha * c**4 * q, rel=1e-12)


def test_alpha_for_mass_balances(grid):
    sigma = PumpProfile("disk")
    gs = minimize_vm(3.0, None, grid)
    a = alpha_for_mass(sigma, 3.0, grid, state=gs)
    assert abs(kfunctional(grid, gs.values, sigma, a)) < 1e-14 * k_scale(grid, gs.values, sigma, a)


def test_gaussian_pump_balance_matches_radial(grid):
    bp = find_balanced_mass(PumpProfile.parse("kind=gaussian,s0=1,w=1"), 1.0, (0.01, 100), 1e-8, grid)
    assert bp.M_star == pytest.approx(GAUSS_BALANCE_RADIAL, abs=1e-8)


def test_disk_balance(balance):
    assert balance.k_residual < 1e-8 * balance.k_scale
    assert balance.M_star == pytest.approx(4.167618180746133, abs=1e-8)
    assert balance.mu0 == pytest.approx(2.586795251226909, abs=1e-8)
    assert balance.summary()["root_probes"] == len(balance.probes)


def test_bracket_failures(grid, disk):
    with pytest.raises(RegimeError) as exc:
        find_balanced_mass(disk, 1.0, (10.0, 100.0), 1e-8, grid)
    assert exc.value.reason == "bracket sign failure at M_lo"
    with pytest.raises(RegimeError) as exc:
        find_balanced_mass(disk, 1.0, (0.01, 1.0), 1e-8, grid)
    assert exc.value.reason == "bracket sign failure at M_hi"
    with pytest.raises(ValueError):
        find_balanced_mass(disk, 0.0, (0.01, 100.0), 1e-8, grid)


def test_k_scan_single_crossing(grid, disk):
    scan = k_scan(disk, 1.0, np.geomspace(0.01, 100, 9), grid)
    assert scan[0][1] > 0 and scan[-1][1] < 0
    assert sign_changes(scan) == 1
    assert sign_changes([(1, 1.0), (2, -1.0), (3, 1.0)]) == 2
