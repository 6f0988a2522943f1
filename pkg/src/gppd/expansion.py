"""Perturbative solitary wave of the pumped/damped stationary equation.

    Q^a = Q0 + i eps Q1 + eps^2 Q2 + i eps^3 Q3,    mu^a = mu0 + eps^2 mu2

solves ``(H0 + |Q|^2 - mu) Q + i eps (sigma - alpha |Q|^2) Q = 0`` up to
O(eps^4). Collecting powers of eps (with rho_k the eps^k coefficient of
|Q^a|^2) gives

    L- Q1 = (alpha Q0^2 - sigma) Q0
    L+ Q2 = mu2 Q0 + (sigma - alpha Q0^2) Q1 - Q0 Q1^2
    L- Q3 = mu2 Q1 - Q1^3 + alpha Q0 Q1^2 + B Q2,   B = 3 alpha Q0^2 - sigma - 2 Q0 Q1

and mu2 is fixed by the solvability condition (L- Q3, Q0) = 0. The forcings
g1, phi2 are minus the eps^4 real and eps^5 imaginary residual
coefficients of Q^a.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .discretization import Field, GridSpec, sigma_norm
from .errors import GridError, RegimeError
from .linearized import LinearizedPair, solve_lminus_perp, solve_lplus
from .pumpbalance import sigma_array

log = logging.getLogger(__name__)

CERTIFY_TOL = 1e-9


@dataclass
class ExpansionSet:
    Q0: np.ndarray
    mu0: float
    Q1i: np.ndarray
    Q2r: np.ndarray
    Q3i: np.ndarray
    mu2: float
    g1: np.ndarray
    phi2: np.ndarray
    alpha: float
    sigma: np.ndarray
    grid: GridSpec
    pair: LinearizedPair = field(repr=False)
    Qprime: np.ndarray = field(repr=False)
    denominator: float = 0.0
    denominator_ratio: float = 0.0
    defects: dict = field(default_factory=dict)

    def coupling(self) -> np.ndarray:
        return coupling_field(self.Q0, self.Q1i, self.sigma, self.alpha)

    def summary(self) -> dict:
        g = self.grid
        out = {
            "mu0": self.mu0,
            "mu2": self.mu2,
            "alpha": self.alpha,
            "denominator": self.denominator,
            "denominator_ratio": self.denominator_ratio,
            "C1": 2.0 * g.l2(self.g1) / g.l2(self.Q0),
        }
        for name in ("Q0", "Q1i", "Q2r", "Q3i", "g1", "phi2"):
            v = getattr(self, name)
            out[f"{name}_l2"] = g.l2(v)
            out[f"{name}_sigma"] = sigma_norm(g, v)
        out["Q1i_Q0_inner"] = g.inner(self.Q1i, self.Q0)
        out["Q3i_Q0_inner"] = g.inner(self.Q3i, self.Q0)
        out.update({f"defect_{k}": v for k, v in self.defects.items()})
        return out


def coupling_field(Q0, Q1, sigma, alpha):
    """Coefficient B of the eps-coupling of a real perturbation into the imaginary equation."""
    return 3.0 * alpha * Q0**2 - sigma - 2.0 * Q0 * Q1


def _defect(op, u, rhs, grid):
    nr = grid.l2(rhs)
    return grid.l2(op(u) - rhs) / nr if nr > 0 else grid.l2(op(u))


def compute_q1i(pair: LinearizedPair, sigma, alpha: float, ortho_tol: float = 1e-8) -> np.ndarray:
    g = pair.grid
    q = pair.Q0
    rhs = (alpha * q**2 - sigma_array(sigma, g)) * q
    return solve_lminus_perp(pair, rhs, ortho_tol)


def q2_source(Q0, Q1, sigma, alpha):
    """mu2-independent part of the L+ Q2 right-hand side."""
    return (sigma - alpha * Q0**2) * Q1 - Q0 * Q1**2


def compute_mu2(pair: LinearizedPair, Q1, sigma, alpha: float, Qprime=None):
    """Returns ``(mu2, D, D / |Q0|^2)``."""
    g = pair.grid
    q = pair.Q0
    s = sigma_array(sigma, g)
    B = coupling_field(q, Q1, s, alpha)
    if Qprime is None:
        Qprime = solve_lplus(pair, q)
    w = solve_lplus(pair, q2_source(q, Q1, s, alpha))
    N = g.inner(-Q1**3 + alpha * q * Q1**2 + B * w, q)
    D = g.inner(Q1 + B * Qprime, q)
    qq = g.l2sq(q)
    if abs(D) < 1e-8 * qq:
        raise RegimeError(f"degenerate expansion: solvability denominator {D:.3e}", reason="degenerate expansion")
    log.info("mu2 denominator D = %.12g, D/|Q0|^2 = %.12g", D, D / qq)
    return -N / D, D, D / qq


def compute_q2r(pair: LinearizedPair, mu2: float, Q1, sigma, alpha: float) -> np.ndarray:
    g = pair.grid
    q = pair.Q0
    return solve_lplus(pair, mu2 * q + q2_source(q, Q1, sigma_array(sigma, g), alpha))


def q3_rhs(Q0, Q1, Q2, mu2, sigma, alpha):
    return mu2 * Q1 - Q1**3 + alpha * Q0 * Q1**2 + coupling_field(Q0, Q1, sigma, alpha) * Q2


def compute_q3i(pair: LinearizedPair, Q1, Q2, mu2: float, sigma, alpha: float,
                ortho_tol: float = 1e-7) -> np.ndarray:
    g = pair.grid
    rhs = q3_rhs(pair.Q0, Q1, Q2, mu2, sigma_array(sigma, g), alpha)
    return solve_lminus_perp(pair, rhs, ortho_tol)


def forcing_pieces(Q0, Q1, Q2, Q3, mu2, sigma, alpha):
    """(g1, phi2) from the eps^4 real and eps^5 imaginary residual coefficients."""
    rho2 = 2.0 * Q0 * Q2 + Q1**2
    rho4 = Q2**2 + 2.0 * Q1 * Q3
    g1 = mu2 * Q2 - rho2 * Q2 - rho4 * Q0 + (sigma - alpha * Q0**2) * Q3 - alpha * rho2 * Q1
    phi2 = mu2 * Q3 - rho2 * Q3 - rho4 * Q1 + alpha * (rho2 * Q2 + rho4 * Q0)
    return g1, phi2


def forcing_fields(es: ExpansionSet):
    return forcing_pieces(es.Q0, es.Q1i, es.Q2r, es.Q3i, es.mu2, es.sigma, es.alpha)


def build_expansion(pair: LinearizedPair, sigma, alpha: float) -> ExpansionSet:
    """Run the full pipeline Q1 -> mu2 -> Q2 -> Q3 -> (g1, phi2) with certification."""
    g = pair.grid
    q = pair.Q0
    s = sigma_array(sigma, g)
    Qp = solve_lplus(pair, q)
    Q1 = compute_q1i(pair, s, alpha)
    mu2, D, ratio = compute_mu2(pair, Q1, s, alpha, Qp)
    Q2 = compute_q2r(pair, mu2, Q1, s, alpha)
    Q3 = compute_q3i(pair, Q1, Q2, mu2, s, alpha)
    defects = {
        "Q1i": _defect(pair.lminus, Q1, (alpha * q**2 - s) * q, g),
        "Q2r": _defect(pair.lplus, Q2, mu2 * q + q2_source(q, Q1, s, alpha), g),
        "Q3i": _defect(pair.lminus, Q3, q3_rhs(q, Q1, Q2, mu2, s, alpha), g),
        "Qprime": _defect(pair.lplus, Qp, q, g),
    }
    bad = {k: v for k, v in defects.items() if v > CERTIFY_TOL}
    if bad:
        raise RegimeError(f"expansion solves failed certification: {bad}", reason="solve certification")
    g1, phi2 = forcing_pieces(q, Q1, Q2, Q3, mu2, s, alpha)
    return ExpansionSet(q, pair.mu0, Q1, Q2, Q3, mu2, g1, phi2, float(alpha), s, g, pair, Qp, D, ratio, defects)


def assemble_approx(es: ExpansionSet, eps: float):
    """``(Q^a, mu^a)`` as a complex Field and a real chemical potential."""
    Q = es.Q0 + eps**2 * es.Q2r + 1j * (eps * es.Q1i + eps**3 * es.Q3i)
    return Field(es.grid, Q), es.mu0 + eps**2 * es.mu2


def split_residual(grid: GridSpec, Qr, Qi, mu, eps, sigma, alpha):
    """Real and imaginary parts of ``(H0 + rho - mu) Q + i eps (sigma - alpha rho) Q``."""
    rho = Qr**2 + Qi**2
    gain = eps * (sigma - alpha * rho)
    Rr = grid.h0(Qr) + (rho - mu) * Qr - gain * Qi
    Ri = grid.h0(Qi) + (rho - mu) * Qi + gain * Qr
    return Rr, Ri


def residual_spe(Q, mu: float, eps: float, sigma, alpha: float) -> float:
    """``|(H0 + |Q|^2 - mu) Q + i eps (sigma - alpha |Q|^2) Q|_2 / |Q|_2``."""
    if not isinstance(Q, Field):
        raise TypeError("Q must be a Field")
    g = Q.grid
    v = np.asarray(Q.values, dtype=complex)
    nq = g.l2(v)
    if nq == 0.0:
        raise GridError("residual of the zero field is undefined")
    Rr, Ri = split_residual(g, v.real, v.imag, mu, eps, sigma_array(sigma, g), alpha)
    return float(np.sqrt(g.l2sq(Rr) + g.l2sq(Ri))) / nq


def residual_slope(es: ExpansionSet, eps_list=(0.0125, 0.025, 0.05, 0.1)):
    """Residuals of ``(Q^a, mu^a)`` along eps and the least-squares log-log slope."""
    res = []
    for e in eps_list:
        Q, mu = assemble_approx(es, e)
        res.append(residual_spe(Q, mu, e, es.sigma, es.alpha))
    slope = float(np.polyfit(np.log(eps_list), np.log(res), 1)[0])
    return list(zip(eps_list, res)), slope
