"""Linearized operators at a ground state.

    L- = H0 + Q0^2 - mu0      (kernel spanned by Q0)
    L+ = H0 + 3 Q0^2 - mu0    (L+ Q0 = 2 Q0^3)

Both act on the grid through Fourier differentiation. Dense Galerkin
matrices in the Hermite basis provide the eigen-diagnostics; linear solves
use preconditioned MINRES on the grid, deflated against Q0 for L-.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .discretization import Field, GridSpec, HermiteBasis, OperatorRep, lowest_eigenpairs
from .errors import OrthogonalityError, RegimeError
from .groundstate import FlowConfig, minimize_vm, residual_sp0
from .krylov import Preconditioner, projector, solve_symmetric


@dataclass
class LinearizedPair:
    lminus: OperatorRep
    lplus: OperatorRep
    q0: Field
    mu0: float
    lminus_lambda_min: float
    lplus_lambda_min: float
    lminus_lambda_2: float
    kernel_overlap: float
    kernel_tol: float
    inversion_tol: float = 1e-6
    solve_tol: float = 1e-12
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.q0.grid

    @property
    def Q0(self) -> np.ndarray:
        return self.q0.values

    def deflate(self):
        if "deflate" not in self._cache:
            self._cache["deflate"] = projector(self.grid, self.Q0)
        return self._cache["deflate"]

    def preconditioner(self, which: str) -> Preconditioner:
        key = "P" + which
        if key not in self._cache:
            if which == "+":
                self._cache[key] = Preconditioner(self.lplus)
            else:
                self._cache[key] = Preconditioner(self.lminus, deflate=self.deflate())
        return self._cache[key]

    def diagnostics(self) -> dict:
        return {
            "mu0": self.mu0,
            "lminus_lambda_min": self.lminus_lambda_min,
            "lminus_lambda_2": self.lminus_lambda_2,
            "lplus_lambda_min": self.lplus_lambda_min,
            "kernel_overlap": self.kernel_overlap,
            "kernel_tol": self.kernel_tol,
        }


def build_pair(Q0, mu0: float, basis: HermiteBasis | None = None, order: int = 40,
               residual_tol: float = 1e-8, inversion_tol: float = 1e-6) -> LinearizedPair:
    """Assemble L+- at ``(Q0, mu0)`` and fill the spectral diagnostics."""
    q0 = Q0 if isinstance(Q0, Field) else None
    if q0 is None:
        raise TypeError("Q0 must be a Field")
    grid = q0.grid
    q = q0.values
    res = residual_sp0(grid, q, mu0)
    if res > residual_tol:
        raise ValueError(f"Q0 is not a converged ground state: residual {res:.3e} > {residual_tol:.1e}")
    basis = basis or HermiteBasis(grid, order)
    lm = OperatorRep(grid, q**2, mu0, basis, "L-")
    lp = OperatorRep(grid, 3.0 * q**2, mu0, basis, "L+")
    # assembly guard on deterministic, decaying test fields
    X, Y = grid.mesh
    env = np.exp(-0.5 * grid.r2)
    u, v = env * (1 + X + 0.3 * Y**2), env * (X * Y - 0.5 + Y)
    for op in (lm, lp):
        scale = math.sqrt(grid.l2sq(op(u)) * grid.l2sq(op(v))) + 1.0
        if op.symmetry_defect(u, v) > 1e-8 * scale:
            raise RuntimeError(f"{op.name} failed the symmetry check")
        A = op.matrix
        if np.abs(A - A.T).max() > 1e-8 * np.abs(A).max():
            raise RuntimeError(f"{op.name} Galerkin matrix is not symmetric")
    eig_m = lowest_eigenpairs(lm, 2)
    eig_p = lowest_eigenpairs(lp, 1)
    e0 = eig_m[0][1].values
    overlap = abs(grid.inner(e0, q)) / (grid.l2(e0) * grid.l2(q))
    return LinearizedPair(lm, lp, q0, float(mu0), eig_m[0][0], eig_p[0][0], eig_m[1][0], overlap,
                          1e-6 * (1.0 + mu0), inversion_tol)


def _split(rhs):
    rhs = np.asarray(rhs)
    if np.iscomplexobj(rhs):
        return rhs.real, rhs.imag
    return rhs, None


def solve_lminus_perp(pair: LinearizedPair, rhs, ortho_tol: float = 1e-8) -> np.ndarray:
    """u with ``L- u = P rhs`` and ``(u, Q0) = 0``; rhs must be orthogonal to Q0."""
    grid, q = pair.grid, pair.Q0
    rhs = np.asarray(rhs, dtype=float)
    nr = grid.l2(rhs)
    if nr == 0.0:
        return np.zeros_like(rhs)
    ip = grid.inner(rhs, q)
    if abs(ip) > ortho_tol * nr * grid.l2(q):
        raise OrthogonalityError(f"right-hand side not orthogonal to Q0: (rhs, Q0) = {ip:.3e}", ip)
    return solve_symmetric(pair.lminus, rhs, rtol=pair.solve_tol, deflate=pair.deflate(),
                           precond=pair.preconditioner("-"))


def solve_lplus(pair: LinearizedPair, rhs) -> np.ndarray:
    """``L+^{-1} rhs`` for real or complex rhs."""
    if abs(pair.lplus_lambda_min) <= pair.inversion_tol:
        raise RegimeError(f"L+ is near-singular: lambda_min = {pair.lplus_lambda_min:.3e}",
                          reason="L+ not invertible")
    re, im = _split(rhs)
    P = pair.preconditioner("+")
    out = solve_symmetric(pair.lplus, re, rtol=pair.solve_tol, precond=P)
    if im is None:
        return out
    return out + 1j * solve_symmetric(pair.lplus, im, rtol=pair.solve_tol, precond=P)


def apply_lminus(pair: LinearizedPair, u):
    return pair.lminus(u)


def apply_lplus(pair: LinearizedPair, u):
    return pair.lplus(u)


@dataclass
class SlopeRow:
    M: float
    eta: float
    lplus_lambda_min: float
    ratio: float
    reflected_lambda_min: float
    reflected_ratio: float


def lowest_galerkin_eigenvalue(op: OperatorRep) -> float:
    return float(linalg.eigh(op.matrix, eigvals_only=True, subset_by_index=[0, 0])[0])


def bifurcation_slope(masses, grid: GridSpec | None = None, cfg: FlowConfig | None = None,
                      order: int = 24) -> list[SlopeRow]:
    """Motion of the lowest L+ eigenvalue along the small-mass branch.

    ``ratio`` is ``lambda_min(L+) / (mu - 2)`` with ``L+ = H0 + 3u^2 - mu``.
    ``reflected_ratio`` uses ``H0 - 3u^2 - mu`` instead, the operator whose
    first-order slope at the linear mode is ``-(3 a0^2 |phi1|_4^4 + |phi1|_2^2) = -4``.
    """
    rows = []
    for M in masses:
        gs = minimize_vm(M, cfg, grid)
        basis = HermiteBasis(gs.grid, order)
        u, mu = gs.values, gs.chem_potential
        eta = mu - 2.0
        lam = lowest_galerkin_eigenvalue(OperatorRep(gs.grid, 3.0 * u**2, mu, basis, "L+"))
        lam_r = lowest_galerkin_eigenvalue(OperatorRep(gs.grid, -3.0 * u**2, mu, basis, "reflected"))
        rows.append(SlopeRow(M, eta, lam, lam / eta, lam_r, lam_r / eta))
    return rows


BIFURCATION_A0_SQ = 2.0 * math.pi  # |phi1|_2^2 / |phi1|_4^4
