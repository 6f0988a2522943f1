"""Krylov solves for symmetric (possibly indefinite) Schrodinger operators on the grid.

The preconditioner is two-level: an exact inverse of the operator's
Galerkin matrix on a small Hermite space (absolute eigenvalues, so it stays
positive definite for indefinite operators) plus a Fourier multiplier
``1 / (|k|^2 + 2K)`` on the complement, which behaves like H0^{-1} for the
high oscillator modes.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, minres

from .discretization import HermiteBasis, OperatorRep
from .errors import ConvergenceError

_basis_cache: dict = {}


def _small_basis(grid, order):
    key = (grid, order)
    if key not in _basis_cache:
        _basis_cache[key] = HermiteBasis(grid, order)
    return _basis_cache[key]


class Preconditioner:
    def __init__(self, op: OperatorRep, order: int = 24, floor: float = 0.05, deflate=None):
        grid = op.grid
        self.grid = grid
        basis = _small_basis(grid, order)
        self.basis = basis
        A = np.diag(basis.h0_diagonal() - op.shift)
        if op.potential is not None:
            A = A + basis.galerkin(op.potential)
        w, V = linalg.eigh(A)
        self._V = V
        self._winv = 1.0 / np.maximum(np.abs(w), floor)
        self._hi = 1.0 / (grid.k2 + 2.0 * order)
        self._deflate = deflate

    def __call__(self, r: np.ndarray) -> np.ndarray:
        g, b = self.grid, self.basis
        if self._deflate is not None:
            r = self._deflate(r)
        c = b.project(r)
        low = b.evaluate((self._V @ (self._winv * (self._V.T @ c.ravel()))).reshape(c.shape))
        rest = r - b.evaluate(c)
        hi = np.fft.ifft2(self._hi * np.fft.fft2(rest)).real
        hi = hi - b.evaluate(b.project(hi))
        out = low + hi
        if self._deflate is not None:
            out = self._deflate(out)
        return out

    def linear_operator(self) -> LinearOperator:
        n = self.grid.n
        return LinearOperator((n * n, n * n), matvec=lambda v: self(v.reshape(n, n)).ravel(), dtype=float)


def solve_symmetric(op: OperatorRep, rhs: np.ndarray, rtol: float = 1e-12, maxiter: int = 3000,
                    deflate=None, precond: Preconditioner | None = None, restarts: int = 4) -> np.ndarray:
    """Solve ``op u = rhs`` for real ``rhs`` with preconditioned MINRES.

    ``deflate`` (an orthogonal projector, applied to iterates and residuals)
    restricts the solve to a complement of a kernel direction. The true
    residual is checked after each MINRES run and the run is restarted from
    the current iterate until ``||op u - rhs|| <= rtol ||rhs||``.
    """
    grid = op.grid
    n = grid.n
    rhs = np.asarray(rhs, dtype=float)
    if deflate is not None:
        rhs = deflate(rhs)
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    if precond is None:
        precond = Preconditioner(op, deflate=deflate)

    def mv(v):
        v = v.reshape(n, n)
        if deflate is not None:
            v = deflate(v)
            return deflate(op(v)).ravel()
        return op(v).ravel()

    A = LinearOperator((n * n, n * n), matvec=mv, dtype=float)
    M = precond.linear_operator()
    u = np.zeros(n * n)
    rel = np.inf
    for _ in range(restarts):
        r = rhs.ravel() - A.matvec(u)
        du, _ = minres(A, r, rtol=max(rtol * bnorm / max(np.linalg.norm(r), 1e-300), 1e-15),
                       maxiter=maxiter, M=M)
        u = u + du
        if deflate is not None:
            u = deflate(u.reshape(n, n)).ravel()
        rel = float(np.linalg.norm(rhs.ravel() - A.matvec(u)) / bnorm)
        if rel <= rtol:
            break
    else:
        # the floor of attainable accuracy is set by round-off in op
        if rel > max(rtol, 1e-10) * 10:
            raise ConvergenceError(f"MINRES stalled at relative residual {rel:.3e}", rel)
    return u.reshape(n, n)


def solve_bordered(op: OperatorRep, border: np.ndarray, rhs: np.ndarray, constraint: float, rtol: float = 1e-12,
                   maxiter: int = 3000, precond: Preconditioner | None = None, restarts: int = 4):
    """Solve ``op x + s border = rhs``, ``(border, x) = constraint`` for ``(x, s)``.

    The bordered matrix stays well conditioned when ``op`` is nearly
    singular along ``border``, which is the situation for the mass-constrained
    Newton step at small mass. One MINRES solve on the symmetric augmented
    system, preconditioned by ``blockdiag(P, 1 / (b, P b))``.
    """
    grid = op.grid
    n = grid.n
    nn = n * n
    bE = float(np.linalg.norm(border))
    if bE == 0.0:
        raise ValueError("border vector vanishes")
    b = (border / bE).ravel()
    c = constraint / (grid.h**2 * bE)
    P = precond or Preconditioner(op)
    Pb = P(b.reshape(n, n)).ravel()
    schur = float(b @ Pb)

    def mv(z):
        x, t = z[:nn], z[nn]
        return np.concatenate([op(x.reshape(n, n)).ravel() + t * b, [b @ x]])

    def pv(z):
        return np.concatenate([P(z[:nn].reshape(n, n)).ravel(), [z[nn] / schur]])

    A = LinearOperator((nn + 1, nn + 1), matvec=mv, dtype=float)
    M = LinearOperator((nn + 1, nn + 1), matvec=pv, dtype=float)
    f = np.concatenate([np.asarray(rhs, dtype=float).ravel(), [c]])
    fnorm = float(np.linalg.norm(f))
    z = np.zeros(nn + 1)
    rel = np.inf
    for _ in range(restarts):
        r = f - A.matvec(z)
        dz, _ = minres(A, r, rtol=max(rtol * fnorm / max(np.linalg.norm(r), 1e-300), 1e-15), maxiter=maxiter, M=M)
        z = z + dz
        rel = float(np.linalg.norm(f - A.matvec(z)) / fnorm)
        if rel <= rtol:
            break
    else:
        if rel > max(rtol, 1e-10) * 10:
            raise ConvergenceError(f"bordered MINRES stalled at relative residual {rel:.3e}", rel)
    return z[:nn].reshape(n, n), z[nn] / bE


def projector(grid, q: np.ndarray):
    """Orthogonal projector onto the L^2 complement of ``q``."""
    qq = grid.l2sq(q)

    def apply(v):
        return v - (grid.inner(v, q) / qq) * q

    return apply
