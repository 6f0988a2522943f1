"""Grids, fields and the harmonic-oscillator operator H0 = -Laplacian + |x|^2 on R^2.

Two representations live side by side:

* a uniform periodic grid with Fourier differentiation, used for pointwise
  nonlinearities, Krylov solves and time stepping;
* a tensor Hermite-function basis in which H0 is exactly diagonal, used for
  dense operator algebra (eigensolves, preconditioners, the gradient flow).

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, cg

from .errors import ConvergenceError, GridError

DECAY_BAND = 0.9


@dataclass(frozen=True)
class GridSpec:
    """Square periodic grid ``x_j = (j - n/2) h`` with ``h = 2L/n``.

    The first sample sits at ``-L`` and the layout is symmetric under
    ``j -> (n - j) mod n``, so even functions are sampled exactly even.
    """

    n: int
    L: float

    @cached_property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @cached_property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.h

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.x, indexing="ij")

    @cached_property
    def r2(self) -> np.ndarray:
        X, Y = self.mesh
        return X**2 + Y**2

    @property
    def potential(self) -> np.ndarray:
        """The trap V(x) = |x|^2."""
        return self.r2

    @cached_property
    def k(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, self.h)

    @cached_property
    def k2(self) -> np.ndarray:
        KX, KY = np.meshgrid(self.k, self.k, indexing="ij")
        return KX**2 + KY**2

    @cached_property
    def _k2_half(self) -> np.ndarray:
        ky = 2.0 * np.pi * np.fft.rfftfreq(self.n, self.h)
        KX, KY = np.meshgrid(self.k, ky, indexing="ij")
        return KX**2 + KY**2

    @cached_property
    def _k_odd(self) -> np.ndarray:
        # first derivatives drop the Nyquist mode so real fields stay real
        k = self.k.copy()
        k[self.n // 2] = 0.0
        return k

    @cached_property
    def band_mask(self) -> np.ndarray:
        X, Y = self.mesh
        return np.maximum(np.abs(X), np.abs(Y)) >= DECAY_BAND * self.L

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def kmax2(self) -> float:
        return float(self.k2.max())

    def neg_laplacian(self, u: np.ndarray) -> np.ndarray:
        if np.isrealobj(u):
            return np.fft.irfft2(self._k2_half * np.fft.rfft2(u), s=u.shape)
        return np.fft.ifft2(self.k2 * np.fft.fft2(u))

    def h0(self, u: np.ndarray) -> np.ndarray:
        return self.neg_laplacian(u) + self.r2 * u

    def gradient(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        uh = np.fft.fft2(u)
        kx = self._k_odd[:, None]
        ky = self._k_odd[None, :]
        dx = np.fft.ifft2(1j * kx * uh)
        dy = np.fft.ifft2(1j * ky * uh)
        if np.isrealobj(u):
            return dx.real, dy.real
        return dx, dy

    def integrate(self, f: np.ndarray) -> float:
        return float(np.real(np.sum(f))) * self.h**2

    def inner(self, u: np.ndarray, v: np.ndarray):
        """L^2 product ``(u, v)_2 = sum u * conj(v) h^2`` (real for real fields)."""
        s = np.vdot(v, u) * self.h**2
        if np.isrealobj(u) and np.isrealobj(v):
            return float(np.real(s))
        return complex(s)

    def l2sq(self, u: np.ndarray) -> float:
        return float(np.vdot(u, u).real) * self.h**2

    def l2(self, u: np.ndarray) -> float:
        return float(np.sqrt(self.l2sq(u)))

    def decay(self, u: np.ndarray) -> float:
        """Largest |u| in the outer band max(|x|,|y|) >= 0.9 L."""
        return float(np.abs(u[self.band_mask]).max())

    def check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u)
        if u.shape != self.shape:
            raise GridError(f"field shape {u.shape} does not match grid {self.shape}")
        return u


def build_grid(n: int, L: float) -> GridSpec:
    n = int(n)
    if n < 16 or n > 1024 or n & (n - 1):
        raise GridError(f"n must be a power of two in [16, 1024], got {n}")
    if not L > 0:
        raise GridError(f"half-width L must be positive, got {L}")
    if not 4.0 <= L <= 32.0:
        raise GridError(f"half-width L must lie in [4, 32], got {L}")
    return GridSpec(n, float(L))


@dataclass
class Field:
    """Samples of a real or complex function on a grid.

    ``flags`` collects non-fatal diagnostics such as a boundary-decay warning.
    """

    grid: GridSpec
    values: np.ndarray
    flags: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.values = self.grid.check(self.values)
        if not np.all(np.isfinite(self.values)):
            raise GridError("field contains non-finite samples")

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    @property
    def decay(self) -> float:
        return self.grid.decay(self.values)

    @property
    def samples(self) -> np.ndarray:
        """Row-major flat view of length n^2."""
        return self.values.reshape(-1)

    def real(self) -> "Field":
        return Field(self.grid, np.real(self.values).copy())


def decay_ok(grid: GridSpec, u: np.ndarray, rel: float = 1e-8) -> bool:
    scale = float(np.abs(u).max())
    return scale == 0.0 or grid.decay(u) <= rel * scale


def apply_h0(u: Field) -> Field:
    """-Laplacian u + |x|^2 u, flagging fields that do not decay at the edge."""
    flags = () if decay_ok(u.grid, u.values) else ("boundary-decay",)
    return Field(u.grid, u.grid.h0(u.values), flags)


class Norms(NamedTuple):
    l2sq: float
    l4fourth: float
    gradsq: float
    xmomsq: float
    sigma_norm_sq: float


def norms(u) -> Norms:
    """Quadratic and quartic norms; accepts a Field or ``(grid, array)``."""
    grid, v = (u.grid, u.values) if isinstance(u, Field) else u
    a2 = np.abs(v) ** 2
    l2sq = grid.integrate(a2)
    l4 = grid.integrate(a2**2)
    grad = float(np.real(grid.inner(grid.neg_laplacian(v), v)))
    xmom = grid.integrate(grid.r2 * a2)
    return Norms(l2sq, l4, grad, xmom, grad + xmom + l2sq)


def sigma_norm(grid: GridSpec, u: np.ndarray) -> float:
    return float(np.sqrt(norms((grid, u)).sigma_norm_sq))


def phi1_reference(grid: GridSpec) -> Field:
    """The normalized trap ground state exp(-|x|^2/2)/sqrt(pi)."""
    return Field(grid, np.exp(-0.5 * grid.r2) / np.sqrt(np.pi))


def hermite_functions(order: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal Hermite functions psi_0..psi_{order-1} sampled at x, shape (len(x), order)."""
    x = np.asarray(x, dtype=float)
    E = np.zeros((x.size, order))
    E[:, 0] = np.pi**-0.25 * np.exp(-0.5 * x**2)
    if order > 1:
        E[:, 1] = np.sqrt(2.0) * x * E[:, 0]
    for j in range(2, order):
        E[:, j] = np.sqrt(2.0 / j) * x * E[:, j - 1] - np.sqrt((j - 1) / j) * E[:, j - 2]
    return E


class HermiteBasis:
    """Tensor Hermite functions ``psi_k1(x) psi_k2(y)``, ``k1, k2 < order``.

    Coefficient arrays have shape (order, order). H0 is diagonal with
    eigenvalues 2(k1 + k2 + 1). Two transforms are provided: grid
    samples <-> coefficients by periodic trapezoid quadrature (accurate for
    fields that decay inside the box), and Gauss-Hermite nodes <->
    coefficients, which is an exact orthogonal change of basis.
    """

    def __init__(self, grid: GridSpec, order: int = 40):
        if order < 1:
            raise GridError("Hermite order must be positive")
        self.grid = grid
        self.order = order
        self.E = hermite_functions(order, grid.x)
        k = np.arange(order)
        self.eigenvalues = 2.0 * (k[:, None] + k[None, :] + 1.0)
        nodes, _ = hermgauss(order)
        # Christoffel weights for Hermite functions: 1 / (K psi_{K-1}(x_i)^2)
        last = hermite_functions(order, nodes)[:, -1]
        self.nodes = nodes
        self.node_weights = 1.0 / (order * last**2)
        self.U = np.sqrt(self.node_weights)[:, None] * hermite_functions(order, nodes)

    def project(self, u: np.ndarray) -> np.ndarray:
        return self.grid.h**2 * (self.E.T @ u @ self.E)

    def evaluate(self, coeffs: np.ndarray) -> np.ndarray:
        return self.E @ coeffs @ self.E.T

    def to_nodes(self, coeffs: np.ndarray) -> np.ndarray:
        """Function values on the tensor Gauss-Hermite nodes."""
        s = np.sqrt(self.node_weights)
        return (self.U @ coeffs @ self.U.T) / np.outer(s, s)

    def from_nodes(self, values: np.ndarray) -> np.ndarray:
        s = np.sqrt(self.node_weights)
        return self.U.T @ (values * np.outer(s, s)) @ self.U

    def h0_diagonal(self) -> np.ndarray:
        return self.eigenvalues.reshape(-1)

    def galerkin(self, w: np.ndarray) -> np.ndarray:
        """Matrix of multiplication by ``w`` (grid samples), ``<psi_a, w psi_b>``."""
        K, n = self.order, self.grid.n
        pair = (self.E[:, :, None] * self.E[:, None, :]).reshape(n, K * K)
        M = self.grid.h**2 * (pair.T @ w @ pair)
        # (a1,b1),(a2,b2) -> (a1,a2),(b1,b2)
        M = M.reshape(K, K, K, K).transpose(0, 2, 1, 3).reshape(K * K, K * K)
        return 0.5 * (M + M.T)


@dataclass
class OperatorRep:
    """Schrodinger-type operator ``H0 + W - shift`` with pointwise ``W``.

    ``matrix`` is the (symmetric) Galerkin matrix in ``basis``, built on
    first use.
    """

    grid: GridSpec
    potential: np.ndarray | None = None
    shift: float = 0.0
    basis: HermiteBasis | None = None
    name: str = "H0"

    def __call__(self, u: np.ndarray) -> np.ndarray:
        out = self.grid.h0(u)
        if self.potential is not None:
            out = out + self.potential * u
        if self.shift:
            out = out - self.shift * u
        return out

    @property
    def action(self) -> Callable[[np.ndarray], np.ndarray]:
        return self.__call__

    @cached_property
    def matrix(self) -> np.ndarray | None:
        if self.basis is None:
            return None
        A = np.diag(self.basis.h0_diagonal() - self.shift)
        if self.potential is not None:
            A = A + self.basis.galerkin(self.potential)
        return A

    def shifted(self, s: float) -> "OperatorRep":
        return OperatorRep(self.grid, self.potential, self.shift + s, self.basis, f"{self.name}-{s:g}")

    def symmetry_defect(self, u: np.ndarray, v: np.ndarray) -> float:
        g = self.grid
        return abs(g.inner(self(u), v) - g.inner(u, self(v)))


def h0_operator(grid: GridSpec, basis: HermiteBasis | None = None) -> OperatorRep:
    return OperatorRep(grid, None, 0.0, basis, "H0")


def _orthonormalize(grid: GridSpec, block: np.ndarray) -> np.ndarray:
    n2 = block.shape[0]
    Q, _ = np.linalg.qr(block * grid.h)
    return Q[:, : block.shape[1]].reshape(n2, -1) / grid.h


def lowest_eigenpairs(A: OperatorRep, k: int, tol: float = 1e-8, max_iter: int = 8, extra: int = 2):
    """The ``k`` smallest eigenpairs of a symmetric operator, as ``(value, Field)``.

    The Galerkin matrix gives starting vectors; they are then refined on the
    grid by shifted block inverse iteration (conjugate gradients on the
    positive definite ``A - s``) with Rayleigh-Ritz, until every residual
    ``||A v - lambda v||_2`` is below ``tol``.
    """
    if k < 1 or k > 10:
        raise ValueError("k must lie in [1, 10]")
    from .krylov import Preconditioner

    grid = A.grid
    basis = A.basis or HermiteBasis(grid, 24)
    m = k + extra
    Ag = A if A.basis is not None else OperatorRep(grid, A.potential, A.shift, basis, A.name)
    w, V = linalg.eigh(Ag.matrix, subset_by_index=[0, m - 1])
    block = np.stack([basis.evaluate(V[:, j].reshape(basis.order, basis.order)).ravel() for j in range(m)], axis=1)
    nn = grid.n * grid.n

    def apply(B):
        return np.stack([A(B[:, j].reshape(grid.shape)).ravel() for j in range(B.shape[1])], axis=1)

    best = np.inf
    for it in range(max_iter + 1):
        block = _orthonormalize(grid, block)
        AB = apply(block)
        G = grid.h**2 * (block.T @ AB)
        theta, S = linalg.eigh(0.5 * (G + G.T))
        block = block @ S
        AB = AB @ S
        R = AB - block * theta
        res = grid.h * np.linalg.norm(R, axis=0)
        best = min(best, float(res[:k].max()))
        if res[:k].max() < tol:
            break
        if it == max_iter:
            raise ConvergenceError(f"eigenpairs did not converge; best residual {best:.3e}", best)
        gap = max(theta[m - 1] - theta[0], 1.0)
        s = theta[0] - 0.25 * gap
        shifted = A.shifted(s)
        P = Preconditioner(shifted, order=min(basis.order, 24))
        op = LinearOperator((nn, nn), matvec=lambda v: shifted(v.reshape(grid.shape)).ravel(), dtype=float)
        new = np.empty_like(block)
        for j in range(m):
            b = block[:, j]
            x, _ = cg(op, b, x0=b / max(theta[j] - s, 1e-3), rtol=1e-13, maxiter=2000, M=P.linear_operator())
            new[:, j] = x
        block = new
    out = []
    for j in range(k):
        v = block[:, j].reshape(grid.shape)
        i = np.argmax(np.abs(v))
        if v.flat[i] < 0:
            v = -v
        out.append((float(theta[j]), Field(grid, v.copy())))
    return out
