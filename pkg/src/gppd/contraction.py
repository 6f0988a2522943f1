"""Fixed-point correction of the perturbative solitary wave.

Writing ``Q = Q^a + psi_r + i psi_i`` and ``mu = mu^a + kappa``, the split
stationary residual ``(R_r, R_i)`` is decomposed as a designated linear part

    l_r = L+ psi_r - kappa Q0
    l_i = L- psi_i - eps (kappa Q1 + B psi_r)

plus a remainder ``N = R - l`` that is evaluated at the previous iterate.
One application of the map solves ``l = -N`` for the new triple, with kappa
chosen so the L- equation is solvable (its right-hand side orthogonal to
Q0). The remainder is computed as an exact residual, never expanded by hand.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .discretization import Field, GridSpec, sigma_norm
from .errors import ConvergenceError, RegimeError
from .expansion import ExpansionSet, assemble_approx, residual_spe, split_residual
from .groundstate import pump_threads
from .linearized import solve_lminus_perp, solve_lplus

log = logging.getLogger(__name__)

EPS_MAX = 0.15
ABS_FLOOR = 1e-14


@dataclass
class ErrorTriple:
    psi_r: np.ndarray
    psi_i: np.ndarray
    kappa: float

    @classmethod
    def zero(cls, grid: GridSpec) -> "ErrorTriple":
        return cls(np.zeros(grid.shape), np.zeros(grid.shape), 0.0)

    def __sub__(self, other: "ErrorTriple") -> "ErrorTriple":
        return ErrorTriple(self.psi_r - other.psi_r, self.psi_i - other.psi_i, self.kappa - other.kappa)

    def norms(self, grid: GridSpec) -> tuple[float, float, float]:
        """``(|kappa|, |psi_r|_Sigma, |psi_i|_Sigma)``."""
        return abs(self.kappa), sigma_norm(grid, self.psi_r), sigma_norm(grid, self.psi_i)


@dataclass(frozen=True)
class BallConstants:
    C1: float
    C2: float
    C3: float

    def weighted(self, norms, eps: float) -> float:
        k, r, i = norms
        return max(k / (self.C1 * eps**4), r / (self.C2 * eps**4), i / (self.C3 * eps**5))


@dataclass
class ContractionContext:
    es: ExpansionSet
    B: np.ndarray
    consts: BallConstants
    g1_response: np.ndarray = field(repr=False)

    @property
    def grid(self) -> GridSpec:
        return self.es.grid

    @property
    def pair(self):
        return self.es.pair


def ball_constants(es: ExpansionSet) -> tuple[BallConstants, np.ndarray]:
    """C1, C2, C3 of the contraction ball, plus ``L+^{-1} g1``.

    ``L-^{-1}`` is applied on the complement of Q0 (right-hand sides are
    projected first), which is the only place it is defined.
    """
    g, pair = es.grid, es.pair
    B = es.coupling()
    P = pair.deflate()
    g1r = solve_lplus(pair, es.g1)
    C1 = 2.0 * g.l2(es.g1) / g.l2(es.Q0)
    C2 = 2.0 * (C1 * sigma_norm(g, es.Qprime) + sigma_norm(g, g1r))
    a = solve_lminus_perp(pair, P(es.Q1i + B * es.Qprime))
    b = solve_lminus_perp(pair, P(B * g1r))
    C3 = 2.0 * C1 * sigma_norm(g, a) + 2.0 * sigma_norm(g, b)
    return BallConstants(C1, C2, C3), g1r


def make_context(es: ExpansionSet) -> ContractionContext:
    consts, g1r = ball_constants(es)
    log.info("ball constants C1=%.6g C2=%.6g C3=%.6g", consts.C1, consts.C2, consts.C3)
    return ContractionContext(es, es.coupling(), consts, g1r)


def _fields(ctx: ContractionContext, t: ErrorTriple, eps: float):
    es = ctx.es
    Qr = es.Q0 + eps**2 * es.Q2r + t.psi_r
    Qi = eps * es.Q1i + eps**3 * es.Q3i + t.psi_i
    mu = es.mu0 + eps**2 * es.mu2 + t.kappa
    return Qr, Qi, mu


def remainders(ctx: ContractionContext, t: ErrorTriple, eps: float):
    """``N = R(Q^a + psi, mu^a + kappa) - l(psi, kappa)`` split into real/imaginary parts."""
    es, pair = ctx.es, ctx.pair
    Qr, Qi, mu = _fields(ctx, t, eps)
    Rr, Ri = split_residual(es.grid, Qr, Qi, mu, eps, es.sigma, es.alpha)
    lr = pair.lplus(t.psi_r) - t.kappa * es.Q0
    li = pair.lminus(t.psi_i) - eps * (t.kappa * es.Q1i + ctx.B * t.psi_r)
    return Rr - lr, Ri - li


def phi_map(prev: ErrorTriple, ctx: ContractionContext, eps: float, ortho_tol: float = 1e-8,
            guard: float = 10.0) -> ErrorTriple:
    """One application of the correction map."""
    g, es, pair = ctx.grid, ctx.es, ctx.pair
    if eps == 0.0:
        return ErrorTriple.zero(g)
    if guard is not None:
        w = ctx.consts.weighted(prev.norms(g), eps)
        if w > guard:
            raise RegimeError(f"contraction diverged: iterate left the ball (weighted norm {w:.3e} > {guard:g})",
                              reason="contraction diverged")
    Nr, Ni = remainders(ctx, prev, eps)
    w = -solve_lplus(pair, Nr)
    q = es.Q0
    kappa = (g.inner(Ni, q) - eps * g.inner(ctx.B * w, q)) / (eps * es.denominator)
    psi_r = kappa * es.Qprime + w
    rhs = eps * (kappa * es.Q1i + ctx.B * psi_r) - Ni
    psi_i = solve_lminus_perp(pair, rhs, ortho_tol)
    return ErrorTriple(psi_r, psi_i, float(kappa))


@dataclass
class SolitaryWave:
    Q: Field
    mu: float
    eps: float
    residual: float
    iterations: int
    triple: ErrorTriple = field(repr=False)
    contraction_ratio: float = float("nan")
    split_residuals: tuple[float, float] = (float("nan"), float("nan"))
    history: list = field(default_factory=list, repr=False)
    labels: tuple[str, ...] = ()

    def summary(self, grid: GridSpec | None = None) -> dict:
        g = grid or self.Q.grid
        k, r, i = self.triple.norms(g)
        return {
            "eps": self.eps,
            "mu": self.mu,
            "kappa": self.triple.kappa,
            "psi_r_sigma": r,
            "psi_i_sigma": i,
            "residual": self.residual,
            "residual_real": self.split_residuals[0],
            "residual_imag": self.split_residuals[1],
            "iterations": self.iterations,
            "contraction_ratio": self.contraction_ratio,
            "labels": ",".join(self.labels),
        }


def solve_error_terms(ctx: ContractionContext, eps: float, fp_tol: float = 1e-11, max_iter: int = 60,
                      eps_max: float = EPS_MAX, residual_tol: float = 1e-9) -> SolitaryWave:
    """Iterate the correction map to its fixed point and assemble ``(Q_eps, mu_eps)``.

    Stops when successive triples differ by less than ``fp_tol`` in the
    weighted ball norm, or by less than an absolute round-off floor
    (``ABS_FLOOR`` times the size of Q0), or when the differences stop
    decreasing after reaching 1e3 times that floor. Three consecutive growing
    differences count as divergence.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    g, es = ctx.grid, ctx.es
    labels = ("extrapolated",) if eps > eps_max else ()
    floor = ABS_FLOOR * sigma_norm(g, es.Q0)
    t = ErrorTriple.zero(g)
    history = []
    ratio = float("nan")
    growth = 0
    it = 0
    for it in range(1, max_iter + 1):
        new = phi_map(t, ctx, eps)
        d = (new - t).norms(g)
        dw = ctx.consts.weighted(d, eps)
        dabs = max(d)
        history.append((dw, dabs))
        if it == 2 and history[0][0] > 0:
            ratio = dw / history[0][0]
        t = new
        if dw < fp_tol or dabs < floor:
            break
        if len(history) > 1:
            prev = history[-2][1]
            growth = growth + 1 if dabs > prev else 0
            if growth >= 3:
                raise RegimeError(f"contraction diverged at eps={eps:g}: differences {[h[1] for h in history[-4:]]}",
                                  reason="contraction diverged")
            if dabs < 1e3 * floor and dabs > 0.5 * prev:
                break
    else:
        raise ConvergenceError(f"fixed point not reached in {max_iter} iterations at eps={eps:g}", history[-1])
    Qr, Qi, mu = _fields(ctx, t, eps)
    Q = Field(g, Qr + 1j * Qi)
    res = residual_spe(Q, mu, eps, es.sigma, es.alpha)
    Rr, Ri = split_residual(g, Qr, Qi, mu, eps, es.sigma, es.alpha)
    nq = g.l2(Q.values)
    split = (g.l2(Rr) / nq, g.l2(Ri) / nq)
    if res > residual_tol:
        raise ConvergenceError(f"fixed point residual {res:.3e} above {residual_tol:.1e} at eps={eps:g}", res)
    if not mu > 2.0:
        labels = labels + ("mu-below-trap",)
    return SolitaryWave(Q, float(mu), float(eps), res, it, t, ratio, split, history, labels)


def contraction_ratio(ctx: ContractionContext, eps: float) -> float:
    """``|Phi(Phi(0)) - Phi(0)| / |Phi(0)|`` in the weighted ball norm."""
    g = ctx.grid
    z = ErrorTriple.zero(g)
    a = phi_map(z, ctx, eps)
    b = phi_map(a, ctx, eps)
    w = ctx.consts.weighted
    return w((b - a).norms(g), eps) / w(a.norms(g), eps)


@dataclass
class ScalingStudy:
    rows: list
    slopes: dict
    failures: list

    COLUMNS = ("eps", "kappa_abs", "psi_r_sigma", "psi_i_sigma", "residual", "approx_residual")


def _fit(x, y):
    x, y = np.log(np.asarray(x)), np.log(np.asarray(y))
    return float(np.polyfit(x, y, 1)[0])


def scaling_study(ctx: ContractionContext, eps_list, threads: int | None = None) -> ScalingStudy:
    """Fixed points along ``eps_list`` and the log-log slopes of each column."""
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 4:
        raise ValueError("scaling study needs at least 4 eps values")
    threads = threads or pump_threads()
    g, es = ctx.grid, ctx.es

    def one(e):
        try:
            sw = solve_error_terms(ctx, e)
        except (RegimeError, ConvergenceError) as exc:
            return e, None, str(exc)
        Qa, mua = assemble_approx(es, e)
        k, r, i = sw.triple.norms(g)
        return e, (e, k, r, i, sw.residual, residual_spe(Qa, mua, e, es.sigma, es.alpha)), None

    if threads == 1:
        out = [one(e) for e in eps_list]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(one, eps_list))
    rows = [r for _, r, _ in out if r is not None]
    failures = [(e, msg) for e, r, msg in out if r is None]
    slopes = {}
    if len(rows) >= 2:
        cols = list(zip(*rows))
        for j, name in enumerate(ScalingStudy.COLUMNS[1:], start=1):
            if all(v > 0 for v in cols[j]):
                slopes[name] = _fit(cols[0], cols[j])
            else:
                slopes[name] = math.nan
    return ScalingStudy(rows, slopes, failures)
