"""Pump/damp balance: the functional K and the mass at which it vanishes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .discretization import Field, GridSpec, build_grid
from .errors import RegimeError
from .groundstate import DEFAULT_GRID, FlowConfig, GroundState, minimize_vm

PUMP_KINDS = ("gaussian", "disk", "constant")


@dataclass(frozen=True)
class PumpProfile:
    """Nonnegative pump sigma(x).

    ``disk`` is the indicator of ``|x| <= radius`` (a Heaviside profile),
    ``gaussian`` is ``amplitude * exp(-|x - center|^2 / width^2)``.
    """

    kind: str
    amplitude: float = 1.0
    width: float = 1.0
    radius: float = 1.0
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in PUMP_KINDS:
            raise ValueError(f"unknown pump kind {self.kind!r}; expected one of {PUMP_KINDS}")
        if not self.amplitude > 0:
            raise ValueError("pump amplitude must be positive")
        if self.kind == "gaussian" and not self.width > 0:
            raise ValueError("gaussian width must be positive")
        if self.kind == "disk" and not self.radius > 0:
            raise ValueError("disk radius must be positive")

    @classmethod
    def parse(cls, text: str) -> "PumpProfile":
        """Parse ``kind=disk,s0=1,R=1`` style specifications."""
        fields = {}
        for part in text.replace(";", ",").split(","):
            part = part.strip()
            if not part:
                continue
            if "=" not in part:
                raise ValueError(f"malformed pump entry {part!r}")
            k, v = (s.strip() for s in part.split("=", 1))
            fields[k.lower()] = v
        kind = fields.pop("kind", None)
        if kind is None:
            raise ValueError("pump specification needs kind=...")
        names = {"s0": "amplitude", "amplitude": "amplitude", "w": "width", "width": "width",
                 "r": "radius", "radius": "radius"}
        kwargs = {}
        for k, v in fields.items():
            if k in ("c", "center"):
                cx, cy = (float(t) for t in v.split(":"))
                kwargs["center"] = (cx, cy)
            elif k in names:
                kwargs[names[k]] = float(v)
            else:
                raise ValueError(f"unknown pump parameter {k!r}")
        return cls(kind, **kwargs)

    def describe(self) -> str:
        if self.kind == "disk":
            return f"kind=disk,s0={self.amplitude!r},R={self.radius!r}"
        if self.kind == "gaussian":
            cx, cy = self.center
            return f"kind=gaussian,s0={self.amplitude!r},w={self.width!r},c={cx!r}:{cy!r}"
        return f"kind=constant,s0={self.amplitude!r}"

    def sample(self, grid: GridSpec) -> np.ndarray:
        if self.kind == "constant":
            return np.full(grid.shape, self.amplitude)
        if self.kind == "disk":
            return np.where(grid.r2 <= self.radius**2, self.amplitude, 0.0)
        X, Y = grid.mesh
        cx, cy = self.center
        return self.amplitude * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / self.width**2)

    def field(self, grid: GridSpec) -> Field:
        return Field(grid, self.sample(grid))

    def sup(self) -> float:
        return self.amplitude


def sigma_array(sigma, grid):
    return sigma.sample(grid) if isinstance(sigma, PumpProfile) else np.asarray(sigma, dtype=float)


def kfunctional(grid: GridSpec, u: np.ndarray, sigma, alpha: float) -> float:
    """``int (sigma - alpha |u|^2) |u|^2``."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    s = sigma_array(sigma, grid)
    rho = np.abs(u) ** 2
    return grid.integrate((s - alpha * rho) * rho)


def k_scale(grid: GridSpec, u: np.ndarray, sigma, alpha: float) -> float:
    """``int sigma |u|^2 + alpha |u|_4^4``, the natural size of K."""
    s = sigma_array(sigma, grid)
    rho = np.abs(u) ** 2
    return grid.integrate(s * rho) + alpha * grid.integrate(rho**2)


@dataclass
class BalancePoint:
    M_star: float
    Q0: Field
    mu0: float
    alpha: float
    k_residual: float
    k_scale: float
    sigma: PumpProfile
    state: GroundState
    probes: list

    @property
    def grid(self) -> GridSpec:
        return self.Q0.grid

    def summary(self) -> dict:
        return {
            "M_star": self.M_star,
            "mu0": self.mu0,
            "alpha": self.alpha,
            "k_residual": self.k_residual,
            "k_scale": self.k_scale,
            "sigma": self.sigma.describe(),
            "residual": self.state.residual,
            "root_probes": len(self.probes),
        }


def find_balanced_mass(sigma: PumpProfile, alpha: float, bracket=(0.01, 100.0), tol: float = 1e-8,
                       grid: GridSpec | None = None, cfg: FlowConfig | None = None,
                       max_steps: int = 60) -> BalancePoint:
    """Root of ``M -> K(v_M)`` inside ``bracket``.

    Brent's method (bisection-safeguarded) on the sign change; K is smooth
    in M, so the root is driven to round-off rather than stopping at
    ``|K| < tol * (int sigma v^2 + alpha |v|_4^4)``. The small residual keeps
    the solvability defect of the first-order correction negligible.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    grid = grid or build_grid(*DEFAULT_GRID)
    cfg = cfg or FlowConfig()
    lo, hi = (float(b) for b in bracket)
    if not 0 < lo < hi:
        raise ValueError(f"bad bracket {bracket}")
    probes = []
    states = {}

    def probe(M):
        gs = minimize_vm(M, cfg, grid)
        k = kfunctional(grid, gs.values, sigma, alpha)
        states[M] = (gs, k, k_scale(grid, gs.values, sigma, alpha))
        probes.append((M, k))
        return k

    k_lo = probe(lo)
    if not k_lo > 0:
        raise RegimeError(f"K(v_M) = {k_lo:.3e} <= 0 at lower endpoint M_lo = {lo:g} (alpha too large for bracket)",
                          reason="bracket sign failure at M_lo")
    k_hi = probe(hi)
    if not k_hi < 0:
        raise RegimeError(f"K(v_M) = {k_hi:.3e} >= 0 at upper endpoint M_hi = {hi:g} (alpha too small for bracket)",
                          reason="bracket sign failure at M_hi")
    try:
        optimize.brentq(probe, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=max_steps)
    except RuntimeError:
        pass
    M, (gs, k, scale) = min(states.items(), key=lambda kv: abs(kv[1][1]))
    if abs(k) >= tol * scale:
        raise RegimeError(f"balance search stalled at M = {M:.12g} with |K| = {abs(k):.3e}",
                          reason="balance not converged")
    return BalancePoint(M, gs.field, gs.chem_potential, alpha, abs(k), scale, sigma, gs, probes[2:])


def alpha_for_mass(sigma: PumpProfile, M: float, grid: GridSpec | None = None,
                   cfg: FlowConfig | None = None, state: GroundState | None = None) -> float:
    """Damping that makes ``K(v_M) = 0``: ``int sigma v^2 / int v^4``."""
    grid = grid or (state.grid if state is not None else build_grid(*DEFAULT_GRID))
    gs = state or minimize_vm(M, cfg, grid)
    rho = gs.values**2
    quartic = grid.integrate(rho**2)
    if quartic <= 0.0:
        raise ValueError("ground state has vanishing L^4 norm")
    return grid.integrate(sigma_array(sigma, grid) * rho) / quartic


def k_scan(sigma: PumpProfile, alpha: float, masses, grid: GridSpec | None = None,
           cfg: FlowConfig | None = None, threads: int | None = None):
    """Rows ``(M, K(v_M))`` along a mass list."""
    from .groundstate import mu_curve

    rows = mu_curve(masses, cfg, grid, threads)
    return [(r.M, kfunctional(r.state.grid, r.state.values, sigma, alpha)) for r in rows]


def sign_changes(scan) -> int:
    s = [math.copysign(1.0, k) for _, k in scan if k != 0.0]
    return sum(1 for a, b in zip(s, s[1:]) if a != b)
