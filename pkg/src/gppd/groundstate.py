"""Mass-constrained minimizers of the Hamiltonian and the energy functionals.

The minimizer ``v_M`` of ``H(u) = 1/2(|grad u|^2 + |x u|^2) + 1/4 |u|_4^4`` on
the sphere ``|u|_2^2 = M`` is computed in two stages:

1. a normalized gradient flow in the Hermite basis, where the linear part
   is inverted exactly on the diagonal;
2. a Newton polish on the grid for the pair (u, mu) of the stationary
   equation ``H0 u + u^3 = mu u`` with the mass constraint, so that the
   grid residual reaches round-off level.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .discretization import Field, GridSpec, HermiteBasis, OperatorRep, build_grid, norms
from .errors import ConvergenceError, GridError
from .krylov import Preconditioner, solve_bordered

DEFAULT_GRID = (128, 8.0)
TF_SWITCH_MASS = 50.0


@dataclass(frozen=True)
class FlowConfig:
    tau: float = 0.01
    max_iters: int = 200_000
    energy_tol: float = 1e-12
    scheme: str = "semi-implicit"
    residual_tol: float = 1e-11
    newton_steps: int = 12
    order: int = 40
    init: str = "auto"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not (self.energy_tol > 0 and self.residual_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.scheme != "semi-implicit":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.init not in ("auto", "gaussian", "thomas-fermi"):
            raise ValueError(f"unknown initialization {self.init!r}")


class Energies(NamedTuple):
    H: float
    H0: float
    M: float
    S_mu: float


def energy_functionals(u, mu: float) -> Energies:
    """Mass, quadratic energy, Hamiltonian and action ``-mu/2 M + H``."""
    nrm = norms(u)
    h0 = 0.5 * (nrm.gradsq + nrm.xmomsq)
    H = h0 + 0.25 * nrm.l4fourth
    return Energies(H, h0, nrm.l2sq, -0.5 * mu * nrm.l2sq + H)


def hamiltonian_gradient(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """L^2 gradient of H: ``H0 u + |u|^2 u``."""
    return grid.h0(u) + np.abs(u) ** 2 * u


def chemical_potential(grid: GridSpec, u: np.ndarray) -> float:
    nrm = norms((grid, u))
    return (nrm.gradsq + nrm.xmomsq + nrm.l4fourth) / nrm.l2sq


def residual_sp0(grid: GridSpec, u: np.ndarray, mu: float) -> float:
    """``||H0 u + u^3 - mu u||_2 / ||u||_2``."""
    nu = grid.l2(u)
    if nu == 0.0:
        raise GridError("residual of the zero field is undefined")
    return grid.l2(grid.h0(u) + np.abs(u) ** 2 * u - mu * u) / nu


@dataclass
class GroundState:
    field: Field
    mass: float
    energy: float
    chem_potential: float
    residual: float
    iterations: int
    newton_steps: int = 0
    energy_history: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    flags: tuple[str, ...] = ()

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def l4fourth(self) -> float:
        return norms(self.field).l4fourth

    @property
    def min_value(self) -> float:
        return float(self.values.min())

    @property
    def symmetry_defect(self) -> float:
        """Largest change of v under the eight symmetries of the square grid."""
        v = self.values
        r = np.roll(v[::-1, :], 1, axis=0)  # x -> -x on the periodic layout
        c = np.roll(v[:, ::-1], 1, axis=1)
        images = [r, c, v.T, r.T, c.T, np.roll(np.roll(v[::-1, ::-1], 1, 0), 1, 1)]
        return float(max(np.abs(w - v).max() for w in images))

    @property
    def monotone_defect(self) -> float:
        """Largest increase of v walking outward from the centre along either axis."""
        v = self.values
        c = self.grid.n // 2
        worst = 0.0
        for line in (v[c:, c], v[c::-1, c], v[c, c:], v[c, c::-1]):
            worst = max(worst, float(np.max(np.diff(line), initial=0.0)))
        return worst

    def csv_row(self) -> dict:
        return {
            "M": self.mass,
            "energy": self.energy,
            "chem_potential": self.chem_potential,
            "l4fourth": self.l4fourth,
            "residual": self.residual,
            "iterations": self.iterations,
        }


GROUNDSTATE_CSV_COLUMNS = ("M", "energy", "chem_potential", "l4fourth", "residual", "iterations")


def thomas_fermi_profile(grid: GridSpec, M: float) -> np.ndarray:
    """sqrt((nu - |x|^2)_+) with ``M = pi nu^2 / 2``."""
    nu = math.sqrt(2.0 * M / math.pi)
    return np.sqrt(np.clip(nu - grid.r2, 0.0, None))


def _initial(grid: GridSpec, M: float, cfg: FlowConfig) -> np.ndarray:
    kind = cfg.init
    if kind == "auto":
        kind = "thomas-fermi" if M > TF_SWITCH_MASS else "gaussian"
    if kind == "gaussian":
        return math.sqrt(M) * np.exp(-0.5 * grid.r2) / math.sqrt(math.pi)
    return thomas_fermi_profile(grid, M)


def _hermite_flow(basis: HermiteBasis, u0: np.ndarray, M: float, cfg: FlowConfig):
    grid = basis.grid
    lam = basis.eigenvalues
    C = basis.project(u0)
    C *= math.sqrt(M / np.sum(C * C))

    def energy(C):
        u = basis.evaluate(C)
        return 0.5 * float(np.sum(lam * C * C)) + 0.25 * grid.integrate(u**4), u

    H, u = energy(C)
    history = [H]
    tau = cfg.tau
    it = 0
    for it in range(1, cfg.max_iters + 1):
        cubic = basis.project(u**3)
        mu = (float(np.sum(lam * C * C)) + float(np.sum(C * cubic))) / M
        while True:
            Cn = (C + tau * (mu * C - cubic)) / (1.0 + tau * lam)
            Cn *= math.sqrt(M / np.sum(Cn * Cn))
            Hn, un = energy(Cn)
            # accept only energy-nonincreasing steps
            if Hn <= H + 4e-16 * max(1.0, abs(H)) or tau < 1e-8:
                break
            tau *= 0.5
        gap = abs(Hn - H)
        C, u, H = Cn, un, Hn
        history.append(H)
        if gap < cfg.energy_tol * max(1.0, abs(H)):
            break
    else:
        raise ConvergenceError(f"gradient flow did not converge in {cfg.max_iters} steps; last gap {gap:.3e}", gap)
    return u, it, np.array(history)


def _newton_polish(grid: GridSpec, u: np.ndarray, M: float, cfg: FlowConfig):
    u = u * math.sqrt(M / grid.l2sq(u))
    mu = chemical_potential(grid, u)
    res = residual_sp0(grid, u, mu)
    steps = 0
    P = None
    # iterate to the round-off floor, not just to residual_tol: downstream
    # perturbation theory sees this residual at order eps^0
    while steps < cfg.newton_steps and res > 1e-15:
        F = grid.h0(u) + u**3 - mu * u
        Lp = OperatorRep(grid, 3.0 * u**2, mu, None, "L+")
        # the first step's preconditioner stays good: later steps move u by tiny amounts
        P = P or Preconditioner(Lp)
        tol = max(min(1e-3 * res, 1e-6), 1e-14)
        # bordered step: L+ du - dmu u = -F, 2 (u, du) = M - |u|^2
        try:
            du, _ = solve_bordered(Lp, u, -F, 0.5 * (M - grid.l2sq(u)), rtol=tol, precond=P)
        except ConvergenceError:
            if res <= cfg.residual_tol:
                break
            raise
        un = u + du
        mun = chemical_potential(grid, un)
        new = residual_sp0(grid, un, mun)
        steps += 1
        if new < res:
            u, mu = un, mun
        if new > 0.5 * res and res <= cfg.residual_tol:
            res = min(res, new)
            break
        res = min(res, new)
    return u, mu, res, steps


def minimize_vm(M: float, cfg: FlowConfig | None = None, grid: GridSpec | None = None,
                basis: HermiteBasis | None = None) -> GroundState:
    """Nonnegative radial minimizer of H at mass ``M``."""
    cfg = cfg or FlowConfig()
    if not M > 0:
        raise ValueError(f"mass must be positive, got {M}")
    grid = grid or build_grid(*DEFAULT_GRID)
    basis = basis or HermiteBasis(grid, cfg.order)
    flags = ("tiny-mass",) if M < 1e-8 else ()
    u, iters, history = _hermite_flow(basis, _initial(grid, M, cfg), M, cfg)
    u, mu, res, steps = _newton_polish(grid, u, M, cfg)
    if u.min() < -1e-10:
        raise ConvergenceError(f"negative density excursion {u.min():.3e} (flow defect)", float(u.min()))
    if res > cfg.residual_tol:
        raise ConvergenceError(f"ground state residual {res:.3e} above {cfg.residual_tol:.1e}", res)
    energy = energy_functionals((grid, u), mu).H
    return GroundState(Field(grid, u), M, energy, mu, res, iters, steps, history, flags)


def pump_threads(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("GP_PUMP_THREADS", default)))
    except ValueError:
        return default


@dataclass
class CurveRow:
    M: float
    energy: float
    chem_potential: float
    l4fourth: float
    residual: float
    iterations: int
    state: GroundState = field(repr=False)


def mu_curve(masses, cfg: FlowConfig | None = None, grid: GridSpec | None = None,
             threads: int | None = None) -> list[CurveRow]:
    """Ground-state summaries along a sorted list of masses."""
    masses = [float(m) for m in masses]
    if any(m <= 0 for m in masses) or masses != sorted(masses):
        raise ValueError("masses must be positive and sorted")
    grid = grid or build_grid(*DEFAULT_GRID)
    cfg = cfg or FlowConfig()
    basis = HermiteBasis(grid, cfg.order)
    threads = threads or pump_threads()

    def one(M):
        gs = minimize_vm(M, cfg, grid, basis)
        return CurveRow(M, gs.energy, gs.chem_potential, gs.l4fourth, gs.residual, gs.iterations, gs)

    if threads == 1:
        return [one(M) for M in masses]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, masses))


def continuity_gap(rows: list[CurveRow]) -> float:
    """Largest jump of the constrained energy between neighbouring masses."""
    e = [r.energy for r in rows]
    return float(max((abs(b - a) for a, b in zip(e, e[1:])), default=0.0))
