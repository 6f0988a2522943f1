"""Pipeline stages, run directories, manifests and report emission.

A run directory holds ``manifest.json`` (append-only list of stage
records), CSV tables and GPF1 snapshots. Stages share one ``Pipeline``
object so upstream results (balance point, expansion, ...) are computed
once per invocation.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import math
import os
import platform
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .contraction import ScalingStudy, make_context, scaling_study, solve_error_terms
from .discretization import Field, HermiteBasis, build_grid, h0_operator, lowest_eigenpairs, phi1_reference
from .evolve import (TRAJECTORY_COLUMNS, EvolutionConfig, bound_checks, evolve_run, gaussian_data,
                     law_checks, stationarity_check)
from .expansion import build_expansion, residual_slope
from .groundstate import GROUNDSTATE_CSV_COLUMNS, FlowConfig, minimize_vm, mu_curve, pump_threads
from .linearized import bifurcation_slope, build_pair
from .pumpbalance import PumpProfile, find_balanced_mass, k_scan, sign_changes
from .snapshot import read_field, write_field

log = logging.getLogger(__name__)

STAGES = ("linear-check", "groundstate", "balance", "spectrum", "expand", "solitary", "sweep", "evolve", "report")

# option name -> (type, default); shared by the CLI flags and the config file
OPTIONS = {
    "n": (int, 128),
    "L": (float, 8.0),
    "out": (str, "run"),
    "threads": (int, 0),
    "sigma": (str, "kind=disk,s0=1,R=1"),
    "alpha": (float, 1.0),
    "bracket": (str, "0.01,100"),
    "tol": (float, 1e-8),
    "scan": (int, 21),
    "masses": (str, "0.1,1,10"),
    "k": (int, 4),
    "eps": (float, 0.05),
    "fp_tol": (float, 1e-11),
    "max_iter": (int, 60),
    "eps_list": (str, "0.0125,0.025,0.05,0.1"),
    "init": (str, "gaussian"),
    "init_file": (str, ""),
    "mass": (float, 1.0),
    "T": (float, 1.0),
    "dt": (float, 1e-3),
    "snapshot_stride": (int, 0),
    "position": (str, "logistic"),
    "record_every": (int, 1),
    "snapshots": (bool, False),
}


class UsageError(Exception):
    """Bad flags, config keys or file references (exit status 1)."""


def parse_floats(text: str, name: str) -> list[float]:
    try:
        vals = [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise UsageError(f"{name}: empty list")
    return vals


def _coerce(name, value):
    typ, _ = OPTIONS[name]
    if typ is bool:
        if isinstance(value, bool):
            return value
        s = str(value).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{name}: expected a boolean, got {value!r}")
    try:
        return typ(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{name}: cannot parse {value!r} as {typ.__name__}") from exc


def load_config(path) -> tuple[dict, list[str]]:
    """Read an INI config: ``[run] stages = ...`` plus ``[options]`` keys named like the CLI flags."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}") from exc
    unknown_sections = set(cp.sections()) - {"run", "options"}
    if unknown_sections:
        raise UsageError(f"unknown config sections {sorted(unknown_sections)}")
    if not cp.has_section("run") or not cp.has_option("run", "stages"):
        raise UsageError("config needs [run] stages = ...")
    stages = [s.strip() for s in cp.get("run", "stages").split(",") if s.strip()]
    bad = [s for s in stages if s not in STAGES]
    if bad or not stages:
        raise UsageError(f"unknown stages {bad}; choose from {STAGES}")
    opts = {}
    for key, value in (cp.items("options") if cp.has_section("options") else []):
        name = key.replace("-", "_")
        if name not in OPTIONS:
            raise UsageError(f"unknown config option {key!r}")
        opts[name] = _coerce(name, value)
    for key, value in cp.items("run"):
        if key == "stages":
            continue
        name = key.replace("-", "_")
        if name not in OPTIONS:
            raise UsageError(f"unknown config option {key!r}")
        opts[name] = _coerce(name, value)
    return opts, stages


def resolve_options(overrides: dict) -> dict:
    opts = {k: d for k, (_, d) in OPTIONS.items()}
    for k, v in overrides.items():
        if v is not None:
            opts[k] = _coerce(k, v)
    return opts


def write_csv(path: Path, columns, rows):
    """CSV with ``repr`` floats so repeated runs are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data):
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


class RunDir:
    def __init__(self, path, opts: dict):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.path / "manifest.json"
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text())
        else:
            self.manifest = {"created": time.strftime("%Y-%m-%dT%H:%M:%S"), "versions": versions(), "runs": []}
        self.entry = {"started": time.strftime("%Y-%m-%dT%H:%M:%S"), "config": dict(opts), "stages": []}
        self.manifest["runs"].append(self.entry)

    def record(self, stage: str, scalars: dict, files: list[str], status: str = "ok"):
        self.entry["stages"].append({"stage": stage, "status": status, "scalars": scalars, "files": files})
        self.save()

    def save(self):
        write_json(self.manifest_path, self.manifest)

    def file(self, name: str) -> Path:
        return self.path / name


def versions() -> dict:
    return {"gppd": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


@dataclass
class Pipeline:
    opts: dict
    run: RunDir
    cache: dict = field(default_factory=dict)

    @property
    def grid(self):
        if "grid" not in self.cache:
            self.cache["grid"] = build_grid(self.opts["n"], self.opts["L"])
        return self.cache["grid"]

    @property
    def threads(self) -> int:
        """Requested workers, capped by GP_PUMP_THREADS when it is set."""
        n = self.opts["threads"] or pump_threads()
        if os.environ.get("GP_PUMP_THREADS"):
            n = min(n, pump_threads())
        return max(1, n)

    @property
    def sigma(self) -> PumpProfile:
        try:
            return PumpProfile.parse(self.opts["sigma"])
        except ValueError as exc:
            raise UsageError(f"sigma: {exc}") from exc

    def balance(self):
        if "balance" not in self.cache:
            self.stage_balance()
        return self.cache["balance"]

    def pair(self):
        if "pair" not in self.cache:
            bp = self.balance()
            self.cache["pair"] = build_pair(bp.Q0, bp.mu0)
        return self.cache["pair"]

    def expansion(self):
        if "expansion" not in self.cache:
            self.stage_expand()
        return self.cache["expansion"]

    def context(self):
        if "context" not in self.cache:
            self.cache["context"] = make_context(self.expansion())
        return self.cache["context"]

    def solitary(self):
        if "solitary" not in self.cache:
            self.stage_solitary()
        return self.cache["solitary"]

    # -- stages ---------------------------------------------------------

    def stage_linear_check(self):
        g = self.grid
        k = self.opts["k"]
        pairs = lowest_eigenpairs(h0_operator(g, HermiteBasis(g, 40)), k)
        phi = phi1_reference(g).values
        e0 = pairs[0][1].values
        dist = g.l2(e0 / g.l2(e0) - phi)
        rows = [(j, lam, 2.0 * (1 + int(math.floor((math.sqrt(8 * j + 1) - 1) / 2)))) for j, (lam, _) in enumerate(pairs)]
        write_csv(self.run.file("h0_spectrum.csv"), ("index", "eigenvalue", "exact"), rows)
        slope = bifurcation_slope([1e-3, 3e-3, 1e-2], g)
        write_csv(self.run.file("bifurcation.csv"),
                  ("M", "eta", "lplus_lambda_min", "ratio", "reflected_lambda_min", "reflected_ratio"),
                  [(r.M, r.eta, r.lplus_lambda_min, r.ratio, r.reflected_lambda_min, r.reflected_ratio) for r in slope])
        scalars = {"lambda_min": pairs[0][0], "lambda_min_rel_err": abs(pairs[0][0] - 2.0) / 2.0,
                   "phi1_distance": dist, "bifurcation_ratio_min_mass": slope[0].ratio}
        self.run.record("linear-check", scalars, ["h0_spectrum.csv", "bifurcation.csv"])
        return scalars

    def stage_groundstate(self):
        masses = sorted(parse_floats(self.opts["masses"], "masses"))
        if any(m <= 0 for m in masses):
            raise UsageError("masses must be positive")
        rows = mu_curve(masses, FlowConfig(), self.grid, self.threads)
        write_csv(self.run.file("groundstate.csv"), GROUNDSTATE_CSV_COLUMNS,
                  [tuple(r.state.csv_row()[c] for c in GROUNDSTATE_CSV_COLUMNS) for r in rows])
        files = ["groundstate.csv"]
        if self.opts["snapshots"]:
            for j, r in enumerate(rows):
                name = f"groundstate_{j:03d}.gpf"
                write_field(self.run.file(name), r.state.field)
                files.append(name)
        self.run.record("groundstate", {"count": len(rows), "max_residual": max(r.residual for r in rows)}, files)
        return rows

    def stage_balance(self):
        lo, hi = self._bracket()
        sigma, alpha = self.sigma, self.opts["alpha"]
        if not alpha > 0:
            raise UsageError("alpha must be positive")
        nscan = self.opts["scan"]
        files = []
        if nscan >= 2:
            scan = k_scan(sigma, alpha, np.geomspace(lo, hi, nscan), self.grid, None, self.threads)
            write_csv(self.run.file("kscan.csv"), ("M", "K"), scan)
            files.append("kscan.csv")
            self.cache["kscan"] = scan
        bp = find_balanced_mass(sigma, alpha, (lo, hi), self.opts["tol"], self.grid)
        self.cache["balance"] = bp
        write_field(self.run.file("Q0.gpf"), bp.Q0)
        write_json(self.run.file("balance.json"), bp.summary())
        files += ["Q0.gpf", "balance.json"]
        scalars = dict(bp.summary())
        if "kscan" in self.cache:
            scalars["kscan_sign_changes"] = sign_changes(self.cache["kscan"])
        self.run.record("balance", scalars, files)
        return bp

    def _bracket(self):
        b = parse_floats(self.opts["bracket"], "bracket")
        if len(b) != 2 or not 0 < b[0] < b[1]:
            raise UsageError(f"bracket must be lo,hi with 0 < lo < hi, got {self.opts['bracket']!r}")
        return b

    def stage_spectrum(self):
        pair = self.pair()
        k = self.opts["k"]
        if not 1 <= k <= 10:
            raise UsageError("k must lie in [1, 10]")
        rows = []
        for name, op in (("L-", pair.lminus), ("L+", pair.lplus)):
            for j, (lam, _) in enumerate(lowest_eigenpairs(op, k)):
                rows.append((name, j, lam))
        write_csv(self.run.file("spectrum.csv"), ("operator", "index", "eigenvalue"), rows)
        scalars = pair.diagnostics()
        self.run.record("spectrum", scalars, ["spectrum.csv"])
        return rows

    def stage_expand(self):
        bp = self.balance()
        es = build_expansion(self.pair(), bp.sigma, bp.alpha)
        self.cache["expansion"] = es
        files = []
        for name in ("Q1i", "Q2r", "Q3i", "g1", "phi2"):
            fname = f"{name}.gpf"
            write_field(self.run.file(fname), Field(es.grid, getattr(es, name)))
            files.append(fname)
        table, slope = residual_slope(es, parse_floats(self.opts["eps_list"], "eps_list"))
        write_csv(self.run.file("approx_residual.csv"), ("eps", "residual"), table + [("slope", slope)])
        summary = es.summary()
        summary["approx_residual_slope"] = slope
        write_json(self.run.file("expansion.json"), summary)
        files += ["approx_residual.csv", "expansion.json"]
        self.run.record("expand", summary, files)
        return es

    def stage_solitary(self):
        ctx = self.context()
        eps = self.opts["eps"]
        if not eps > 0:
            raise UsageError("eps must be positive")
        sw = solve_error_terms(ctx, eps, self.opts["fp_tol"], self.opts["max_iter"])
        self.cache["solitary"] = sw
        write_field(self.run.file("solitary.gpf"), sw.Q)
        summary = sw.summary()
        summary.update({"C1": ctx.consts.C1, "C2": ctx.consts.C2, "C3": ctx.consts.C3})
        write_json(self.run.file("solitary.json"), summary)
        self.run.record("solitary", summary, ["solitary.gpf", "solitary.json"])
        return sw

    def stage_sweep(self):
        ctx = self.context()
        st = scaling_study(ctx, parse_floats(self.opts["eps_list"], "eps_list"), self.threads)
        write_scaling_csv(self.run.file("scaling.csv"), st)
        scalars = {f"slope_{k}": v for k, v in st.slopes.items()}
        scalars["excluded"] = [e for e, _ in st.failures]
        self.run.record("sweep", scalars, ["scaling.csv"])
        return st

    def stage_evolve(self):
        o = self.opts
        g = self.grid
        init = o["init"]
        sigma = self.sigma
        eps = o["eps"]
        if init == "solitary":
            psi0 = self.solitary().Q
            eps = self.solitary().eps
        elif init == "groundstate":
            psi0 = minimize_vm(o["mass"], None, g).field
        elif init == "gaussian":
            psi0 = gaussian_data(g, o["mass"])
        elif init == "file":
            if not o["init_file"]:
                raise UsageError("init=file needs init_file")
            if not Path(o["init_file"]).is_file():
                raise UsageError(f"init file {o['init_file']} not found")
            psi0 = read_field(o["init_file"], g)
        else:
            raise UsageError(f"unknown init {init!r}")
        try:
            cfg = EvolutionConfig(o["dt"], o["T"], eps, sigma, o["alpha"], o["snapshot_stride"], o["position"])
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        traj = evolve_run(psi0, cfg, record_every=o["record_every"])
        write_csv(self.run.file("trajectory.csv"), TRAJECTORY_COLUMNS, traj.rows(cfg.sigma_sup, cfg.alpha))
        files = ["trajectory.csv"]
        for t, psi in traj.snapshots:
            name = f"snap_{int(round(t / cfg.dt)):07d}.gpf"
            write_field(self.run.file(name), Field(g, psi))
            files.append(name)
        report = {"init": init, "eps": eps, "dt": cfg.dt, "T": cfg.T}
        report.update(bound_checks(traj, cfg))
        if init == "solitary":
            # M and H are stationary up to splitting error, so rate comparisons carry no signal
            report["law_checks"] = "skipped for stationary initial data"
        elif traj.stride == 1 and len(traj.times) >= 5:
            report.update(law_checks(traj, cfg))
        if init == "solitary":
            report["stationarity"] = stationarity_check(self.solitary(), cfg)
        write_json(self.run.file("laws.json"), report)
        files.append("laws.json")
        self.run.record("evolve", report, files)
        return traj

    def stage_report(self):
        return emit_report(self.run.path)

    def execute(self, stages):
        handlers = {
            "linear-check": self.stage_linear_check,
            "groundstate": self.stage_groundstate,
            "balance": self.balance,
            "spectrum": self.stage_spectrum,
            "expand": self.expansion,
            "solitary": self.solitary,
            "sweep": self.stage_sweep,
            "evolve": self.stage_evolve,
            "report": self.stage_report,
        }
        out = {}
        for s in stages:
            log.info("stage %s", s)
            out[s] = handlers[s]()
        return out


def write_scaling_csv(path: Path, st: ScalingStudy):
    rows = [tuple(r) for r in st.rows]
    rows.append(("slope",) + tuple(st.slopes.get(c, math.nan) for c in ScalingStudy.COLUMNS[1:]))
    for e, msg in st.failures:
        rows.append(("excluded", e, msg, "", "", ""))
    write_csv(path, ScalingStudy.COLUMNS, rows)


REPORT_TABLES = {
    "mu_curve": "groundstate.csv",
    "kscan": "kscan.csv",
    "spectrum": "spectrum.csv",
    "scaling": "scaling.csv",
    "trajectory": "trajectory.csv",
}
REPORT_JSON = {"balance": "balance.json", "expansion": "expansion.json", "solitary": "solitary.json",
               "laws": "laws.json"}


def emit_report(run_dir) -> dict:
    """Collect the run's tables into ``report/`` with an index of what is present.

    Missing artifacts are listed and the report is marked partial.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise UsageError(f"run directory {run_dir} does not exist")
    out = run_dir / "report"
    out.mkdir(exist_ok=True)
    index = {"tables": {}, "scalars": {}, "missing": []}
    for key, name in REPORT_TABLES.items():
        src = run_dir / name
        if src.is_file():
            (out / name).write_bytes(src.read_bytes())
            with open(src) as fh:
                header = next(csv.reader(fh))
            index["tables"][key] = {"file": name, "columns": header}
        else:
            index["missing"].append(name)
    for key, name in REPORT_JSON.items():
        src = run_dir / name
        if src.is_file():
            index["scalars"][key] = json.loads(src.read_text())
        else:
            index["missing"].append(name)
    if (run_dir / "kscan.csv").is_file():
        with open(run_dir / "kscan.csv") as fh:
            rows = list(csv.reader(fh))[1:]
        index["kscan_sign_changes"] = sign_changes([(float(m), float(k)) for m, k in rows])
    manifest = run_dir / "manifest.json"
    if not manifest.is_file():
        index["missing"].append("manifest.json")
    index["partial"] = bool(index["missing"])
    write_json(out / "report.json", index)
    if index["partial"]:
        log.warning("partial report: missing %s", ", ".join(index["missing"]))
    return index


def run_experiment(opts: dict, stages) -> dict:
    run = RunDir(opts["out"], opts)
    pipe = Pipeline(opts, run)
    return pipe.execute(stages)
