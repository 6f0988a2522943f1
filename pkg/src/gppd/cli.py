"""Command-line entry point.

Exit status: 0 on success, 1 for usage errors (bad flags, config keys,
missing files), 2 when a numerical regime check or solver fails. Failures
print one JSON line to stderr with a machine-readable ``reason``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConvergenceError, GPPDError, GridError, IntegrationError, RegimeError
from .runner import OPTIONS, STAGES, UsageError, emit_report, load_config, resolve_options, run_experiment

HELP = {
    "n": "grid points per axis",
    "L": "half-width of the square domain",
    "out": "run directory (created if missing; manifest is appended)",
    "threads": "worker threads for mass sweeps and eps sweeps (0: GP_PUMP_THREADS or 1)",
    "sigma": "pump profile, e.g. kind=disk,s0=1,R=1 or kind=gaussian,s0=1,w=1,c=0:0",
    "alpha": "nonlinear damping strength",
    "bracket": "mass bracket lo,hi for the balance search",
    "tol": "balance tolerance relative to int sigma v^2 + alpha |v|_4^4",
    "scan": "number of masses in the K(v_M) scan (0 disables it)",
    "masses": "comma-separated masses for the ground-state curve",
    "k": "number of eigenvalues to report",
    "eps": "pump/damping scale",
    "fp_tol": "fixed-point tolerance in the weighted ball norm",
    "max_iter": "fixed-point iteration cap",
    "eps_list": "comma-separated eps values for sweeps",
    "init": "initial data for evolve: gaussian, groundstate, solitary or file",
    "init_file": "GPF1 snapshot used when init=file",
    "mass": "mass of gaussian or ground-state initial data",
    "T": "final time",
    "dt": "time step",
    "snapshot_stride": "write a snapshot every this many steps (0: none)",
    "position": "position substep: logistic (closed form) or rk4",
    "record_every": "record diagnostics every this many steps",
    "snapshots": "write a snapshot per ground state",
}

COMMAND_OPTIONS = {
    "linear-check": ("n", "L", "out", "k"),
    "groundstate": ("n", "L", "out", "threads", "masses", "snapshots"),
    "balance": ("n", "L", "out", "threads", "sigma", "alpha", "bracket", "tol", "scan"),
    "spectrum": ("n", "L", "out", "threads", "sigma", "alpha", "bracket", "tol", "scan", "k"),
    "expand": ("n", "L", "out", "threads", "sigma", "alpha", "bracket", "tol", "scan", "eps_list"),
    "solitary": ("n", "L", "out", "threads", "sigma", "alpha", "bracket", "tol", "scan", "eps", "fp_tol",
                 "max_iter"),
    "sweep": ("n", "L", "out", "threads", "sigma", "alpha", "bracket", "tol", "scan", "eps_list"),
    "evolve": ("n", "L", "out", "threads", "sigma", "alpha", "bracket", "tol", "scan", "eps", "fp_tol",
               "max_iter", "init", "init_file", "mass", "T", "dt", "snapshot_stride", "position",
               "record_every"),
}

REASONS = {RegimeError: "regime", ConvergenceError: "not converged", IntegrationError: "integration failed"}


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_option(p, name):
    typ, default = OPTIONS[name]
    flag = "--" + name.replace("_", "-")
    if typ is bool:
        p.add_argument(flag, dest=name, action="store_true", default=None, help=HELP[name])
    else:
        p.add_argument(flag, dest=name, type=typ, default=None, metavar=name.upper(),
                       help=f"{HELP[name]} (default {default})")


def build_parser() -> Parser:
    p = Parser(prog="gppd", description="Pumped, damped Gross-Pitaevskii toolkit on a square FFT grid.")
    p.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for cmd, names in COMMAND_OPTIONS.items():
        sp = sub.add_parser(cmd, help=f"run the {cmd} stage (and whatever it depends on)")
        for name in names:
            _add_option(sp, name)
    rp = sub.add_parser("report", help="collect a run directory's tables into report/")
    rp.add_argument("--run-dir", dest="out", required=True)
    cp = sub.add_parser("run", help="run the stages listed in an INI config")
    cp.add_argument("--config", required=True, help="INI file with [run] stages=... and [options]")
    for name in OPTIONS:
        _add_option(cp, name)
    return p


def _fail(code: int, reason: str, message: str) -> int:
    print(json.dumps({"status": "error", "exit": code, "reason": reason, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    given = {k: v for k, v in vars(args).items() if k in OPTIONS and v is not None}
    try:
        if args.command == "report":
            index = emit_report(args.out)
            print(json.dumps({"status": "partial" if index["partial"] else "ok", "missing": index["missing"]}))
            return 0
        if args.command == "run":
            from_file, stages = load_config(args.config)
            from_file.update(given)
            opts = resolve_options(from_file)
        else:
            stages = [args.command]
            opts = resolve_options(given)
        run_experiment(opts, stages)
    except UsageError as exc:
        return _fail(1, "usage", str(exc))
    except GridError as exc:
        # bad grid parameters or a snapshot on the wrong grid
        return _fail(1, "grid", str(exc))
    except RegimeError as exc:
        return _fail(2, getattr(exc, "reason", None) or "regime", str(exc))
    except (ConvergenceError, IntegrationError) as exc:
        return _fail(2, REASONS[type(exc)], str(exc))
    except GPPDError as exc:
        return _fail(2, "numerical", str(exc))
    except ValueError as exc:
        return _fail(1, "invalid input", str(exc))
    except OSError as exc:
        return _fail(1, "io", str(exc))
    print(json.dumps({"status": "ok", "out": opts["out"], "stages": stages}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
