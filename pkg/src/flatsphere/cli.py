"""Command-line entry point: simulate, shoot, verify, spectral, profile-table.

Every option can also come from a flat JSON file passed with --config; the
keys are the option names (dashes or underscores). Flags given on the
command line override the file.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional

import numpy as np

from .errors import (BlowUpProximity, DomainError, FlatsphereError, InconsistencyError,
                     InitializationError, NumericFault, UsageError)
from .io import read_csv, svg_lines, write_csv, write_json, write_sidecar
from .modulation import ShrinkingSetParams, check_membership, decompose
from .profile import ModelParams, f_profile, phi, potential_V, remainder_R
from .shooting import (THREADS_ENV, ShootingSettings, ShootingState, exit_time,
                       read_history, search)
from .solver import WSolverSettings, build_initial_data, run_id, solve_w_equation

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4
COMMANDS = ("simulate", "shoot", "verify", "spectral", "profile-table")


@dataclass(frozen=True)
class RunConfig:
    command: str = "simulate"
    p: float = 2.0
    d: int = 2
    r0: float = 1.0
    eps0: float = 0.25
    A: float = 1.0
    eta0: float = 1.0
    s0: float = 10.0
    L: float = 20.0
    dy: float = 0.05
    rtol: float = 1e-9
    atol: float = 1e-16
    drift: str = "central"
    d6: tuple = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    s_end: Optional[float] = None
    stop_on_exit: bool = False
    s_target: Optional[float] = None
    budget: int = 500
    steps: int = 40
    resume: bool = False
    input: Optional[str] = None
    s_values: tuple = (10.0,)
    y_max: float = 10.0
    ny: int = 201
    out: str = "out"
    plot: bool = False

    def model(self) -> ModelParams:
        return ModelParams(self.p, self.d, self.r0, self.eps0, self.A, self.eta0, self.s0)

    def solver(self) -> WSolverSettings:
        return WSolverSettings(L=self.L, dy=self.dy, rtol=self.rtol, atol=self.atol,
                               drift=self.drift)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["d6"] = list(self.d6)
        d["s_values"] = list(self.s_values)
        return d


_FIELDS = {f.name: f for f in fields(RunConfig)}
_HELP = {
    "p": "nonlinearity exponent, p > 1", "d": "space dimension, (d-2)p <= d+2",
    "r0": "sphere radius", "eps0": "regular-region radius", "A": "shrinking-set constant, >= 1",
    "eta0": "regular-region bound", "s0": "initial log-time",
    "L": "similarity grid half-width", "dy": "similarity grid spacing",
    "rtol": "integrator relative tolerance", "atol": "integrator absolute tolerance",
    "drift": "drift discretization (central or upwind)",
    "d6": "six comma-separated initial-data parameters in [-2, 2]",
    "s_end": "simulate: final log-time (default s0 + 2)",
    "stop_on_exit": "simulate: stop at the first shrinking-set exit",
    "s_target": "shoot: target exit log-time (default s0 + 3)",
    "budget": "shoot: maximum trajectory evaluations",
    "steps": "shoot: bisection steps per coordinate",
    "resume": "shoot: replay evaluations stored in an existing history",
    "input": "spectral: CSV with columns y,value",
    "s_values": "profile-table: comma-separated log-times",
    "y_max": "profile-table: grid half-width", "ny": "profile-table: grid points",
    "out": "output directory (verify: report .json path or directory)",
    "plot": "also write SVG plots",
}


def _float_list(text, n=None, key="d6"):
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise UsageError(f"{key}: expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise UsageError(f"{key}: expected {n} values, got {len(vals)}")
    return tuple(vals)


def _bool(v, key):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("true", "1", "yes"):
        return True
    if isinstance(v, str) and v.lower() in ("false", "0", "no"):
        return False
    raise UsageError(f"{key}: expected a boolean, got {v!r}")


def _coerce(key: str, value):
    if key not in _FIELDS:
        raise UsageError(f"unknown key: {key}")
    if value is None:
        return None
    if key == "d6":
        return _float_list(value, 6, key)
    if key == "s_values":
        return _float_list(value, None, key)
    if key in ("stop_on_exit", "resume", "plot"):
        return _bool(value, key)
    if key in ("d", "budget", "steps", "ny"):
        try:
            f = float(value)
        except (TypeError, ValueError):
            raise UsageError(f"{key}: expected an integer, got {value!r}")
        if f != int(f):
            raise UsageError(f"{key}: expected an integer, got {value!r}")
        return int(f)
    if key in ("command", "drift", "input", "out"):
        return str(value)
    try:
        return float(value)
    except (TypeError, ValueError):
        raise UsageError(f"{key}: expected a number, got {value!r}")


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise UsageError(f"command: unknown {cfg.command!r}")
    try:
        cfg.model()
    except DomainError as exc:
        msg = str(exc)
        key = next((k for k in ("eps0", "eta0", "r0", "A", "p", "d") if msg.startswith(k)
                    or f"{k}=" in msg or f"({k}" in msg), "p")
        raise UsageError(f"{key}: {msg}")
    checks = [("L", cfg.L > 0), ("dy", 0 < cfg.dy < cfg.L), ("rtol", cfg.rtol > 0),
              ("atol", cfg.atol > 0), ("drift", cfg.drift in ("central", "upwind")),
              ("d6", all(abs(v) <= 2 for v in cfg.d6)), ("budget", cfg.budget >= 1),
              ("steps", cfg.steps >= 1), ("ny", cfg.ny >= 2), ("y_max", cfg.y_max > 0),
              ("s_end", cfg.s_end is None or cfg.s_end > cfg.s0),
              ("s_target", cfg.s_target is None or cfg.s_target > cfg.s0),
              ("s_values", len(cfg.s_values) >= 1)]
    for key, ok in checks:
        if not ok:
            raise UsageError(f"{key}: value out of range ({getattr(cfg, key)!r})")
    if cfg.command == "spectral" and not cfg.input:
        raise UsageError("input: spectral needs --input")
    return cfg


def config_from_dict(data: dict, base: Optional[RunConfig] = None) -> RunConfig:
    kw = {}
    for raw, value in data.items():
        key = raw.replace("-", "_")
        kw[key] = _coerce(key, value)
    return replace(base or RunConfig(), **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flatsphere",
                                     description="Flat standing-sphere blow-up toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    defaults = RunConfig()
    for name in COMMANDS:
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.add_argument("--config", help="flat JSON file with the same keys as the flags")
        for key, f in _FIELDS.items():
            if key == "command":
                continue
            default = getattr(defaults, key)
            if isinstance(default, tuple):
                default = ",".join(str(v) for v in default)
            flag = "--" + key.replace("_", "-")
            sp.add_argument(flag, dest=key, metavar=key.upper(),
                            help=f"{_HELP.get(key, key)} (default: {default})")
    return parser


def parse_config(argv) -> RunConfig:
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    cfg = RunConfig(command=ns.pop("command"))
    path = ns.pop("config", None)
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"config: cannot read {path}: {exc}")
        if not isinstance(data, dict):
            raise UsageError("config: expected a flat JSON object")
        data = {k: v for k, v in data.items() if k != "command"}
        cfg = config_from_dict(data, cfg)
    cfg = config_from_dict(ns, cfg)
    return validate(cfg)


def save_config(cfg: RunConfig, path: str) -> str:
    return write_json(path, cfg.to_dict())


# ---- commands ---------------------------------------------------------------

TRAJECTORY_COLUMNS = ["s"] + [f"q{i}" for i in range(7)] + ["qminus", "sup", "in_set"]


def emit_series(rows, out_dir: str, config: dict, name: str = "trajectory",
                columns=TRAJECTORY_COLUMNS, extra=None, plot: bool = False):
    """CSV with fixed columns, JSON sidecar with checksums, optional SVG."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = write_csv(os.path.join(out_dir, f"{name}.csv"), columns, rows)
    files = [csv_path]
    if plot and rows and columns == TRAJECTORY_COLUMNS:
        s = [r[0] for r in rows]
        series = {c: [abs(r[k]) for r in rows] for k, c in enumerate(columns) if c.startswith("q")}
        files.append(svg_lines(os.path.join(out_dir, f"{name}_modes.svg"), s, series,
                               title="|q_i| against s"))
    side = write_sidecar(out_dir, f"{name}.json", config, files, extra)
    return files + [side]


def trajectory_rows(traj, params: ModelParams, set_params: ShrinkingSetParams):
    rows, exits = [], []
    for fr in traj.snapshots:
        dec = decompose(fr, params)
        rep = check_membership(dec, fr, fr.s, set_params, params)
        sup = float(np.max(np.abs(fr.values)))
        rows.append([float(fr.s)] + [float(v) for v in dec.q_low[:7]]
                    + [float(dec.q_minus_norm), sup, bool(rep.in_set)])
        if rep.exit is not None:
            exits.append(rep.as_record(float(fr.s)))
    return rows, exits


def cmd_simulate(cfg: RunConfig) -> int:
    params = cfg.model()
    settings = cfg.solver()
    sp = ShootingSettings(solver=settings).set_params(params)
    s_end = cfg.s_end if cfg.s_end is not None else cfg.s0 + 2.0
    frame, _ = build_initial_data(cfg.d6, params, settings, with_radial=False)

    def monitor(fr):
        if not cfg.stop_on_exit:
            return False
        return not check_membership(decompose(fr, params), fr, fr.s, sp, params).in_set

    traj = solve_w_equation(frame, params, s_end, settings, monitor)
    rows, exits = trajectory_rows(traj, params, sp)
    rid = run_id({"config": cfg.to_dict()})
    emit_series(rows, cfg.out, cfg.to_dict(), extra={
        "run_id": rid, "params": asdict(params), "settings": asdict(settings),
        "stop_reason": traj.stop_reason, "exits": exits, "steps": traj.metadata.get("steps")},
        plot=cfg.plot)
    print(f"simulate: {len(rows)} snapshots to s={rows[-1][0]:.6g}, "
          f"{len(exits)} out-of-set snapshots, run {rid}")
    return EXIT_OK


def cmd_shoot(cfg: RunConfig) -> int:
    params = cfg.model()
    settings = ShootingSettings(solver=cfg.solver())
    s_target = cfg.s_target if cfg.s_target is not None else cfg.s0 + 3.0
    os.makedirs(cfg.out, exist_ok=True)
    hist_path = os.path.join(cfg.out, "history.jsonl")
    cache = {}
    if cfg.resume and os.path.exists(hist_path):
        for st in read_history(hist_path):
            cache[tuple(st.d6)] = st

    def evaluate(d6):
        key = tuple(float(v) for v in d6)
        if key in cache:
            st = cache[key]
            return ShootingState(st.d6, st.s_exit, st.exit_sig, st.run_id, dict(st.margins),
                                 st.q_exit, {k: v for k, v in st.extras.items()
                                             if k not in ("best_s_exit", "eval_index")})
        return exit_time(key, params, s_target, settings)

    res = search(params, s_target, cfg.budget, evaluate, settings, cfg.steps, hist_path)
    best = res.best.to_record()
    best["extras"] = {k: v for k, v in best["extras"].items() if not k.startswith("_")}
    write_json(os.path.join(cfg.out, "best.json"), best)
    write_sidecar(cfg.out, "shoot.json", cfg.to_dict(),
                  [hist_path, os.path.join(cfg.out, "best.json")],
                  {"reached": res.reached, "evaluations": res.evaluations, "s_target": s_target,
                   "threads": os.environ.get(THREADS_ENV)})
    s_best = res.best.s_exit
    print(f"shoot: {res.evaluations} evaluations, best s_exit - s0 = "
          f"{(s_best - cfg.s0) if math.isfinite(s_best) else math.inf:.6g}, reached={res.reached}")
    return EXIT_OK if res.reached else EXIT_BUDGET


def cmd_verify(cfg: RunConfig) -> int:
    from .verifier import verify_expansion_suite

    report = verify_expansion_suite(cfg.model())
    if cfg.out.endswith(".json"):
        json_path = cfg.out
        parent = os.path.dirname(json_path) or "."
    else:
        parent = cfg.out
        json_path = os.path.join(parent, "report.json")
    os.makedirs(parent, exist_ok=True)
    write_json(json_path, report)
    csv_path = os.path.splitext(json_path)[0] + ".csv"
    rows = [[r["claim_id"], r["kind"], _cell(r["printed"]), _cell(r["measured"]), r["verdict"]]
            for r in report["rows"]]
    write_csv(csv_path, ["claim_id", "kind", "printed", "measured", "verdict"], rows)
    n_bad = sum(r["verdict"] == "mismatch" for r in report["rows"])
    print(f"verify: {len(rows)} rows, {n_bad} mismatches, report {json_path}")
    return EXIT_OK


def _cell(v):
    if isinstance(v, (list, tuple)):
        return json.dumps(v)
    return v


def cmd_spectral(cfg: RunConfig) -> int:
    from .hermite import project_samples

    try:
        header, body = read_csv(cfg.input)
    except OSError as exc:
        raise UsageError(f"input: {exc}")
    try:
        iy, iv = header.index("y"), header.index("value")
        y = np.array([float(r[iy]) for r in body])
        v = np.array([float(r[iv]) for r in body])
    except (ValueError, IndexError):
        raise UsageError("input: expected numeric columns 'y' and 'value'")
    if len(y) < 3 or np.any(np.diff(y) <= 0):
        raise UsageError("input: y must be strictly increasing with at least 3 points")
    if not np.all(np.isfinite(v)):
        raise NumericFault("input contains non-finite values")
    dec = project_samples(y, v)
    rows = [[m, float(dec.coefficient(m))] for m in range(len(dec.q_low))]
    emit_series(rows, cfg.out, cfg.to_dict(), name="spectral", columns=["m", "coefficient"],
                extra={"q_minus_norm": dec.q_minus_norm, "norm_sq": dec.norm_sq})
    print(f"spectral: {len(rows)} coefficients, |q_-| = {dec.q_minus_norm:.6g}")
    return EXIT_OK


def cmd_profile_table(cfg: RunConfig) -> int:
    params = cfg.model()
    y = np.linspace(-cfg.y_max, cfg.y_max, cfg.ny)
    rows = []
    for s in cfg.s_values:
        cols = [phi(y, s, params), f_profile(y * math.exp(-s / 4), params),
                potential_V(y, s, params), remainder_R(y, s, params)]
        for k in range(len(y)):
            rows.append([float(y[k]), float(s)] + [float(c[k]) for c in cols])
    emit_series(rows, cfg.out, cfg.to_dict(), name="profile",
                columns=["y", "s", "phi", "f", "V", "R"])
    print(f"profile-table: {len(rows)} rows")
    return EXIT_OK


HANDLERS = {"simulate": cmd_simulate, "shoot": cmd_shoot, "verify": cmd_verify,
            "spectral": cmd_spectral, "profile-table": cmd_profile_table}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return HANDLERS[cfg.command](cfg)
    except (UsageError, DomainError, InitializationError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericFault, BlowUpProximity, InconsistencyError) as exc:
        print(f"numeric fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FlatsphereError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
