"""Command-line entry point.

Subcommands: ``solve``, ``gen``, ``bounds``, ``ric``, ``sweep``, ``ptc``,
``map``. Settings come from defaults, then an optional flat ``key = value``
file given with ``--config``, then explicit flags. Exit status is 0 on
success, 1 on usage errors and 2 when the run itself fails.

Every file written through ``--out`` (or ``--csv``) gets a sibling
``<file>.manifest.json`` recording the command, a digest of the resolved
configuration, the tool version, timestamps and the output paths.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (ConfiguredSolver, SweepSpec, delta_grid_paper, ptc_estimate, rho_grid_paper,
                          run_sweep, selection_map, write_json, write_records_csv)
from .instances import Regime, gaussian_instance, instance_from_json, tight_frame_matrix
from .linalg import read_csv
from .solvers import Algorithm, preset, relative_error, check_success, run_solver
from .theory import (RIP_THRESHOLDS, brute_force_ric, eta_constant, hbht_bounds, hbht_bounds_2k,
                     hbhtp_bounds, hbhtp_bounds_2k)

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _int_list(text: str) -> list[int]:
    """``"1,2,5"`` or ``"10:150:10"`` (inclusive start:stop:step)."""
    text = str(text).strip()
    if ":" in text:
        parts = [int(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"bad range {text!r}; use start:stop:step")
        return list(range(parts[0], parts[1] + 1, parts[2]))
    return [int(p) for p in text.split(",") if p.strip()]


def _float_list(text: str) -> list[float]:
    return [float(p) for p in str(text).split(",") if p.strip()]


def _str_list(text: str) -> list[str]:
    return [p.strip() for p in str(text).split(",") if p.strip()]


# name -> (type, default)
_COMMON = {
    "m": (int, 20), "n": (int, 40), "k": (int, 3), "alpha": (float, None), "beta": (float, None),
    "seed": (int, 0), "trials": (int, 10), "noise": (float, 0.0), "regime": (str, "normalized"),
    "algo": (str, None), "out": (str, None), "jobs": (int, None),
    "max_iter": (int, 50), "tol": (float, 1e-6),
}

_EXTRA = {
    "solve": {"instance": (str, None)},
    "gen": {"no_arrays": (bool, False)},
    "bounds": {"delta3k": (float, None), "delta2k": (float, None), "deltak": (float, None),
               "e0": (float, 1.0), "e1": (float, 1.0), "mu": (float, None)},
    "ric": {"matrix": (str, None), "orders": (_int_list, None), "max_enum": (int, 2_000_000),
            "tight_frame": (bool, False)},
    "sweep": {"k_values": (_int_list, None), "algos": (_str_list, None), "csv": (str, None)},
    "ptc": {"delta": (float, None), "max_grid": (int, 50)},
    "map": {"deltas": (_float_list, None), "rhos": (_float_list, None), "algos": (_str_list, None),
            "timing_jobs": (int, 1)},
}

_HELP = {
    "solve": "solve one instance and print the trace as JSON",
    "gen": "emit a seeded problem instance as JSON",
    "bounds": "evaluate convergence constants for given alpha, beta and RICs",
    "ric": "brute-force restricted isometry constants of a matrix",
    "sweep": "success rates over a list of sparsity levels",
    "ptc": "estimate the 50%%-success phase transition point",
    "map": "algorithm selection map over (delta, rho)",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hbht", description="Heavy-ball hard thresholding toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, extra in _EXTRA.items():
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", default=None, help="flat key = value settings file")
        for key, (typ, _) in {**_COMMON, **extra}.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None)
            else:
                p.add_argument(flag, dest=key, type=typ, default=None)
    return parser


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _convert(typ, value):
    if typ is bool:
        if isinstance(value, bool):
            return value
        low = str(value).lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return typ(value)


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by flags."""
    spec = {**_COMMON, **_EXTRA[args.command]}
    cfg = {key: default for key, (_, default) in spec.items()}
    if args.config:
        try:
            entries = read_config(args.config)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        for key, value in entries.items():
            if key not in spec:
                raise UsageError(f"unknown config key {key!r} for '{args.command}'")
            try:
                cfg[key] = _convert(spec[key][0], value)
            except ValueError as exc:
                raise UsageError(f"bad value for {key!r}: {exc}") from None
    for key in spec:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if cfg["jobs"] is None:
        cfg["jobs"] = os.cpu_count() or 1
    try:
        cfg["regime"] = Regime.parse(cfg["regime"]).value
        if cfg.get("algo") is not None:
            cfg["algo"] = Algorithm.parse(cfg["algo"]).value
        for name in cfg.get("algos") or []:
            Algorithm.parse(name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return cfg


def config_digest(cfg: dict) -> str:
    stable = {k: v for k, v in cfg.items() if k not in ("jobs", "out", "csv", "timing_jobs")}
    return hashlib.sha256(json.dumps(stable, sort_keys=True, default=str).encode()).hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _finite(obj):
    # strict JSON has no inf/nan; unbounded constants become null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _dumps(obj) -> str:
    obj = json.loads(json.dumps(obj, default=_json_default))
    return json.dumps(_finite(obj), indent=2, sort_keys=True)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


class _Outputs:
    """Collects written files and drops a manifest next to each."""

    def __init__(self, command: str, cfg: dict):
        self.command, self.cfg = command, cfg
        self.started = _now()
        self.paths: list[str] = []

    def text(self, path, text: str) -> None:
        Path(path).write_text(text)
        self.paths.append(str(path))

    def json(self, path, obj) -> None:
        write_json(obj, path)
        self.paths.append(str(path))

    def csv(self, path, records) -> None:
        write_records_csv(records, path)
        self.paths.append(str(path))

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "config": {k: v for k, v in self.cfg.items()},
            "config_digest": config_digest(self.cfg),
            "tool_version": __version__,
            "started_at": self.started,
            "finished_at": _now(),
            "outputs": list(self.paths),
        }
        for path in self.paths:
            Path(str(path) + ".manifest.json").write_text(_dumps(manifest) + "\n")


def _emit(out: _Outputs, cfg: dict, obj) -> None:
    text = _dumps(obj) + "\n"
    if cfg["out"]:
        out.text(cfg["out"], text)
    else:
        sys.stdout.write(text)


def _solver_config(cfg: dict, algo: str, k: int | None = None, allow_override: bool = True):
    overrides = {"max_iterations": cfg["max_iter"], "residual_tolerance": cfg["tol"]}
    if allow_override:
        if cfg["alpha"] is not None:
            overrides["alpha"] = cfg["alpha"]
        if cfg["beta"] is not None:
            overrides["beta"] = cfg["beta"]
    sc = preset(algo, cfg["regime"], **overrides)
    return sc.with_k(k) if k is not None else sc


def _solvers(cfg: dict, default: list[str]) -> dict:
    names = cfg.get("algos") or ([cfg["algo"]] if cfg.get("algo") else default)
    single = len(names) == 1
    if not single and (cfg["alpha"] is not None or cfg["beta"] is not None):
        raise UsageError("--alpha/--beta apply to a single algorithm only")
    return {Algorithm.parse(a).value: ConfiguredSolver(_solver_config(cfg, a, allow_override=single))
            for a in names}


def cmd_solve(cfg: dict, out: _Outputs) -> None:
    if cfg["instance"]:
        inst = instance_from_json(Path(cfg["instance"]).read_text())
    else:
        inst = gaussian_instance(cfg["m"], cfg["n"], cfg["k"], cfg["regime"], cfg["noise"], cfg["seed"])
    algo = cfg["algo"] or "hbhtp"
    if inst.regime is not None and cfg["regime"] != inst.regime.value and cfg["instance"]:
        # presets follow the instance's own regime
        cfg = {**cfg, "regime": inst.regime.value}
    sc = _solver_config(cfg, algo, inst.sparsity)
    trace = run_solver(inst.matrix, inst.measurements, sc)
    doc = trace.to_dict()
    doc["relative_error"] = relative_error(trace.final_estimate, inst.true_signal)
    doc["success"] = check_success(trace.final_estimate, inst.true_signal)
    doc["degenerate_ls_flag"] = trace.degenerate_ls_flag
    _emit(out, cfg, doc)


def cmd_gen(cfg: dict, out: _Outputs) -> None:
    inst = gaussian_instance(cfg["m"], cfg["n"], cfg["k"], cfg["regime"], cfg["noise"], cfg["seed"])
    _emit(out, cfg, inst.to_dict(include_arrays=not cfg["no_arrays"]))


def cmd_bounds(cfg: dict, out: _Outputs) -> None:
    alpha = 1.0 if cfg["alpha"] is None else cfg["alpha"]
    beta = 0.0 if cfg["beta"] is None else cfg["beta"]
    d3, d2, dk = cfg["delta3k"], cfg["delta2k"], cfg["deltak"]
    if d2 is None:
        d2 = d3
    if d2 is None:
        raise UsageError("bounds needs at least one of --delta2k, --delta3k")
    if dk is None:
        dk = d2
    e0, e1 = cfg["e0"], cfg["e1"]
    doc = {
        "alpha": alpha, "beta": beta, "eta": eta_constant(),
        "deltas": {"delta_k": dk, "delta_2k": d2, "delta_3k": d3},
        "thresholds": {f"{alg}_{order}": value for (alg, order), value in RIP_THRESHOLDS.items()},
        "hbht_2k": hbht_bounds_2k(alpha, beta, d2, e0, e1).to_dict(),
        "hbhtp_2k": hbhtp_bounds_2k(alpha, beta, dk, d2, e0, e1).to_dict(),
    }
    if d3 is not None:
        doc["hbht"] = hbht_bounds(alpha, beta, d3, d2, e0, e1).to_dict()
        doc["hbhtp"] = hbhtp_bounds(alpha, beta, dk, d2, d3, e0, e1, cfg["mu"]).to_dict()
    _emit(out, cfg, doc)


def cmd_ric(cfg: dict, out: _Outputs) -> None:
    if cfg["matrix"]:
        A = read_csv(cfg["matrix"])
    elif cfg["tight_frame"]:
        A = tight_frame_matrix(cfg["m"], cfg["n"], cfg["seed"])
    else:
        A = gaussian_instance(cfg["m"], cfg["n"], 1, cfg["regime"], 0.0, cfg["seed"]).matrix
    orders = cfg["orders"] or [cfg["k"]]
    doc = {"shape": list(A.shape),
           "estimates": [brute_force_ric(A, t, cfg["max_enum"], seed=cfg["seed"]).to_dict() for t in orders]}
    _emit(out, cfg, doc)


def cmd_sweep(cfg: dict, out: _Outputs) -> None:
    k_values = cfg["k_values"] or [cfg["k"]]
    spec = SweepSpec(cfg["m"], cfg["n"], k_values, cfg["trials"], _solvers(cfg, ["hbhtp", "hbht", "iht"]),
                     cfg["regime"], cfg["noise"], cfg["seed"])
    result = run_sweep(spec, jobs=cfg["jobs"])
    if cfg["csv"]:
        out.csv(cfg["csv"], result.records)
    _emit(out, cfg, result.summary_dict())


def cmd_ptc(cfg: dict, out: _Outputs) -> None:
    m = cfg["m"] if cfg["delta"] is None else math.ceil(cfg["delta"] * cfg["n"] - 1e-9)
    solvers = _solvers(cfg, ["hbhtp"])
    doc = {}
    for name, solver in solvers.items():
        fit = ptc_estimate(solver, m, cfg["n"], cfg["trials"], cfg["regime"], cfg["noise"], cfg["seed"],
                           max_grid=cfg["max_grid"], jobs=cfg["jobs"])
        doc[name] = {"m": m, "n": cfg["n"], **fit.to_dict()}
    _emit(out, cfg, doc)


def cmd_map(cfg: dict, out: _Outputs) -> None:
    deltas = cfg["deltas"] or delta_grid_paper()
    rhos = cfg["rhos"] or rho_grid_paper()
    cells = selection_map(deltas, rhos, _solvers(cfg, ["hbhtp", "htp", "iht"]), cfg["n"], cfg["trials"],
                          cfg["seed"], cfg["regime"], cfg["noise"], max_parallel_timing=cfg["timing_jobs"])
    _emit(out, cfg, {"n": cfg["n"], "cells": [c.to_dict() for c in cells]})


COMMANDS = {"solve": cmd_solve, "gen": cmd_gen, "bounds": cmd_bounds, "ric": cmd_ric,
            "sweep": cmd_sweep, "ptc": cmd_ptc, "map": cmd_map}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve(args)
    except UsageError as exc:
        sys.stderr.write(str(exc).rstrip() + "\n")
        return EXIT_USAGE
    except SystemExit as exc:
        # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    out = _Outputs(args.command, cfg)
    try:
        COMMANDS[args.command](cfg, out)
        out.finish()
    except UsageError as exc:
        sys.stderr.write(f"hbht {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except Exception as exc:
        sys.stderr.write(f"hbht {args.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
