"""Command-line entry point: ``liquidtop <command> --config run.json``.

Exit codes: 0 success, 2 configuration or precondition error, 3 solver
error, 4 a check in the report failed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import jsonschema
import numpy as np

from . import errors
from .dynamics import energy_identity_residual
from .experiments import (
    ExperimentConfig,
    convergence_study,
    instability_run,
    simulate,
    stability_run,
    system_for,
    threshold_bisection,
)
from .model import classify_regime, make_params
from .operators import dump_matrices
from .spectral import analyze, verify_hypotheses

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_amps = {"type": "array", "items": _pos, "minItems": 1}


def _block(props: dict, required: Sequence[str] = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


CONFIG_SCHEMA = _block(
    {
        "params": _block(
            {"A": _num, "B": _num, "C": _num, "beta2": _num, "rho": _num, "nu": _num, "lambda": _num,
             "cavity_scale": _num},
            ["A", "B", "C", "beta2", "rho", "nu", "lambda"],
        ),
        "basis": _block({"h": _pos, "degree": {"type": "integer", "minimum": 0}}, ["degree"]),
        "integrate": _block({"horizon": _pos, "rtol": _pos, "atol": _pos, "n_samples": {"type": "integer", "minimum": 2},
                             "alpha": {"type": "number", "minimum": 0, "maximum": 1}, "blowup_factor": _pos}),
        "seed": {"type": "integer", "minimum": 0},
        "spectrum": _block({"tol": _pos}),
        "simulate": _block({"amplitude": _pos, "linear_only": {"type": "boolean"},
                            "initial": {"type": "array", "items": _num}}),
        "threshold": _block({"sweep": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
                             "rtol": _pos}),
        "stability": _block({"amplitudes": _amps, "growth_bound": _pos, "terminal_tol": _pos, "rate_factor": _pos}),
        "instability": _block({"amplitudes": _amps, "escape_level": _pos, "scaling_factor": _pos}),
        "converge": _block({"degrees": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2}}),
        "debug": _block({"dump_matrices": {"type": "boolean"}}),
    },
    ["params", "basis"],
)


class ConfigError(errors.LiquidTopError, ValueError):
    pass


# ---------------------------------------------------------------------------
# deterministic output
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(x, ".17g") if math.isfinite(x) else "null"


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float printed to 17 significant digits."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, _level + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: Path, obj: Any) -> None:
    path.write_text(dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from exc
    return raw


def experiment_config(raw: dict, seed: Optional[int] = None, threads: int = 1) -> ExperimentConfig:
    """Translate a validated config document into an :class:`ExperimentConfig`."""
    prm = dict(raw["params"])
    prm["lam"] = prm.pop("lambda")
    h = raw["basis"].get("h")
    if "cavity_scale" not in prm:
        if h is None:
            raise ConfigError("cavity half-width missing: set params.cavity_scale or basis.h")
        prm["cavity_scale"] = h
    elif h is not None and h != prm["cavity_scale"]:
        raise ConfigError(f"basis.h={h} differs from params.cavity_scale={prm['cavity_scale']}")
    params = make_params(prm)
    integ = raw.get("integrate", {})
    kw = dict(params=params, degree=raw["basis"]["degree"], threads=threads,
              seed=raw.get("seed", 0) if seed is None else seed)
    for key in ("horizon", "rtol", "atol", "n_samples", "alpha", "blowup_factor"):
        if key in integ:
            kw[key] = integ[key]
    thr = raw.get("threshold", {})
    if "sweep" in thr:
        kw["sweep"] = tuple(thr["sweep"])
    if "rtol" in thr:
        kw["bisection_rtol"] = thr["rtol"]
    for section, keys in (("stability", ("growth_bound", "terminal_tol", "rate_factor")),
                          ("instability", ("escape_level", "scaling_factor"))):
        for key in keys:
            if key in raw.get(section, {}):
                kw[key] = raw[section][key]
    if "degrees" in raw.get("converge", {}):
        kw["degrees"] = tuple(raw["converge"]["degrees"])
    return ExperimentConfig(**kw)


def _with_amplitudes(cfg: ExperimentConfig, raw: dict, section: str) -> ExperimentConfig:
    amps = raw.get(section, {}).get("amplitudes")
    return cfg.with_(amplitudes=tuple(amps)) if amps else cfg


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _write_trajectories(out: Path, report) -> list:
    names = []
    for tag, tr in report.trajectories.items():
        tr.write_csv(out / f"{tag}.csv")
        names.append(f"{tag}.csv")
    return names


def cmd_spectrum(raw: dict, cfg: ExperimentConfig, out: Path) -> int:
    sys_ = system_for(cfg.params, cfg.degree)
    rep = analyze(sys_, raw.get("spectrum", {}).get("tol", 1e-9))
    write_json(out / "spectrum.json", rep.to_json())
    hyp = verify_hypotheses(sys_, rep)
    write_json(out / "report.json", {
        "kind": "spectrum", "passed": True, "N": sys_.N, "regime": classify_regime(cfg.params).kind.value,
        "gamma_gap": rep.gamma_gap, "hypotheses": hyp.flags, "residuals": hyp.residuals,
    })
    if raw.get("debug", {}).get("dump_matrices"):
        dump_matrices(sys_, out / "matrices")
    return EXIT_OK


def cmd_simulate(raw: dict, cfg: ExperimentConfig, out: Path) -> int:
    block = raw.get("simulate", {})
    if "amplitude" in block:
        cfg = cfg.with_(amplitudes=(block["amplitude"],))
    linear = bool(block.get("linear_only", False))
    u0 = np.asarray(block["initial"], dtype=float) if "initial" in block else None
    try:
        tr = simulate(cfg, u0=u0, linear_only=linear)
    except errors.DimensionMismatch as exc:
        raise ConfigError(str(exc)) from exc
    tr.write_csv(out / "trajectory.csv")
    mon = tr.monitors
    values = {
        "status": tr.status, "t_final": float(tr.t[-1]), "final_state": tr.final,
        "max_constraint_drift": float(np.max(np.abs(mon["constraint"] - mon["constraint"][0]))),
        "sup_norm_alpha": float(np.max(mon["norm_alpha"])), "nfev": tr.nfev,
    }
    if linear:
        values["energy_identity_residual"] = energy_identity_residual(tr)
    write_json(out / "report.json", {"kind": "simulate", "passed": True, "values": values,
                                     "trajectories": ["trajectory.csv"]})
    return EXIT_OK


def cmd_threshold(raw: dict, cfg: ExperimentConfig, out: Path) -> int:
    res = threshold_bisection(cfg)
    write_json(out / "report.json", {"kind": "threshold", "passed": True, "values": res.to_json()})
    return EXIT_OK


def _report_cmd(fn, section: Optional[str]):
    def cmd(raw: dict, cfg: ExperimentConfig, out: Path) -> int:
        if section:
            cfg = _with_amplitudes(cfg, raw, section)
        rep = fn(cfg)
        doc = rep.to_json()
        doc["trajectories"] = _write_trajectories(out, rep)
        write_json(out / "report.json", doc)
        if rep.kind == "converge":
            _write_rows(out / "convergence.csv", rep.values["rows"])
        return EXIT_OK if rep.passed else EXIT_CHECK
    return cmd


def _write_rows(path: Path, rows: list) -> None:
    keys = list(rows[0])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for r in rows:
            w.writerow(["" if r.get(k) is None else (_fmt(r[k]) if isinstance(r[k], float) else r[k]) for k in keys])


cmd_stability = _report_cmd(stability_run, "stability")
cmd_instability = _report_cmd(instability_run, "instability")
cmd_converge = _report_cmd(convergence_study, None)

COMMANDS = {
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "threshold": cmd_threshold,
    "stability": cmd_stability,
    "instability": cmd_instability,
    "converge": cmd_converge,
}

_CONFIG_ERRORS = (ConfigError, errors.ParameterError, errors.PreconditionError, errors.InertiaNotPD,
                  errors.InadmissibleState, errors.MagnitudeTooLarge, errors.AlphaOutOfRange, KeyError)
_SOLVER_ERRORS = (errors.EigensolverFailure, errors.DefectiveZeroEigenvalue, errors.StepSizeUnderflow,
                  errors.NonFiniteState, np.linalg.LinAlgError)
_CHECK_ERRORS = (errors.UnexpectedGrowth, errors.NoEscape, errors.NoSignChange, errors.FitUnreliable)


def _threads(arg: Optional[int]) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("LIQUIDTOP_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"LIQUIDTOP_THREADS must be an integer, got {env!r}")
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="liquidtop", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", help="output directory (default ./runs/<timestamp>)")
        sp.add_argument("--threads", type=int, help="worker threads (env LIQUIDTOP_THREADS, else all cores)")
        sp.add_argument("--seed", type=int, help="overrides the config seed")
    return ap


def _fail(code: int, kind: str, exc: BaseException) -> int:
    print(f"liquidtop: {kind}: {exc}", file=sys.stderr)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        return _fail(EXIT_CONFIG, "config error", ValueError("--seed must be an unsigned 64-bit integer"))
    try:
        raw = load_config(args.config)
        cfg = experiment_config(raw, seed=args.seed, threads=_threads(args.threads))
    except _CONFIG_ERRORS as exc:
        return _fail(EXIT_CONFIG, "config error", exc)
    out = Path(args.out) if args.out else Path("runs") / _dt.datetime.now().strftime("%Y%m%dT%H%M%S")
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = COMMANDS[args.command](raw, cfg, out)
    except _CONFIG_ERRORS as exc:
        return _fail(EXIT_CONFIG, "precondition error", exc)
    except _SOLVER_ERRORS as exc:
        return _fail(EXIT_SOLVER, "solver error", exc)
    except _CHECK_ERRORS as exc:
        write_json(out / "report.json", {"kind": args.command, "passed": False, "error": type(exc).__name__,
                                         "message": str(exc)})
        return _fail(EXIT_CHECK, "check failed", exc)
    print(f"liquidtop: {args.command} -> {out} (exit {code})")
    return code


if __name__ == "__main__":
    raise SystemExit(main())
