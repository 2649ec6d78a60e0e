"""Command-line front end: ``spingas {rates,evolve,simulate,compare,lamb-shift}``.

A run is a pure function of the JSON config, the command and the
result-changing flags (--generator, --seed, --trajectories). --threads only
caps parallelism and is never written to the outputs.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 validity-regime
violation under --strict.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from dataclasses import asdict
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .cm import c1_closed, c2_closed, cm_c1, cm_c2, cm_refracted
from .colsim import SimConfig, run_ensemble, total_collision_rate, write_ensemble_csv
from .compare import MonotonicityError, closed_forms, discrepancy_estimates, records_to_csv, temperature_sweep
from .ldl import (
    UnsupportedPotential,
    born_error_scale,
    gamma_fast,
    gamma_quadrature,
    lamb_shift_ldl,
)
from .liouville import build_generator, cm_generator, evolve_grid, ldl_generator, write_trajectory_csv
from .model import DensityMatrix, GasParameters, SpinModel, UnitSystem, trace_distance
from .potentials import GAUSSIAN, SQUARE_WELL, TABULATED, RadialPotential
from .quadrature import QuadratureError

logger = logging.getLogger("spingas")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_REGIME = 0, 2, 3, 4
REGIME_LIMIT = 1.0

_NUMBER = {"type": "number"}
_ENTRY = {"oneOf": [_NUMBER, {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}]}
_MATRIX = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": _ENTRY}}
_TIMES = {"type": "array", "items": {"type": "number", "minimum": 0}}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "potential", "gas"],
    "properties": {
        "units": {
            "type": "object",
            "additionalProperties": False,
            "required": ["mass", "length"],
            "properties": {
                "mass": {"type": "number", "exclusiveMinimum": 0},
                "length": {"type": "number", "exclusiveMinimum": 0},
                "hbar": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["dim_s", "dim_g", "f"],
            "properties": {
                "dim_s": {"type": "integer", "minimum": 2, "maximum": 16},
                "dim_g": {"type": "integer", "minimum": 1, "maximum": 8},
                "h_s": _MATRIX,
                "f": _MATRIX,
                "mu": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "potential": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": [GAUSSIAN, SQUARE_WELL, TABULATED]},
                "u": _NUMBER,
                "U0": _NUMBER,
                "table": {"type": "string"},
            },
        },
        "gas": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "nu": {"type": "number", "minimum": 0},
                "theta": {"type": "number", "exclusiveMinimum": 0},
                "n": {"type": "number", "minimum": 0},
                "kT": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "evolve": {
            "type": "object",
            "additionalProperties": False,
            "required": ["rho0", "t_grid"],
            "properties": {
                "rho0": _MATRIX,
                "t_grid": _TIMES,
                "method": {"enum": ["expm", "rk_adaptive"]},
                "generator": {"enum": ["ldl", "cm"]},
                "order": {"enum": [1, 2]},
                "f_expect": _NUMBER,
            },
        },
        "simulate": {
            "type": "object",
            "additionalProperties": False,
            "required": ["rho0", "trajectories", "seed", "t_end", "sample_times"],
            "properties": {
                "rho0": _MATRIX,
                "trajectories": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "t_end": {"type": "number", "minimum": 0},
                "sample_times": _TIMES,
                "tau_mode": {"enum": ["straight", "refracted"]},
                "f_expect": _NUMBER,
                "n_batches": {"type": "integer", "minimum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["theta_grid"],
            "properties": {"theta_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}}},
        },
        "lamb_shift": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"order": {"enum": [1, 2]}},
        },
    },
}

RESULT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["command", "version", "config", "overrides", "result"],
    "properties": {
        "command": {"enum": ["rates", "evolve", "simulate", "compare", "lamb-shift"]},
        "version": {"type": "string"},
        "config": CONFIG_SCHEMA,
        "overrides": {"type": "object"},
        "result": {"type": "object"},
    },
}


class ConfigError(ValueError):
    pass


class RegimeViolation(RuntimeError):
    pass


# --- config ingestion -------------------------------------------------------

def matrix_from_json(rows, name: str) -> np.ndarray:
    try:
        arr = np.array([[complex(e[0], e[1]) if isinstance(e, list) else complex(e) for e in row] for row in rows])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None
    if arr.ndim != 2:
        raise ConfigError(f"{name} must be a rectangular matrix")
    return arr


def matrix_to_json(m) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def load_config(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def build_inputs(cfg: dict, base_dir: Path = Path(".")) -> tuple[SpinModel, RadialPotential, GasParameters]:
    units = cfg.get("units")
    system = UnitSystem(**units) if units else None
    g, p = cfg["gas"], cfg["potential"]
    if system is None:
        if "nu" not in g or "theta" not in g or {"n", "kT"} & set(g) or "U0" in p:
            raise ConfigError("without 'units', give gas.nu, gas.theta and potential.u")
        u_raw = p.get("u")
        nu, theta = g["nu"], g["theta"]
    else:
        if "n" not in g or "kT" not in g or {"nu", "theta"} & set(g) or "u" in p:
            raise ConfigError("with 'units', give gas.n, gas.kT and potential.U0")
        U0 = p.get("U0")
        conv = system.gas(g["n"], g["kT"], U0 if U0 is not None else 0.0)
        nu, theta = conv.nu, conv.theta
        u_raw = conv.u if U0 is not None else None

    m = cfg["model"]
    ds, dg = m["dim_s"], m["dim_g"]
    try:
        h_s = matrix_from_json(m["h_s"], "h_s") if "h_s" in m else np.zeros((ds, ds))
        model = SpinModel(ds, dg, h_s, matrix_from_json(m["f"], "f"), m.get("mu"))
        if p["kind"] == TABULATED:
            if "table" not in p:
                raise ConfigError("tabulated potential needs 'table'")
            table = Path(p["table"])
            pot = RadialPotential.from_csv(table if table.is_absolute() else base_dir / table)
            if u_raw is not None:
                pot = RadialPotential.tabulated(pot.r, pot.v, u=u_raw)
        else:
            if u_raw is None:
                raise ConfigError(f"{p['kind']} potential needs a strength")
            pot = RadialPotential(p["kind"], u_raw)
        gas = GasParameters(nu, theta, pot.u)
    except ConfigError:
        raise
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from None
    return model, pot, gas


def _rho(block: dict, model: SpinModel) -> DensityMatrix:
    try:
        rho = DensityMatrix(matrix_from_json(block["rho0"], "rho0"))
    except ValueError as exc:
        raise ConfigError(f"rho0: {exc}") from None
    if rho.dim != model.dim_s:
        raise ConfigError(f"rho0 is {rho.dim}x{rho.dim}, model has dim_s = {model.dim_s}")
    return rho


def _section(cfg: dict, name: str) -> dict:
    if name not in cfg:
        raise ConfigError(f"config has no '{name}' block")
    return cfg[name]


def _num(x):
    """JSON-safe float (NaN/inf become null)."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def regime_report(gas: GasParameters) -> dict:
    return {k: _num(v) for k, v in gas.regime().items()}


def check_regime(gas: GasParameters, strict: bool) -> None:
    bad = {k: v for k, v in gas.regime().items() if v > REGIME_LIMIT}
    if bad:
        msg = "validity ratios above 1: " + ", ".join(f"{k}={v:.3g}" for k, v in sorted(bad.items()))
        if strict:
            raise RegimeViolation(msg)
        logger.warning(msg)


# --- commands ---------------------------------------------------------------

def cmd_rates(model, pot, gas, cfg, args) -> dict:
    gamma, gamma_err = gamma_quadrature(pot, gas, return_error=True)
    c1, c2 = cm_c1(pot, gas), cm_c2(pot, gas)
    try:
        fast = gamma_fast(pot, gas)
    except UnsupportedPotential:
        fast = None
    closed, factor = closed_forms(pot, gas)
    hh, dd = discrepancy_estimates(model, gas)
    return {
        "gas": {"nu": gas.nu, "theta": gas.theta, "u": gas.u},
        "potential": pot.kind,
        "ldl": {
            "gamma": gamma,
            "gamma_error": gamma_err,
            "gamma_closed": _num(closed),
            "gamma_fast": _num(fast),
            "correction_factor": _num(factor),
            "lamb_coeff": gas.nu * pot.volume_integral(),
        },
        "cm": {
            "c1": c1,
            "c2": c2,
            "c1_closed": _num(c1_closed(pot, gas)),
            "c2_closed": _num(c2_closed(pot, gas)),
        },
        "ratio": _num(gamma / c2) if c2 else None,
        "collision_rate": total_collision_rate(pot, gas),
        "regime": regime_report(gas),
        "discrepancy": {"hh": hh, "dd": dd},
        "born_error_scale": born_error_scale(gas),
    }


def _generator(kind: str, model, pot, gas, block: dict):
    if kind == "ldl":
        return ldl_generator(model, pot, gas, order=block.get("order", 1))
    return cm_generator(model, pot, gas, f_expect=block.get("f_expect"))


def cmd_evolve(model, pot, gas, cfg, args) -> dict:
    block = _section(cfg, "evolve")
    rho0 = _rho(block, model)
    kind = args.generator or block.get("generator", "ldl")
    times = np.asarray(block["t_grid"], dtype=float)
    if np.any(np.diff(times) < 0):
        raise ConfigError("evolve.t_grid must be ascending")
    gen = _generator(kind, model, pot, gas, block)
    states = evolve_grid(gen, rho0, times, block.get("method", "expm"))
    out = Path(args.output)
    write_trajectory_csv(out / "trajectory.csv", times, states)
    return {
        "generator": kind,
        "method": block.get("method", "expm"),
        "rates": list(gen.rates),
        "h_eff": matrix_to_json(gen.h_eff),
        "final_state": matrix_to_json(states[-1]) if len(states) else None,
        "files": ["trajectory.csv"],
    }


def cmd_simulate(model, pot, gas, cfg, args) -> dict:
    block = _section(cfg, "simulate")
    rho0 = _rho(block, model)
    try:
        sim = SimConfig(
            model, pot, gas,
            trajectories=args.trajectories if args.trajectories is not None else block["trajectories"],
            t_end=float(block["t_end"]),
            seed=args.seed if args.seed is not None else block["seed"],
            sample_times=tuple(block["sample_times"]),
            tau_mode=block.get("tau_mode", "straight"),
            f_expect=float(block.get("f_expect", 0.0)),
            n_batches=block.get("n_batches"),
        )
    except ValueError as exc:
        raise ConfigError(f"simulate: {exc}") from None
    res = run_ensemble(sim, rho0, threads=args.threads)
    out = Path(args.output)
    write_ensemble_csv(out / "ensemble.csv", res)

    # GKSL solution of the matching CM generator, for a direct comparison
    if sim.tau_mode == "refracted":
        c1, c2 = cm_refracted(gas, sim.f_expect, pot)
    else:
        c1, c2 = cm_c1(pot, gas), cm_c2(pot, gas)
    gen = build_generator(model, c1 * model.mean_field(), c2)
    ref = evolve_grid(gen, rho0, res.times, "expm")
    summary = res.summary()
    summary["cm_reference"] = {"c1": c1, "c2": c2,
                               "trace_distance": [trace_distance(a, b) for a, b in zip(res.mean, ref)]}
    summary["files"] = ["ensemble.csv"]
    return summary


def cmd_compare(model, pot, gas, cfg, args) -> dict:
    grid = _section(cfg, "sweep")["theta_grid"]
    failure = None
    try:
        records = temperature_sweep(pot, model, gas.nu, gas.u, grid, threads=args.threads)
    except MonotonicityError as exc:
        records, failure = exc.records, str(exc)
    out = Path(args.output)
    params = {"potential": pot.kind, "nu": repr(gas.nu), "u": repr(gas.u), "f_norm": repr(model.f_norm)}
    (out / "sweep.csv").write_text(records_to_csv(records, params))
    rows = [{k: (v if isinstance(v, str) else _num(v)) for k, v in asdict(r).items()} for r in records]
    result = {"theta_grid": [float(t) for t in grid], "rows": rows, "files": ["sweep.csv"],
              "tolerances": {"gamma_rtol": 1e-10, "cm_rtol": 1e-12}}
    failed = [r.theta for r in records if not r.ok]
    if failure or failed:
        result["failures"] = {"rows": failed, "monotonicity": failure}
    return result


def cmd_lamb_shift(model, pot, gas, cfg, args) -> dict:
    order = cfg.get("lamb_shift", {}).get("order", 1)
    h_ldl = lamb_shift_ldl(model, pot, gas, order)
    h_cm = cm_c1(pot, gas) * model.mean_field()
    return {
        "order": order,
        "ldl": matrix_to_json(h_ldl),
        "cm": matrix_to_json(h_cm),
        "max_abs_difference": float(np.max(np.abs(h_ldl - h_cm))),
        "discrepancy_hh": discrepancy_estimates(model, gas)[0],
    }


COMMANDS = {
    "rates": cmd_rates,
    "evolve": cmd_evolve,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "lamb-shift": cmd_lamb_shift,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spingas", description="LDL and collision-model generators for a spin in a dilute gas")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--output", default=".", help="directory for result files (default: .)")
    ap.add_argument("--generator", choices=["ldl", "cm"], help="generator for 'evolve'")
    ap.add_argument("--seed", type=int, help="override simulate.seed")
    ap.add_argument("--trajectories", type=int, help="override simulate.trajectories")
    ap.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")
    ap.add_argument("--strict", action="store_true", help="exit 4 when a validity ratio exceeds 1")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _overrides(args) -> dict:
    out = {}
    for key in ("generator", "seed", "trajectories"):
        val = getattr(args, key)
        if val is not None:
            out[key] = val
    return out


def run(args) -> int:
    cfg_path = Path(args.config)
    try:
        cfg = load_config(cfg_path)
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be a 64-bit unsigned integer")
        if args.trajectories is not None and args.trajectories < 1:
            raise ConfigError("--trajectories must be >= 1")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        model, pot, gas = build_inputs(cfg, cfg_path.parent)
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        check_regime(gas, args.strict)
        result = COMMANDS[args.command](model, pot, gas, cfg, args)
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except RegimeViolation as exc:
        logger.error("%s", exc)
        return EXIT_REGIME
    except (QuadratureError, ArithmeticError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except ValueError as exc:
        # inputs that pass the schema but not the model (e.g. order 2 with a Gaussian)
        logger.error("%s", exc)
        return EXIT_CONFIG

    doc = {
        "command": args.command,
        "version": __version__,
        "config": copy.deepcopy(cfg),
        "overrides": _overrides(args),
        "result": result,
    }
    name = args.command.replace("-", "_") + ".json"
    (out / name).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
    if "failures" in result:
        logger.error("some rows failed: %s", result["failures"])
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return run(args)
