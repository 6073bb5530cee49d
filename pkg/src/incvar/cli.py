"""Command-line front end: ``incvar {fit,sweep,prokhorov,gen,selftest}``.

Every subcommand except ``selftest`` reads a JSON config carrying a versioned
``schema`` field.  The config is validated in full before any computation.
Exit status: 0 on success, 1 on usage or validation errors, 2 on numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import jsonschema

from . import __version__
from .dataset import DataSet, read_csv, write_csv
from .exceptions import ConfigError, InCVaRError, NumericalFailure
from .losses import LossSpec
from .models import ModelSpec
from .riskcore import TrimLevels

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

_PROB = {"type": "number", "minimum": 0, "maximum": 1}
_LEVELS = {
    "type": "object", "additionalProperties": False, "required": ["alpha", "beta"],
    "properties": {"alpha": _PROB, "beta": _PROB},
}
_SOLVER = {
    "type": "object", "additionalProperties": False,
    "properties": {
        "restarts": {"type": "integer", "minimum": 1},
        "max_outer_iters": {"type": "integer", "minimum": 1},
        "outer_tol": {"type": "number", "exclusiveMinimum": 0},
        "inner_max_iters": {"type": "integer", "minimum": 1},
        "inner_tol": {"type": "number", "exclusiveMinimum": 0},
        "init_scale": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer"},
        "smoothing_eps": {"type": "number", "minimum": 0},
    },
}
_MODEL = {
    "type": "object", "required": ["family"], "additionalProperties": False,
    "properties": {
        "family": {"enum": ["linear", "piecewise_affine", "polynomial", "logarithmic"]},
        "p": {"type": "integer", "minimum": 1},
        "I": {"type": "integer", "minimum": 1},
        "J": {"type": "integer", "minimum": 1},
        "degree": {"type": "integer", "minimum": 0},
    },
}
_LOSS = {
    "type": "object", "required": ["kind"], "additionalProperties": False,
    "properties": {"kind": {"enum": ["absolute", "squared", "huber"]},
                   "delta": {"type": "number", "exclusiveMinimum": 0}},
}
_GRID = {"type": "array", "minItems": 1, "items": {"type": "number"}}

SCHEMAS = {
    "fit": {
        "type": "object", "additionalProperties": False,
        "required": ["schema", "data", "model", "loss", "levels"],
        "properties": {"schema": {"const": "incvar.fit/1"}, "data": {"type": "string"},
                       "model": _MODEL, "loss": _LOSS, "levels": _LEVELS, "solver": _SOLVER},
    },
    "sweep": {
        "type": "object", "additionalProperties": False, "required": ["schema", "scenario"],
        "properties": {
            "schema": {"const": "incvar.sweep/1"},
            "scenario": {"enum": ["contamination_sweep", "level_sweep_beta",
                                  "level_sweep_alpha", "perturbation_sweep"]},
            "eps_grid": _GRID, "beta_grid": _GRID, "alpha_grid": _GRID, "k_grid": _GRID,
            "levels": _LEVELS, "gamma_cvar": _PROB, "solver": _SOLVER,
            "master_seed": {"type": "integer"},
            "noise_sigma": {"type": "number", "minimum": 0},
            "n_nominal": {"type": "integer", "minimum": 1},
            "n_contam": {"type": "integer", "minimum": 1},
            "n_perturbed": {"type": "integer", "minimum": 1},
            "contamination": _PROB,
            "estimators": {"type": "array", "minItems": 1, "uniqueItems": True,
                           "items": {"enum": ["incvar", "expectation", "cvar"]}},
            "record_seconds": {"type": "boolean"},
        },
    },
    "prokhorov": {
        "type": "object", "additionalProperties": False, "required": ["schema", "p", "q"],
        "properties": {"schema": {"const": "incvar.prokhorov/1"},
                       "p": {"type": "string"}, "q": {"type": "string"}},
    },
    "gen": {
        "type": "object", "additionalProperties": False,
        "required": ["schema", "generator"],
        "properties": {
            "schema": {"const": "incvar.gen/1"},
            "generator": {"enum": ["nominal", "contamination", "perturbed"]},
            "k": {"type": "integer", "minimum": 1},
            "n": {"type": "integer", "minimum": 1},
            "seed": {"type": "integer"},
            "noise_sigma": {"type": "number", "minimum": 0},
        },
    },
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="incvar", description="Interval-CVaR regression toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in [("fit", "fit a model to a CSV dataset"),
                       ("sweep", "run a robustness sweep and write CSV + SVG"),
                       ("prokhorov", "Prokhorov distance between two point clouds"),
                       ("gen", "write a generated dataset"),
                       ("selftest", "run the randomized property checks")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=name != "selftest", metavar="PATH")
        p.add_argument("--out", default=".", metavar="DIR")
        p.add_argument("--seed", type=int, default=None, metavar="N")
        p.add_argument("--jobs", type=int, default=None, metavar="N")
    return parser


def _path_of(error):
    parts = [str(p) for p in error.absolute_path]
    if error.validator == "required":
        missing = error.message.split("'")[1] if "'" in error.message else ""
        parts.append(missing)
    elif error.validator == "additionalProperties" and "'" in error.message:
        parts.append(error.message.split("'")[1])
    return ".".join(parts) or "<root>"


def load_config(command, path):
    """Parse and validate a config file; raises :class:`ConfigError` with a field path."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno})", str(path)) from None
    validator = jsonschema.Draft202012Validator(SCHEMAS[command])
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError(errors[0].message, _path_of(errors[0]))
    return cfg


def _jobs(args):
    if args.jobs is not None:
        jobs = args.jobs
    else:
        env = os.environ.get("INCVAR_JOBS", "1")
        try:
            jobs = int(env)
        except ValueError:
            raise ConfigError(f"not an integer: {env!r}", "INCVAR_JOBS") from None
    if jobs < 1:
        raise ConfigError("must be >= 1", "--jobs")
    return jobs


def _relative(base, path):
    p = Path(path)
    return p if p.is_absolute() else Path(base).parent / p


def _solver_config(raw, seed, jobs):
    from .solver import SolveConfig
    raw = dict(raw or {})
    if seed is not None:
        raw["seed"] = seed
    try:
        return SolveConfig(**raw, n_jobs=jobs)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], f"solver.{exc.path}") from None


def _levels(raw):
    try:
        return TrimLevels(raw["alpha"], raw["beta"])
    except InCVaRError as exc:
        raise ConfigError(str(exc), "levels") from None


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_fit(args, cfg, out):
    from .solver import fit_incvar
    data_path = _relative(args.config, cfg["data"])
    try:
        model = ModelSpec(**cfg["model"])
        loss = LossSpec(cfg["loss"]["kind"], cfg["loss"].get("delta"))
    except InCVaRError as exc:
        raise ConfigError(str(exc), "model" if "loss" not in str(exc) else "loss") from None
    levels = _levels(cfg["levels"])
    solver = _solver_config(cfg.get("solver"), args.seed, _jobs(args))
    try:
        data = read_csv(data_path)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset: {exc.strerror}", "data") from None
    if data.p != model.p:
        raise ConfigError(f"dataset has p={data.p} but model has p={model.p}", "model.p")
    rep = fit_incvar(data, model, loss, levels, solver)
    report = {
        "best_theta": rep.best_theta.to_dict(), "best_objective": rep.best_objective,
        "termination": rep.termination, "restart_index_of_best": rep.restart_index_of_best,
        "terminations": rep.terminations, "traces": rep.traces,
        "levels": {"alpha": levels.alpha, "beta": levels.beta}, "loss": loss.tag,
        "solver": {k: v for k, v in asdict(solver).items() if k != "n_jobs"},
    }
    _write_json(out / "solve_report.json", report)
    print(f"objective {rep.best_objective:.10g}")


def cmd_sweep(args, cfg, out):
    from .experiments import SCENARIOS, ScenarioConfig, emit, run_sweep
    grid_key = f"{SCENARIOS[cfg['scenario']]}_grid"
    if grid_key not in cfg:
        raise ConfigError(f"required for scenario {cfg['scenario']!r}", grid_key)
    extra = [k for k in ("eps_grid", "beta_grid", "alpha_grid", "k_grid")
             if k in cfg and k != grid_key]
    if extra:
        raise ConfigError(f"not used by scenario {cfg['scenario']!r}", extra[0])
    jobs = _jobs(args)
    kwargs = {k: cfg[k] for k in ("gamma_cvar", "noise_sigma", "n_nominal", "n_contam",
                                  "n_perturbed", "contamination") if k in cfg}
    if "levels" in cfg:
        kwargs["levels"] = _levels(cfg["levels"])
    if "estimators" in cfg:
        kwargs["estimators"] = tuple(cfg["estimators"])
    kwargs["master_seed"] = args.seed if args.seed is not None else cfg.get("master_seed", 0)
    kwargs["solver"] = _solver_config(cfg.get("solver"), None, 1)
    config = ScenarioConfig(cfg["scenario"], tuple(cfg[grid_key]), **kwargs)
    result = run_sweep(config, n_jobs=jobs)
    emit(result, out / "sweep.csv", out / "sweep.svg",
         record_seconds=cfg.get("record_seconds", False))
    _write_json(out / "metadata.json", {**result.metadata, "tbar_true": result.tbar_true})
    failed = sum(r.failed for r in result.rows)
    print(f"{len(result.rows)} rows written to {out / 'sweep.csv'} ({failed} failed)")


def cmd_prokhorov(args, cfg, out):
    from .metrics import EmpiricalCloud, prokhorov_distance
    clouds = []
    for key in ("p", "q"):
        try:
            clouds.append(EmpiricalCloud.from_dataset(read_csv(_relative(args.config, cfg[key]))))
        except OSError as exc:
            raise ConfigError(f"cannot read point cloud: {exc.strerror}", key) from None
    if len(clouds[0]) != len(clouds[1]):
        raise ConfigError("clouds must have the same number of points", "q")
    dist, cert = prokhorov_distance(*clouds)
    _write_json(out / "certificate.json", cert.to_dict())
    print(format(dist, ".17g"))


def cmd_gen(args, cfg, out):
    from .experiments import gen_contamination, gen_nominal, gen_perturbed
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    sigma = cfg.get("noise_sigma", 0.05)
    kind = cfg["generator"]
    if kind == "perturbed":
        if "k" not in cfg:
            raise ConfigError("required for the perturbed generator", "k")
        data = gen_perturbed(cfg["k"], seed, cfg.get("n", 1000), sigma)
    else:
        fn = gen_nominal if kind == "nominal" else gen_contamination
        data = fn(seed, cfg.get("n", 200), sigma)
    path = out / f"{kind}.csv"
    write_csv(data, path)
    print(f"{len(data)} points written to {path}")


def cmd_selftest(args, cfg, out):
    from .selftest import run_selftest
    _, failed = run_selftest(seed=args.seed if args.seed is not None else 0)
    return EXIT_OK if failed == 0 else EXIT_INVALID


COMMANDS = {"fit": cmd_fit, "sweep": cmd_sweep, "prokhorov": cmd_prokhorov,
            "gen": cmd_gen, "selftest": cmd_selftest}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.command, args.config) if args.config else None
        if cfg is not None and args.command == "selftest":
            raise ConfigError("selftest takes no config", "--config")
        _jobs(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        status = COMMANDS[args.command](args, cfg, out)
        return EXIT_OK if status is None else status
    except NumericalFailure as exc:
        print(f"incvar: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InCVaRError, OSError) as exc:
        print(f"incvar: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
