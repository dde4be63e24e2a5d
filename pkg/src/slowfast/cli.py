"""Config-driven experiment runner.

Subcommands mirror the experiment kinds (plus `run`, which reads the kind
from the config, and `list-models`).  Configs are TOML trees with a fixed
schema; unknown keys are rejected by name.  Exit codes: 0 = pass, 2 = ran
fine but an acceptance rule failed, 1 = any error (parse, validation,
infeasible parameters, crash, usage).

Config schema
-------------
[experiment]   kind (required, one of the subcommand names), id, seed
               (required int), out_dir
[model]        id (required except for lemma-checks) plus the parameters
               listed by `slowfast list-models`
[run]          t_final, n_steps, n_paths, substeps ("auto" or int), x0, y0,
               epsilons, antithetic, fast_mode
[<kind>]       kind-specific section named like the kind with '-' -> '_':
               validate: count, state_halfwidth, t_max
               measure: t, tol, n_samples
               poisson: n_points, tol, n_paths, step, state_halfwidth, s_max
               strong_rate: variant, mode, gamma, expected_exponent, tolerance
               weak_rate: variant, mode, gamma, test_functions
               lemma_checks: tau, betas, gamma
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:                      # Python 3.10
    import tomli as tomllib

from . import __version__
from .engine import BlowUpError, StabilityError
from .io import sha256_file, write_csv
from .measures import InfeasibleBurnInError
from .models import REGISTRY, model_schemas
from .experiments import EXPERIMENT_KINDS, run_experiment

__all__ = ["ExperimentConfig", "RunManifest", "ConfigError", "run", "list_models", "main"]


class ConfigError(ValueError):
    pass


_RUN_KEYS = {
    "t_final": (int, float),
    "n_steps": (int,),
    "n_paths": (int,),
    "substeps": (int, str),
    "x0": (list,),
    "y0": (list,),
    "epsilons": (list,),
    "antithetic": (bool,),
    "fast_mode": (str,),
}

_KIND_SECTIONS = {
    "validate": {"count": (int,), "state_halfwidth": (int, float), "t_max": (int, float)},
    "simulate": {},
    "measure": {"t": (int, float), "tol": (int, float), "n_samples": (int,)},
    "poisson": {"n_points": (int,), "tol": (int, float), "n_paths": (int,),
                "step": (int, float), "state_halfwidth": (int, float),
                "s_max": (int, float)},
    "strong-rate": {"variant": (str,), "mode": (str,), "gamma": (int, float),
                    "expected_exponent": (int, float), "tolerance": (int, float)},
    "weak-rate": {"variant": (str,), "mode": (str,), "gamma": (int, float),
                  "test_functions": (list,)},
    "oracle-compare": {},
    "lemma-checks": {"tau": (int, float), "betas": (list,), "gamma": (int, float)},
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    seed: int
    exp_id: str = "run"
    out_dir: str = "out"
    model_id: str = ""
    model_params: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict) or not data:
            raise ConfigError("empty or malformed config")
        kinds = set(EXPERIMENT_KINDS)
        section_names = {"experiment", "model", "run"} | {
            k.replace("-", "_") for k in kinds
        }
        for name in data:
            if name not in section_names:
                raise ConfigError(f"unknown config section {name!r}")
        exp = data.get("experiment")
        if not isinstance(exp, dict):
            raise ConfigError("missing required section 'experiment'")
        for key in exp:
            if key not in ("kind", "id", "seed", "out_dir"):
                raise ConfigError(f"unknown key 'experiment.{key}'")
        kind = exp.get("kind")
        if kind not in kinds:
            raise ConfigError(
                f"missing or invalid required key 'experiment.kind' (got {kind!r})"
            )
        if "seed" not in exp or not isinstance(exp["seed"], int):
            raise ConfigError("missing required integer key 'experiment.seed'")
        model = data.get("model", {})
        if not isinstance(model, dict):
            raise ConfigError("'model' must be a table")
        model_id = model.get("id", "")
        if kind != "lemma-checks":
            if not model_id:
                raise ConfigError("missing required key 'model.id'")
            if model_id not in REGISTRY:
                raise ConfigError(f"unknown model id {model_id!r}")
            allowed = set(REGISTRY[model_id]["params"]) | {"id"}
            for key in model:
                if key not in allowed:
                    raise ConfigError(f"unknown key 'model.{key}' for model {model_id!r}")
        run = data.get("run", {})
        for key in run:
            if key not in _RUN_KEYS:
                raise ConfigError(f"unknown key 'run.{key}'")
            if not isinstance(run[key], _RUN_KEYS[key]):
                raise ConfigError(f"key 'run.{key}' has the wrong type")
        extra_name = kind.replace("-", "_")
        extra = data.get(extra_name, {})
        allowed_extra = _KIND_SECTIONS[kind]
        for key in extra:
            if key not in allowed_extra:
                raise ConfigError(f"unknown key '{extra_name}.{key}'")
            if not isinstance(extra[key], allowed_extra[key]):
                raise ConfigError(f"key '{extra_name}.{key}' has the wrong type")
        for name in data:
            if name in {k.replace("-", "_") for k in kinds} and name != extra_name:
                raise ConfigError(
                    f"section {name!r} does not belong to experiment kind {kind!r}"
                )
        model_params = {k: v for k, v in model.items() if k != "id"}
        return cls(
            kind=kind, seed=int(exp["seed"]), exp_id=str(exp.get("id", "run")),
            out_dir=str(exp.get("out_dir", "out")), model_id=model_id,
            model_params=model_params, run=dict(run), extra=dict(extra),
        )

    def to_dict(self) -> dict:
        data = {
            "experiment": {
                "kind": self.kind, "id": self.exp_id, "seed": self.seed,
                "out_dir": self.out_dir,
            }
        }
        if self.model_id:
            data["model"] = {"id": self.model_id, **self.model_params}
        if self.run:
            data["run"] = dict(self.run)
        if self.extra:
            data[self.kind.replace("-", "_")] = dict(self.extra)
        return data

    def to_toml(self) -> str:
        return _emit_toml(self.to_dict())

    def with_overrides(self, seed=None, out_dir=None) -> "ExperimentConfig":
        return ExperimentConfig(
            kind=self.kind, seed=self.seed if seed is None else int(seed),
            exp_id=self.exp_id,
            out_dir=self.out_dir if out_dir is None else str(out_dir),
            model_id=self.model_id, model_params=self.model_params,
            run=self.run, extra=self.extra,
        )


def _emit_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        out = repr(v)
        return out if ("." in out or "e" in out or "inf" in out or "nan" in out) else out + ".0"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_emit_value(u) for u in v) + "]"
    raise ConfigError(f"cannot serialize config value {v!r}")


def _emit_toml(data: dict) -> str:
    lines = []
    for section, body in data.items():
        lines.append(f"[{section}]")
        for key, v in body.items():
            lines.append(f"{key} = {_emit_value(v)}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> ExperimentConfig:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}")
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}")
    return ExperimentConfig.from_dict(data)


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    version: str
    seed: int
    wall_clock_s: float
    outputs: dict

    def to_json(self) -> str:
        return json.dumps(
            {"config_hash": self.config_hash, "version": self.version,
             "seed": self.seed, "wall_clock_s": self.wall_clock_s,
             "outputs": self.outputs},
            indent=2, sort_keys=True,
        )


def _jsonable(obj):
    """Convert numpy scalars/arrays to plain Python for json.dumps."""
    import numpy as np

    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _config_hash(cfg: ExperimentConfig) -> str:
    data = cfg.to_dict()
    data["experiment"].pop("out_dir", None)     # destination is not identity
    payload = json.dumps(data, sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()


def run(config_path, seed=None, out_dir=None, threads: int = 1,
        as_json: bool = False) -> int:
    """Execute the experiment named by the config; returns the exit code."""
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run_config(cfg, seed=seed, out_dir=out_dir, threads=threads,
                      as_json=as_json)


def run_config(cfg: ExperimentConfig, seed=None, out_dir=None,
               threads: int = 1, as_json: bool = False) -> int:
    cfg = cfg.with_overrides(seed=seed, out_dir=out_dir)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    try:
        tables, summary, passed = run_experiment(cfg, out, threads)
    except (StabilityError, InfeasibleBurnInError) as exc:
        print(f"infeasible parameters: {exc}", file=sys.stderr)
        return 1
    except (BlowUpError, ValueError, KeyError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    prefix = f"{cfg.exp_id}-s{cfg.seed}."     # file names carry id and seed
    outputs = {}
    for name, (header, rows) in tables.items():
        path = write_csv(out / f"{prefix}{name}.csv", header, rows)
        outputs[path.name] = sha256_file(path)
    summary_payload = _jsonable({"experiment": cfg.exp_id, "kind": cfg.kind,
                                 "passed": passed, "results": summary})
    summary_path = out / f"{prefix}summary.json"
    summary_path.write_text(json.dumps(summary_payload, indent=2, sort_keys=True) + "\n")
    outputs[summary_path.name] = sha256_file(summary_path)
    # pick up files the runner wrote directly (ensembles, measure dumps)
    for path in sorted(out.glob(f"{prefix}*")):
        if path.name not in outputs and path.name != f"{prefix}manifest.json":
            outputs[path.name] = sha256_file(path)
    manifest = RunManifest(
        config_hash=_config_hash(cfg), version=__version__, seed=cfg.seed,
        wall_clock_s=time.monotonic() - t0, outputs=outputs,
    )
    (out / f"{prefix}manifest.json").write_text(manifest.to_json() + "\n")
    if as_json:
        print(json.dumps(summary_payload, sort_keys=True))
    else:
        status = "PASS" if passed else "FAIL"
        print(f"[{status}] {cfg.kind} '{cfg.exp_id}' -> {out}")
    return 0 if passed else 2


def list_models(as_json: bool = False) -> int:
    schemas = model_schemas()
    if as_json:
        print(json.dumps(schemas, indent=2, sort_keys=True))
        return 0
    for mid, info in schemas.items():
        print(f"{mid}: {info['doc']}")
        for key, desc in info["params"].items():
            print(f"    {key}: {desc}")
    return 0


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; 2 is reserved for acceptance failures
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_run_options(p):
    import os

    p.add_argument("--config", required=True, help="path to a TOML experiment config")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker pool size for per-eps jobs (default: hardware)")
    p.add_argument("--out", default=None, help="override the output directory")
    p.add_argument("--json", action="store_true", help="print the summary as JSON")


def main(argv=None) -> int:
    parser = _Parser(prog="slowfast",
                     description="slow-fast SDE averaging experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    lm = sub.add_parser("list-models", help="print the built-in model registry")
    lm.add_argument("--json", action="store_true")
    runp = sub.add_parser("run", help="run the experiment named in the config")
    _add_run_options(runp)
    for kind in EXPERIMENT_KINDS:
        kp = sub.add_parser(kind, help=f"run a {kind} experiment config")
        _add_run_options(kp)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "list-models":
        return list_models(as_json=args.json)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.command != "run" and cfg.kind != args.command:
        print(f"error: config kind {cfg.kind!r} does not match "
              f"subcommand {args.command!r}", file=sys.stderr)
        return 1
    return run_config(cfg, seed=args.seed, out_dir=args.out,
                      threads=args.threads, as_json=args.json)


if __name__ == "__main__":
    sys.exit(main())
