"""Experiment runner.

    hyersulam {axioms,stabilize,fixed-point,full} --config run.yaml [--seed N]
              [--out-dir DIR] [--star]

The config is YAML (JSON is accepted too).  Keys may be nested or written as
flat dotted paths (``control.theta: 0.1``).  Exit codes: 0 all checks pass,
1 a bound/decay/hypothesis check failed, 2 the config does not parse,
3 the config is invalid, 4 output could not be written, 5 a pipeline stage
raised.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import control as ctl
from .fixed_point import ContractionOperator, MapPoint, dm_iterate, verify_dm_conclusions
from .maps import (
    Bump,
    ConfigError,
    ConstantShift,
    HomomorphismSpec,
    Homogeneous,
    build_perturbed,
    certify,
    mu_palette,
    random_homomorphism_spec,
)
from .cstar import random_unitary
from .module import ModuleDescriptor, check_axioms, probe_set, random_unit_element
from .stabilizer import (
    check_linearity,
    defect_decay,
    stabilize,
    verify_error_bound,
    write_csv,
)

EXIT_PASS, EXIT_FAIL, EXIT_PARSE, EXIT_INVALID, EXIT_IO, EXIT_STAGE = 0, 1, 2, 3, 4, 5
COMMANDS = ("axioms", "stabilize", "fixed-point", "full")
PERTURBATIONS = ("none", "constant_shift", "bump", "homogeneous")


class ParseError(ValueError):
    pass


class ValidationError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage


@dataclass(frozen=True)
class ExperimentConfig:
    dim: int
    rank: int
    theta: float
    p: float
    direction: str
    base: object = "identity"
    perturbation: str = "none"
    shift_norm: float | None = None
    amplitude: float | None = None
    radius: float = 1.0
    perturbation_seed: int = 1
    lipschitz: float | None = None
    N: int | None = None
    probe_count: int = 200
    probe_scales: tuple = (0.01, 0.1, 1.0, 10.0)
    probe_seed: int | None = None
    seed: int = 0
    axiom_samples: int = 200
    tol_axiom: float = 1e-10
    tol_bound: float = 1 + 1e-9
    tol_decay: float = 0.05
    star: bool = False
    fp_max_iter: int = 100
    fp_tol: float = 1e-10
    fp_probes: int = 24
    fp_closure: int = 8
    csv: str = "stabilizer.csv"
    json: str = "report.json"

    @property
    def steps(self) -> int:
        if self.N is not None:
            return self.N
        return 30 if self.direction == "expand" else 20

    def to_dict(self) -> dict:
        """Nested echo; ``parse_config(json.dumps(cfg.to_dict()))`` rebuilds ``cfg``."""
        return {
            "seed": self.seed,
            "algebra": {"dim": self.dim},
            "module": {"rank": self.rank},
            "map": {
                "base": self.base,
                "perturbation": {"kind": self.perturbation, "norm": self.shift_norm,
                                 "amplitude": self.amplitude, "radius": self.radius,
                                 "seed": self.perturbation_seed},
            },
            "control": {"kind": "power", "theta": self.theta, "p": self.p,
                        "direction": self.direction, "lipschitz": self.lipschitz},
            "iterations": {"N": self.N},
            "probes": {"count": self.probe_count, "scales": list(self.probe_scales),
                       "seed": self.probe_seed},
            "axioms": {"samples": self.axiom_samples},
            "tolerances": {"axiom": self.tol_axiom, "bound": self.tol_bound,
                           "decay": self.tol_decay},
            "star": self.star,
            "fixed_point": {"max_iter": self.fp_max_iter, "tol": self.fp_tol,
                            "probes": self.fp_probes, "closure_depth": self.fp_closure},
            "outputs": {"csv": self.csv, "json": self.json},
        }


# dotted key path -> (field name, converter)
_KEYS = {
    "seed": ("seed", int),
    "algebra.dim": ("dim", int),
    "module.rank": ("rank", int),
    "map.base": ("base", None),
    "map.perturbation.kind": ("perturbation", str),
    "map.perturbation.norm": ("shift_norm", float),
    "map.perturbation.amplitude": ("amplitude", float),
    "map.perturbation.radius": ("radius", float),
    "map.perturbation.seed": ("perturbation_seed", int),
    "control.kind": (None, str),
    "control.theta": ("theta", float),
    "control.p": ("p", float),
    "control.direction": ("direction", str),
    "control.lipschitz": ("lipschitz", float),
    "iterations.N": ("N", int),
    "probes.count": ("probe_count", int),
    "probes.scales": ("probe_scales", lambda v: tuple(float(s) for s in v)),
    "probes.seed": ("probe_seed", int),
    "axioms.samples": ("axiom_samples", int),
    "tolerances.axiom": ("tol_axiom", float),
    "tolerances.bound": ("tol_bound", float),
    "tolerances.decay": ("tol_decay", float),
    "star": ("star", bool),
    "fixed_point.max_iter": ("fp_max_iter", int),
    "fixed_point.tol": ("fp_tol", float),
    "fixed_point.probes": ("fp_probes", int),
    "fixed_point.closure_depth": ("fp_closure", int),
    "outputs.csv": ("csv", str),
    "outputs.json": ("json", str),
}


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key != "map.base":
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"config does not parse: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("config must be a mapping of key paths to values")
    flat = _flatten(doc)
    if isinstance(flat.get("map.perturbation"), str):
        flat["map.perturbation.kind"] = flat.pop("map.perturbation")
    unknown = sorted(set(flat) - set(_KEYS))
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")
    kw = {}
    for key, value in flat.items():
        name, conv = _KEYS[key]
        if name is None:
            if value != "power":
                raise ValidationError("control.kind must be 'power'")
            continue
        if value is None:
            continue
        try:
            kw[name] = value if conv is None else conv(value)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{key}: {exc}") from exc
    missing = [k for k in ("dim", "rank", "theta", "p", "direction") if k not in kw]
    if missing:
        raise ValidationError(f"missing required keys: {', '.join(missing)}")
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    try:
        ModuleDescriptor(cfg.dim, cfg.rank)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    if cfg.direction not in ("expand", "contract"):
        raise ValidationError("control.direction must be 'expand' or 'contract'")
    if cfg.direction == "expand" and not 0 <= cfg.p < 1:
        hint = " (p>3 requires direction=contract)" if cfg.p > 3 else ""
        raise ValidationError(f"direction=expand requires p in [0,1), got p={cfg.p}{hint}")
    if cfg.direction == "contract" and not cfg.p > 3:
        raise ValidationError(f"direction=contract requires p>3, got p={cfg.p}")
    if cfg.theta < 0:
        raise ValidationError("control.theta must be nonnegative")
    if cfg.lipschitz is not None and not 0 <= cfg.lipschitz < 1:
        raise ValidationError("control.lipschitz must lie in [0,1)")
    if cfg.perturbation not in PERTURBATIONS:
        raise ValidationError(f"map.perturbation.kind must be one of {PERTURBATIONS}")
    if cfg.perturbation == "constant_shift" and cfg.p != 0:
        raise ValidationError("CONSTANT_SHIFT requires a power control with p=0")
    if cfg.perturbation == "bump" and cfg.direction != "expand":
        raise ValidationError("BUMP requires direction=expand")
    if cfg.perturbation == "homogeneous" and not (cfg.direction == "contract" and cfg.p > 3):
        raise ValidationError("HOMOGENEOUS requires direction=contract and p>3")
    if not 1 <= cfg.steps <= 60:
        raise ValidationError("iterations.N must lie in [1, 60]")
    if cfg.probe_count < 1 or cfg.axiom_samples < 1 or cfg.fp_probes < 1:
        raise ValidationError("probe and sample counts must be positive")
    if cfg.fp_max_iter < 1 or not 0 <= cfg.fp_closure <= 16:
        raise ValidationError("fixed_point.max_iter must be >= 1, closure_depth in [0, 16]")
    if not cfg.probe_scales or min(cfg.probe_scales) <= 0:
        raise ValidationError("probes.scales must be positive")
    if cfg.tol_bound < 0 or cfg.tol_decay < 0 or cfg.tol_axiom < 0:
        raise ValidationError("tolerances must be nonnegative")
    if not isinstance(cfg.base, (str, dict)) or (
            isinstance(cfg.base, str) and cfg.base not in ("identity", "zero", "random")):
        raise ValidationError("map.base must be identity, zero, random or a mapping")
    try:
        build_map(cfg, cfg.perturbation_seed)
    except (ConfigError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc


def descriptor(cfg: ExperimentConfig) -> ModuleDescriptor:
    return ModuleDescriptor(cfg.dim, cfg.rank)


def control_of(cfg: ExperimentConfig) -> ctl.ControlFunction:
    return ctl.power_control(cfg.theta, cfg.p, cfg.direction, cfg.lipschitz)


def base_spec(cfg: ExperimentConfig) -> HomomorphismSpec:
    desc = descriptor(cfg)
    if cfg.base == "identity":
        return HomomorphismSpec()
    if cfg.base == "zero":
        return HomomorphismSpec(zero=True)
    if cfg.base == "random":
        return random_homomorphism_spec(desc, cfg.seed)
    b = dict(cfg.base)
    extra = set(b) - {"permutation", "phase", "unitary_seed"}
    if extra:
        raise ConfigError(f"unknown map.base keys: {sorted(extra)}")
    u = b.get("unitary_seed")
    return HomomorphismSpec(
        permutation=None if b.get("permutation") is None else tuple(b["permutation"]),
        right_unitary=None if u is None else random_unitary(desc.algebra, int(u)),
        phase=float(b.get("phase", 0.0)),
    )


def perturbation_of(cfg: ExperimentConfig, seed: int):
    desc = descriptor(cfg)
    if cfg.perturbation == "constant_shift":
        norm = 2 * cfg.theta if cfg.shift_norm is None else cfg.shift_norm
        return ConstantShift(norm * random_unit_element(desc, seed, 0xC0))
    if cfg.perturbation == "bump":
        return Bump(amplitude=cfg.amplitude, radius=cfg.radius, seed=seed)
    if cfg.perturbation == "homogeneous":
        return Homogeneous(amplitude=cfg.amplitude, p=cfg.p, seed=seed)
    return None


def build_map(cfg: ExperimentConfig, seed: int):
    return build_perturbed(base_spec(cfg), perturbation_of(cfg, seed), control_of(cfg),
                           descriptor(cfg))


@dataclass
class RunReport:
    command: str
    config: dict
    seed: int
    sections: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    duration: float = 0.0
    stabilizer: object = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def hashed(self) -> dict:
        return _clean({"command": self.command, "config": self.config, "seed": self.seed,
                       **self.sections, "checks": self.checks, "passed": self.passed})

    def digest(self) -> str:
        return hashlib.sha256(_dumps(self.hashed()).encode()).hexdigest()


def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - reported with the stage name
        raise StageError(name, exc) from exc


def run_experiment(cfg: ExperimentConfig, command: str = "full") -> RunReport:
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    t0 = time.perf_counter()
    desc = descriptor(cfg)
    rep = RunReport(command=command, config=cfg.to_dict(), seed=cfg.seed)
    S, C = rep.sections, rep.checks

    if command in ("axioms", "full"):
        ax = _stage("axioms", check_axioms, desc, cfg.axiom_samples, cfg.seed, cfg.tol_axiom)
        S["axioms"] = ax.to_dict()
        C["axioms"] = ax.passed

    if command in ("stabilize", "fixed-point", "full"):
        phi = control_of(cfg)
        f = _stage("build_map", build_map, cfg, cfg.perturbation_seed)
        S["map"] = f.describe()
        S["control"] = phi.to_dict()
        S["power_bound_coefficient"] = ctl.power_bound_coefficient(cfg.theta, cfg.p, cfg.direction)
        S["bound_constant"] = ctl.bound_constant(phi)
        probe_seed = cfg.seed if cfg.probe_seed is None else cfg.probe_seed
        probes = _stage("probes", probe_set, desc, cfg.probe_count, cfg.probe_scales, probe_seed)
        N = cfg.steps

        idx = np.arange(len(probes))
        triples = np.stack([probes, probes[(idx + 1) % len(probes)],
                            probes[(idx + 2) % len(probes)]], axis=1)
        dom = _stage("domination", ctl.check_domination, phi, triples)
        S["domination"] = dom.to_dict()
        C["domination"] = dom.passed

        if command in ("stabilize", "full"):
            cert = _stage("certify", certify, f, phi, None, N, cfg.seed, cfg.probe_scales)
            S["certification"] = cert.to_dict()
            C["additive_hypothesis"] = cert.additive_passed

            res = _stage("stabilize", stabilize, f, phi, N, probes, None, cfg.seed, cert)
            rep.stabilizer = res
            S["stabilizer"] = res.to_summary()
            bound = _stage("error_bound", verify_error_bound, res, phi, factor=cfg.tol_bound)
            S["error_bound"] = bound.to_dict()
            C["error_bound"] = bound.passed
            decay = _stage("decay", defect_decay, res, phi, slack=cfg.tol_decay)
            S["decay"] = decay.to_dict(star=cfg.star)
            C["decay"] = decay.passed
            if cfg.star:
                C["star_decay"] = decay.star_ok
            lin = _stage("linearity", check_linearity, res.final, probes,
                         mu_palette(8, cfg.seed), phi, N)
            S["linearity"] = lin.to_dict()
            C["linearity"] = lin.passed

        if command in ("fixed-point", "full"):
            fp_probes = probes[: cfg.fp_probes]
            J = ContractionOperator.for_control(phi)
            diag = _stage("fixed_point", dm_iterate, MapPoint(f, "f"), J, phi, fp_probes,
                          cfg.fp_max_iter, cfg.fp_tol, cfg.fp_closure)
            other = None
            if f.perturbation is not None:
                g = _stage("fixed_point", build_map, cfg, cfg.perturbation_seed + 1)
                other = _stage("fixed_point", dm_iterate, MapPoint(g, "f'"), J, phi, fp_probes,
                               cfg.fp_max_iter, cfg.fp_tol, cfg.fp_closure)
            fp = _stage("fixed_point", verify_dm_conclusions, diag, other)
            S["fixed_point"] = {"diagnostics": diag.to_dict(), "checks": fp.to_dict()}
            C["fixed_point"] = fp.passed

    rep.duration = time.perf_counter() - t0
    return rep


def emit_report(rep: RunReport, cfg: ExperimentConfig, out_dir) -> dict:
    """Write the CSV table (when a stabilizer ran) and the JSON report.

    The JSON ``report`` object is deterministic; ``report_sha256`` hashes its
    canonical serialization and ``timing`` sits outside it.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    if rep.stabilizer is not None:
        paths["csv"] = out / cfg.csv
        try:
            write_csv(rep.stabilizer, paths["csv"])
        except BaseException:
            paths["csv"].unlink(missing_ok=True)
            raise
    paths["json"] = out / cfg.json
    doc = {"report": rep.hashed(), "report_sha256": rep.digest(),
           "timing": {"wall_clock_seconds": rep.duration}}
    paths["json"].write_text(_dumps(doc) + "\n")
    return paths


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hyersulam", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="YAML/JSON experiment config")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--out-dir", default=".", help="directory for CSV/JSON outputs")
    ap.add_argument("--star", action="store_true",
                    help="include the starred triple identity in the verdict")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        if args.seed is not None or args.star:
            cfg = dataclasses.replace(cfg, seed=cfg.seed if args.seed is None else args.seed,
                                      star=cfg.star or args.star)
            validate(cfg)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        rep = run_experiment(cfg, args.command)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        csv_path = Path(args.out_dir) / cfg.csv
        if csv_path.exists():
            csv_path.unlink()
        return EXIT_STAGE
    try:
        paths = emit_report(rep, cfg, args.out_dir)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    for name, ok in rep.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"report: {paths['json']}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
