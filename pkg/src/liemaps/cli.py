"""Command line entry point: ``liemaps <subcommand> [options]``."""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .checks import run_checks
from .dynamics import GridSpec, apparent_convergence_scan, dynamical_aperture, level_curve
from .estimates import EstimateError, divisor_sequences, estimate_report
from .maps import extract_generators, henon_map, load_map
from .normalform import ResonanceError, normalize, synthesize_control
from .plot import emit_plot

SUBCOMMANDS = ("normalform", "control", "aperture", "curves", "scan", "verify")

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT, EXIT_RESONANCE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Every knob of a pipeline run; ``None`` entries take derived defaults."""

    map: str = "henon"
    omega: list = field(default_factory=lambda: [math.pi * (math.sqrt(5) - 1)])
    map_file: str | None = None
    r: int = 20
    s_max: int | None = None
    d_max: int | None = None
    control: list = field(default_factory=list)
    control_base: int = 1
    grid_points: int = 4000
    N: int = 10000
    L: float = 1.2
    rho_list: list = field(default_factory=lambda: [0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0])
    r_list: list = field(default_factory=lambda: list(range(2, 21, 2)))
    target_r: int = 10
    control_target_r: int = 10
    n_samples: int = 512
    out: str = "out"
    workers: int = 1
    seed: int = 0
    resonance_tol: float = 1e-10
    resonance_mode: str = "strict"
    threshold: float = 0.02

    def finalize(self) -> "RunConfig":
        if self.s_max is None:
            self.s_max = self.r
        if self.d_max is None:
            self.d_max = self.s_max + 1
        self.validate()
        return self

    def validate(self) -> None:
        if not isinstance(self.omega, list) or not self.omega:
            raise ConfigError("omega must be a non-empty list")
        if self.map not in ("henon", "file"):
            raise ConfigError(f"unknown map {self.map!r}")
        if self.map == "file" and not self.map_file:
            raise ConfigError("map = 'file' needs map_file")
        if not (0 <= self.r <= self.s_max <= self.d_max - 1):
            raise ConfigError("need 0 <= r <= s_max <= d_max - 1")
        for name in ("resonance_tol", "threshold", "L"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.resonance_mode not in ("strict", "permissive"):
            raise ConfigError("resonance_mode must be 'strict' or 'permissive'")
        if self.N < 1 or self.grid_points < 0 or self.n_samples < 64:
            raise ConfigError("need N >= 1, grid_points >= 0 and n_samples >= 64")
        if any(int(c) <= self.control_base for c in self.control):
            raise ConfigError("control extents must exceed control_base")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")
        if max(self.r_list, default=0) > 40 or min(self.r_list, default=0) < 0:
            raise ConfigError("r_list entries must lie in [0, 40]")
        if any(p <= 0 for p in self.rho_list):
            raise ConfigError("rho_list entries must be positive")

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if "omega" in data and not isinstance(data["omega"], list):
            data["omega"] = [data["omega"]]
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | None) -> tuple[RunConfig, str | None]:
    """Read TOML or JSON; a manifest written by a previous run is accepted too."""
    if path is None:
        return RunConfig(), None
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        data = json.loads(text) if p.suffix == ".json" else tomllib.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    sub = None
    if "config" in data and "subcommand" in data:
        sub = data["subcommand"]
        data = data["config"]
    return RunConfig.from_mapping(data), sub


def build_map(cfg: RunConfig):
    if cfg.map == "henon":
        return henon_map(float(cfg.omega[0]))
    try:
        return load_map(cfg.map_file)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot load map: {exc}") from exc


class Artifacts:
    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}
        out.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        data = text.encode("utf-8")
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _estimate_constants(G) -> tuple[float, float]:
    A = G[1].norm()
    C = 0.0
    for s in range(2, G.s_max + 1):
        g = G[s].norm()
        if g > 0:
            C = max(C, (g / A) ** (1.0 / (s - 1)))
    return A, C


def _plans(cfg, rep):
    return [(ext, synthesize_control(rep, cfg.control_base, int(ext), tolerance=cfg.resonance_tol,
                                     mode=cfg.resonance_mode)) for ext in cfg.control]


def _controlled_nf(cfg, plan, r):
    """Normal form of the polynomial map that is actually iterated."""
    pm = plan.controlled_map(max(plan.s_max + 1, 2))
    rep = extract_generators(pm, r)
    return pm, normalize(rep, r, r, tolerance=cfg.resonance_tol, mode=cfg.resonance_mode)


def cmd_normalform(cfg, art, pmap, log):
    rep = extract_generators(pmap, cfg.s_max)
    nf = normalize(rep, cfg.r, cfg.s_max, tolerance=cfg.resonance_tol, mode=cfg.resonance_mode)
    art.write("normal_form.json", nf.to_json() + "\n")
    art.write("norms.csv", nf.norms_csv())
    dt = divisor_sequences(nf.rotation, cfg.s_max)
    art.write("divisors.csv", dt.to_csv())
    A, C = _estimate_constants(nf.G_seq)
    rpt = estimate_report(nf, dt, A, C)
    art.write("estimates.csv", rpt.to_csv())
    log(f"normalized to r={cfg.r} (s_max={cfg.s_max}); estimates hold: {rpt.all_bounds_hold}")
    return EXIT_OK


def cmd_control(cfg, art, pmap, log):
    rep = extract_generators(pmap, cfg.s_max)
    if not cfg.control:
        raise ConfigError("control needs at least one extent (--control)")
    for ext, plan in _plans(cfg, rep):
        art.write(f"control_F{ext}.json", plan.to_json() + "\n")
        nfc = normalize(plan.controlled_representation(), cfg.control_base, int(ext), tolerance=cfg.resonance_tol,
                        mode=cfg.resonance_mode)
        q = max((nfc.Q_seq[s].norm() for s in range(cfg.control_base + 1, int(ext) + 1)), default=0.0)
        log(f"F{ext}: norms {', '.join(f'{k}:{v:.4g}' for k, v in plan.norms().items())}; max |Q| after control {q:.3g}")
    return EXIT_OK


def cmd_aperture(cfg, art, pmap, log):
    grid = GridSpec.from_count(cfg.grid_points, cfg.L)
    maps = [("", pmap)]
    if cfg.control:
        rep = extract_generators(pmap, cfg.s_max)
        maps += [(f"_F{ext}", plan.controlled_map()) for ext, plan in _plans(cfg, rep)]
    for tag, m in maps:
        ap = dynamical_aperture(m, grid, cfg.N, cfg.L, workers=cfg.workers)
        art.write(f"aperture{tag}.csv", ap.to_csv())
        if grid.size:
            art.write(f"aperture{tag}.svg", emit_plot(ap))
        log(f"aperture{tag}: {int((ap.escape_time < 0).sum())} of {grid.size} points survive {cfg.N} iterations")
    return EXIT_OK


def cmd_curves(cfg, art, pmap, log):
    r = max(max(cfg.r_list, default=0), cfg.r)
    nf = normalize(extract_generators(pmap, r), r, r, tolerance=cfg.resonance_tol, mode=cfg.resonance_mode)
    curves = [level_curve(nf, rho, rr, cfg.n_samples) for rho in cfg.rho_list for rr in cfg.r_list]
    lines = ["rho,r,x,y"]
    for c in curves:
        lines.extend(c.to_csv().splitlines()[1:])
    art.write("curves.csv", "\n".join(lines) + "\n")
    art.write("curves.svg", emit_plot(curves))
    loops = sum(c.self_intersecting for c in curves)
    log(f"{len(curves)} level curves, {loops} self-intersecting")
    return EXIT_OK


def cmd_scan(cfg, art, pmap, log):
    r = max(max(cfg.r_list), cfg.target_r)
    nf = normalize(extract_generators(pmap, r), r, r, tolerance=cfg.resonance_tol, mode=cfg.resonance_mode)
    scan = apparent_convergence_scan(nf, cfg.rho_list, cfg.r_list, cfg.target_r, cfg.threshold, cfg.n_samples)
    art.write("scan.json", scan.to_json() + "\n")
    log(f"uncontrolled: recommended rho = {scan.recommended_rho} at r = {cfg.target_r}")
    if scan.recommended_rho is not None:
        art.write("scan.svg", emit_plot([level_curve(nf, scan.recommended_rho, cfg.target_r, cfg.n_samples)]))
    if cfg.control:
        rep = extract_generators(pmap, cfg.s_max)
        for ext, plan in _plans(cfg, rep):
            _, nfc = _controlled_nf(cfg, plan, max(max(cfg.r_list), cfg.control_target_r))
            sc = apparent_convergence_scan(nfc, cfg.rho_list, cfg.r_list, cfg.control_target_r, cfg.threshold,
                                           cfg.n_samples)
            art.write(f"scan_F{ext}.json", sc.to_json() + "\n")
            log(f"F{ext}: recommended rho = {sc.recommended_rho} at r = {cfg.control_target_r}")
    return EXIT_OK


def cmd_verify(cfg, art, pmap, log):
    results = run_checks(pmap, cfg.r, cfg.s_max, cfg.control, cfg.resonance_tol, cfg.resonance_mode, cfg.seed)
    width = max(len(r.name) for r in results)
    for res in results:
        log(f"{res.name:<{width}}  {'PASS' if res.passed else 'FAIL'}  value={res.value:.3e}  limit={res.limit:.1e}")
    art.write("verify.json", _dump([r.to_dict() for r in results]))
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


COMMANDS = {"normalform": cmd_normalform, "control": cmd_control, "aperture": cmd_aperture,
            "curves": cmd_curves, "scan": cmd_scan, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="liemaps", description="Normal forms, control terms and dynamical aperture "
                                                            "of symplectic maps near an elliptic fixed point.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="TOML or JSON run configuration (or a manifest of a previous run)")
    p.add_argument("--omega", type=float, help="frequency of the built-in map")
    p.add_argument("--order", type=int, help="normalization order r")
    p.add_argument("--control", help='comma-separated control extents, e.g. "2,3,4"')
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker threads (0 = all cores)")
    p.add_argument("--seed", type=int, help="seed for the randomized checks")
    return p


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.omega is not None:
        cfg.omega = [args.omega]
    if args.order is not None:
        if cfg.s_max is not None and cfg.s_max < args.order:
            cfg.s_max = None
        if cfg.d_max is not None and cfg.d_max < args.order + 1:
            cfg.d_max = None
        cfg.r = args.order
    if args.control is not None:
        try:
            cfg.control = [int(c) for c in args.control.split(",") if c.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --control value: {args.control!r}") from exc
    if args.out is not None:
        cfg.out = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _error(out: Path | None, code: int, kind: str, message: str, extra=None) -> int:
    report = {"status": "error", "exit_code": code, "kind": kind, "message": message}
    if extra:
        report.update(extra)
    text = json.dumps(report, sort_keys=True)
    print(text, file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = None
    try:
        out = Path(args.out) if args.out else None
        cfg, _ = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        out = Path(cfg.out)
        cfg.finalize()
        pmap = build_map(cfg)
    except ConfigError as exc:
        return _error(out, EXIT_CONFIG, "config", str(exc))
    art = Artifacts(out)
    lines = []

    def log(msg):
        lines.append(msg)
        print(msg)

    t0 = time.perf_counter()
    try:
        code = COMMANDS[args.subcommand](cfg, art, pmap, log)
    except ConfigError as exc:
        return _error(out, EXIT_CONFIG, "config", str(exc))
    except ResonanceError as exc:
        return _error(out, EXIT_RESONANCE, "resonance", str(exc), {"monomials": exc.monomials})
    except EstimateError as exc:
        return _error(out, EXIT_INVARIANT, "estimate", str(exc), {"order": exc.order})
    elapsed = time.perf_counter() - t0
    manifest = {
        "subcommand": args.subcommand,
        "config": asdict(cfg),
        "versions": {"liemaps": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "timings": {"total_seconds": elapsed},
        "artifacts": dict(sorted(art.files.items())),
        "exit_code": code,
    }
    (out / "manifest.json").write_text(_dump(manifest), encoding="utf-8")
    return code


if __name__ == "__main__":
    sys.exit(main())
