"""Scenario runner and metric checker.

Scenario files are flat ``key = value`` text with dotted sections::

    domain.N = 65
    domain.metric = euclidean
    target.metric = randers
    target.metric.b = (0.3, 0.1)
    boundary.data = wave
    solver.gradient_tolerance = 1e-9
    diagnostics.ladder_count = 4

Keys below a component name (``target.metric.b``) are constructor
parameters for that component. Values are Python literals; anything that
does not parse as one is kept as a string.
"""

from __future__ import annotations

import argparse
import ast
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    campanato_fit,
    caccioppoli_ratio,
    dirichlet_growth_fit,
    frozen_comparison_decay,
    higher_integrability_check,
    holder_exponent,
    holder_pairs,
    recover_gradient,
    reverse_holder_ratio,
)
from .domain import (
    BOUNDARY_DATA,
    SOURCE_METRICS,
    DomainGrid,
    ResolutionTooCoarse,
    default_probes,
    is_boundary_point,
    make_boundary,
    make_source_metric,
    nested_radii,
)
from .energy import CircleQuadrature, DiscreteMap
from .finsler import METRICS, ContractViolation, ConvexityViolation, make_metric, verify_structure
from .minimizer import SolveConfig, StagnationError, harmonic_extension, minimize

log = logging.getLogger("finsler_harmonic")

EXIT_OK = 0
EXIT_CONVEXITY = 1
EXIT_VALIDATION = 2
EXIT_STAGNATION = 3

OUT_ENV = "FINSLER_HARMONIC_OUT"
DIAGNOSTIC_KINDS = ("dirichlet_growth", "campanato", "frozen_comparison", "caccioppoli", "reverse_holder")
BUNDLED = ("euclid_affine", "riem_u_smooth", "randers_smooth", "rough_sigma_quarter", "curved_domain")


class ConfigError(ContractViolation):
    """The scenario file does not parse or validate."""


# --- config -------------------------------------------------------------------


def parse_value(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def parse_config_text(text: str) -> dict:
    """Flat dict of dotted keys; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key = key.strip()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_value(value.strip())
    return out


def _sub(flat, prefix):
    prefix = prefix + "."
    return {k[len(prefix):]: v for k, v in flat.items() if k.startswith(prefix)}


def _probe_list(value):
    if value in ("default", "interior", "edges"):
        interior, edges = default_probes()
        return {"default": interior + edges, "interior": interior, "edges": edges}[value]
    pts = value if isinstance(value[0], (tuple, list)) else (value,)
    return [tuple(float(c) for c in p) for p in pts]


def _as_tuple(value):
    return tuple(value) if isinstance(value, (tuple, list)) else (value,)


@dataclass
class ScenarioConfig:
    N: int = 33
    source_metric: str = "euclidean"
    source_params: dict = field(default_factory=dict)
    target_metric: str = "euclidean"
    target_params: dict = field(default_factory=dict)
    boundary: str = "affine"
    boundary_params: dict = field(default_factory=dict)
    circle_nodes: int = 64
    solver: SolveConfig = field(default_factory=SolveConfig)
    init_perturbation: float = 0.0
    probes: list = field(default_factory=lambda: _probe_list("default"))
    ladder_count: int = 4
    q_values: tuple = (2.5,)
    kinds: tuple = DIAGNOSTIC_KINDS
    frozen_probes: list = field(default_factory=lambda: [(0.5, 0.5)])
    frozen_tolerance: float = 1e-10
    sample_budget: int = 200
    output_dir: str | None = None
    seed: int = 0

    @classmethod
    def from_flat(cls, flat: dict) -> "ScenarioConfig":
        flat = dict(flat)
        kw = {}
        simple = {
            "domain.N": "N", "domain.metric": "source_metric", "target.metric": "target_metric",
            "boundary.data": "boundary", "quadrature.circle_nodes": "circle_nodes",
            "solver.init_perturbation": "init_perturbation",
            "diagnostics.ladder_count": "ladder_count", "diagnostics.frozen_tolerance": "frozen_tolerance",
            "structure.sample_budget": "sample_budget", "output.dir": "output_dir", "seed": "seed",
        }
        for key, name in simple.items():
            if key in flat:
                kw[name] = flat.pop(key)
        kw["source_params"] = _sub(flat, "domain.metric")
        kw["target_params"] = _sub(flat, "target.metric")
        kw["boundary_params"] = _sub(flat, "boundary.data")
        for k in [k for k in flat if k.startswith(("domain.metric.", "target.metric.", "boundary.data."))]:
            del flat[k]
        solver_keys = {f.name for f in fields(SolveConfig)}
        solver = {}
        for k in [k for k in flat if k.startswith("solver.")]:
            name = k[len("solver."):]
            if name not in solver_keys:
                raise ConfigError(f"unknown solver key {k!r}; known: {', '.join(sorted(solver_keys))}")
            solver[name] = flat.pop(k)
        if "diagnostics.probes" in flat:
            kw["probes"] = _probe_list(flat.pop("diagnostics.probes"))
        if "diagnostics.frozen_probes" in flat:
            value = flat.pop("diagnostics.frozen_probes")
            kw["frozen_probes"] = [] if value == "none" else _probe_list(value)
        if "diagnostics.q" in flat:
            kw["q_values"] = tuple(float(q) for q in _as_tuple(flat.pop("diagnostics.q")))
        if "diagnostics.kinds" in flat:
            value = flat.pop("diagnostics.kinds")
            kw["kinds"] = tuple(value.replace(" ", "").split(",")) if isinstance(value, str) else tuple(value)
        if flat:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(flat))}")
        try:
            kw["solver"] = SolveConfig(**solver)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self):
        if not isinstance(self.N, int) or self.N < 9:
            raise ConfigError(f"domain.N must be an integer with N >= 9 (got {self.N!r})")
        registries = (
            ("domain.metric", self.source_metric, SOURCE_METRICS),
            ("target.metric", self.target_metric, METRICS),
            ("boundary.data", self.boundary, BOUNDARY_DATA),
        )
        for key, name, registry in registries:
            if name not in registry:
                raise ConfigError(f"{key}: unknown name {name!r}; registered: {', '.join(sorted(registry))}")
        for kind in self.kinds:
            if kind not in DIAGNOSTIC_KINDS:
                raise ConfigError(f"diagnostics.kinds: unknown {kind!r}; known: {', '.join(DIAGNOSTIC_KINDS)}")
        for q in self.q_values:
            if not 2 < q <= 3:
                raise ConfigError(f"diagnostics.q values must lie in (2, 3] (got {q})")
        if self.ladder_count < 3:
            raise ConfigError("diagnostics.ladder_count must be at least 3")
        if self.circle_nodes < 16:
            raise ConfigError("quadrature.circle_nodes must be at least 16")
        if self.init_perturbation < 0:
            raise ConfigError("solver.init_perturbation must be nonnegative")
        for p in self.probes:
            if len(p) != 2 or not all(0 <= c <= 1 for c in p):
                raise ConfigError(f"probe {p} is not a point of the unit square")
        for p in self.frozen_probes:
            if p not in self.probes or is_boundary_point(p):
                raise ConfigError(f"frozen probe {p} must be one of the interior probes")

    def echo(self) -> dict:
        d = asdict(self)
        d["solver"] = asdict(self.solver)
        d["probes"] = [list(p) for p in self.probes]
        d["frozen_probes"] = [list(p) for p in self.frozen_probes]
        d["q_values"] = list(self.q_values)
        d["kinds"] = list(self.kinds)
        d.pop("output_dir")
        return _jsonable(d)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        bundled = resources.files("finsler_harmonic") / "scenarios" / f"{path.stem}.cfg"
        if path.parent == Path(".") and bundled.is_file():
            return ScenarioConfig.from_flat(parse_config_text(bundled.read_text(encoding="utf-8")))
        raise ConfigError(f"config file {path} not found (bundled: {', '.join(BUNDLED)})")
    return ScenarioConfig.from_flat(parse_config_text(path.read_text(encoding="utf-8")))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# --- scenario ----------------------------------------------------------------


@dataclass
class Scenario:
    cfg: ScenarioConfig
    grid: DomainGrid
    g: object
    F: object
    phi: object
    quad: CircleQuadrature

    @classmethod
    def build(cls, cfg: ScenarioConfig) -> "Scenario":
        try:
            return cls(
                cfg,
                DomainGrid(cfg.N),
                make_source_metric(cfg.source_metric, **cfg.source_params),
                make_metric(cfg.target_metric, **cfg.target_params),
                make_boundary(cfg.boundary, **cfg.boundary_params),
                CircleQuadrature(cfg.circle_nodes),
            )
        except TypeError as exc:
            raise ConfigError(f"bad component parameters: {exc}") from None

    def ladders(self):
        out = {}
        for p in self.cfg.probes:
            try:
                out[p] = nested_radii(self.grid, p, self.cfg.ladder_count)
            except ResolutionTooCoarse as exc:
                raise ConfigError(f"probe {p}: {exc}") from None
        return out

    def initial_map(self) -> DiscreteMap:
        init = harmonic_extension(self.grid, self.phi)
        amp = self.cfg.init_perturbation
        if amp > 0:
            rng = np.random.default_rng(self.cfg.solver.deterministic_seed)
            noise = rng.uniform(-amp, amp, init.values.shape)
            noise[self.grid.boundary_mask] = 0.0
            init = DiscreteMap(self.grid, init.values + noise)
        return init


def _probe_diagnostics(scn: Scenario, u: DiscreteMap, field, probe, radii, workers):
    """Fits and per-radius rows for one probe: {kind: (values or None, fit dict or skip)}."""
    cfg = scn.cfg
    out = {}
    interior = not is_boundary_point(probe)
    kinds = cfg.kinds
    if "dirichlet_growth" in kinds:
        fit = dirichlet_growth_fit(u, probe, radii)
        out["dirichlet_growth"] = (fit.values, fit.to_dict())
    if "campanato" in kinds:
        if interior:
            fit = campanato_fit(u, probe, radii, field)
            d = fit.to_dict()
            d["alpha"] = fit.alpha
            out["campanato"] = (fit.values, d)
        else:
            out["campanato"] = (None, {"skip_reason": "boundary probe; interior diagnostic"})
    frozen_kinds = [k for k in ("frozen_comparison", "caccioppoli", "reverse_holder") if k in kinds]
    if not frozen_kinds:
        return out
    if not interior:
        reason = "boundary probe; interior diagnostic"
    elif probe not in cfg.frozen_probes:
        reason = "probe not listed in diagnostics.frozen_probes"
    else:
        reason = None
    if reason is not None:
        for k in frozen_kinds:
            if k == "reverse_holder":
                for q in cfg.q_values:
                    out[f"reverse_holder_q{q:g}"] = (None, {"skip_reason": reason})
            else:
                out[k] = (None, {"skip_reason": reason})
        return out
    solves = {}

    def keep(window, v):
        solves[window.radius] = (window, v)

    fcfg = SolveConfig(**{**asdict(cfg.solver), "gradient_tolerance": cfg.frozen_tolerance})
    fit = frozen_comparison_decay(u, scn.F, scn.grid, scn.g, probe, radii, fcfg, scn.quad,
                                  q=cfg.q_values[0], workers=workers, on_solve=keep)
    values = {r: v for r, v in zip(fit.radii, fit.values)}
    if "frozen_comparison" in kinds:
        out["frozen_comparison"] = ([values.get(r, math.nan) for r in radii], fit.to_dict())
    if "caccioppoli" in kinds:
        vals = []
        for r in radii:
            if r not in solves:
                vals.append(None)
                continue
            window, v = solves[r]
            vals.append(caccioppoli_ratio(v, [window])[0])
        out["caccioppoli"] = (_ratio_values(vals), {"windows": _ratio_dicts(vals, radii)})
    if "reverse_holder" in kinds:
        for q in cfg.q_values:
            vals = []
            for r in radii:
                if r not in solves:
                    vals.append(None)
                    continue
                window, v = solves[r]
                vals.append(reverse_holder_ratio(v, [window], q)[0])
            out[f"reverse_holder_q{q:g}"] = (_ratio_values(vals), {"windows": _ratio_dicts(vals, radii)})
    return out


def _ratio_values(ratios):
    return [math.nan if r is None or r.ratio is None else r.ratio for r in ratios]


def _ratio_dicts(ratios, radii):
    return [
        {"radius": R, "ratio": None, "skip_reason": "frozen solve failed"} if r is None else r.to_dict()
        for r, R in zip(ratios, radii)
    ]


def diagnostic_names(cfg: ScenarioConfig):
    names = []
    for k in DIAGNOSTIC_KINDS:
        if k not in cfg.kinds:
            continue
        if k == "reverse_holder":
            names.extend(f"reverse_holder_q{q:g}" for q in cfg.q_values)
        else:
            names.append(k)
    return names


def run_scenario(cfg: ScenarioConfig, out_dir: Path, out_source: str, workers: int = 1) -> tuple[dict, int]:
    """Run one scenario, write every output file, return (report, exit code)."""
    timings = {}
    t_all = time.perf_counter()
    scn = Scenario.build(cfg)
    ladders = scn.ladders()
    report = {
        "version": __version__,
        "config": cfg.echo(),
        "output": {"dir": str(out_dir), "source": out_source},
    }

    t = time.perf_counter()
    try:
        table = verify_structure(scn.F, cfg.sample_budget, cfg.seed)
    except ConvexityViolation as exc:
        raise ConfigError(f"target metric violates strong convexity: {exc}") from None
    report["structure"] = table.to_dict()
    timings["structure"] = time.perf_counter() - t

    t = time.perf_counter()
    init = scn.initial_map()
    try:
        res = minimize(scn.F, scn.grid, scn.g, scn.phi, init, cfg.solver, scn.quad, workers)
    except StagnationError as exc:
        timings["solve"] = time.perf_counter() - t
        report["solve"] = {"status": "stagnated", "message": str(exc), "iterations": exc.iterations,
                           "init_digest": init.digest()}
        report["timings"] = timings
        _write_json(out_dir / "report.json", report)
        return report, EXIT_STAGNATION
    timings["solve"] = time.perf_counter() - t
    report["solve"] = {"status": "converged" if res.converged else "iteration_cap", **res.summary(),
                       "energy_history": res.history}

    t = time.perf_counter()
    u = res.map
    field = recover_gradient(u)
    probes = list(ladders)
    # probes run in parallel threads; each frozen solve then stays single-threaded
    jobs = lambda p: _probe_diagnostics(scn, u, field, p, ladders[p], 1)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            per_probe = list(pool.map(jobs, probes))
    else:
        per_probe = [jobs(p) for p in probes]
    names = diagnostic_names(cfg)
    rows, fits = [], []
    for p, result in zip(probes, per_probe):
        entry = {"probe": list(p), "kind": "boundary" if is_boundary_point(p) else "interior",
                 "radii": ladders[p], "diagnostics": {}}
        for name in names:
            values, info = result[name]
            entry["diagnostics"][name] = info
            for k, R in enumerate(ladders[p]):
                v = math.nan if values is None or values[k] is None else values[k]
                rows.append((p[0], p[1], name, R, v))
        fits.append(entry)
    extra = {"higher_integrability": {}, "holder_exponent": None}
    for q in cfg.q_values:
        extra["higher_integrability"][f"q{q:g}"] = higher_integrability_check(u, scn.phi, q)
    try:
        extra["holder_exponent"] = holder_exponent(u, holder_pairs(scn.grid))
    except ContractViolation as exc:
        extra["holder_exponent_skip"] = str(exc)
    timings["diagnostics"] = time.perf_counter() - t

    report["diagnostics"] = {
        "diagnostic_names": names,
        "tolerances": {"degenerate_floor": 1e-14, "frozen_gradient_tolerance": cfg.frozen_tolerance,
                       "gradient_tolerance": cfg.solver.gradient_tolerance},
        "probes": fits,
        "global": extra,
    }
    timings["total"] = time.perf_counter() - t_all
    report["timings"] = timings

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "report.json", report)
    _write_csv(out_dir / "decay_fits.csv", ("probe_x", "probe_y", "diagnostic", "radius", "value"), rows)
    _write_fields(out_dir, u, field)
    return report, EXIT_OK


def _fmt(v):
    if isinstance(v, str):
        return v
    return repr(float(v))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(c) for c in row])


def _write_json(path, report):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_fields(out_dir, u: DiscreteMap, field):
    grid = u.grid
    n = u.target_dim
    _write_csv(out_dir / "field_u.csv", ["x", "y"] + [f"u{i + 1}" for i in range(n)],
               (list(x) + list(v) for x, v in zip(grid.nodes, u.values)))
    header = ["x", "y"] + [f"d{a + 1}u{i + 1}" for a in range(2) for i in range(n)]
    _write_csv(out_dir / "field_grad.csv", header,
               (list(x) + list(G.ravel()) for x, G in zip(grid.nodes, field.gradient)))


def resolve_output(flag, cfg: ScenarioConfig):
    if flag:
        return Path(flag), "flag"
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV]), "env"
    if cfg.output_dir:
        return Path(cfg.output_dir), "config"
    return Path("out"), "default"


# --- verify-metric -----------------------------------------------------------


def _parse_params(items):
    params = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects k=v, got {item!r}")
        params[key.strip()] = parse_value(value.strip())
    return params


def format_table(d: dict) -> str:
    rows = [
        ("metric", d["metric"]),
        ("params", json.dumps(d["params"], sort_keys=True)),
        ("samples", d["samples"]),
        ("homogeneity deviation (analytic)", f"{d['homogeneity_deviation_analytic']:.3e}"),
        ("homogeneity deviation (fd)", f"{d['homogeneity_deviation_fd']:.3e}"),
        ("Euler deviation (analytic)", f"{d['euler_deviation_analytic']:.3e}"),
        ("Euler deviation (fd)", f"{d['euler_deviation_fd']:.3e}"),
        ("lambda_min, lambda_max", f"({d['lambda_min']:.6g}, {d['lambda_max']:.6g})"),
        ("c_omega, sigma", f"({d['c_omega']:.6g}, {d['sigma'] if d['sigma'] is None else format(d['sigma'], '.4g')})"),
    ]
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def verify_metric_command(name, params, budget, seed, json_path=None, stream=None) -> int:
    stream = stream or sys.stdout
    F = make_metric(name, **params)
    try:
        table = verify_structure(F, budget, seed).to_dict()
    except ConvexityViolation as exc:
        print(f"convexity violation: {exc}", file=sys.stderr)
        print(json.dumps({"metric": name, "params": _jsonable(params), "convexity_violation": {
            "u": _jsonable(exc.u), "X": _jsonable(exc.X), "eigenvalue": exc.eigenvalue}}, sort_keys=True),
            file=stream)
        return EXIT_CONVEXITY
    print(format_table(table), file=stream)
    text = json.dumps(_jsonable(table), sort_keys=True)
    print(text, file=stream)
    if json_path:
        Path(json_path).write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


# --- entry point -------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="finsler-harmonic", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="minimise a scenario and write its diagnostics")
    run.add_argument("config", help=f"scenario file, or a bundled name ({', '.join(BUNDLED)})")
    run.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and output.dir)")
    run.add_argument("--seed", type=int, help="seed for structural sampling and init perturbation")
    run.add_argument("--threads", type=int, default=1)
    vm = sub.add_parser("verify-metric", help="structural checks of one target metric")
    vm.add_argument("name")
    vm.add_argument("--param", action="append", metavar="K=V")
    vm.add_argument("--budget", type=int, default=200, help="random slit-bundle samples")
    vm.add_argument("--seed", type=int, default=0)
    vm.add_argument("--json", help="also write the JSON row to this file")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "verify-metric":
            return verify_metric_command(args.name, _parse_params(args.param), args.budget, args.seed, args.json)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.solver.deterministic_seed = args.seed
        out_dir, source = resolve_output(args.out, cfg)
        report, code = run_scenario(cfg, out_dir, source, max(1, args.threads))
    except ContractViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if code == EXIT_STAGNATION:
        print(f"error: solver stagnated: {report['solve']['message']}", file=sys.stderr)
    else:
        s = report["solve"]
        print(f"{s['status']}: energy {s['final_energy']:.12g} after {s['iterations']} iterations; "
              f"wrote {out_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
