"""Run configured checks and sweeps; write reports, CSV tables and matrix dumps."""
from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from ..errors import ConfigInvalid, DimensionCapExceeded, ScatlabError
from ..generators import SPECTRAL_CUTOFF
from ..scattering import ScatteringModel, _anchored_bracket, local_s_operator
from ..stepper import MIDPOINT, TimeGrid, approximative_solution, exp_product_propagator
from .checks import REGISTRY, Outcome, RunContext, defaults, dyson_remainders, fitted_slope
from .config import ExperimentConfig, canonical_json
from .report import (CheckRecord, RunReport, append_run_log, compare, write_matrix_csv,
                     write_matrix_dump, write_table_csv)

RUN_LOG = "run_log.jsonl"


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        return value.item()
    return value


def inputs_hash(config: ExperimentConfig, spec) -> str:
    params = dict(defaults(spec.name), **spec.params)
    refs = {k: config.raw.get("functions", {}).get(v) for k, v in params.items()
            if k in ("f", "g", "h") and isinstance(v, str)}
    payload = {"check": spec.name, "params": _jsonable(params), "functions": refs,
               "truncation": config.raw.get("truncation", {}),
               "polynomial": config.raw.get("polynomial", {}),
               "stepper": config.raw.get("stepper", {}), "seed": config.seed}
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def _execute(ctx: RunContext, spec):
    func = REGISTRY[spec.name]
    allowed = defaults(spec.name)
    for key in spec.params:
        if key not in allowed:
            raise ConfigInvalid(f"{spec.path}.{key}", f"unknown parameter for {spec.name}")
    start = time.perf_counter()
    try:
        outcomes = func(ctx, **spec.params)
    except (ConfigInvalid, DimensionCapExceeded):
        raise
    except ScatlabError as exc:
        outcomes = [Outcome(spec.name, float("nan"), None, "le",
                            {"error": f"{type(exc).__name__}: {exc}"})]
    return outcomes, time.perf_counter() - start


def run_checks(config: ExperimentConfig, workers: Optional[int] = None):
    """Evaluate every configured check; returns (records, timings)."""
    ctx = RunContext(config)
    workers = workers or config.workers
    specs = list(config.checks)
    if workers > 1 and len(specs) > 1:
        ctx.model  # build shared operators before fanning out
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda s: _execute(ctx, s), specs))
    else:
        results = [_execute(ctx, s) for s in specs]
    records, timings = [], {}
    for spec, (outcomes, seconds) in zip(specs, results):
        h = inputs_hash(config, spec)
        timings[spec.name] = seconds
        for o in outcomes:
            value = _jsonable(o.value)
            records.append(CheckRecord(o.name, value, _jsonable(o.tolerance), o.comparison,
                                       compare(value, o.tolerance, o.comparison), h,
                                       _jsonable(dict(o.details))))
    return records, timings, ctx


def run(config: ExperimentConfig, out_dir=None, workers: Optional[int] = None) -> RunReport:
    """Execute the configured checks (and sweep); write artifacts when ``out_dir`` is set."""
    wall = time.perf_counter()
    records, timings, ctx = run_checks(config, workers)
    out = Path(out_dir) if out_dir is not None else (
        Path(config.out_dir) if config.out_dir else None)
    artifacts = []
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        basis_hash = ctx.model.basis.fingerprint() if config.dump else None
        for fname in config.dump:
            S = ctx.s_operator(fname)
            write_matrix_dump(out / f"S_{fname}.bin", S.matrix, basis_hash)
            write_matrix_csv(out / f"S_{fname}.csv", S.matrix)
            artifacts += [f"S_{fname}.bin", f"S_{fname}.csv"]
            if S.diagnostics is not None:
                S.diagnostics.write_csv(out / f"approx_{fname}.csv")
                artifacts.append(f"approx_{fname}.csv")
        if config.sweep is not None:
            table = sweep(config, config.sweep.axis, config.sweep.values, workers,
                          config.sweep.function)
            name = f"sweep_{config.sweep.axis}.csv"
            table.write_csv(out / name)
            artifacts.append(name)
    report = RunReport(config.name, config.hash(), __version__, config.seed, records, artifacts)
    if out is not None:
        report.write(out / "report.json")
        append_run_log(out / RUN_LOG, {
            "config": config.name, "config_hash": report.config_hash,
            "passed": report.passed, "wall_seconds": time.perf_counter() - wall,
            "check_seconds": timings, "unix_time": time.time()})
    return report


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepTable:
    axis: str
    columns: list
    rows: list
    slopes: dict

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def write_csv(self, path):
        trailer = [["slope"] + [self.slopes.get(c, float("nan")) for c in self.columns[1:]]]
        return write_table_csv(path, self.columns, self.rows,
                               trailer if len(self.rows) > 1 else None)


def _unit(config, fname):
    peak = max((abs(b["amplitude"]) for b in config.functions[fname]), default=0.0)
    if peak == 0.0:
        raise ConfigInvalid(f"$.functions.{fname}", "sweep needs a nonzero coupling")
    return config.function(fname).scaled(1.0 / peak)


def _point(config: ExperimentConfig, axis: str, value, fname: str, context: dict) -> dict:
    if axis in ("n_max", "K"):
        key = "n_max" if axis == "n_max" else "mode_cutoff"
        cfg = config.with_changes(truncation={key: int(value)})
        model = ScatteringModel(cfg.truncation, cfg.polynomial)
        S = local_s_operator(model, cfg.function(fname), cfg.stepper)
        return {"dim": model.dim, "unitarity": S.unitarity_deviation,
                "vacuum_persistence": float(abs(S.matrix[0, 0])),
                "saturation_level": S.diagnostics.saturation_level}
    model = context["model"]
    if axis == "dt":
        func = config.function(fname)
        sigma, tau = context["bracket"]
        gen = context["gen"]
        grid = TimeGrid(sigma, tau, int(round((tau - sigma) / value)))
        U = exp_product_propagator(gen, grid, config.stepper.rule,
                                   store_every=grid.n_steps).final
        S = local_s_operator(model, func, replace(config.stepper, dt=float(value)))
        return {"error": float(np.linalg.norm(U - context["reference"], 2)),
                "unitarity": S.unitarity_deviation}
    if axis == "approx_level":
        gen, grid = context["gen"], context["grid"]
        table, _ = approximative_solution(gen, grid, config.stepper.kind, (float(value),),
                                          config.stepper.rule, store_every=grid.n_steps,
                                          require_saturation=False)
        return {"deviation": float(np.linalg.norm(table.final - context["reference"], 2))}
    if axis == "amplitude":
        rem = dyson_remainders(model, context["unit"], [float(value)], config.stepper)
        return {"dyson1_remainder": rem[1][0], "dyson2_remainder": rem[2][0]}
    raise ConfigInvalid("$.sweep.axis", f"unknown axis {axis!r}")


def _sweep_context(config, axis, values, fname):
    if axis in ("n_max", "K"):
        return {}
    model = ScatteringModel(config.truncation, config.polynomial)
    ctx = {"model": model}
    if axis == "amplitude":
        ctx["unit"] = _unit(config, fname)
        return ctx
    func = config.function(fname)
    if func.t_support is None:
        raise ConfigInvalid(f"$.functions.{fname}", "sweep needs a nonzero coupling")
    gen = model.dirac_generator(func)
    ctx["gen"] = gen
    if axis == "dt":
        dt_max = max(values)
        sigma, tau = _anchored_bracket(func.t_support, dt_max, config.stepper.margin)
        for i, v in enumerate(values):
            n = (tau - sigma) / v
            if abs(n - round(n)) > 1e-9 * max(n, 1.0):
                raise ConfigInvalid(f"$.sweep.values[{i}]",
                                    f"dt={v} does not divide the bracket {(sigma, tau)}")
        ref_dt = min(values) / 16
        grid = TimeGrid(sigma, tau, int(round((tau - sigma) / ref_dt)))
        ctx["bracket"] = (sigma, tau)
        ctx["reference"] = exp_product_propagator(gen, grid, MIDPOINT,
                                                  store_every=grid.n_steps).final
        return ctx
    # approx_level: reference is the saturated spectral cutoff at the configured dt
    dt = config.stepper.dt
    sigma, tau = _anchored_bracket(func.t_support, dt, config.stepper.margin)
    grid = TimeGrid(sigma, tau, int(round((tau - sigma) / dt)))
    times = np.array([grid.sample_time(i, config.stepper.rule) for i in range(grid.n_steps)])
    bound = float(np.max(model.assembler(func).spectral_bound(times)))
    ref, _ = approximative_solution(gen, grid, SPECTRAL_CUTOFF, (2 * bound + 1.0,),
                                    config.stepper.rule, store_every=grid.n_steps)
    ctx["grid"] = grid
    ctx["reference"] = ref.final
    return ctx


def sweep(config: ExperimentConfig, axis: str, values, workers: Optional[int] = None,
          function: str = "g") -> SweepTable:
    """One row per value (in input order); log-log slopes of each observable appended."""
    from .config import SWEEP_AXES

    if axis not in SWEEP_AXES:
        raise ConfigInvalid("$.sweep.axis", f"expected one of {', '.join(SWEEP_AXES)}")
    if function not in config.functions:
        raise ConfigInvalid("$.sweep.function", f"unknown function {function!r}")
    values = list(values)
    context = _sweep_context(config, axis, values, function)
    workers = workers or config.workers
    if workers > 1 and len(values) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(lambda v: _point(config, axis, v, function, context), values))
    else:
        points = [_point(config, axis, v, function, context) for v in values]
    names = list(points[0]) if points else []
    columns = [axis] + names
    rows = [[v] + [p[n] for n in names] for v, p in zip(values, points)]
    slopes = {}
    if len(values) > 1:
        for n in names:
            ys = [p[n] for p in points]
            if all(isinstance(y, (int, float)) and y is not None for y in ys):
                slopes[n] = fitted_slope(values, ys)
    return SweepTable(axis, columns, rows, slopes)


def run_path(path, out_dir=None, workers=None) -> RunReport:
    from .config import load_config
    return run(load_config(path), out_dir, workers)
