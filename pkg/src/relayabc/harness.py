"""Reproducible experiments: run, analyze, reduced-graph census and sweeps.

Each ``cmd_*`` function returns a process exit status:
0 success, 1 a check failed, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import copy
import csv
import itertools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import matrices as mx
from .adversary import StrategySpec
from .config import FORMAT_VERSION, SCENARIO_PRESETS, ScenarioConfig, load_config, preset
from .errors import ConfigInvalid, InconsistentTrace, TooLarge, TraceCorrupt
from .graph import count_reduced_graphs, enumerate_reduced_graphs, source_histogram
from .simulation import SimulationTrace, run_simulation

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

EXACTNESS_TOL = 1e-9
STOCHASTIC_TOL = 1e-12
NEGATIVE_TOL = 1e-15
# windows longer than this are reported as skipped rather than multiplied
MAX_SCRAMBLING_WINDOW = 5000


def _dump(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def validity_violations(trace: SimulationTrace) -> int:
    lo, hi = float(trace.initial.min()), float(trace.initial.max())
    return int(np.count_nonzero((trace.states < lo) | (trace.states > hi)))


def spread_series(trace: SimulationTrace) -> list[float]:
    return [mx.spread(row) for row in trace.states]


def window_spread_series(trace: SimulationTrace) -> list[float]:
    """Spread over the last ``D`` iterations' states (initial values count as before 0)."""
    allst = trace.all_states()
    D = trace.D
    out = []
    for t in range(trace.T):
        lo = max(0, t + 1 - D + 1)
        out.append(mx.spread(allst[lo : t + 2]))
    return out


def settled_at(series, threshold: float) -> int | None:
    """First iteration from which the series stays below ``threshold`` to the end."""
    above = np.flatnonzero(np.asarray(series) >= threshold)
    first = 0 if above.size == 0 else int(above[-1]) + 1
    return first if first < len(series) else None


def _non_increasing(series, start: int) -> bool:
    s = np.asarray(series[start:])
    return bool(np.all(np.diff(s) <= 1e-12 * max(1.0, float(np.max(np.abs(s))) if s.size else 1.0)))


def forged_records(trace: SimulationTrace) -> int:
    """Records in honest views that carry an honest origin but were never signed by it."""
    signed = set(trace.signing_log)
    honest = set(trace.honest)
    bad = 0
    for row in trace.steps:
        for step in row:
            for rec in step.view:
                if rec is not None and rec.origin in honest:
                    if (rec.origin, rec.value, rec.marker) not in signed:
                        bad += 1
    return bad


def build_run_report(config: ScenarioConfig, trace: SimulationTrace) -> dict:
    series = spread_series(trace)
    threshold = config.spread_threshold
    converged = settled_at(series, threshold)
    violations = validity_violations(trace)
    windowed = window_spread_series(trace)
    report = {
        "format_version": FORMAT_VERSION,
        "scenario": config.name,
        "seed": config.seed,
        "m": trace.m,
        "h": trace.h,
        "b": trace.b,
        "D": trace.D,
        "T": trace.T,
        "spread_threshold": threshold,
        "spread_series": series,
        "converged_at": converged,
        "final_spread": series[-1],
        "validity": {
            "ok": violations == 0,
            "violations": violations,
            "honest_range": [float(trace.initial.min()), float(trace.initial.max())],
        },
        "window_spread_non_increasing": _non_increasing(windowed, trace.D),
        "forged_records_in_views": forged_records(trace),
        "rejected_records": int(sum(trace.rejected)),
        "communication": {
            "bytes_per_iteration": list(trace.bytes_sent),
            "total_bytes": int(sum(trace.bytes_sent)),
        },
    }
    if config.analysis.get("matrices", True):
        report["analysis"] = analyze_trace(trace, mode=config.analysis.get("mode", "trace"))
    return report


def analyze_trace(trace: SimulationTrace, mode: str = "trace", threshold: float = mx.POSITIVE,
                  keep_matrices: bool = False) -> dict:
    """Run every matrix check over every complete phase of ``trace``."""
    phases = list(mx.complete_phases(trace))
    result: dict = {
        "mode": mode,
        "positivity_threshold": threshold,
        "tolerances": {
            "exactness": EXACTNESS_TOL,
            "row_sum": STOCHASTIC_TOL,
            "negative_entry": NEGATIVE_TOL,
        },
        "spread_series": spread_series(trace),
    }
    if not phases:
        result.update(note="no analyzable phase", phases=[], exactness_ok=True, stochastic_ok=True)
        return result

    mats, rows = [], []
    for p in phases:
        M = mx.construct_phase_matrix(trace, p, mode)
        mats.append(M)
        err = mx.verify_phase_equation(trace, p, M)
        diag = mx.check_diagonal_property(M, threshold=threshold)
        inherit = mx.check_row_inheritance(M, threshold=threshold)
        sup = mx.check_row_support(M, trace.b, threshold=threshold)
        rows.append({
            "phase": p,
            "equation_error": err,
            "row_sum_residual": mx.row_sum_residual(M),
            "min_entry": float(M.matrix.min()),
            "stochastic": mx.check_row_stochastic(M, STOCHASTIC_TOL, NEGATIVE_TOL),
            "case2_rows": int(np.count_nonzero(M.cases == 2)),
            "diagonal": diag.summary(),
            "row_inheritance": inherit.summary(),
            "row_support": sup.summary(),
        })
    result["phases"] = rows
    result["max_equation_error"] = max(r["equation_error"] for r in rows)
    result["max_row_sum_residual"] = max(r["row_sum_residual"] for r in rows)
    result["exactness_ok"] = result["max_equation_error"] < EXACTNESS_TOL
    result["stochastic_ok"] = all(r["stochastic"] for r in rows)
    result["diagonal_ok"] = all(r["diagonal"]["ok"] for r in rows)
    result["row_inheritance_ok"] = all(r["row_inheritance"]["ok"] for r in rows)
    result["row_support_ok"] = all(r["row_support"]["ok"] for r in rows)

    _, roundtrip = mx.reconstruct_states(trace, mode)
    result["roundtrip_error"] = roundtrip

    if trace.h >= 2 * trace.b + 1:
        matches = [
            mx.block_dominates_reduced_graph(mats[k + 1], mats[k], trace.h, trace.b, threshold)
            for k in range(len(mats) - 1)
        ]
        result["reduced_graph_matches"] = matches
        result["reduced_graph_ok"] = all(x is not None for x in matches)
        window = mx.scrambling_window(trace.h, trace.b, trace.D)
        scr = {"window": window, "r": count_reduced_graphs(trace.h, trace.b)}
        if window > MAX_SCRAMBLING_WINDOW or window > len(mats):
            scr.update(skipped=True, reason=f"{len(mats)} phase matrices, window {window}")
        else:
            cols = mx.scrambling_windows(mats, window, threshold)
            scr.update(skipped=False, columns=cols, ok=all(c is not None for c in cols))
        result["scrambling"] = scr
    if keep_matrices:
        result["_matrices"] = mats
    return result


# -- commands ------------------------------------------------------------------


def _resolve_config(spec) -> ScenarioConfig:
    text = str(spec)
    if text.startswith("preset:"):
        return preset(text.split(":", 1)[1])
    if not Path(text).exists() and text in SCENARIO_PRESETS:
        return preset(text)
    return load_config(text)


def execute_run(config: ScenarioConfig, out_dir) -> tuple[int, dict | None]:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        log.error("cannot create %s: %s", out, exc)
        return EXIT_IO, None
    started = time.perf_counter()
    try:
        trace = run_simulation(config)
    except ConfigInvalid as exc:
        log.error("configuration invalid (%s): %s", exc.assumption, exc)
        return EXIT_CONFIG, None
    simulated = time.perf_counter() - started
    report = build_run_report(config, trace)
    try:
        trace.write(out / "trace.jsonl")
        trace.write_states_csv(out / "states.csv")
        _dump(report, out / "report.json")
        # wall-clock numbers live apart from the report so the report stays reproducible
        _dump({"simulate_seconds": simulated, "total_seconds": time.perf_counter() - started},
              out / "timing.json")
    except OSError as exc:
        log.error("cannot write outputs to %s: %s", out, exc)
        return EXIT_IO, report
    status = EXIT_OK if report["validity"]["ok"] else EXIT_CHECK
    return status, report


def cmd_run(config_path, out_dir) -> int:
    try:
        config = _resolve_config(config_path)
    except ConfigInvalid as exc:
        log.error("configuration invalid (%s): %s", exc.assumption, exc)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read config %s: %s", config_path, exc)
        return EXIT_IO
    status, report = execute_run(config, out_dir)
    if report is not None:
        log.info("converged_at=%s final_spread=%.3g validity=%s",
                 report["converged_at"], report["final_spread"], report["validity"]["ok"])
    return status


def _write_matrix_csv(M: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in M:
            w.writerow([repr(float(x)) for x in row])


def cmd_analyze(trace_path, out_dir, mode: str = "trace", export_matrices: bool = False) -> int:
    try:
        trace = SimulationTrace.read(trace_path)
    except TraceCorrupt as exc:
        log.error("%s", exc)
        return EXIT_IO
    try:
        result = analyze_trace(trace, mode=mode, keep_matrices=export_matrices)
    except InconsistentTrace as exc:
        log.error("trace is inconsistent: %s", exc)
        return EXIT_CHECK
    mats = result.pop("_matrices", [])
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _dump(result, out / "analysis.json")
        if export_matrices:
            mdir = out / "matrices"
            mdir.mkdir(exist_ok=True)
            for M in mats:
                _write_matrix_csv(M.matrix, mdir / f"phase_{M.phase:05d}.csv")
    except OSError as exc:
        log.error("cannot write analysis to %s: %s", out, exc)
        return EXIT_IO
    if "note" in result:
        log.info("%s", result["note"])
    ok = result["exactness_ok"] and result["stochastic_ok"]
    return EXIT_OK if ok else EXIT_CHECK


def graph_census(h: int, b: int, cap: int | None = None) -> dict:
    kwargs = {} if cap is None else {"cap": cap}
    graphs = enumerate_reduced_graphs(h, b, **kwargs)
    hist = source_histogram(graphs)
    return {"h": h, "b": b, "r": count_reduced_graphs(h, b), "sourced": sum(hist.values()),
            "source_histogram": {str(k): v for k, v in sorted(hist.items())}}


def cmd_graphs(h: int, b: int, cap: int | None = None, echo=print) -> int:
    try:
        census = graph_census(h, b, cap)
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except TooLarge as exc:
        log.error("%s; use sample_reduced_graphs instead", exc)
        return EXIT_CONFIG
    echo(f"r = {census['r']}")
    echo(f"sourced = {census['sourced']}")
    for node, count in census["source_histogram"].items():
        echo(f"source {node}: {count}")
    return EXIT_OK if census["sourced"] == census["r"] else EXIT_CHECK


def _grid_cells(template: dict, grid: dict):
    axes = []
    if grid.get("seeds"):
        axes.append([("seed", s) for s in grid["seeds"]])
    if grid.get("strategies"):
        axes.append([("strategy", s) for s in grid["strategies"]])
    if grid.get("initial_values"):
        axes.append([("initial_values", v) for v in grid["initial_values"]])
    if grid.get("graphs"):
        axes.append([("graph", g) for g in grid["graphs"]])
    if not axes:
        return
    for combo in itertools.product(*axes):
        doc = copy.deepcopy(template)
        label = []
        for key, value in combo:
            if key == "strategy":
                spec = StrategySpec.from_document(value)
                doc["b_strategy"] = {"*": spec.to_document()}
                label.append(f"strategy={spec.kind}")
            elif key == "seed":
                doc["seed"] = int(value)
            else:
                doc[key] = value
                label.append(f"{key}={json.dumps(value, sort_keys=True, separators=(',', ':'))}")
        yield doc, label


def _materialize(doc: dict) -> ScenarioConfig:
    wildcard = doc.get("b_strategy", {}).pop("*", None) if "b_strategy" in doc else None
    config = ScenarioConfig.from_document(doc)
    if wildcard is not None:
        try:
            net = config.network()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad graph document: {exc}", "graph") from exc
        config.strategies = {z: StrategySpec.from_document(wildcard) for z in sorted(net.byzantine)}
    return config


def _sweep_cell(args):
    index, doc, label, out_dir = args
    name = doc.get("name", "custom")
    scenario = name + (f"[{';'.join(label)}]" if label else "")
    row = {"scenario": scenario, "seed": int(doc.get("seed", 0))}
    try:
        config = _materialize(doc)
        config.validate()
        status, report = execute_run(config, Path(out_dir) / f"cell_{index:04d}")
    except ConfigInvalid as exc:
        status, report = EXIT_CONFIG, None
        row["error"] = f"ConfigInvalid({exc.assumption}): {exc}"
    if report is None:
        row.update(converged_at="", final_spread="", validity=row.get("error", "ConfigInvalid"))
    else:
        row.update(
            converged_at="" if report["converged_at"] is None else report["converged_at"],
            final_spread=repr(report["final_spread"]),
            validity="valid" if report["validity"]["ok"] else "VIOLATED",
        )
    row.pop("error", None)
    return status, row


def cmd_sweep(template_path, grid_path, out_dir, workers: int = 1) -> int:
    try:
        template_text = str(template_path)
        if not Path(template_text).exists() and template_text in SCENARIO_PRESETS:
            template = SCENARIO_PRESETS[template_text].to_document()
        else:
            template = json.loads(Path(template_path).read_text())
        grid = json.loads(Path(grid_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot read sweep inputs: %s", exc)
        return EXIT_IO
    cells = [(k, doc, label, str(out_dir)) for k, (doc, label) in enumerate(_grid_cells(template, grid))]
    if not cells:
        log.info("empty grid; nothing to do")
        return EXIT_OK
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    fields = ["scenario", "seed", "converged_at", "final_spread", "validity"]
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for _status, row in results:
            w.writerow(row)
    failed = any(status == EXIT_CHECK for status, _ in results)
    return EXIT_CHECK if failed else EXIT_OK
