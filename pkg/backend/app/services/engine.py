"""Experiment runners: scaling sweeps, degenerate configurations, flat norms, constraint audits.

Every runner works per epsilon. Per-epsilon tasks go through a process pool
when more than one worker is requested; failures become rows with an error
column and the sweep carries on.
"""
import functools
import json
import logging
import os
import time
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from multiprocess import Pool, cpu_count

from app.db.database import init_db
from app.logic.continuum import predicted_limit, psi
from app.logic.db_utils import (
    clean_nans,
    create_experiment_run,
    save_experiment_result,
    update_experiment_run_status,
)
from app.logic.energy import constrained_minima, dislocation_free_triangles, energy, strained_triangles
from app.logic.fields import (
    DisplacementField,
    check_mild_separation,
    counter_ms_slip,
    crack_pair,
    dilation_pair,
    dislocation_measure,
    volume_constraint_mask,
)
from app.logic.lattice import SQRT3, build_lattice
from app.logic.measures import AtomicMeasure, flat_norm_details, growth_exponent, korn_ratio, total_variation
from app.logic.recovery import RecoveryPair, build_recovery_pair
from app.logic.solver import solve_for_measure
from app.services.experiment_config import ExperimentConfig, save_experiment_config

logger = logging.getLogger(__name__)

SCALING_COLUMNS = [
    "epsilon", "F", "F_normalized", "predicted", "recovery_energy", "recovery_normalized",
    "flat_error", "tv", "korn_ratio", "ms_ok", "iterations", "relative_residual",
    "n_nodes", "n_triangles", "wall_time", "error",
]


def _map_epsilons(func: Callable, epsilons: List[float], threads: int) -> List:
    """Apply func to every epsilon, in a process pool when threads > 1."""
    total = len(epsilons)
    results = []
    if threads <= 1 or total <= 1:
        for k, eps in enumerate(epsilons, start=1):
            results.append(func(eps))
            logger.info(f"Processed {k}/{total} epsilons")
        return results

    num_processes = max(1, min(threads, total, cpu_count()))
    logger.info(f"Using {num_processes} processes for {total} epsilons")
    with Pool(num_processes) as pool:
        chunk_size = max(1, total // (num_processes * 4))
        for result in pool.imap(func, epsilons, chunksize=chunk_size):
            results.append(result)
            logger.info(f"Processed {len(results)}/{total} epsilons")
    return results


def _target_measure(config: ExperimentConfig) -> AtomicMeasure:
    targets = config.targets()
    points = np.array([d.position for d in targets], dtype=float).reshape(-1, 2)
    weights = np.array([d.burgers.vector for d in targets], dtype=float).reshape(-1, 2)
    return AtomicMeasure(points, weights, config.polygon())


def _solve_scaling(eps: float, config: ExperimentConfig) -> Tuple[Dict, Optional[RecoveryPair]]:
    """Scaling row for one epsilon, with the recovery pair it was computed from (None on failure)."""
    start = time.time()
    row = {"epsilon": eps, "error": None}
    pair = None
    try:
        cx = build_lattice(config.polygon(), eps)
        row.update(n_nodes=cx.n_nodes, n_triangles=cx.n_triangles)
        pair = build_recovery_pair(config.targets(), cx)
        s = config.solver
        result = solve_for_measure(pair.measure, cx, tol=s.tol, slip=pair.slip, max_iter_factor=s.max_iter_factor,
                                   dangling_box=s.dangling_box, dangling_sweeps=s.dangling_sweeps)
        scale = eps ** 2 * abs(np.log(eps))
        recovery_energy = energy(pair.displacement, pair.slip)
        discrete = pair.measure.to_atomic()
        flat = flat_norm_details(discrete - _target_measure(config), n_directions=config.flat_norm.n_directions,
                                 exact_atom_limit=config.flat_norm.exact_atom_limit)
        row.update(
            F=result.energy,
            F_normalized=result.energy / scale,
            predicted=predicted_limit([d.burgers for d in config.targets()]),
            recovery_energy=recovery_energy,
            recovery_normalized=recovery_energy / scale,
            flat_error=flat.value,
            tv=total_variation(discrete),
            korn_ratio=korn_ratio(discrete, result.energy, eps) if result.energy > 0 else float("nan"),
            ms_ok=check_mild_separation(pair.measure),
            iterations=result.iterations,
            relative_residual=result.relative_residual,
        )
    except Exception as e:
        logger.error(f"Scaling run failed at eps={eps:g}: {e}", exc_info=True)
        row["error"] = str(e)
        pair = None
    row["wall_time"] = time.time() - start
    return row, pair


def _scaling_row(eps: float, config: ExperimentConfig) -> Dict:
    return _solve_scaling(eps, config)[0]


def _frame(rows: List[Dict], columns: List[str]) -> pd.DataFrame:
    df = pd.DataFrame(rows)
    for col in columns:
        if col not in df.columns:
            df[col] = np.nan
    df = df[columns + [c for c in df.columns if c not in columns]]
    return df.sort_values("epsilon", ascending=False).reset_index(drop=True)


def run_scaling(config: ExperimentConfig, threads: Optional[int] = None) -> pd.DataFrame:
    """One row per epsilon: minimal energy of the snapped measure, its normalization, and diagnostics."""
    func = functools.partial(_scaling_row, config=config)
    rows = _map_epsilons(func, list(config.epsilons), threads or config.threads)
    return _frame(rows, SCALING_COLUMNS)


def summarize_scaling(df: pd.DataFrame, config: ExperimentConfig) -> Dict:
    """Regression of F/eps^2 against |log eps| and the stability diagnostics of a scaling sweep."""
    burgers = [d.burgers for d in config.targets()]
    predicted = predicted_limit(burgers)
    self_energy = SQRT3 / 2.0 * sum(psi(b) for b in burgers)
    ok = df[df["error"].isna() & np.isfinite(df["F"].astype(float))].sort_values("epsilon", ascending=False)
    summary = {"predicted": predicted, "self_energy": self_energy, "n_valid": int(len(ok))}
    if len(ok) < 2:
        return summary

    eps = ok["epsilon"].to_numpy(dtype=float)
    log_eps = np.abs(np.log(eps))
    slope, intercept = np.polyfit(log_eps, ok["F"].to_numpy(dtype=float) / eps ** 2, 1)
    summary.update(slope=float(slope), intercept=float(intercept))
    if predicted > 0:
        summary["slope_relative_error"] = float(abs(slope - predicted) / predicted)

    # recovery energy = self_energy * eps^2 |log eps| + C eps^2
    core = (ok["recovery_energy"].to_numpy(dtype=float) - self_energy * eps ** 2 * log_eps) / eps ** 2
    summary["core_constants"] = core.tolist()
    finest = core[-3:]
    if len(finest) and np.all(finest > 0):
        summary["core_constant_spread"] = float(finest.max() / finest.min())

    korn = ok["korn_ratio"].to_numpy(dtype=float)[-4:]
    korn = korn[np.isfinite(korn)]
    if len(korn) and np.all(korn > 0):
        summary["korn_spread"] = float(korn.max() / korn.min())

    flat = ok["flat_error"].to_numpy(dtype=float)
    summary["flat_monotone"] = bool(np.all(np.diff(flat) <= 1e-12))
    summary["flat_final_over_eps"] = float(flat[-1] / eps[-1])
    return summary


def _counter_ms_entry(eps: float, config: ExperimentConfig) -> Dict:
    cx = build_lattice(config.polygon(), eps)
    sigma = counter_ms_slip(cx)
    u = DisplacementField.zeros(cx)
    mu = dislocation_measure(sigma)
    atomic = mu.to_atomic()
    flat = flat_norm_details(atomic, n_directions=config.flat_norm.n_directions,
                             exact_atom_limit=config.flat_norm.exact_atom_limit)
    return {
        "epsilon": eps,
        "energy": energy(u, sigma),
        "charged_triangles": len(mu),
        "n_triangles": cx.n_triangles,
        "tv": total_variation(atomic),
        "tv_expected": 4.0 * config.polygon().area / eps ** 2,
        "ms_ok": check_mild_separation(mu),
        "flat_norm": flat.value,
        "flat_estimated": flat.estimated,
    }


def _degenerate_entry(name: str, u: DisplacementField, sigma, box: int) -> Dict:
    cx = u.complex
    strained = strained_triangles(u)
    free = dislocation_free_triangles(sigma)
    minima = constrained_minima(u, strained, box) if len(strained) else np.zeros(0)
    mask = volume_constraint_mask(sigma)
    return {
        "case": name,
        "epsilon": cx.epsilon,
        "energy": energy(u, sigma),
        "charged_triangles": int(cx.n_triangles - len(free)),
        "strained_triangles": int(len(strained)),
        "constrained_min": float(minima.min()) if len(minima) else None,
        "constrained_min_normalized": float(minima.min() / cx.epsilon ** 2) if len(minima) else None,
        "condli_fraction": float(mask[free].mean()) if len(free) else None,
    }


def _counterexample_entries(eps: float, config: ExperimentConfig) -> Dict:
    entry = {"epsilon": eps, "error": None}
    try:
        entry["counter_ms"] = _counter_ms_entry(eps, config)
        cx = build_lattice(config.polygon(), eps)
        u, sigma = crack_pair(cx, config.crack_sign)
        entry["crack"] = _degenerate_entry("crack", u, sigma, config.constraint_box)
        u, sigma = dilation_pair(cx, config.dilation_lambda)
        entry["dilation"] = _degenerate_entry("dilation", u, sigma, config.constraint_box)
    except Exception as e:
        logger.error(f"Counterexample run failed at eps={eps:g}: {e}", exc_info=True)
        entry["error"] = str(e)
    return entry


def run_counterexamples(config: ExperimentConfig, threads: Optional[int] = None) -> Dict:
    """Zero-energy configurations: counter-MS slip, crack opening and integer dilation."""
    func = functools.partial(_counterexample_entries, config=config)
    entries = _map_epsilons(func, list(config.epsilons), threads or config.threads)
    entries.sort(key=lambda e: -e["epsilon"])

    report = {"epsilons": [e["epsilon"] for e in entries], "entries": entries}
    ms = [e["counter_ms"] for e in entries if e.get("counter_ms")]
    if len(ms) >= 2:
        report["counter_ms_flat_exponent"] = growth_exponent([m["epsilon"] for m in ms], [m["flat_norm"] for m in ms])
        report["counter_ms_tv_exponent"] = growth_exponent([m["epsilon"] for m in ms], [m["tv"] for m in ms])
    ok = [e for e in entries if e["error"] is None]
    report["all_energies_zero"] = bool(ok) and all(
        abs(e[name]["energy"]) <= 1e-12 for e in ok for name in ("counter_ms", "crack", "dilation")
    )
    report["constrained_minima_positive"] = bool(ok) and all(
        e[name]["constrained_min"] is not None and e[name]["constrained_min"] > 0
        for e in ok for name in ("crack", "dilation")
    )
    return report


def _flatnorm_row(eps: float, config: ExperimentConfig) -> Dict:
    start = time.time()
    row = {"epsilon": eps, "error": None}
    try:
        cx = build_lattice(config.polygon(), eps)
        settings = dict(n_directions=config.flat_norm.n_directions, exact_atom_limit=config.flat_norm.exact_atom_limit)
        if config.dislocations:
            pair = build_recovery_pair(config.targets(), cx)
            row["recovery_flat_error"] = flat_norm_details(pair.measure.to_atomic() - _target_measure(config),
                                                           **settings).value
        counter = dislocation_measure(counter_ms_slip(cx)).to_atomic()
        flat = flat_norm_details(counter, **settings)
        row.update(counter_ms_flat=flat.value, counter_ms_estimated=flat.estimated,
                   counter_ms_tv=total_variation(counter))
    except Exception as e:
        logger.error(f"Flat norm run failed at eps={eps:g}: {e}", exc_info=True)
        row["error"] = str(e)
    row["wall_time"] = time.time() - start
    return row


def run_flatnorm(config: ExperimentConfig, threads: Optional[int] = None) -> pd.DataFrame:
    """Flat distance of the recovery measures to the target, and flat norm growth of the counter-MS measures."""
    func = functools.partial(_flatnorm_row, config=config)
    rows = _map_epsilons(func, list(config.epsilons), threads or config.threads)
    return _frame(rows, ["epsilon", "recovery_flat_error", "counter_ms_flat", "counter_ms_estimated",
                         "counter_ms_tv", "wall_time", "error"])


def _audit_row(eps: float, config: ExperimentConfig) -> Dict:
    row, pair = _solve_scaling(eps, config)
    if pair is None:
        return row
    try:
        sigma = pair.slip
        free = dislocation_free_triangles(sigma)
        mask = volume_constraint_mask(sigma)[free]
        row.update(dislocation_free=int(len(free)), condli_satisfied=int(mask.sum()),
                   condli_fraction=float(mask.mean()) if len(free) else float("nan"))
    except Exception as e:
        logger.error(f"Constraint audit failed at eps={eps:g}: {e}", exc_info=True)
        row["error"] = str(e)
    return row


def run_constraint_audit(config: ExperimentConfig, threads: Optional[int] = None) -> pd.DataFrame:
    """Scaling rows plus the volume-constraint status of the recovery slip on dislocation-free triangles."""
    func = functools.partial(_audit_row, config=config)
    rows = _map_epsilons(func, list(config.epsilons), threads or config.threads)
    return _frame(rows, SCALING_COLUMNS + ["dislocation_free", "condli_satisfied", "condli_fraction"])


def _default_output(config: ExperimentConfig) -> str:
    suffix = ".json" if config.experiment == "counterexamples" else ".csv"
    return os.path.join("results", f"{config.experiment}{suffix}")


def _sidecar_path(out_path: str) -> str:
    return os.path.splitext(out_path)[0] + ".config.json"


def run_experiment(config: ExperimentConfig, out_path: Optional[str] = None, threads: Optional[int] = None,
                   db_path: Optional[str] = None) -> Dict:
    """Run the configured experiment, write its output and the JSON sidecar, optionally record it in the ledger.

    Returns:
        dict with the output path, the sidecar path, and the summary.
    """
    out_path = out_path or config.output or _default_output(config)
    os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)

    run_id = None
    if db_path is not None:
        init_db(db_path)
        run_id = create_experiment_run(config.experiment, config.model_dump(mode="json"))

    logger.info(f"Running {config.experiment} over {len(config.epsilons)} epsilons -> {out_path}")
    try:
        summary: Dict = {}
        if config.experiment == "counterexamples":
            report = run_counterexamples(config, threads)
            with open(out_path, "w") as f:
                json.dump(clean_nans(report), f, indent=2)
            summary = {k: v for k, v in report.items() if k not in ("entries",)}
            records = report["entries"]
        else:
            runner = {"scaling": run_scaling, "flatnorm": run_flatnorm, "constraint_audit": run_constraint_audit}
            df = runner[config.experiment](config, threads)
            df.to_csv(out_path, index=False)
            if config.experiment in ("scaling", "constraint_audit"):
                summary = summarize_scaling(df, config)
            elif df["counter_ms_flat"].notna().sum() >= 2:
                valid = df[df["counter_ms_flat"].notna()]
                summary = {"counter_ms_flat_exponent": growth_exponent(valid["epsilon"], valid["counter_ms_flat"])}
            records = df.to_dict(orient="records")
        sidecar = _sidecar_path(out_path)
        save_experiment_config(config, sidecar, {"summary": clean_nans(summary)})

        if run_id is not None:
            for record in records:
                save_experiment_result(run_id, f"{config.experiment}_row", record, record.get("epsilon"))
            save_experiment_result(run_id, f"{config.experiment}_summary", summary)
            update_experiment_run_status(run_id, "completed")
    except Exception:
        if run_id is not None:
            update_experiment_run_status(run_id, "failed")
        raise

    logger.info(f"{config.experiment} finished: wrote {out_path} and {sidecar}")
    return {"output": out_path, "sidecar": sidecar, "summary": summary, "run_id": run_id}
