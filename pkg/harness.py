# harness.py
"""
Experiment Harness

Responsibilities:
- Turn an ExperimentConfig into weight functions, texture laws, grids and
  per-trial random streams
- Run the four scenarios: eigenvalue histogram against the limiting
  density, one-shot localization curves, Monte Carlo MSE sweep over the
  source power, and the full pipeline on an external snapshot file
- Run independent trials on a worker pool with index-derived streams, so
  results do not depend on the worker count
- Emit every artifact as CSV with a provenance comment line
"""

import os
from functools import partial
from multiprocessing import Pool
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

import config
from datagen import read_snapshots, steering_vector, synthesize
from doa import (
    angle_grid,
    assign_closest,
    blind_grid,
    curve_function,
    eta_population,
    eta_robust_gmusic_emp,
    extract_angles,
    localization_curves,
    sweep_grid,
)
from error_handler import ConfigError, safe_call
from inference import (
    bilinear_form_estimate,
    build_report,
    groups_from_labels,
    population_projector,
    write_report_csv,
)
from logger import get_logger
from schema import ExperimentConfig, LocalizationCurve, SpikeReport
from scatter import sample_covariance, save_estimate, solve_fixed_point
from spectrum import (
    SpectralContext,
    compute_spike_location,
    density_left_edge,
    limiting_density,
    limiting_measure_for,
)
from utils import config_hash, rad2deg, trial_streams, write_csv
from weightfn import UnitWeight, WeightFunction

log = get_logger(__name__)


# -----------------------------
# Shared plumbing
# -----------------------------
def setting(cfg: ExperimentConfig, key: str) -> Any:
    """A merged configuration value, falling back to the module defaults."""
    value = cfg.raw.get(key)
    return config.get(key) if value is None else value


def apply_settings(values: Dict[str, Any]) -> None:
    """Push merged values into the config module (solver tolerances etc.)."""
    for key, value in values.items():
        if key in config.DEFAULTS and value is not None:
            config.set(key, value)


def provenance(cfg: ExperimentConfig) -> str:
    return f"scenario={cfg.scenario} config={config_hash(cfg.to_dict())} seed={cfg.seed}"


def output_path(cfg: ExperimentConfig, name: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def weight_for(cfg: ExperimentConfig, N: Optional[int] = None, n: Optional[int] = None) -> WeightFunction:
    N = cfg.N if N is None else N
    n = cfg.n if n is None else n
    return WeightFunction(alpha=cfg.alpha, c=N / n)


def known_contexts(cfg: ExperimentConfig, w: WeightFunction, size: Optional[int] = None):
    """(robust, unit-weight) contexts on the limiting texture law."""
    measure = limiting_measure_for(cfg.noise, size)
    return SpectralContext.build(measure, w), SpectralContext.build(measure, UnitWeight(c=w.c))


def draw(cfg: ExperimentConfig, trial: int, powers_db: Optional[List[float]] = None):
    """One realization; its streams depend on (seed, trial) only."""
    return synthesize(
        cfg.sources(powers_db),
        cfg.noise,
        cfg.N,
        cfg.n,
        trial_streams(cfg.seed, trial),
        cfg.symbols,
    )


def grid_for(cfg: ExperimentConfig) -> np.ndarray:
    """Explicit grid if given, else the full [-90, 90) range or a window around the sources."""
    step = cfg.grid_step_deg
    if cfg.grid_start_deg is not None and cfg.grid_stop_deg is not None:
        return angle_grid(cfg.grid_start_deg, cfg.grid_stop_deg, step, endpoint=True)
    if setting(cfg, "search") == "window":
        return sweep_grid(cfg.angles_deg, setting(cfg, "window_deg"), step)
    return blind_grid(step)


def _init_worker(values: Dict[str, Any]) -> None:
    apply_settings(values)


def run_trials(cfg: ExperimentConfig, fn: Callable[[Any], Any], tasks: Sequence[Any]) -> List[Any]:
    """
    fn over tasks, in task order. Each call runs through safe_call, so a
    failed trial yields None instead of aborting the run.
    """
    job = partial(safe_call, fn)
    if cfg.workers <= 1 or len(tasks) <= 1:
        return [job(task) for task in tasks]
    with Pool(processes=cfg.workers, initializer=_init_worker, initargs=(cfg.to_dict(),)) as pool:
        return pool.map(job, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers)))


# -----------------------------
# Eigenvalue histogram
# -----------------------------
def _spectrum_trial(cfg: ExperimentConfig, w: WeightFunction, trial: int):
    """Eigenvalues of one realization and its empirical thresholds."""
    Y, _ = draw(cfg, trial)
    est = solve_fixed_point(Y, w)
    scm = np.sort(np.linalg.eigvalsh(sample_covariance(Y)))[::-1]
    emp = SpectralContext.from_estimate(est, w)
    frame = pd.DataFrame({
        "trial": trial,
        "k": np.arange(1, cfg.N + 1),
        "robust": est.eigenvalues,
        "scm": scm,
    })
    return frame, {"gamma_hat": est.gamma_hat, "S_plus_hat": emp.S_plus, "S_mu_plus_hat": emp.support_edge}


def run_spectrum_histogram(cfg: ExperimentConfig) -> Dict[str, str]:
    """
    eigs.csv: eigenvalues of C_N and of (1/n) Y Y^* per trial;
    density.csv: limiting density of the robust estimate on a grid;
    histogram.csv: normalized histogram of the robust eigenvalues;
    thresholds.csv: S+, S+_mu, S-_mu, p-, Lambda_j and detection counts,
    plus the empirical gamma_hat, S+ and S+_mu averaged over trials.
    """
    w = weight_for(cfg)
    ctx, _ = known_contexts(cfg, w)
    comment = provenance(cfg)

    results = run_trials(cfg, partial(_spectrum_trial, cfg, w), list(range(cfg.trials)))
    kept = [r for r in results if r is not None]
    skipped = len(results) - len(kept)
    if skipped:
        log.warning(f"[harness] {skipped} of {len(results)} spectrum trials skipped")
    if kept:
        eigs = pd.concat([frame for frame, _ in kept], ignore_index=True)
    else:
        eigs = pd.DataFrame(columns=["trial", "k", "robust", "scm"])
    hats = pd.DataFrame([h for _, h in kept], columns=["gamma_hat", "S_plus_hat", "S_mu_plus_hat"])

    spikes = [compute_spike_location(p, ctx) for p in cfg.powers]
    markers = [ctx.S_plus] + [lam for lam in spikes if lam is not None]
    top = float(eigs["robust"].max()) if len(eigs) else ctx.S_plus
    hi = 1.25 * max(markers + [top])
    points = setting(cfg, "density_points")
    grid = np.linspace(hi / points, hi, points)
    density, unconverged = limiting_density(ctx, grid, return_flags=True)

    counts = (eigs["robust"] > ctx.S_plus).groupby(eigs["trial"]).sum()
    counts_hat = np.array([int(np.sum(f["robust"] > h["S_plus_hat"])) for f, h in kept])
    rows = [("gamma", ctx.gamma), ("S_plus", ctx.S_plus), ("S_mu_plus", ctx.support_edge),
            ("S_mu_minus", ctx.left_edge), ("density_left_edge", density_left_edge(grid, density)),
            ("p_minus", ctx.p_minus), ("p_minus_guaranteed", ctx.p_minus_guaranteed)]
    rows += [(f"Lambda_{j + 1}", float("nan") if lam is None else lam) for j, lam in enumerate(spikes)]
    rows += [(name, float(hats[name].mean()) if len(hats) else float("nan")) for name in hats.columns]
    rows += [("trials", len(results)), ("skipped", skipped),
             ("mean_above_S_plus", float(counts.mean()) if len(counts) else float("nan")),
             ("frac_exactly_L_above", float(np.mean(counts == cfg.L)) if len(counts) else float("nan")),
             ("frac_exactly_L_above_hat", float(np.mean(counts_hat == cfg.L)) if len(counts_hat) else float("nan"))]

    bins = setting(cfg, "histogram_bins")
    hist, edges = np.histogram(eigs["robust"].to_numpy(dtype=float), bins=bins, range=(0.0, hi))
    hist = hist / max(1, hist.sum()) / np.diff(edges)

    paths = {name: output_path(cfg, f"{name}.csv") for name in ("eigs", "density", "histogram", "thresholds")}
    write_csv(paths["eigs"], eigs, comment)
    write_csv(paths["density"], pd.DataFrame({"x": grid, "density": density, "unconverged": unconverged}), comment)
    write_csv(paths["histogram"], pd.DataFrame({"left": edges[:-1], "right": edges[1:], "density": hist}), comment)
    write_csv(paths["thresholds"], pd.DataFrame(rows, columns=["name", "value"]), comment)
    log.info(f"[harness] spectrum: S+={ctx.S_plus:.6g} S+_mu={ctx.support_edge:.6g} "
             f"S+_hat={dict(rows)['S_plus_hat']:.6g}, {len(kept)} trials")
    return paths


# -----------------------------
# One-shot localization
# -----------------------------
def _bilinear_rows(cfg: ExperimentConfig, est, reports: Dict[str, SpikeReport], truth) -> List[Dict[str, Any]]:
    """Estimated vs true a(theta_j)^* Pi_group a(theta_j) for every group and source."""
    rows = []
    labels = setting(cfg, "groups")
    sources = cfg.sources()
    for group in groups_from_labels(labels, cfg.L):
        Pi = population_projector(sources, cfg.N, group, truth.steering)
        for j, theta in enumerate(sources.angles):
            a = steering_vector(theta, cfg.N, cfg.spacing_d)
            row = {"group": "+".join(str(k + 1) for k in group), "source": j + 1,
                   "truth": float(np.real(a.conj() @ Pi @ a))}
            for method in ("robust-gmusic", "robust-gmusic-emp"):
                if method in reports:
                    report = reports[method]
                    weights = {s.index: s.weight for s in report.detected}
                    row[method] = bilinear_form_estimate(a, a, group, est, weights).real
            rows.append(row)
    return rows


def run_localization_oneshot(cfg: ExperimentConfig) -> Dict[str, str]:
    """
    oneshot.csv: theta_deg, one column per method, and the population
    function; oneshot_minima.csv: extracted angles per method;
    bilinear.csv: projector estimates at the true angles.
    """
    w = weight_for(cfg)
    robust_ctx, unit_ctx = known_contexts(cfg, w)
    grid = grid_for(cfg)
    Y, truth = draw(cfg, 0)
    est = solve_fixed_point(Y, w)
    curves, reports = localization_curves(Y, grid, cfg.L, w, robust_ctx, unit_ctx, cfg.methods, cfg.spacing_d, est=est)

    frame = pd.DataFrame({"theta_deg": rad2deg(grid)})
    for method, curve in curves.items():
        frame[method] = curve.values
    frame["population"] = eta_population(grid, cfg.sources(), cfg.N, truth.steering, cfg.spacing_d)

    minima = []
    if cfg.L:
        for method, curve in curves.items():
            angles = extract_angles(curve, cfg.L)
            minima.append({"method": method, **{f"theta_{j + 1}_deg": float(rad2deg(t)) for j, t in enumerate(angles)}})

    comment = provenance(cfg)
    paths = {name: output_path(cfg, f"{name}.csv") for name in ("oneshot", "oneshot_minima", "bilinear")}
    write_csv(paths["oneshot"], frame, comment)
    write_csv(paths["oneshot_minima"], pd.DataFrame(minima), comment)
    write_csv(paths["bilinear"], pd.DataFrame(_bilinear_rows(cfg, est, reports, truth)), comment)
    for row in minima:
        log.info(f"[harness] {row['method']}: " + ", ".join(f"{v:.4f}" for k, v in row.items() if k != "method"))
    return paths


# -----------------------------
# MSE sweep
# -----------------------------
def _mse_trial(cfg: ExperimentConfig, w, robust_ctx, unit_ctx, grid, task) -> Dict[str, float]:
    """Squared error (rad^2) of the estimate closest to theta_1, per method."""
    power_db, trial = task
    Y, truth = draw(cfg, trial, [power_db] * cfg.L)
    curves, _ = localization_curves(Y, grid, cfg.L, w, robust_ctx, unit_ctx, cfg.methods, cfg.spacing_d)
    theta1 = truth.angles[0]
    return {
        method: (assign_closest(extract_angles(curve, cfg.L), theta1) - theta1) ** 2
        for method, curve in curves.items()
    }


def run_mse_sweep(cfg: ExperimentConfig) -> Dict[str, str]:
    """
    mse.csv: power_db, mse_<method> and failures_<method> columns.

    Every power level reuses the same trial streams (common random
    numbers), and the number of sources is forced to L.
    """
    if cfg.L < 1:
        raise ConfigError("an MSE sweep needs at least one source", key="angles_deg")
    w = weight_for(cfg)
    robust_ctx, unit_ctx = known_contexts(cfg, w, setting(cfg, "sweep_quadrature_size"))
    grid = grid_for(cfg)
    tasks = [(p, t) for p in cfg.power_sweep_db for t in range(cfg.trials)]
    results = run_trials(cfg, partial(_mse_trial, cfg, w, robust_ctx, unit_ctx, grid), tasks)

    rows = []
    for i, power_db in enumerate(cfg.power_sweep_db):
        chunk = results[i * cfg.trials:(i + 1) * cfg.trials]
        row: Dict[str, Any] = {"power_db": power_db, "trials": cfg.trials}
        for method in cfg.methods:
            errors = [r[method] for r in chunk if r is not None and np.isfinite(r.get(method, np.nan))]
            row[f"mse_{method}"] = float(np.mean(errors)) if errors else float("nan")
            row[f"failures_{method}"] = cfg.trials - len(errors)
        rows.append(row)
        log.info(f"[harness] p={power_db:g} dB: " + ", ".join(f"{m}={row[f'mse_{m}']:.3e}" for m in cfg.methods))

    path = output_path(cfg, "mse.csv")
    write_csv(path, pd.DataFrame(rows), provenance(cfg))
    return {"mse": path}


# -----------------------------
# External data
# -----------------------------
def estimate_angles(est, report: SpikeReport, grid: Optional[np.ndarray] = None, d: Optional[float] = None) -> List[float]:
    """Robust G-MUSIC (empirical weights) minima for the detected spikes."""
    if not len(report):
        return []
    grid = blind_grid() if grid is None else grid
    curve = LocalizationCurve(
        method="robust-gmusic-emp",
        grid=grid,
        values=eta_robust_gmusic_emp(grid, est, report, d),
        func=curve_function("robust-gmusic-emp", est, len(report), report, d),
    )
    return extract_angles(curve, len(report))


def run_estimate(cfg: ExperimentConfig) -> Dict[str, Any]:
    """
    Full pipeline on a snapshot file: scatter estimate, empirical spike
    report, angle estimates. Writes estimate_spikes.csv,
    estimate_angles.csv and the scatter matrix as estimate_scatter.rspk,
    and returns a summary dictionary.
    """
    Y = read_snapshots(cfg.input)
    N, n = Y.n_antennas, Y.n_samples
    w = weight_for(cfg, N, n)
    est = solve_fixed_point(Y, w)
    ctx = SpectralContext.from_estimate(est, w)
    report = build_report(est, ctx)
    step = cfg.grid_step_deg
    if cfg.grid_start_deg is not None and cfg.grid_stop_deg is not None:
        grid = angle_grid(cfg.grid_start_deg, cfg.grid_stop_deg, step, endpoint=True)
    else:
        grid = blind_grid(step)
    angles = estimate_angles(est, report, grid, cfg.spacing_d)

    comment = provenance(cfg)
    spikes_path = output_path(cfg, "estimate_spikes.csv")
    angles_path = output_path(cfg, "estimate_angles.csv")
    scatter_path = output_path(cfg, "estimate_scatter.rspk")
    write_report_csv(spikes_path, report, comment)
    save_estimate(scatter_path, est)
    write_csv(angles_path, pd.DataFrame({"j": np.arange(1, len(angles) + 1), "theta_deg": rad2deg(np.asarray(angles))}), comment)

    summary = {
        "N": N,
        "n": n,
        **est.summary(),
        **{k: v for k, v in ctx.summary().items() if k in ("gamma", "S_plus", "S_mu_plus")},
        "detected": len(report),
        "powers": report.powers,
        "angles_deg": [float(rad2deg(a)) for a in angles],
        "flags": report.flags,
        "spikes_csv": spikes_path,
        "angles_csv": angles_path,
        "scatter_file": scatter_path,
    }
    log.info(f"[harness] estimate: {len(report)} spikes, angles {summary['angles_deg']}")
    return summary


SCENARIO_RUNNERS: Dict[str, Callable[[ExperimentConfig], Any]] = {
    "spectrum-histogram": run_spectrum_histogram,
    "localization-oneshot": run_localization_oneshot,
    "mse-sweep": run_mse_sweep,
    "estimate": run_estimate,
}


def run(cfg: ExperimentConfig) -> Any:
    apply_settings(cfg.to_dict())
    log.info(f"[harness] {provenance(cfg)}")
    return SCENARIO_RUNNERS[cfg.scenario](cfg)


def format_summary(summary: Dict[str, Any], keys: Optional[Iterable[str]] = None) -> str:
    """Human-readable `key: value` lines."""
    lines = []
    for key in keys or summary:
        value = summary[key]
        if isinstance(value, float):
            value = f"{value:.6g}"
        elif isinstance(value, list):
            value = ", ".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in value) or "-"
        lines.append(f"{key}: {value}")
    return "\n".join(lines)
