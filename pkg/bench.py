"""
Optimizer benchmark over (optimizer x profile x mode) cells.

Run r of every cell starts from the same x0, drawn from the stream
(base_seed, 0, r), so optimizers, profiles and modes are compared on paired
starting points. Evaluation noise of cell (o, q, k) run r comes from
(base_seed, 1, o, q, k, r).
"""
import math
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from errors import ConfigurationError, UsageError
from gmvp import approximation_ratio, brute_force_optimum
from noise import cost_objective, estimate_cost
from optim import minimize
from qaoa import ParamMask, QaoaParams, masked_objective
from sim_core import RngStream
from storage import format_real, initialize_output_dir, save_csv, save_json
from utils import run_parallel, sanitize_filename

logger = logging.getLogger(__name__)

MODES = ("standard", "filtered")
SUMMARY_HEADER = (
    "optimizer", "profile", "mode", "mean", "ci95_lo", "ci95_hi", "mean_nfev", "best_value", "worst_value",
)
CONFIDENCE = 0.95


@dataclass(frozen=True)
class OptimizerSpec:
    name: str
    settings: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class BenchConfig:
    """
    Everything a benchmark needs.

    Attributes:
        instance (GmvpInstance): Problem instance
        geometry (CircuitGeometry): Circuit layout matching the instance
        optimizers (tuple): OptimizerSpec items
        profiles (tuple): Named noise profiles
        modes (tuple): Subset of ("standard", "filtered")
        runs_per_cell (int): Runs per cell, >= 2
        base_seed (int): Root of every stream
    """

    instance: object
    geometry: object
    optimizers: tuple
    profiles: tuple
    modes: tuple = MODES
    runs_per_cell: int = 10
    base_seed: int = 0

    def __post_init__(self):
        if self.runs_per_cell < 2:
            raise ConfigurationError(f"runs_per_cell must be >= 2, got {self.runs_per_cell}")
        unknown = [mode for mode in self.modes if mode not in MODES]
        if unknown or not self.modes:
            raise ConfigurationError(f"modes must be a non-empty subset of {MODES}, got {list(self.modes)}")
        names = [profile.name for profile in self.profiles]
        if len(set(names)) != len(names):
            raise ConfigurationError(f"profile names must be unique, got {names}")
        if not self.optimizers or not self.profiles:
            raise ConfigurationError("a benchmark needs at least one optimizer and one profile")
        instance, geometry = self.instance, self.geometry
        if (instance.n, instance.l, instance.m) != (geometry.n, geometry.l, geometry.m):
            raise ConfigurationError("instance and geometry disagree on n, l or m")

    def cell_key(self, optimizer, profile, mode):
        """Positions (o, q, k) of a cell in the configured lists."""
        try:
            o = self.optimizers.index(optimizer)
        except ValueError:
            raise ConfigurationError(f"optimizer {optimizer.name!r} is not configured")
        q = next((i for i, item in enumerate(self.profiles) if item.name == profile.name), None)
        if q is None or self.profiles[q] != profile:
            raise ConfigurationError(f"profile {profile.name!r} is not configured")
        if mode not in self.modes:
            raise ConfigurationError(f"mode {mode!r} is not configured")
        return o, q, self.modes.index(mode)


@dataclass
class BenchReport:
    cells: list
    optimum_index: int
    optimum_value: float
    base_seed: int
    runs_per_cell: int

    def to_document(self):
        return {
            "base_seed": self.base_seed,
            "runs_per_cell": self.runs_per_cell,
            "optimum": {"basis_index": self.optimum_index, "value": self.optimum_value},
            "cells": self.cells,
        }


def ci95(samples):
    """
    Student-t 95% confidence interval of the mean.

    Args:
        samples (sequence): At least two reals

    Returns:
        tuple: (lo, hi)

    Raises:
        UsageError: With fewer than two samples
    """
    values = np.asarray(samples, dtype=float)
    if values.size < 2:
        raise UsageError(f"a confidence interval needs at least 2 samples, got {values.size}")
    mean = float(values.mean())
    spread = float(values.std(ddof=1))
    if spread == 0.0:
        logger.warning(f"Confidence interval over {values.size} identical samples collapses to {mean:.6g}")
        return mean, mean
    half_width = float(stats.t.ppf(0.5 + CONFIDENCE / 2.0, values.size - 1)) * spread / math.sqrt(values.size)
    return mean - half_width, mean + half_width


def initial_point(config, run):
    bounds = config.geometry.bounds()
    generator = RngStream(config.base_seed).child(0, run).generator
    return generator.uniform(bounds[:, 0], bounds[:, 1])


def _run_once(config, optimizer, profile, mode, key, run):
    geometry, instance = config.geometry, config.instance
    stream = RngStream(config.base_seed).child(1, *key, run)
    x0 = initial_point(config, run)

    # objective, optimizer and final re-evaluation each draw from their own child

    objective = cost_objective(geometry, instance, profile, stream.child(0))
    if mode == "filtered":
        mask = ParamMask.filtered(geometry.p, x0)
        target, start = masked_objective(mask, objective), mask.restrict(x0)
    else:
        mask = None
        target, start = objective, x0

    result = minimize(optimizer.name, target, start, seed=stream.child(1), **optimizer.settings)
    best_x = mask.expand(result.best_x) if mask is not None else result.best_x
    final = estimate_cost(
        geometry, instance, QaoaParams.from_flat(best_x, geometry.p), profile, stream.child(2)
    ).value
    logger.debug(
        f"{optimizer.name}/{profile.name}/{mode} run {run}: {final:.6g} "
        f"after {result.nfev} evaluations ({result.termination.value})"
    )
    return {
        "run": run,
        "stream": [config.base_seed, 1, *key, run],
        "x0": [float(v) for v in x0],
        "best_x": [float(v) for v in best_x],
        "optimizer_value": float(result.best_value),
        "best_value": float(final),
        "nfev": int(result.nfev),
        "termination": result.termination.value,
        "approx_ratio": approximation_ratio(final, instance),
    }


def _summarize(optimizer, profile, mode, runs):
    values = [record["best_value"] for record in runs]
    lo, hi = ci95(values)
    return {
        "optimizer": optimizer.name,
        "profile": profile.name,
        "mode": mode,
        "runs": runs,
        "mean": float(np.mean(values)),
        "ci95_lo": lo,
        "ci95_hi": hi,
        "mean_nfev": float(np.mean([record["nfev"] for record in runs])),
        "best_value": float(min(values)),
        "worst_value": float(max(values)),
    }


def run_cell(config, optimizer, profile, mode, jobs=1):
    """
    All runs of one (optimizer, profile, mode) cell.

    Standard mode optimizes all 2p parameters; filtered mode fixes the gammas
    at their drawn x0 values and optimizes the betas. The reported value of a
    run is a fresh evaluation of its best point.

    Returns:
        dict: Cell record with runs, mean, ci95_lo, ci95_hi and mean_nfev

    Raises:
        ConfigurationError: If the optimizer, profile or mode is not configured
    """
    key = config.cell_key(optimizer, profile, mode)
    runs = run_parallel(
        lambda run: _run_once(config, optimizer, profile, mode, key, run),
        range(config.runs_per_cell),
        jobs,
    )
    return _summarize(optimizer, profile, mode, runs)


def run_bench(config, optimizers=None, profiles=None, modes=None, jobs=1):
    """
    Run the selected cells, ordered by optimizer, then profile, then mode.

    Args:
        config (BenchConfig): Benchmark configuration
        optimizers (list): Subset of config.optimizers, default all
        profiles (list): Subset of config.profiles, default all
        modes (list): Subset of config.modes, default all
        jobs (int): Worker threads shared by every run of every cell

    Returns:
        BenchReport: Cells in deterministic order
    """
    optimizers = list(optimizers or config.optimizers)
    profiles = list(profiles or config.profiles)
    modes = list(modes or config.modes)
    cells = [
        (optimizer, profile, mode, config.cell_key(optimizer, profile, mode))
        for optimizer in optimizers
        for profile in profiles
        for mode in modes
    ]
    optimum_index, optimum_value = brute_force_optimum(config.instance)
    # one task per run, across all cells
    tasks = [(cell, run) for cell in cells for run in range(config.runs_per_cell)]
    logger.info(f"Benchmark: {len(cells)} cells x {config.runs_per_cell} runs on {jobs} worker(s)")

    def execute(task):
        (optimizer, profile, mode, key), run = task
        return _run_once(config, optimizer, profile, mode, key, run)

    records = run_parallel(execute, tasks, jobs)
    # records come back in task order, so each cell is a contiguous slice
    summaries = []
    for position, (optimizer, profile, mode, _) in enumerate(cells):
        start = position * config.runs_per_cell
        summary = _summarize(optimizer, profile, mode, records[start:start + config.runs_per_cell])
        logger.info(
            f"Cell {optimizer.name}/{profile.name}/{mode}: mean {summary['mean']:.6g} "
            f"[{summary['ci95_lo']:.6g}, {summary['ci95_hi']:.6g}], mean nfev {summary['mean_nfev']:.1f}"
        )
        summaries.append(summary)
    return BenchReport(
        cells=summaries,
        optimum_index=optimum_index,
        optimum_value=optimum_value,
        base_seed=config.base_seed,
        runs_per_cell=config.runs_per_cell,
    )


def emit_report(report, out_dir):
    """
    Write report.json and summary.csv.

    Returns:
        list: Paths written

    Raises:
        OSError: If the directory is not writable
    """
    out_dir = initialize_output_dir(out_dir)
    rows = [
        [
            cell["optimizer"], cell["profile"], cell["mode"],
            format_real(cell["mean"]), format_real(cell["ci95_lo"]), format_real(cell["ci95_hi"]),
            format_real(cell["mean_nfev"]), format_real(cell["best_value"]), format_real(cell["worst_value"]),
        ]
        for cell in report.cells
    ]
    written = [
        save_json(out_dir / "report.json", report.to_document()),
        save_csv(out_dir / "summary.csv", SUMMARY_HEADER, rows),
    ]
    logger.info(f"Report written to {out_dir}")
    return written


def render_scatter(report, out_dir):
    """
    One SVG per mode: a panel per profile with run values, mean and CI per
    optimizer, and mean evaluation counts on a secondary axis.

    Returns:
        list: Paths written
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "qaoa-workbench"
    out_dir = initialize_output_dir(out_dir)
    written = []
    modes = list(dict.fromkeys(cell["mode"] for cell in report.cells))
    for mode in modes:
        cells = [cell for cell in report.cells if cell["mode"] == mode]
        profiles = list(dict.fromkeys(cell["profile"] for cell in cells))
        optimizers = list(dict.fromkeys(cell["optimizer"] for cell in cells))
        fig, axes = plt.subplots(1, len(profiles), figsize=(4 * len(profiles), 4), squeeze=False)
        for ax, profile in zip(axes[0], profiles):
            nfev_axis = ax.twinx()
            for position, name in enumerate(optimizers):
                cell = next((c for c in cells if c["profile"] == profile and c["optimizer"] == name), None)
                if cell is None:
                    continue
                values = [record["best_value"] for record in cell["runs"]]
                nfev_axis.bar(position, cell["mean_nfev"], width=0.5, color="lightgrey", zorder=0)
                ax.scatter([position] * len(values), values, color="tab:blue", s=12, zorder=2)
                ax.errorbar(
                    position, cell["mean"],
                    yerr=[[cell["mean"] - cell["ci95_lo"]], [cell["ci95_hi"] - cell["mean"]]],
                    color="tab:red", fmt="o", capsize=4, zorder=3,
                )
            ax.set_zorder(nfev_axis.get_zorder() + 1)
            ax.patch.set_visible(False)
            ax.set_xticks(range(len(optimizers)))
            ax.set_xticklabels(optimizers)
            ax.set_title(profile)
            ax.set_ylabel("function value")
            nfev_axis.set_ylabel("mean evaluations")
        fig.tight_layout()
        path = Path(out_dir) / f"scatter_{sanitize_filename(mode)}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
