"""
Two-parameter cost landscapes.

A scan fixes every parameter at theta_star except two, which sweep their
canonical ranges on a resolution x resolution lattice. Cell (a, b) draws its
noise from the child stream (seed, a, b), so grids do not depend on the order
or the number of workers that evaluate them.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from errors import ConfigurationError, UsageError
from noise import estimate_cost
from qaoa import QaoaParams, parameter_names
from sim_core import RngStream
from storage import format_real, initialize_output_dir, save_csv, save_json
from utils import run_parallel, sanitize_filename

logger = logging.getLogger(__name__)

CSV_HEADER = ("param_i", "param_j", "value_i", "value_j", "cost")
DEFAULT_RESOLUTION = 50
INACTIVE_RELATIVE_THRESHOLD = 1e-6


@dataclass(frozen=True, eq=False)
class LandscapeGrid:
    """
    Cost values over a lattice of two parameters.

    values[a, b] is the cost at (axis_i[a], axis_j[b]).
    """

    param_i: int
    param_j: int
    axis_i: np.ndarray
    axis_j: np.ndarray
    values: np.ndarray
    fixed_params: tuple
    profile: str
    seed: int

    def __post_init__(self):
        if self.values.shape != (len(self.axis_i), len(self.axis_j)):
            raise UsageError(
                f"grid values have shape {self.values.shape}, axes have {len(self.axis_i)} x {len(self.axis_j)}"
            )

    @property
    def resolution(self):
        return len(self.axis_i)

    def roughness(self):
        return roughness(self.values)

    def argmin(self):
        """(value_i, value_j, cost) of the lowest cell."""
        a, b = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
        return float(self.axis_i[a]), float(self.axis_j[b]), float(self.values[a, b])

    def rows(self, names):
        for a, value_i in enumerate(self.axis_i):
            for b, value_j in enumerate(self.axis_j):
                yield (
                    names[self.param_i],
                    names[self.param_j],
                    format_real(value_i),
                    format_real(value_j),
                    format_real(self.values[a, b]),
                )


def roughness(values):
    """Mean absolute difference between horizontally and vertically adjacent cells."""
    values = np.asarray(values, dtype=float)
    diffs = np.concatenate([
        np.abs(np.diff(values, axis=0)).ravel(),
        np.abs(np.diff(values, axis=1)).ravel(),
    ])
    return float(diffs.mean()) if diffs.size else 0.0


def scan_pair(geometry, instance, pair, resolution, theta_star, profile, seed, jobs=1):
    """
    Evaluate the cost over a lattice of two parameters.

    Args:
        geometry (CircuitGeometry): Circuit layout
        instance (GmvpInstance): Problem instance
        pair (tuple): Flat parameter indices (i, j), i != j
        resolution (int): Points per axis, >= 2
        theta_star (sequence): Values of all 2p parameters
        profile (NoiseProfile): Noise profile
        seed (int): Base seed of the cell streams
        jobs (int): Worker threads

    Returns:
        LandscapeGrid: The scanned grid

    Raises:
        ConfigurationError: On a bad pair, resolution or theta_star
    """
    i, j = (int(v) for v in pair)
    size = geometry.num_params
    if i == j or not (0 <= i < size and 0 <= j < size):
        raise ConfigurationError(f"invalid parameter pair ({i}, {j}) for {size} parameters")
    if resolution < 2:
        raise ConfigurationError(f"resolution must be >= 2, got {resolution}")
    theta = np.asarray(theta_star, dtype=float)
    if theta.shape != (size,):
        raise ConfigurationError(f"theta_star needs {size} values, got {theta.size}")

    bounds = geometry.bounds()
    axis_i = np.linspace(bounds[i, 0], bounds[i, 1], resolution)
    axis_j = np.linspace(bounds[j, 0], bounds[j, 1], resolution)
    base = RngStream(seed)

    def evaluate_cell(cell):
        a, b = cell
        x = theta.copy()
        x[i], x[j] = axis_i[a], axis_j[b]
        params = QaoaParams.from_flat(x, geometry.p)
        return estimate_cost(geometry, instance, params, profile, base.child(a, b)).value

    # row-major over the lattice; reshape below relies on it
    cells = [(a, b) for a in range(resolution) for b in range(resolution)]
    values = np.array(run_parallel(evaluate_cell, cells, jobs), dtype=float).reshape(resolution, resolution)
    logger.info(f"Scanned ({i}, {j}) under {profile.name}: {resolution}x{resolution} cells")
    grid = LandscapeGrid(
        param_i=i,
        param_j=j,
        axis_i=axis_i,
        axis_j=axis_j,
        values=values,
        fixed_params=tuple(float(v) for v in theta),
        profile=profile.name,
        seed=int(seed),
    )
    check_argmin(grid)
    return grid


def argmin_offset(grid):
    """Lattice cells between theta_star and the lowest cell, per axis."""
    value_i, value_j, _ = grid.argmin()
    step_i = (grid.axis_i[-1] - grid.axis_i[0]) / (len(grid.axis_i) - 1)
    step_j = (grid.axis_j[-1] - grid.axis_j[0]) / (len(grid.axis_j) - 1)
    return (
        float(abs(value_i - grid.fixed_params[grid.param_i]) / step_i),
        float(abs(value_j - grid.fixed_params[grid.param_j]) / step_j),
    )


def check_argmin(grid):
    """
    Warn when a beta-beta grid bottoms out more than one cell from theta_star.

    Returns:
        bool: False if a warning was logged
    """
    p = len(grid.fixed_params) // 2
    if grid.param_i < p or grid.param_j < p:
        return True
    offset = argmin_offset(grid)
    if max(offset) <= 1.0 + 1e-9:
        return True
    value_i, value_j, cost = grid.argmin()
    logger.warning(
        f"Grid ({grid.param_i}, {grid.param_j}) under {grid.profile}: minimum {cost:.6g} at "
        f"({value_i:.5g}, {value_j:.5g}), {offset[0]:.1f} x {offset[1]:.1f} cells from theta_star "
        f"({grid.fixed_params[grid.param_i]:.5g}, {grid.fixed_params[grid.param_j]:.5g})"
    )
    return False


def figure_pairs(p):
    """All parameter pairs, betas first: b1b2, b1g1, b1g2, b2g1, b2g2, g1g2 for p = 2."""
    betas = list(range(p, 2 * p))
    gammas = list(range(p))
    order = betas + gammas
    return [(order[a], order[b]) for a in range(len(order)) for b in range(a + 1, len(order))]


def scan_all_pairs(geometry, instance, resolution, theta_star, profile, seed, jobs=1):
    """
    The six pairwise grids of a two-layer circuit.

    Raises:
        ConfigurationError: If p != 2
    """
    if geometry.p != 2:
        raise ConfigurationError(f"an all-pairs scan needs p = 2, got p = {geometry.p}")
    return [
        scan_pair(geometry, instance, pair, resolution, theta_star, profile, seed, jobs)
        for pair in figure_pairs(geometry.p)
    ]


def parameter_activity(grids):
    """
    How strongly each parameter moves the cost.

    For every grid holding a parameter, take the variance along its axis for
    each value of the other axis and average; then average over grids.

    Returns:
        dict: parameter index -> activity
    """
    collected = {}
    for grid in grids:
        collected.setdefault(grid.param_i, []).append(float(np.var(grid.values, axis=0).mean()))
        collected.setdefault(grid.param_j, []).append(float(np.var(grid.values, axis=1).mean()))
    return {index: float(np.mean(scores)) for index, scores in sorted(collected.items())}


def inactive_parameters(activity, relative=INACTIVE_RELATIVE_THRESHOLD):
    """Parameters whose activity is below ``relative`` times the largest one."""
    if not activity:
        return []
    ceiling = max(activity.values())
    return [index for index, score in activity.items() if score <= relative * ceiling]


def grid_stem(grid, names):
    return f"landscape_{names[grid.param_i]}_{names[grid.param_j]}_{sanitize_filename(grid.profile)}"


def write_grid(grid, out_dir, p, svg=False):
    """
    Write the CSV table, its JSON sidecar and optionally an SVG contour plot.

    Returns:
        list: Paths written
    """
    names = parameter_names(p)
    out_dir = initialize_output_dir(out_dir)
    stem = grid_stem(grid, names)
    written = [save_csv(out_dir / f"{stem}.csv", CSV_HEADER, grid.rows(names))]
    value_i, value_j, lowest = grid.argmin()
    written.append(save_json(out_dir / f"{stem}.json", {
        "param_i": names[grid.param_i],
        "param_j": names[grid.param_j],
        "fixed_params": list(grid.fixed_params),
        "profile": grid.profile,
        "seed": grid.seed,
        "resolution": grid.resolution,
        "roughness": grid.roughness(),
        "argmin": {"value_i": value_i, "value_j": value_j, "cost": lowest},
    }))
    if svg:
        written.append(render_contour(grid, names, out_dir / f"{stem}.svg"))
    return written


def write_activity(grids, out_dir, p, profile_name):
    """Store parameter activity and the inactive candidates as JSON."""
    names = parameter_names(p)
    activity = parameter_activity(grids)
    inactive = inactive_parameters(activity)
    path = Path(out_dir) / f"activity_{sanitize_filename(profile_name)}.json"
    save_json(path, {
        "profile": profile_name,
        "activity": {names[index]: score for index, score in activity.items()},
        "inactive": [names[index] for index in inactive],
    })
    return path, activity, inactive


def render_contour(grid, names, path):
    """Filled contour plot of a grid as a reproducible SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "qaoa-workbench"
    fig, ax = plt.subplots(figsize=(5, 4))
    cntr = ax.contourf(grid.axis_j, grid.axis_i, grid.values, levels=14, cmap="RdBu_r")
    fig.colorbar(cntr, ax=ax, label="cost")
    ax.set_xlabel(names[grid.param_j])
    ax.set_ylabel(names[grid.param_i])
    ax.set_title(f"{names[grid.param_i]} / {names[grid.param_j]} ({grid.profile})")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug(f"Rendered {path}")
    return Path(path)
