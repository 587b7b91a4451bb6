import csv
import dataclasses
import json
import logging

import numpy as np
import pytest

from errors import ConfigurationError
from landscape import (
    CSV_HEADER,
    LandscapeGrid,
    argmin_offset,
    check_argmin,
    figure_pairs,
    inactive_parameters,
    parameter_activity,
    roughness,
    scan_all_pairs,
    scan_pair,
    write_activity,
    write_grid,
)
from noise import PRESET_PROFILES, Noiseless, Sampling
from qaoa import CircuitGeometry

THETA = (0.4, 1.3, 0.9, 0.35)


def test_figure_pairs_order():
    assert figure_pairs(2) == [(2, 3), (2, 0), (2, 1), (3, 0), (3, 1), (0, 1)]
    assert len(figure_pairs(3)) == 15


def test_roughness():
    assert roughness(np.full((4, 4), 2.5)) == 0.0
    assert roughness(np.array([[0.0, 1.0], [1.0, 2.0]])) == pytest.approx(1.0)


def test_scan_counts_every_cell_once(small_geometry, small_instance, monkeypatch):
    import landscape

    calls = []
    original = landscape.estimate_cost

    def counting(*args, **kwargs):
        calls.append(args[2].to_flat())
        return original(*args, **kwargs)

    monkeypatch.setattr(landscape, "estimate_cost", counting)
    grid = scan_pair(small_geometry, small_instance, (2, 3), 2, THETA, Noiseless(), seed=0)
    assert len(calls) == 4
    assert grid.values.shape == (2, 2)
    assert all(np.array_equal(x[:2], THETA[:2]) for x in calls)
    assert list(grid.axis_i) == [0.0, pytest.approx(np.pi)]


def test_first_gamma_does_not_move_the_cost(small_geometry, small_instance):
    grid = scan_pair(small_geometry, small_instance, (2, 0), 5, THETA, Noiseless(), seed=0)
    # values[a, b]: beta1 on rows, gamma1 on columns
    spread = grid.values.max(axis=1) - grid.values.min(axis=1)
    assert np.all(spread < 1e-12)
    assert grid.roughness() > 0.0


def test_noisy_scan_is_reproducible_and_independent_of_workers(small_geometry, small_instance):
    profile = Sampling(shots=64)
    serial = scan_pair(small_geometry, small_instance, (3, 1), 3, THETA, profile, seed=5, jobs=1)
    parallel = scan_pair(small_geometry, small_instance, (3, 1), 3, THETA, profile, seed=5, jobs=4)
    assert np.array_equal(serial.values, parallel.values)
    reseeded = scan_pair(small_geometry, small_instance, (3, 1), 3, THETA, profile, seed=6)
    assert not np.array_equal(serial.values, reseeded.values)


@pytest.mark.parametrize("pair, resolution, theta", [
    ((1, 1), 3, THETA),
    ((0, 4), 3, THETA),
    ((0, 1), 1, THETA),
    ((0, 1), 3, THETA[:3]),
])
def test_scan_argument_errors(small_geometry, small_instance, pair, resolution, theta):
    with pytest.raises(ConfigurationError):
        scan_pair(small_geometry, small_instance, pair, resolution, theta, Noiseless(), seed=0)


def test_all_pairs_requires_two_layers(small_instance):
    geometry = CircuitGeometry.build(2, 2, 2, 1)
    with pytest.raises(ConfigurationError, match="p = 2"):
        scan_all_pairs(geometry, small_instance, 3, (0.1, 0.2), Noiseless(), seed=0)


def test_activity_flags_the_first_gamma(small_geometry, small_instance):
    grids = scan_all_pairs(small_geometry, small_instance, 4, THETA, Noiseless(), seed=0)
    activity = parameter_activity(grids)
    assert sorted(activity) == [0, 1, 2, 3]
    assert inactive_parameters(activity) == [0]
    assert inactive_parameters({}) == []


def test_write_grid_outputs(tmp_path, small_geometry, small_instance):
    grid = scan_pair(small_geometry, small_instance, (2, 3), 3, THETA, Noiseless(name="noiseless"), seed=0)
    paths = write_grid(grid, tmp_path, 2, svg=True)
    csv_path, json_path, svg_path = paths

    assert csv_path.name == "landscape_beta1_beta2_noiseless.csv"
    with open(csv_path, newline="") as f:
        rows = list(csv.reader(f))
    assert tuple(rows[0]) == CSV_HEADER
    assert len(rows) == 1 + 9
    assert rows[1][:2] == ["beta1", "beta2"]
    assert float(rows[-1][4]) == grid.values[2, 2]

    sidecar = json.loads(json_path.read_text())
    assert sidecar["fixed_params"] == list(THETA)
    assert sidecar["resolution"] == 3
    assert sidecar["argmin"]["cost"] == grid.values.min()

    assert svg_path.read_text().lstrip().startswith("<?xml")


def test_write_grid_is_byte_stable(tmp_path, small_geometry, small_instance):
    grid = scan_pair(small_geometry, small_instance, (0, 1), 3, THETA, Noiseless(), seed=0)
    first = [p.read_bytes() for p in write_grid(grid, tmp_path / "a", 2)]
    second = [p.read_bytes() for p in write_grid(grid, tmp_path / "b", 2)]
    assert first == second


def test_write_activity(tmp_path, small_geometry, small_instance):
    grids = scan_all_pairs(small_geometry, small_instance, 3, THETA, Noiseless(), seed=0)
    path, _, inactive = write_activity(grids, tmp_path, 2, "noiseless")
    document = json.loads(path.read_text())
    assert path.name == "activity_noiseless.json"
    assert document["inactive"] == ["gamma1"]
    assert set(document["activity"]) == {"gamma1", "gamma2", "beta1", "beta2"}
    assert inactive == [0]


def lattice_grid(pair, low_cell, resolution=5):
    axis = np.linspace(0.0, np.pi, resolution)
    values = np.ones((resolution, resolution))
    values[low_cell] = 0.0
    return LandscapeGrid(
        param_i=pair[0], param_j=pair[1], axis_i=axis, axis_j=axis, values=values,
        fixed_params=(0.0, 0.0, 0.14286, 0.85714), profile="noiseless", seed=0,
    )


def test_beta_minimum_far_from_theta_star_is_reported(caplog):
    far = lattice_grid((2, 3), (4, 2))
    assert argmin_offset(far)[0] == pytest.approx((np.pi - 0.14286) / (np.pi / 4))
    with caplog.at_level(logging.WARNING, logger="landscape"):
        assert check_argmin(far) is False
    assert "cells from theta_star" in caplog.text

    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="landscape"):
        assert check_argmin(lattice_grid((2, 3), (0, 1))) is True
        # only beta-beta grids are compared against theta_star
        assert check_argmin(lattice_grid((2, 0), (4, 4))) is True
    assert caplog.records == []


@pytest.mark.slow
def test_thermal_noise_roughens_the_beta_landscape(small_geometry, small_instance):
    # two blocks of two qubits, 24 x 24 lattice, 8 trajectories per cell, seed 11
    theta = (0.0, 0.0, 0.14286, 0.85714)
    scores = {}
    for name in ("thermal_a", "thermal_b"):
        profile = dataclasses.replace(PRESET_PROFILES[name], shots=8)
        grid = scan_pair(small_geometry, small_instance, (2, 3), 24, theta, profile, seed=11, jobs=4)
        scores[name] = grid.roughness()
    scores["noiseless"] = scan_pair(small_geometry, small_instance, (2, 3), 24, theta, Noiseless(), seed=11).roughness()
    assert scores["thermal_b"] > scores["thermal_a"] > scores["noiseless"]
