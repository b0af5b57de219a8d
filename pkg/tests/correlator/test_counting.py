# --- tests/correlator/test_counting.py ---

"""Pruebas de la estadística de conteo por celda."""

import numpy as np
import pytest

from hbtlab.core.model import Shot
from hbtlab.correlator.counting import cell_counts, counting_statistics
from hbtlab.data_system.templates.templates import CountingCell, DetectorSpec
from hbtlab.oracles.formulas import effective_mode_count, einstein_variance
from hbtlab.sources.kernels import DetectorGrid, SeparableKernel, scale_to_occupation
from hbtlab.sources.samplers import (
    coherent_mode,
    sample_boson_events,
    sample_coherent_events,
    sample_fermion_events,
)

CELL = CountingCell(bounds={"x": (-1e-3, 1e-3), "y": (-1e-3, 1e-3)})


def _poisson_shots(mean: float, n_shots: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    shots = []
    for k in range(n_shots):
        n = int(rng.poisson(mean))
        shots.append(Shot(k, rng.uniform(-2e-3, 2e-3, n), rng.uniform(-2e-3, 2e-3, n), np.full(n, 0.3)))
    return shots


def test_no_shots_gives_zero_statistics():
    result = counting_statistics([], CELL)
    assert (result.mean, result.variance, result.variance_stderr, result.n_shots) == (0.0, 0.0, 0.0, 0)


def test_counts_use_half_open_bounds():
    shot = Shot(0, [-1e-3, 0.0, 1e-3, 5e-4], [0.0, 0.0, 0.0, 2e-3], [0.3] * 4)
    np.testing.assert_array_equal(cell_counts([shot, Shot(1)], CELL), [2, 0])


def test_poisson_counts_have_variance_equal_to_mean():
    """Partículas independientes: la varianza coincide con la media dentro del error jackknife."""
    result = counting_statistics(_poisson_shots(40.0, 2000, seed=1), CELL)

    # un cuarto del área: media 10
    assert result.mean == pytest.approx(10.0, abs=0.3)
    assert abs(result.variance - result.mean) < 4 * result.variance_stderr


def test_jackknife_matches_explicit_leave_one_out():
    shots = _poisson_shots(20.0, 30, seed=2)
    counts = cell_counts(shots, CELL).astype(float)
    loo = np.array([np.var(np.delete(counts, k), ddof=1) for k in range(len(counts))])
    expected = np.sqrt((len(counts) - 1) / len(counts) * np.sum((loo - loo.mean()) ** 2))

    result = counting_statistics(shots, CELL)

    assert result.variance == pytest.approx(np.var(counts, ddof=1))
    assert result.variance_stderr == pytest.approx(expected, rel=1e-9)


def test_vertical_bounds_need_detector_clock():
    cell = CountingCell(bounds={"z": (-1e-3, 1e-3)})
    shot = Shot(0, [0.0, 0.0], [0.0, 0.0], [0.3, 0.3 + 1e-3])

    with pytest.raises(ValueError):
        cell_counts([shot], cell)
    detector = DetectorSpec(v_ref=2.943, t_ref=0.3)
    np.testing.assert_array_equal(cell_counts([shot], cell, detector), [1])


@pytest.mark.parametrize("n_cells", [1, 16, 64])
def test_boson_cell_variance_follows_effective_mode_count(n_cells):
    """
    Var(N) = ⟨N⟩ + ⟨N⟩²/g con g = (tr C)²/‖C‖² de la celda, dentro de 4
    errores jackknife.
    """
    grid = DetectorGrid.line(0.0, 1.0, 64)
    kernel = SeparableKernel.gaussian(grid, {"x": 1 / 16})
    gen = np.random.default_rng(n_cells)
    shots = [
        sample_boson_events(kernel, 5.0, gen, jitter=False).to_shot(k) for k in range(10_000)
    ]
    cell = CountingCell(bounds={"x": (0.0, n_cells / 64)})
    g_eff = effective_mode_count(kernel, range(n_cells))

    result = counting_statistics(shots, cell)

    expected = einstein_variance(result.mean, g_eff, "boson")
    assert abs(result.variance - expected) < 4 * result.variance_stderr


def test_fermion_cell_counts_are_sub_poissonian():
    grid = DetectorGrid.line(0.0, 1.0, 64)
    kernel = scale_to_occupation(SeparableKernel.gaussian(grid, {"x": 1 / 16}), 5.0)
    gen = np.random.default_rng(3)
    shots = [sample_fermion_events(kernel, gen, jitter=False).to_shot(k) for k in range(5000)]
    cell = CountingCell(bounds={"x": (0.25, 0.75)})

    result = counting_statistics(shots, cell)

    assert result.variance < result.mean
    expected = einstein_variance(result.mean, effective_mode_count(kernel, range(16, 48)), "fermion")
    assert abs(result.variance - expected) < 4 * result.variance_stderr


def test_coherent_cell_counts_are_poissonian():
    grid = DetectorGrid.line(0.0, 1.0, 64)
    kernel = SeparableKernel.gaussian(grid, {"x": 1 / 16})
    gen = np.random.default_rng(4)
    shots = [
        sample_coherent_events(coherent_mode(kernel), 20.0, gen, grid, jitter=False).to_shot(k)
        for k in range(20_000)
    ]

    result = counting_statistics(shots, CountingCell(bounds={"x": (0.0, 0.5)}))

    assert result.variance / result.mean == pytest.approx(1.0, abs=0.05)
