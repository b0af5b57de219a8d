# --- tests/pipeline/test_acceptance.py ---

"""
Ejecuciones completas contra las predicciones analíticas: agrupamiento,
antiagrupamiento, fuente coherente, ley de la longitud de correlación y
reducción del contraste por la resolución del detector.

Son lentas (minutos en total); se seleccionan con `-m slow`.
"""

from pathlib import Path

import numpy as np
import pytest

from hbtlab.data_system.templates.templates import parse_run_config
from hbtlab.oracles.formulas import correlation_length_atoms, correlation_length_light
from hbtlab.pipeline.orchestrator import HBTOrchestrator

pytestmark = pytest.mark.slow

HELIUM_2D = """\
source.mode = atom
source.statistics = {statistics}
source.size.x = 1.76e-5
source.size.y = 1.76e-5
source.mean_count = {mean_count}
grid.axes = ["x", "y"]
grid.half_width = 3e-3
grid.pitch_factor = {pitch_factor}
detector.resolution_rms = {resolution}
shots = {shots}
seed = 11
output_dir = {output_dir}
"""


def _helium_run(tmp_path: Path, statistics: str, mean_count: int, shots: int,
                resolution: str = "[0, 0, 0]", extra: str = "", pitch_factor: int = 4):
    text = HELIUM_2D.format(
        statistics=statistics, mean_count=mean_count, shots=shots,
        resolution=resolution, pitch_factor=pitch_factor, output_dir=tmp_path.as_posix(),
    ) + extra
    orchestrator = HBTOrchestrator(parse_run_config(text))
    corr = orchestrator.correlate(orchestrator.simulate())
    return orchestrator, corr


def test_boson_bunching_reaches_two(tmp_path: Path):
    orchestrator, corr = _helium_run(tmp_path, "boson", 200, 1000)

    fit = orchestrator.fit(corr)

    assert fit.sign == 1
    assert fit.eta == pytest.approx(1.0, abs=0.05)
    assert fit.g2_zero == pytest.approx(2.0, abs=0.05)
    length = orchestrator.config.expected_lengths()["x"]
    assert fit.lengths["x"] == pytest.approx(length, rel=0.1)
    tail, tail_err = corr.tail_mean(5 * length)
    assert tail == pytest.approx(orchestrator.predictions()["g2_tail"], abs=max(3 * tail_err, 0.01))


def test_fermion_antibunching_reaches_zero(tmp_path: Path):
    """Malla de paso l/8: el sorteo uniforme dentro de cada celda apenas rellena el hueco en el origen."""
    orchestrator, corr = _helium_run(tmp_path, "fermion", 20, 4000, pitch_factor=8)

    fit = orchestrator.fit(corr)

    assert fit.sign == -1
    assert fit.eta == pytest.approx(1.0, abs=0.1)
    # bin del origen, anchura l/4 por eje
    assert corr.binning.bin_width["x"] <= orchestrator.config.expected_lengths()["x"] / 4
    assert corr.g2.reshape(-1)[0] <= 0.1


@pytest.mark.parametrize("statistics", ["coherent", "distinguishable"])
def test_uncorrelated_sources_are_flat(tmp_path: Path, statistics: str):
    binning = "binning.axes = [\"x\", \"y\"]\nbinning.bin_width = 3e-4\nbinning.max_separation = 3e-3\nfit_sign = 0\n"
    orchestrator, corr = _helium_run(tmp_path, statistics, 200, 4000, extra=binning)

    fit = orchestrator.fit(corr)

    assert fit.chi2red < 1.3
    mean, err = corr.tail_mean(0.0)
    assert mean == pytest.approx(1.0, abs=max(3 * err, 0.01))
    assert np.all(np.abs(corr.g2[corr.valid] - 1.0) <= 0.02)


@pytest.mark.parametrize("statistics", ["coherent", "distinguishable"])
def test_free_sign_fit_finds_no_contrast_without_correlations(tmp_path: Path, statistics: str):
    """Sin signo impuesto, el ajuste de datos sin correlación da η compatible con 0."""
    orchestrator, corr = _helium_run(tmp_path, statistics, 100, 600)

    fit = orchestrator.fit(corr)

    assert fit.eta_err > 0
    assert abs(fit.eta) < 3 * fit.eta_err
    bin_width = corr.binning.bin_width["x"]
    assert fit.lengths["x"] >= bin_width * (1 - 1e-9)


@pytest.mark.parametrize("size", [1.2e-5, 2.4e-5, 4.8e-5])
def test_atom_correlation_length_law(tmp_path: Path, size: float):
    length = correlation_length_atoms(6.646e-27, 0.3, size)
    text = (
        "source.mode = atom\nsource.statistics = boson\n"
        f"source.size.x = {size}\nsource.size.y = {size}\nsource.mean_count = 200\n"
        f"grid.axes = [\"x\", \"y\"]\ngrid.half_width = {11 * length}\ngrid.pitch_factor = 4\n"
        "detector.resolution_rms = [0, 0, 0]\nshots = 500\nseed = 3\n"
        f"output_dir = {tmp_path.as_posix()}\n"
    )
    orchestrator = HBTOrchestrator(parse_run_config(text))

    fit = orchestrator.fit(orchestrator.correlate(orchestrator.simulate()))

    assert fit.lengths["x"] == pytest.approx(length, rel=0.1)
    assert fit.lengths["y"] == pytest.approx(length, rel=0.1)


@pytest.mark.parametrize("size", [0.5e-3, 1e-3, 2e-3])
def test_light_correlation_length_law(tmp_path: Path, size: float):
    length = correlation_length_light(500e-9, 1.0, size)
    text = (
        "source.mode = photon\nsource.statistics = boson\nsource.wavelength = 5e-7\nsource.distance = 1.0\n"
        f"source.size.x = {size}\nsource.size.y = {size}\nsource.mean_count = 200\n"
        f"grid.axes = [\"x\", \"y\"]\ngrid.half_width = {11 * length}\ngrid.pitch_factor = 4\n"
        "detector.resolution_rms = [0, 0, 0]\nshots = 500\nseed = 5\n"
        f"output_dir = {tmp_path.as_posix()}\n"
    )
    orchestrator = HBTOrchestrator(parse_run_config(text))

    fit = orchestrator.fit(orchestrator.correlate(orchestrator.simulate()))

    assert fit.lengths["x"] == pytest.approx(length, rel=0.1)
    assert fit.lengths["y"] == pytest.approx(length, rel=0.1)


@pytest.mark.parametrize("statistics, mean_count, shots, sign", [("boson", 200, 4000, 1), ("fermion", 20, 6000, -1)])
def test_detector_resolution_reduces_contrast(tmp_path: Path, statistics, mean_count, shots, sign):
    """Con d = 0.5 mm y l ≈ 0.27 mm el contraste cae a ≈ 1/15, con el signo de cada estadística."""
    binning = "binning.axes = [\"x\", \"y\"]\nbinning.bin_width = 1.5e-4\nbinning.max_separation = 4.5e-3\n"
    orchestrator, corr = _helium_run(
        tmp_path, statistics, mean_count, shots, resolution="[5e-4, 5e-4, 1e-5]", extra=binning
    )

    fit = orchestrator.fit(corr)

    predicted = orchestrator.predictions()["contrast"]
    assert predicted == pytest.approx(0.068, rel=0.02)
    assert fit.sign == sign
    assert abs(fit.eta - predicted) < 0.3 * predicted + 3 * fit.eta_err
    if sign > 0:
        # longitud ensanchada a √(l² + 4d²) en cada eje transversal
        blurred = orchestrator.predictions()["blurred_lengths"]
        assert fit.lengths["x"] == pytest.approx(blurred["x"], rel=0.1)
        assert fit.lengths["y"] == pytest.approx(blurred["y"], rel=0.1)


def test_aperture_clipping_keeps_contrast(tmp_path: Path):
    """Con l ≪ apertura, recortar la nube con la apertura no cambia η."""
    open_orchestrator, open_corr = _helium_run(tmp_path / "abierta", "boson", 200, 500)
    clipped_orchestrator, clipped_corr = _helium_run(
        tmp_path / "recortada", "boson", 200, 500, extra="detector.aperture_radius = 1.5e-3\n"
    )

    open_fit = open_orchestrator.fit(open_corr)
    clipped_fit = clipped_orchestrator.fit(clipped_corr)

    assert clipped_fit.eta == pytest.approx(open_fit.eta, abs=max(0.05, 3 * clipped_fit.eta_err))
    assert clipped_fit.eta == pytest.approx(1.0, abs=0.05)
