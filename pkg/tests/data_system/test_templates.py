# --- tests/data_system/test_templates.py ---

"""
Pruebas unitarias de los contratos de configuración.

Validan la deserialización polimórfica de las fuentes, los valores por
defecto derivados (reloj del detector, binning) y la lectura de archivos de
configuración con claves con puntos.
"""

import math
from pathlib import Path

import pytest

from hbtlab.core.model import ConfigError, Statistics
from hbtlab.data_system.templates.templates import (
    AtomSourceSpec,
    BaseSourceSpec,
    BinningSpec,
    GridSpec,
    PhotonSourceSpec,
    RunConfig,
    load_run_config,
    parse_run_config,
)


def test_source_serialization_deserialization_roundtrip():
    """
    Una fuente de fotones se serializa con su 'mode' y se reconstruye a la
    misma clase a través de la clase base.
    """
    original = PhotonSourceSpec(
        statistics="fermion",
        wavelength=500e-9,
        distance=1.0,
        emitters=[[[-1e-3], 0.25], [[1e-3], 0.75]],
    )

    serialized = original.to_dict()
    assert serialized["mode"] == "photon"
    assert serialized["statistics"] == "fermion"

    reconstructed = BaseSourceSpec.from_dict(serialized)
    assert isinstance(reconstructed, PhotonSourceSpec)
    assert reconstructed == original


def test_from_dict_rejects_unknown_mode():
    with pytest.raises(ValueError, match="desconocido"):
        BaseSourceSpec.from_dict({"mode": "neutrino", "size": {"x": 1e-5}})


@pytest.mark.parametrize(
    "kwargs",
    [
        {"size": {"x": 1e-5}, "emitters": [[[0.0], 1.0]]},   # dos geometrías
        {},                                                    # ninguna geometría
        {"emitters": [[[0.0], 0.5], [[1e-3], 0.4]]},           # pesos que no suman 1
        {"emitters": [[[0.0], 0.5], [[1e-3, 0.0], 0.5]]},      # dimensiones mezcladas
        {"size": {"x": -1e-5}},                                # tamaño negativo
        {"size": {"x": 1e-5}, "wavelength": 5e-7},             # parámetro de otro modo
    ],
)
def test_atom_source_rejects_invalid_geometry(kwargs):
    with pytest.raises(ValueError):
        AtomSourceSpec(**kwargs)


def test_coherence_lengths_follow_both_modes():
    """l = ht/2πms para átomos y λL/2πs para luz."""
    atom = AtomSourceSpec(mass=6.646e-27, flight_time=0.3, size={"x": 5e-4})
    photon = PhotonSourceSpec(wavelength=500e-9, distance=1.0, size={"x": 1e-3})

    assert atom.coherence_lengths(("x",))["x"] == pytest.approx(9.52e-6, rel=1e-3)
    assert photon.coherence_lengths(("x",))["x"] == pytest.approx(7.96e-5, rel=1e-3)


def test_emitter_rms_size_is_weighted_width():
    source = AtomSourceSpec(emitters=[[[-1e-3], 0.5], [[1e-3], 0.5]])
    assert source.rms_size(("x",))["x"] == pytest.approx(1e-3)


def test_run_config_fills_detector_clock_and_default_binning():
    config = RunConfig()

    assert config.detector.t_ref == pytest.approx(0.3)
    assert config.detector.v_ref == pytest.approx(9.81 * 0.3)
    assert config.binning.v_ref == pytest.approx(config.detector.v_ref)

    length = config.expected_lengths()["x"]
    assert length == pytest.approx(2.7e-4, rel=0.02)
    # resolución 0.5 mm > l: el ancho queda en l/4 y el alcance en 10·l
    assert config.binning.bin_width["x"] == pytest.approx(length / 4)
    assert config.binning.max_separation["x"] == pytest.approx(10 * length)


def test_binning_counts_and_validation():
    binning = BinningSpec(axes=("x",), bin_width=1e-5, max_separation=1.05e-4)
    assert binning.n_bins == (11,)
    assert binning.shape == (11,)
    assert BinningSpec(axes=("x",), bin_width=1e-5, max_separation=1e-4, signed=True).shape == (20,)

    with pytest.raises(ValueError):
        BinningSpec(axes=("x",), bin_width=1e-4, max_separation=1e-5)
    with pytest.raises(ValueError):
        BinningSpec(axes=("x",), bin_width=0.0, max_separation=1e-5)


def test_grid_points_follow_pitch_factor():
    grid = GridSpec(axes=("x",), half_width=1e-3, pitch_factor=8)
    assert grid.resolve_points({"x": 1e-4}) == {"x": 160}
    assert grid.resolve_points({"x": math.inf}) == {"x": 1}


def test_parse_run_config_with_dotted_keys():
    text = (
        "# comentario\n"
        "source.mode = photon\n"
        "source.statistics = coherent\n"
        "source.wavelength = 5e-7\n"
        "source.distance = 2.0\n"
        "source.size.x = 1e-3\n"
        "grid.axes = [\"x\"]\n"
        "grid.half_width = 1e-3\n"
        "shots = 10\n"
        "seed = 18446744073709551615\n"
    )

    config = parse_run_config(text)

    assert isinstance(config.source, PhotonSourceSpec)
    assert config.source.statistics is Statistics.COHERENT
    assert config.grid.axes == ("x",)
    assert config.shots == 10
    assert config.seed == 2**64 - 1
    assert config.detector.t_ref == pytest.approx(2.0 / 299792458.0)


def test_unknown_and_invalid_keys_are_all_listed():
    text = "shots = -1\ndetector.efficency = 0.5\ngrid.half_width = 1e-3\n"

    with pytest.raises(ConfigError) as excinfo:
        parse_run_config(text)

    message = str(excinfo.value)
    assert "shots" in message
    assert "detector.efficency" in message


@pytest.mark.parametrize("line, key", [("n_jobs = 0", "n_jobs"), ("normalization = por_evento", "normalization")])
def test_invalid_run_options_name_their_key(line: str, key: str):
    with pytest.raises(ConfigError, match=key):
        parse_run_config(line + "\n")


def test_normalization_defaults_to_per_shot():
    assert parse_run_config("shots = 5\n").normalization == "per_shot"
    assert parse_run_config("normalization = total_pairs\n").to_dict()["normalization"] == "total_pairs"


def test_source_errors_name_the_source_key():
    with pytest.raises(ConfigError, match="source.wavelength"):
        parse_run_config("source.mode = photon\nsource.distance = 1.0\nsource.size.x = 1e-3\nsource.wavelength = -1\n")


def test_output_dir_defaults_to_environment(monkeypatch):
    monkeypatch.setenv("HBTLAB_OUTPUT_DIR", "/tmp/hbt_runs")
    assert RunConfig().output_dir == Path("/tmp/hbt_runs")


def test_run_config_dict_roundtrip():
    config = parse_run_config("source.statistics = fermion\nsource.mean_count = 30\nshots = 5\n")
    again = RunConfig.from_dict(config.to_dict())

    assert again.to_dict() == config.to_dict()


def test_example_configs_load():
    """Las configuraciones de ejemplo del repositorio son válidas."""
    config_dir = Path(__file__).resolve().parents[2] / "configs"
    paths = sorted(config_dir.glob("*.cfg"))
    assert paths
    for path in paths:
        config = load_run_config(path)
        assert config.shots > 0
