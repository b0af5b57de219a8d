# --- tests/core/test_model.py ---

"""
Pruebas unitarias de los tipos de dominio: flujos aleatorios reproducibles,
conjuntos de eventos y disparos.
"""

import numpy as np
import pytest

from hbtlab.core.model import (
    DETECTOR_STREAM,
    SAMPLING_STREAM,
    DetectionEvent,
    EventSet,
    FitError,
    NumericalError,
    RngStream,
    Shot,
    Statistics,
    as_generator,
)


def test_rng_stream_is_reproducible_and_independent_per_shot():
    """El par (seed, stream_id) fija el generador; disparos distintos dan secuencias distintas."""
    first = RngStream(seed=42, stream_id=7).generator().random(5)
    again = RngStream(seed=42, stream_id=7).generator().random(5)
    other_shot = RngStream(seed=42, stream_id=8).generator().random(5)

    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other_shot)


def test_rng_stream_purposes_are_distinct_substreams():
    stream = RngStream(seed=1, stream_id=0)
    sampling = stream.generator(SAMPLING_STREAM).random(4)
    detector = stream.generator(DETECTOR_STREAM).random(4)

    assert not np.array_equal(sampling, detector)
    np.testing.assert_array_equal(as_generator(stream).random(4), sampling)


@pytest.mark.parametrize("seed, stream_id", [(-1, 0), (2**64, 0), (0, -3)])
def test_rng_stream_rejects_invalid_arguments(seed, stream_id):
    with pytest.raises(ValueError):
        RngStream(seed=seed, stream_id=stream_id)


def test_rng_stream_accepts_full_64_bit_seed():
    values = RngStream(seed=2**64 - 1, stream_id=0).generator().random(2)
    assert values.shape == (2,)


def test_event_set_columns_are_read_only_and_validated():
    events = EventSet([0.0, 1.0], [2.0, 3.0], [0.1, 0.2], Statistics.BOSON)

    assert len(events) == 2
    with pytest.raises(ValueError):
        events.x[0] = 5.0
    with pytest.raises(ValueError):
        EventSet([0.0], [1.0, 2.0], [0.1], Statistics.BOSON)
    with pytest.raises(ValueError):
        EventSet([np.nan], [0.0], [0.0], Statistics.BOSON)


def test_shot_from_events_roundtrip_and_time_sorting():
    """Un disparo construido con eventos los devuelve iguales; sorted_by_time ordena por llegada."""
    events = [DetectionEvent(3, 1.0, 2.0, 0.5), DetectionEvent(3, -1.0, 0.0, 0.25)]
    shot = Shot.from_events(3, events, Statistics.FERMION)

    assert shot.events == events
    ordered = shot.sorted_by_time()
    np.testing.assert_array_equal(ordered.t, [0.25, 0.5])
    np.testing.assert_array_equal(ordered.x, [-1.0, 1.0])
    assert ordered.source_tag is Statistics.FERMION


def test_shot_rejects_foreign_events_and_negative_times():
    with pytest.raises(ValueError):
        Shot.from_events(1, [DetectionEvent(2, 0.0, 0.0, 0.0)], Statistics.BOSON)
    with pytest.raises(ValueError):
        Shot(0, [0.0], [0.0], [-1e-3])
    with pytest.raises(ValueError):
        Shot(-1)


def test_empty_shot_is_legal():
    shot = Shot(5)
    assert len(shot) == 0
    assert shot.events == []


def test_fit_error_is_numerical_and_keeps_residual():
    error = FitError("sin convergencia", best_residual=12.5)
    assert isinstance(error, NumericalError)
    assert error.best_residual == 12.5
