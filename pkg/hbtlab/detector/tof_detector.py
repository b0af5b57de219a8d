# --- hbtlab/detector/tof_detector.py ---

"""
Modelo del detector de tiempo de vuelo (placa de microcanales).

Transforma los eventos ideales del plano de detección en eventos medidos:
eficiencia global, desenfoque gaussiano por eje y recorte por la apertura
circular. La coordenada vertical se obtiene del tiempo de llegada, ya que
todas las partículas llegan prácticamente con la misma velocidad.
"""

import logging
from typing import Union

import numpy as np

from hbtlab.core.model import DETECTOR_STREAM, EventSet, RandomSource, RngStream, Shot
from hbtlab.data_system.templates.templates import DetectorSpec

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def _clock(spec: DetectorSpec):
    if spec.v_ref is None or spec.t_ref is None:
        raise ValueError("El detector necesita v_ref y t_ref para convertir tiempos en posiciones.")
    return spec.t_ref, spec.v_ref


def time_to_vertical(t: ArrayLike, spec: DetectorSpec) -> ArrayLike:
    """z = v_ref·(t − t_ref)."""
    t_ref, v_ref = _clock(spec)
    return v_ref * (np.asarray(t, dtype=float) - t_ref) if isinstance(t, np.ndarray) else v_ref * (t - t_ref)


def vertical_to_time(z: ArrayLike, spec: DetectorSpec) -> ArrayLike:
    """Inversa de `time_to_vertical`: t = t_ref + z / v_ref."""
    t_ref, v_ref = _clock(spec)
    return t_ref + np.asarray(z, dtype=float) / v_ref if isinstance(z, np.ndarray) else t_ref + z / v_ref


def _detector_generator(rng: RandomSource) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator(DETECTOR_STREAM)
    return rng


def apply_detector(events: EventSet, spec: DetectorSpec, rng: RandomSource) -> EventSet:
    """
    Aplica eficiencia, resolución y apertura a los eventos de un disparo.

    Con un `RngStream` se usa su subflujo del detector, independiente del
    muestreo de la fuente.
    """
    gen = _detector_generator(rng)
    n_in = len(events)
    keep = gen.random(n_in) < spec.efficiency
    x, y, t = events.x[keep], events.y[keep], events.t[keep]

    dx, dy, dz = spec.resolution_rms
    if dx > 0:
        x = x + gen.normal(0.0, dx, len(x))
    if dy > 0:
        y = y + gen.normal(0.0, dy, len(y))
    if dz > 0:
        z = time_to_vertical(t, spec) + gen.normal(0.0, dz, len(t))
        t = vertical_to_time(z, spec)

    inside = (x**2 + y**2 <= spec.aperture_radius**2) & (t >= 0)
    result = EventSet(x[inside], y[inside], t[inside], events.statistics)
    logger.debug(f"Detector: {n_in} eventos de entrada, {len(result)} registrados")
    return result


def apply_detector_to_shot(shot: Shot, spec: DetectorSpec, rng: RandomSource) -> Shot:
    """Igual que `apply_detector`, conservando el identificador y la etiqueta del disparo."""
    events = EventSet(shot.x, shot.y, shot.t, shot.source_tag)
    return apply_detector(events, spec, rng).to_shot(shot.shot_id)
