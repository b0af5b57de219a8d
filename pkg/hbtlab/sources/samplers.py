# --- hbtlab/sources/samplers.py ---

"""
Muestreadores de eventos de detección para las cuatro estadísticas.

  * bosones: Poisson condicionado a un campo caótico (proceso permanental).
  * fermiones: proceso determinantal exacto (selección Bernoulli de modos y
    muestreo secuencial de la proyección con Gram-Schmidt).
  * coherente: un único modo, puntos de Poisson independientes.
  * distinguibles: cualquier densidad, puntos de Poisson independientes.

Todos son funciones puras de (núcleo, parámetros, flujo aleatorio).
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from hbtlab.core.model import EventSet, NumericalError, RandomSource, Statistics, as_generator
from hbtlab.data_system.templates.templates import BaseSourceSpec
from hbtlab.sources.kernels import DetectorGrid, Kernel, scale_to_occupation

logger = logging.getLogger(__name__)

OCCUPATION_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ArrivalClock:
    """Reloj de llegada: t = t_ref + z / v_ref."""

    t_ref: float = 0.0
    v_ref: float = 1.0

    @classmethod
    def from_source(cls, spec: BaseSourceSpec) -> "ArrivalClock":
        t_ref, v_ref = spec.arrival_clock()
        return cls(t_ref=t_ref, v_ref=v_ref)


def place_events(
    grid: DetectorGrid,
    cells: np.ndarray,
    gen: np.random.Generator,
    statistics: Statistics,
    clock: ArrivalClock = ArrivalClock(),
    jitter: bool = True,
) -> EventSet:
    """
    Convierte índices de celda en eventos (x, y, t).

    Con `jitter` cada evento se coloca uniformemente dentro de su celda. Los
    ejes ausentes de la malla quedan en 0 (x, y) o en t_ref (t).
    """
    cells = np.asarray(cells, dtype=int)
    points = grid.points[cells]
    if jitter and len(cells):
        points = points + (gen.random(points.shape) - 0.5) * np.asarray(grid.cell_widths)
    columns = {axis: points[:, k] for k, axis in enumerate(grid.axes)}
    zeros = np.zeros(len(cells))
    z = columns.get("z", zeros)
    return EventSet(
        x=columns.get("x", zeros),
        y=columns.get("y", zeros),
        t=clock.t_ref + z / clock.v_ref,
        statistics=statistics,
    )


def sample_chaotic_field(kernel: Kernel, rng: RandomSource) -> np.ndarray:
    """
    Campo caótico E = Σ_k √λ_k a_k φ_k con a_k normales complejas circulares
    independientes de varianza unidad; su covarianza en el conjunto es C.
    """
    gen = as_generator(rng)
    n_modes = kernel.n_modes
    if n_modes == 0:
        return np.zeros(kernel.size, dtype=complex)
    amplitudes = (gen.standard_normal(n_modes) + 1j * gen.standard_normal(n_modes)) / np.sqrt(2.0)
    return kernel.synthesize(np.sqrt(kernel.eigenvalues) * amplitudes)


def _draw_cells(gen: np.random.Generator, weights: np.ndarray, count: int) -> np.ndarray:
    total = float(np.sum(weights))
    if count == 0 or total <= 0:
        return np.empty(0, dtype=int)
    return gen.choice(len(weights), size=count, p=weights / total)


def sample_boson_events(
    kernel: Kernel,
    mean_count: float,
    rng: RandomSource,
    clock: ArrivalClock = ArrivalClock(),
    jitter: bool = True,
) -> EventSet:
    """
    Un disparo bosónico: se sortea un campo caótico y, condicionado a él, un
    número de Poisson de eventos con densidad |E|².

    La tasa sigue la intensidad total del campo, de modo que el número de
    eventos en una celda tiene varianza ⟨N⟩ + ⟨N⟩²/g.
    """
    if mean_count < 0:
        raise ValueError(f"mean_count debe ser no negativo, se recibió {mean_count}")
    gen = as_generator(rng)
    intensity = np.abs(sample_chaotic_field(kernel, gen)) ** 2
    reference = float(np.sum(kernel.mean_density))
    if reference <= 0:
        return EventSet.empty(Statistics.BOSON)
    count = int(gen.poisson(mean_count * float(np.sum(intensity)) / reference))
    cells = _draw_cells(gen, intensity, count)
    return place_events(kernel.grid, cells, gen, Statistics.BOSON, clock, jitter)


def sample_projection_dpp(vectors: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    """
    Muestra exacta de la proyección determinantal K = V V† (columnas de V
    ortonormales). Devuelve tantos índices distintos como columnas tiene V.

    Cada punto se sortea con la densidad diagonal residual; después se
    ortogonaliza (Gram-Schmidt) la columna del núcleo del punto elegido
    contra las anteriores y se descuenta de la diagonal.
    """
    n, k = vectors.shape
    residual = np.sum(np.abs(vectors) ** 2, axis=1)
    basis = np.zeros((n, k), dtype=complex)
    chosen = np.empty(k, dtype=int)
    for it in range(k):
        weights = np.clip(residual, 0.0, None)
        j = int(gen.choice(n, p=weights / weights.sum()))
        chosen[it] = j
        column = vectors @ vectors[j].conj() - basis[:, :it] @ basis[j, :it].conj()
        column /= np.sqrt(residual[j])
        basis[:, it] = column
        residual = residual - np.abs(column) ** 2
        residual[j] = 0.0
    return chosen


def sample_fermion_events(
    kernel: Kernel,
    rng: RandomSource,
    clock: ArrivalClock = ArrivalClock(),
    jitter: bool = True,
) -> EventSet:
    """
    Un disparo fermiónico: cada modo k se ocupa con probabilidad λ_k y los
    modos ocupados se muestrean como proceso determinantal de proyección.

    Raises:
        NumericalError: Si algún autovalor excede 1 (ocupación no física).
    """
    gen = as_generator(rng)
    eigenvalues = kernel.eigenvalues
    if eigenvalues.size and float(np.max(eigenvalues)) > 1.0 + OCCUPATION_TOLERANCE:
        raise NumericalError(
            f"Ocupación no física para fermiones: autovalor máximo {float(np.max(eigenvalues)):.6g} > 1."
        )
    selected = np.flatnonzero(gen.random(eigenvalues.size) < eigenvalues)
    if selected.size == 0:
        return EventSet.empty(Statistics.FERMION)
    cells = sample_projection_dpp(kernel.modes(selected), gen)
    return place_events(kernel.grid, cells, gen, Statistics.FERMION, clock, jitter)


def _poisson_events(
    density: np.ndarray,
    mean_count: float,
    gen: np.random.Generator,
    grid: DetectorGrid,
    statistics: Statistics,
    clock: ArrivalClock,
    jitter: bool,
) -> EventSet:
    if mean_count < 0:
        raise ValueError(f"mean_count debe ser no negativo, se recibió {mean_count}")
    if mean_count == 0:
        return EventSet.empty(statistics)
    count = int(gen.poisson(mean_count))
    cells = _draw_cells(gen, density, count)
    return place_events(grid, cells, gen, statistics, clock, jitter)


def sample_coherent_events(
    mode: np.ndarray,
    mean_count: float,
    rng: RandomSource,
    grid: DetectorGrid,
    clock: ArrivalClock = ArrivalClock(),
    jitter: bool = True,
) -> EventSet:
    """Fuente coherente (láser, condensado): Poisson(mean_count) puntos con densidad |modo|²."""
    return _poisson_events(
        np.abs(np.asarray(mode)) ** 2, mean_count, as_generator(rng), grid, Statistics.COHERENT, clock, jitter
    )


def sample_distinguishable_events(
    density: np.ndarray,
    mean_count: float,
    rng: RandomSource,
    grid: DetectorGrid,
    clock: ArrivalClock = ArrivalClock(),
    jitter: bool = True,
) -> EventSet:
    """Partículas independientes: Poisson(mean_count) puntos con la densidad dada."""
    density = np.asarray(density, dtype=float)
    if np.any(density < 0):
        raise ValueError("La densidad no puede ser negativa.")
    return _poisson_events(
        density, mean_count, as_generator(rng), grid, Statistics.DISTINGUISHABLE, clock, jitter
    )


def coherent_mode(kernel: Kernel) -> np.ndarray:
    """Modo normalizado cuyo perfil de intensidad es la densidad media del núcleo."""
    density = kernel.mean_density
    return np.sqrt(density / float(np.sum(density))).astype(complex)


# Registro de muestreadores por estadística, con la firma común
# (núcleo, mean_count, generador, reloj, jitter).
ShotSampler = Callable[[Kernel, float, np.random.Generator, ArrivalClock, bool], EventSet]
_sampler_registry: Dict[Statistics, ShotSampler] = {}


def register_sampler(statistics: Statistics):
    """Decorador para registrar el muestreador de disparos de una estadística."""

    def decorator(func: ShotSampler) -> ShotSampler:
        if statistics in _sampler_registry:
            raise ValueError(f"Estadística '{statistics.value}' ya tiene muestreador.")
        _sampler_registry[statistics] = func
        return func

    return decorator


@register_sampler(Statistics.BOSON)
def _boson_shot(kernel, mean_count, gen, clock, jitter):
    return sample_boson_events(kernel, mean_count, gen, clock, jitter)


@register_sampler(Statistics.FERMION)
def _fermion_shot(kernel, mean_count, gen, clock, jitter):
    # el número medio ya está fijado por las ocupaciones del núcleo
    return sample_fermion_events(kernel, gen, clock, jitter)


@register_sampler(Statistics.COHERENT)
def _coherent_shot(kernel, mean_count, gen, clock, jitter):
    return sample_coherent_events(coherent_mode(kernel), mean_count, gen, kernel.grid, clock, jitter)


@register_sampler(Statistics.DISTINGUISHABLE)
def _distinguishable_shot(kernel, mean_count, gen, clock, jitter):
    return sample_distinguishable_events(kernel.mean_density, mean_count, gen, kernel.grid, clock, jitter)


def prepare_kernel(kernel: Kernel, statistics: Statistics, mean_count: float) -> Kernel:
    """Ajusta el núcleo a la estadística: para fermiones escala las ocupaciones a mean_count."""
    if Statistics(statistics) is Statistics.FERMION:
        return scale_to_occupation(kernel, mean_count)
    return kernel


def sample_shot(
    kernel: Kernel,
    statistics: Statistics,
    mean_count: float,
    rng: RandomSource,
    clock: Optional[ArrivalClock] = None,
    jitter: bool = True,
) -> EventSet:
    """
    Despacha al muestreador registrado para la estadística.

    Para fermiones el núcleo debe venir ya preparado con `prepare_kernel`.
    """
    sampler = _sampler_registry.get(Statistics(statistics))
    if sampler is None:
        raise ValueError(f"Estadística sin muestreador: '{statistics}'. Disponibles: {sorted(s.value for s in _sampler_registry)}")
    events = sampler(kernel, mean_count, as_generator(rng), clock or ArrivalClock(), jitter)
    logger.debug(f"Disparo {Statistics(statistics).value}: {len(events)} eventos")
    return events
