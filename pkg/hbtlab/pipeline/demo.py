# --- hbtlab/pipeline/demo.py ---

"""
Demostración unidimensional: una fila de partículas sobre un segmento,
agrupadas (bosones), independientes (distinguibles) o antiagrupadas
(fermiones). Siempre se colocan exactamente n partículas.
"""

import logging
from typing import Optional

import numpy as np

from hbtlab.core.model import RngStream, Statistics
from hbtlab.sources.kernels import DetectorGrid, SeparableKernel
from hbtlab.sources.samplers import place_events, sample_chaotic_field, sample_projection_dpp

logger = logging.getLogger(__name__)

CELLS_PER_LENGTH = 8
STATISTICS_CODES = {"b": Statistics.BOSON, "f": Statistics.FERMION, "d": Statistics.DISTINGUISHABLE}


def demo_row(statistics: Statistics, n_points: int, length: float = 1.0, seed: int = 0,
             coherence_length: Optional[float] = None) -> np.ndarray:
    """
    Posiciones ordenadas de n partículas en [0, length].

    El núcleo es gaussiano con longitud de coherencia length/n por defecto.
    """
    if n_points < 2:
        raise ValueError(f"La demostración necesita al menos 2 partículas, se pidieron {n_points}.")
    if length <= 0:
        raise ValueError("La longitud del segmento debe ser positiva.")
    statistics = Statistics(statistics)
    gen = RngStream(seed, 0).generator()

    if statistics is Statistics.DISTINGUISHABLE:
        return np.sort(gen.uniform(0.0, length, n_points))

    scale = coherence_length or length / n_points
    grid = DetectorGrid.line(0.0, length, CELLS_PER_LENGTH * int(np.ceil(length / scale)))
    kernel = SeparableKernel.gaussian(grid, {"x": scale}).factors[0]

    if statistics is Statistics.BOSON:
        intensity = np.abs(sample_chaotic_field(kernel, gen)) ** 2
        cells = gen.choice(grid.size, size=n_points, p=intensity / intensity.sum())
    elif statistics is Statistics.FERMION:
        if kernel.n_modes < n_points:
            raise ValueError(f"El núcleo solo tiene {kernel.n_modes} modos para {n_points} fermiones.")
        cells = sample_projection_dpp(kernel.modes(np.arange(n_points)), gen)
    else:
        raise ValueError(f"Estadística no admitida en la demostración: '{statistics.value}'.")

    events = place_events(grid, cells, gen, statistics)
    logger.debug(f"Demostración {statistics.value}: {n_points} partículas en {grid.size} celdas")
    return np.sort(events.x)


def format_row(positions: np.ndarray) -> str:
    return "# x[m]\n" + " ".join(f"{x:.17g}" for x in positions) + "\n"
