# --- hbtlab/correlator/counting.py ---

"""Estadística de conteo por disparo dentro de una celda del detector."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from hbtlab.core.model import Shot
from hbtlab.data_system.templates.templates import CountingCell, DetectorSpec
from hbtlab.detector.tof_detector import time_to_vertical

logger = logging.getLogger(__name__)

MIN_SHOTS = 100


@dataclass(frozen=True)
class CountingStatistics:
    mean: float
    variance: float
    variance_stderr: float
    n_shots: int


def cell_counts(shots: Sequence[Shot], cell: CountingCell, detector: Optional[DetectorSpec] = None) -> np.ndarray:
    """Número de eventos de cada disparo dentro de la caja (límites [inf, sup))."""
    if "z" in cell.bounds and detector is None:
        raise ValueError("Los límites en z requieren el reloj del detector.")
    counts = np.empty(len(shots), dtype=np.int64)
    for k, shot in enumerate(shots):
        columns = {"x": shot.x, "y": shot.y}
        if "z" in cell.bounds:
            columns["z"] = time_to_vertical(shot.t, detector)
        inside = np.ones(len(shot), dtype=bool)
        for axis, (lo, hi) in cell.bounds.items():
            inside &= (columns[axis] >= lo) & (columns[axis] < hi)
        counts[k] = int(inside.sum())
    return counts


def counting_statistics(
    shots: Sequence[Shot], cell: CountingCell, detector: Optional[DetectorSpec] = None
) -> CountingStatistics:
    """
    Media, varianza muestral insesgada y error jackknife de la varianza del
    número de eventos por disparo en la celda. Sin datos devuelve ceros.
    """
    counts = cell_counts(shots, cell, detector).astype(float)
    n = len(counts)
    if n == 0:
        return CountingStatistics(0.0, 0.0, 0.0, 0)
    if n < MIN_SHOTS:
        logger.warning(f"Solo {n} disparos para la estadística de conteo; los errores serán poco fiables.")
    mean = float(counts.mean())
    if n < 3:
        variance = float(counts.var(ddof=1)) if n == 2 else 0.0
        return CountingStatistics(mean, variance, float("nan") if n > 1 else 0.0, n)

    variance = float(counts.var(ddof=1))
    # varianzas leave-one-out a partir de las sumas totales
    total, total_sq = counts.sum(), np.sum(counts**2)
    loo_sum = total - counts
    loo_sq = total_sq - counts**2
    loo_var = (loo_sq - loo_sum**2 / (n - 1)) / (n - 2)
    jackknife = float(np.sqrt((n - 1) / n * np.sum((loo_var - loo_var.mean()) ** 2)))
    result = CountingStatistics(mean, variance, jackknife, n)
    logger.info(f"Conteo en celda: media {mean:.4g}, varianza {variance:.4g} ± {jackknife:.2g} ({n} disparos)")
    return result
