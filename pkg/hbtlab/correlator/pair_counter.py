# --- hbtlab/correlator/pair_counter.py ---

"""
Histogramas de pares de eventos en función de su separación.

El conteo usa listas de celdas: los eventos se ordenan por celda (de lado
igual al alcance máximo del histograma) y cada evento solo se compara con los
de su celda y las vecinas. El resultado es exacto, idéntico bit a bit al doble
bucle de fuerza bruta, porque ambos caminos comparten el cálculo de
separaciones y la regla de asignación de bins.

Los histogramas parciales (por bloque de disparos) se combinan sumando, una
operación asociativa: el resultado no depende de la partición en bloques.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence

import numpy as np
from joblib import Parallel, cpu_count, delayed

from hbtlab.core.model import Shot
from hbtlab.data_system.templates.templates import BinningSpec

logger = logging.getLogger(__name__)

PairingPlan = Literal["consecutive", "cyclic", "all"]

_MAX_LINEAR_KEY = 2**62


@dataclass(frozen=True, eq=False)
class PairHistogram:
    """
    Conteos de pares por bin de separación y número total de pares considerados.

    `units` es el número de disparos (mismo disparo) o de parejas de disparos
    (entre disparos) que aportan pares.
    """

    counts: np.ndarray
    total_pairs: int
    kind: Literal["same_shot", "cross_shot"]
    binning: BinningSpec
    units: int = 0

    def __post_init__(self):
        if self.counts.shape != self.binning.shape:
            raise ValueError(f"Forma de conteos {self.counts.shape} distinta de la del binning {self.binning.shape}.")

    def __add__(self, other: "PairHistogram") -> "PairHistogram":
        if other.kind != self.kind or other.binning != self.binning:
            raise ValueError("Solo pueden sumarse histogramas del mismo tipo y binning.")
        return PairHistogram(
            self.counts + other.counts, self.total_pairs + other.total_pairs, self.kind, self.binning,
            self.units + other.units,
        )

    @classmethod
    def zeros(cls, binning: BinningSpec, kind: Literal["same_shot", "cross_shot"]) -> "PairHistogram":
        return cls(np.zeros(binning.shape, dtype=np.int64), 0, kind, binning)


def shot_coordinates(shot: Shot, binning: BinningSpec) -> np.ndarray:
    """Coordenadas (n, D) de los eventos en los ejes del binning; z = v_ref·t."""
    columns = {"x": shot.x, "y": shot.y}
    if "z" in binning.axes:
        columns["z"] = binning.v_ref * shot.t
    return np.stack([columns[axis] for axis in binning.axes], axis=1) if len(shot) else np.empty((0, len(binning.axes)))


def _flat_bins(delta: np.ndarray, binning: BinningSpec) -> np.ndarray:
    """Índice lineal de bin para cada separación (fila de delta); -1 si queda fuera."""
    n_bins = np.asarray(binning.n_bins)
    widths = np.array([binning.bin_width[a] for a in binning.axes])
    if binning.signed:
        idx = np.floor(delta / widths).astype(np.int64) + n_bins
        valid = np.all((idx >= 0) & (idx < 2 * n_bins), axis=1)
    else:
        idx = np.floor(np.abs(delta) / widths).astype(np.int64)
        valid = np.all(idx < n_bins, axis=1)
    flat = np.full(len(delta), -1, dtype=np.int64)
    if valid.any():
        flat[valid] = np.ravel_multi_index(tuple(idx[valid].T), binning.shape)
    return flat


def _accumulate(counts: np.ndarray, delta: np.ndarray, binning: BinningSpec) -> None:
    flat = _flat_bins(delta, binning)
    flat = flat[flat >= 0]
    if flat.size:
        counts += np.bincount(flat, minlength=counts.size).reshape(counts.shape)


def _ordered(same: bool, binning: BinningSpec) -> bool:
    return same and binning.signed


def brute_force_counts(a: np.ndarray, b: Optional[np.ndarray], binning: BinningSpec) -> np.ndarray:
    """
    Doble bucle O(n²). Con `b` None cuenta los pares internos de `a` (i < j,
    o pares ordenados i ≠ j con bins con signo); si no, todos los pares a×b.
    """
    counts = np.zeros(binning.shape, dtype=np.int64)
    same = b is None
    b = a if same else b
    ia, ib = np.meshgrid(np.arange(len(a)), np.arange(len(b)), indexing="ij")
    ia, ib = ia.reshape(-1), ib.reshape(-1)
    if same:
        mask = ia != ib if _ordered(same, binning) else ia < ib
        ia, ib = ia[mask], ib[mask]
    _accumulate(counts, a[ia] - b[ib], binning)
    return counts


def cell_list_counts(a: np.ndarray, b: Optional[np.ndarray], binning: BinningSpec) -> np.ndarray:
    """Mismo resultado que `brute_force_counts`, buscando vecinos por listas de celdas."""
    same = b is None
    b = a if same else b
    counts = np.zeros(binning.shape, dtype=np.int64)
    if len(a) == 0 or len(b) == 0:
        return counts
    dim = a.shape[1]
    reach = np.array([n * binning.bin_width[axis] for n, axis in zip(binning.n_bins, binning.axes)])
    cell_size = reach * (1.0 + 1e-9)
    origin = np.minimum(a.min(axis=0), b.min(axis=0))
    # desplazamiento +1 para que las celdas vecinas tengan índice no negativo
    cells_a = np.floor((a - origin) / cell_size).astype(np.int64) + 1
    cells_b = np.floor((b - origin) / cell_size).astype(np.int64) + 1
    extent = np.maximum(cells_a.max(axis=0), cells_b.max(axis=0)) + 2
    if float(np.prod(extent.astype(float))) >= _MAX_LINEAR_KEY:
        logger.debug("Espacio de celdas demasiado grande; se usa fuerza bruta.")
        return brute_force_counts(a, None if same else b, binning)
    strides = np.cumprod(np.concatenate([[1], extent[:-1]])).astype(np.int64)
    keys_a = cells_a @ strides
    keys_b = cells_b @ strides
    order = np.argsort(keys_b, kind="stable")
    sorted_keys = keys_b[order]
    ordered_pairs = _ordered(same, binning)

    for offset in itertools.product((-1, 0, 1), repeat=dim):
        target = keys_a + np.asarray(offset, dtype=np.int64) @ strides
        left = np.searchsorted(sorted_keys, target, side="left")
        right = np.searchsorted(sorted_keys, target, side="right")
        per_point = right - left
        total = int(per_point.sum())
        if total == 0:
            continue
        ia = np.repeat(np.arange(len(a)), per_point)
        starts = np.repeat(left - (np.cumsum(per_point) - per_point), per_point)
        ib = order[starts + np.arange(total)]
        if same:
            mask = ia != ib if ordered_pairs else ia < ib
            ia, ib = ia[mask], ib[mask]
        _accumulate(counts, a[ia] - b[ib], binning)
    return counts


def _same_shot_block(coords: List[np.ndarray], binning: BinningSpec) -> np.ndarray:
    counts = np.zeros(binning.shape, dtype=np.int64)
    for c in coords:
        if len(c) > 1:
            counts += cell_list_counts(c, None, binning)
    return counts


def _cross_shot_block(pairs: List[tuple], binning: BinningSpec) -> np.ndarray:
    counts = np.zeros(binning.shape, dtype=np.int64)
    for a, b in pairs:
        counts += cell_list_counts(a, b, binning)
        if binning.signed:
            counts += cell_list_counts(b, a, binning)
    return counts


def _blocks(items: Sequence, n_jobs: int) -> List[list]:
    if n_jobs == 1 or len(items) <= 1:
        return [list(items)]
    workers = cpu_count() if n_jobs < 0 else n_jobs
    n_blocks = max(1, min(len(items), 4 * workers))
    return [list(items[lo:hi]) for lo, hi in _split_bounds(len(items), n_blocks)]


def _split_bounds(n: int, n_blocks: int):
    edges = np.linspace(0, n, n_blocks + 1).astype(int)
    return [(lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]


def pair_histogram(shots: Sequence[Shot], binning: BinningSpec, n_jobs: int = 1) -> PairHistogram:
    """
    Histograma de pares dentro de cada disparo.

    total_pairs = Σ n(n−1)/2 (o Σ n(n−1) con bins con signo, que cuentan pares
    ordenados); los pares fuera del alcance cuentan en el total pero no en los bins.
    """
    if not shots:
        raise ValueError("Se necesita al menos un disparo para el histograma de pares.")
    coords = [shot_coordinates(shot, binning) for shot in shots]
    factor = 1 if binning.signed else 2
    total = sum(len(c) * (len(c) - 1) // factor for c in coords)
    blocks = _blocks(coords, n_jobs)
    partials = Parallel(n_jobs=n_jobs)(delayed(_same_shot_block)(block, binning) for block in blocks)
    counts = np.sum(partials, axis=0) if partials else np.zeros(binning.shape, dtype=np.int64)
    histogram = PairHistogram(counts.astype(np.int64), int(total), "same_shot", binning, len(shots))
    logger.info(f"Pares en el mismo disparo: {int(counts.sum())} en bins de {total} totales ({len(shots)} disparos)")
    return histogram


def pairing_plan(n_shots: int, plan: PairingPlan = "consecutive") -> np.ndarray:
    """Pares de índices de disparos distintos usados para la normalización."""
    if n_shots < 2:
        raise ValueError(f"La normalización entre disparos necesita al menos 2 disparos, hay {n_shots}.")
    if plan == "consecutive":
        first = np.arange(n_shots - 1)
        return np.stack([first, first + 1], axis=1)
    if plan == "cyclic":
        first = np.arange(n_shots if n_shots > 2 else 1)
        return np.stack([first, (first + 1) % n_shots], axis=1)
    if plan == "all":
        return np.array(list(itertools.combinations(range(n_shots), 2)), dtype=int)
    raise ValueError(f"Plan de emparejamiento desconocido: '{plan}'.")


def cross_shot_histogram(
    shots: Sequence[Shot],
    binning: BinningSpec,
    plan: PairingPlan = "consecutive",
    n_jobs: int = 1,
) -> PairHistogram:
    """
    Histograma de pares formados con eventos de disparos distintos.

    total_pairs = Σ n_a·n_b sobre los pares del plan (el doble con bins con signo).

    Raises:
        ValueError: Con menos de 2 disparos.
    """
    index_pairs = pairing_plan(len(shots), plan)
    coords = [shot_coordinates(shot, binning) for shot in shots]
    factor = 2 if binning.signed else 1
    total = sum(factor * len(coords[i]) * len(coords[j]) for i, j in index_pairs)
    work = [(coords[i], coords[j]) for i, j in index_pairs if len(coords[i]) and len(coords[j])]
    blocks = _blocks(work, n_jobs)
    partials = Parallel(n_jobs=n_jobs)(delayed(_cross_shot_block)(block, binning) for block in blocks)
    counts = np.sum(partials, axis=0) if partials else np.zeros(binning.shape, dtype=np.int64)
    histogram = PairHistogram(counts.astype(np.int64), int(total), "cross_shot", binning, len(index_pairs))
    logger.info(f"Pares entre disparos ({plan}): {int(counts.sum())} en bins de {total} totales")
    return histogram
