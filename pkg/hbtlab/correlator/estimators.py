# --- hbtlab/correlator/estimators.py ---

"""
Estimador de g²(Δ): pares del mismo disparo normalizados con pares entre
disparos distintos, que eliminan la envolvente de densidad de la nube.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Literal, Tuple, Union

import numpy as np
import pandas as pd

from hbtlab.core.model import EventFileError
from hbtlab.correlator.pair_counter import PairHistogram
from hbtlab.data_system.templates.templates import AXES, BinningSpec

logger = logging.getLogger(__name__)

TABLE_HEADER = "# dx[m] dy[m] dz[m] g2 stderr"

Normalization = Literal["per_shot", "total_pairs"]


@dataclass(frozen=True, eq=False)
class CorrelationFunction:
    """g² y su error por bin; los bins inválidos (sin pares cruzados) valen NaN."""

    binning: BinningSpec
    g2: np.ndarray
    stderr: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.g2) & np.isfinite(self.stderr)

    def centers(self) -> Dict[str, np.ndarray]:
        """Centros de bin por eje (m)."""
        result = {}
        for axis, n in zip(self.binning.axes, self.binning.n_bins):
            width = self.binning.bin_width[axis]
            first = -n if self.binning.signed else 0
            result[axis] = (np.arange(first, n) + 0.5) * width
        return result

    def points(self) -> np.ndarray:
        """Centros de todos los bins, forma (n_bins_totales, D), en el orden de `g2.reshape(-1)`."""
        mesh = np.meshgrid(*self.centers().values(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def tail_mean(self, min_separation: float) -> Tuple[float, float]:
        """
        Media ponderada de g² y su error sobre los bins válidos cuya separación
        euclídea supera `min_separation`.
        """
        distance = np.linalg.norm(self.points(), axis=1)
        g2, err = self.g2.reshape(-1), self.stderr.reshape(-1)
        mask = (distance > min_separation) & np.isfinite(g2) & np.isfinite(err) & (err > 0)
        if not mask.any():
            return float("nan"), float("nan")
        weights = 1.0 / err[mask] ** 2
        mean = float(np.sum(weights * g2[mask]) / np.sum(weights))
        return mean, float(1.0 / np.sqrt(np.sum(weights)))

    def to_table(self) -> pd.DataFrame:
        points = self.points()
        table = pd.DataFrame({f"d{a}": np.full(len(points), np.nan) for a in AXES})
        for k, axis in enumerate(self.binning.axes):
            table[f"d{axis}"] = points[:, k]
        table["g2"] = self.g2.reshape(-1)
        table["stderr"] = self.stderr.reshape(-1)
        return table

    def write_table(self, path: Union[str, Path]) -> None:
        """Escribe la tabla `# dx[m] dy[m] dz[m] g2 stderr`, una fila por bin."""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", encoding="utf-8", newline="\n") as fh:
                fh.write(TABLE_HEADER + "\n")
                self.to_table().to_csv(
                    fh, sep=" ", header=False, index=False, float_format="%.17g",
                    na_rep="nan", lineterminator="\n",
                )
        except OSError as e:
            raise EventFileError(f"No se pudo escribir la tabla de correlación {path}: {e}") from e
        logger.info(f"Tabla de correlación escrita en {path}")


def _normalization(same: PairHistogram, cross: PairHistogram, normalization: Normalization) -> float:
    """
    Cociente C/S entre los pares cruzados y los del mismo disparo esperados sin correlación.

    total_pairs: C y S son los totales de pares. per_shot: promedio de conjunto
    ⟨I I⟩/⟨I⟩⟨I⟩; por disparo se esperan μ²/2 pares no ordenados (μ² ordenados)
    y por pareja de disparos μ² (2μ² con bins con signo), así que C/S = 2·parejas/disparos.
    """
    if normalization == "total_pairs":
        if same.total_pairs == 0 or cross.total_pairs == 0:
            raise ValueError("No hay pares suficientes para normalizar g².")
        return cross.total_pairs / same.total_pairs
    if normalization == "per_shot":
        if same.units == 0 or cross.units == 0 or same.total_pairs == 0 or cross.total_pairs == 0:
            raise ValueError("No hay disparos o pares suficientes para normalizar g² por disparo.")
        return 2.0 * cross.units / same.units
    raise ValueError(f"Normalización desconocida: '{normalization}'.")


def estimate_g2(
    same: PairHistogram, cross: PairHistogram, normalization: Normalization = "total_pairs"
) -> CorrelationFunction:
    """
    g²[b] = (s_b/S) / (c_b/C), con error de Poisson relativo √(1/s_b + 1/c_b).

    Con `normalization="total_pairs"`, S y C son los totales de pares y la cola
    lejana queda en 1/(1 ± 1/M) para M modos. Con `"per_shot"`, S y C cuentan
    disparos y parejas de disparos, y la cola lejana es 1 sin sesgo.

    Un bin sin pares cruzados queda inválido (NaN) y se excluye de los ajustes.
    Un bin con s_b = 0 recibe el error correspondiente a un único par.
    """
    if same.binning != cross.binning:
        raise ValueError("Los histogramas deben compartir el binning.")
    norm = _normalization(same, cross, normalization)
    s = same.counts.astype(float)
    c = cross.counts.astype(float)
    g2 = np.full(s.shape, np.nan)
    stderr = np.full(s.shape, np.nan)
    used = c > 0
    g2[used] = s[used] / c[used] * norm
    relative = np.sqrt(1.0 / np.where(s > 0, s, 1.0) + 1.0 / np.where(used, c, 1.0))
    stderr[used] = np.where(s[used] > 0, g2[used] * relative[used], norm / c[used])
    n_invalid = int((~used).sum())
    if n_invalid:
        logger.warning(f"{n_invalid} bins sin pares entre disparos; se marcan como inválidos.")
    return CorrelationFunction(same.binning, g2, stderr)
