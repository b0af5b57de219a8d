# --- hbtlab/sources/kernels.py ---

"""
Núcleos de coherencia de primer orden sobre la malla del plano de detección.

Dos construcciones:
  * `CoherenceKernel`: matriz densa, a partir de una lista explícita de
    emisores puntuales (conserva la matriz de amplitudes emisor→punto).
  * `SeparableKernel`: producto de núcleos 1D por eje, para fuentes gaussianas
    descritas por su tamaño RMS. Hace tratables mallas 2D/3D finas.

Ambas exponen la misma interfaz: puntos, autovalores, `synthesize`, `modes`,
`mean_density`, `g1`, `coherence_block` y `scaled`.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from hbtlab.core.model import NumericalError
from hbtlab.data_system.templates.templates import BaseSourceSpec, GridSpec

logger = logging.getLogger(__name__)

PSD_TOLERANCE = 1e-10
RANK_CUTOFF = 1e-12
HERMITIAN_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class DetectorGrid:
    """Malla regular de centros de celda, con coordenadas por eje."""

    axes: Tuple[str, ...]
    coordinates: Tuple[np.ndarray, ...]
    cell_widths: Tuple[float, ...]

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(len(c) for c in self.coordinates)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def points(self) -> np.ndarray:
        """Puntos de la malla, forma (n, D), en orden 'ij' (el primer eje varía más despacio)."""
        mesh = np.meshgrid(*self.coordinates, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    @classmethod
    def from_spec(cls, spec: GridSpec, lengths: Dict[str, float]) -> "DetectorGrid":
        counts = spec.resolve_points(lengths)
        coordinates, widths = [], []
        for axis in spec.axes:
            half = spec.half_width[axis]
            n = counts[axis]
            pitch = 2.0 * half / n
            coordinates.append(-half + pitch * (np.arange(n) + 0.5))
            widths.append(pitch)
            length = lengths.get(axis, math.inf)
            if math.isfinite(length) and pitch > length / 2.0:
                logger.warning(
                    f"Eje {axis}: paso de malla {pitch:.3g} m mayor que l/2 = {length / 2:.3g} m; "
                    f"la forma de g² quedará mal resuelta."
                )
        grid = cls(tuple(spec.axes), tuple(coordinates), tuple(widths))
        logger.info(f"Malla del detector: ejes {grid.axes}, forma {grid.shape}, pasos {[f'{w:.3g}' for w in widths]}")
        return grid

    @classmethod
    def line(cls, start: float, stop: float, n: int, axis: str = "x") -> "DetectorGrid":
        """Malla 1D de n celdas que cubre [start, stop]."""
        pitch = (stop - start) / n
        return cls((axis,), (start + pitch * (np.arange(n) + 0.5),), (pitch,))


def _gaussian_envelope(coordinates: np.ndarray, rms: Optional[float]) -> np.ndarray:
    # Amplitud exp(-x²/4σ²): la densidad resultante tiene RMS σ.
    if rms is None:
        return np.ones_like(coordinates)
    return np.exp(-(coordinates**2) / (4.0 * rms**2))


def eigendecompose(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Autodescomposición de un núcleo hermítico semidefinido positivo.

    Los autovalores negativos dentro de la tolerancia relativa se fijan a 0 y
    se descartan los modos por debajo del corte de rango. Devuelve los
    autovalores en orden descendente y los modos como columnas.

    Raises:
        NumericalError: Si la matriz no es hermítica o tiene autovalores
                        claramente negativos.
    """
    scale = np.max(np.abs(matrix)) if matrix.size else 0.0
    if scale > 0 and np.max(np.abs(matrix - matrix.conj().T)) > HERMITIAN_TOLERANCE * scale:
        raise NumericalError("El núcleo de coherencia no es hermítico.")
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    top = eigenvalues[-1] if eigenvalues.size else 0.0
    if top <= 0:
        return np.empty(0), np.empty((matrix.shape[0], 0), dtype=eigenvectors.dtype)
    if eigenvalues[0] < -PSD_TOLERANCE * top:
        raise NumericalError(
            f"Núcleo no semidefinido positivo: autovalor mínimo {eigenvalues[0]:.3e} frente a máximo {top:.3e}."
        )
    eigenvalues = np.clip(eigenvalues, 0.0, None)[::-1]
    eigenvectors = eigenvectors[:, ::-1]
    keep = eigenvalues > RANK_CUTOFF * top
    return eigenvalues[keep], eigenvectors[:, keep]


class CoherenceKernel:
    """Núcleo denso C[i, l] = ⟨E*(x_l) E(x_i)⟩ sobre los puntos de una malla."""

    def __init__(
        self,
        grid: DetectorGrid,
        matrix: np.ndarray,
        emitter_amplitudes: Optional[np.ndarray] = None,
    ):
        if matrix.shape != (grid.size, grid.size):
            raise ValueError(f"La matriz {matrix.shape} no corresponde a una malla de {grid.size} puntos.")
        self.grid = grid
        self.matrix = matrix
        self.emitter_amplitudes = emitter_amplitudes
        self.eigenvalues, self.eigenvectors = eigendecompose(matrix)

    @classmethod
    def from_emitters(
        cls,
        grid: DetectorGrid,
        positions: np.ndarray,
        weights: np.ndarray,
        phase_scale: float,
        envelope_rms: Optional[Dict[str, float]] = None,
    ) -> "CoherenceKernel":
        """
        Suma sobre emisores independientes de fase aleatoria:
        C[i, l] = Σ_j w_j exp(iκ u_j·(x_i − x_l)) · env(x_i) env(x_l).
        """
        positions = np.asarray(positions, dtype=float).reshape(len(weights), -1)
        points = grid.points
        envelope = np.ones(grid.size)
        for k, axis in enumerate(grid.axes):
            rms = envelope_rms.get(axis) if envelope_rms else None
            envelope *= _gaussian_envelope(points[:, k], rms)
        phases = phase_scale * positions @ points.T
        amplitudes = np.sqrt(np.asarray(weights, dtype=float))[:, None] * np.exp(1j * phases) * envelope[None, :]
        matrix = amplitudes.T @ amplitudes.conj()
        return cls(grid, matrix, emitter_amplitudes=amplitudes)

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def mean_density(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()

    def synthesize(self, coefficients: np.ndarray) -> np.ndarray:
        """Campo Σ_k c_k φ_k sobre la malla."""
        return self.eigenvectors @ coefficients

    def modes(self, indices: Sequence[int]) -> np.ndarray:
        return self.eigenvectors[:, np.asarray(indices, dtype=int)]

    def g1(self, i: int, j: int) -> complex:
        """Coherencia normalizada g1 = C_ij / √(C_ii C_jj)."""
        norm = math.sqrt(float(np.real(self.matrix[i, i]) * np.real(self.matrix[j, j])))
        return complex(self.matrix[i, j]) / norm if norm > 0 else 0j

    def coherence_block(self, indices: Sequence[int]) -> np.ndarray:
        idx = np.asarray(indices, dtype=int)
        return self.matrix[np.ix_(idx, idx)]

    def scaled(self, factor: float) -> "CoherenceKernel":
        """Núcleo multiplicado por un factor de ocupación uniforme."""
        clone = object.__new__(CoherenceKernel)
        clone.grid = self.grid
        clone.matrix = self.matrix * factor
        clone.emitter_amplitudes = (
            self.emitter_amplitudes * math.sqrt(factor) if self.emitter_amplitudes is not None else None
        )
        clone.eigenvalues = self.eigenvalues * factor
        clone.eigenvectors = self.eigenvectors
        return clone

    def reconstruct(self) -> np.ndarray:
        """Σ_k λ_k φ_k φ_k†."""
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T


class SeparableKernel:
    """
    Núcleo producto C = C_x ⊗ C_y (⊗ C_z), un factor 1D denso por eje.

    Los autovalores y modos se indexan por el multi-índice de modos por eje,
    aplanado en orden 'ij'; no están ordenados globalmente.
    """

    def __init__(self, grid: DetectorGrid, factors: Sequence[CoherenceKernel]):
        if len(factors) != len(grid.axes):
            raise ValueError("Se necesita un factor 1D por eje de la malla.")
        self.grid = grid
        self.factors = tuple(factors)

    @classmethod
    def gaussian(
        cls,
        grid: DetectorGrid,
        lengths: Dict[str, float],
        envelope_rms: Optional[Dict[str, float]] = None,
    ) -> "SeparableKernel":
        """
        Límite continuo de la suma sobre emisores gaussianos de RMS s:
        C_a(Δ) = exp(−Δ²/2l²) con l = 1/(κ s), de modo que |g1|² = exp(−Δ²/l²).
        """
        factors = []
        for axis, coords, width in zip(grid.axes, grid.coordinates, grid.cell_widths):
            length = lengths[axis]
            delta = coords[:, None] - coords[None, :]
            if math.isfinite(length):
                matrix = np.exp(-(delta**2) / (2.0 * length**2))
            else:
                matrix = np.ones_like(delta)
            rms = envelope_rms.get(axis) if envelope_rms else None
            envelope = _gaussian_envelope(coords, rms)
            matrix = matrix * np.outer(envelope, envelope)
            factors.append(CoherenceKernel(DetectorGrid((axis,), (coords,), (width,)), matrix.astype(complex)))
        return cls(grid, factors)

    @property
    def size(self) -> int:
        return self.grid.size

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        values = self.factors[0].eigenvalues
        for factor in self.factors[1:]:
            values = np.multiply.outer(values, factor.eigenvalues)
        return np.asarray(values).reshape(-1)

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def mode_shape(self) -> Tuple[int, ...]:
        return tuple(f.n_modes for f in self.factors)

    @cached_property
    def mean_density(self) -> np.ndarray:
        density = self.factors[0].mean_density
        for factor in self.factors[1:]:
            density = np.multiply.outer(density, factor.mean_density)
        return np.asarray(density).reshape(-1)

    def synthesize(self, coefficients: np.ndarray) -> np.ndarray:
        field = np.asarray(coefficients).reshape(self.mode_shape)
        for axis, factor in enumerate(self.factors):
            # contrae el índice de modo del eje con la base 1D y lo deja en su posición
            field = np.moveaxis(np.tensordot(factor.eigenvectors, field, axes=([1], [axis])), 0, axis)
        return field.reshape(-1)

    def modes(self, indices: Sequence[int]) -> np.ndarray:
        multi = np.unravel_index(np.asarray(indices, dtype=int), self.mode_shape)
        columns = np.ones((1, len(multi[0])), dtype=complex)
        for factor, idx in zip(self.factors, multi):
            vectors = factor.eigenvectors[:, idx]
            columns = (columns[:, None, :] * vectors[None, :, :]).reshape(-1, len(idx))
        return columns

    def _unravel_points(self, indices) -> Tuple[np.ndarray, ...]:
        return np.unravel_index(np.asarray(indices, dtype=int), self.grid.shape)

    def g1(self, i: int, j: int) -> complex:
        value = 1.0 + 0j
        for factor, a, b in zip(self.factors, self._unravel_points(i), self._unravel_points(j)):
            value *= factor.g1(int(a), int(b))
        return value

    def coherence_block(self, indices: Sequence[int]) -> np.ndarray:
        multi = self._unravel_points(indices)
        block = np.ones((len(multi[0]), len(multi[0])), dtype=complex)
        for factor, idx in zip(self.factors, multi):
            block *= factor.matrix[np.ix_(idx, idx)]
        return block

    def scaled(self, factor: float) -> "SeparableKernel":
        return SeparableKernel(self.grid, (self.factors[0].scaled(factor),) + self.factors[1:])

    @property
    def matrix(self) -> np.ndarray:
        """Matriz densa completa; solo para mallas pequeñas."""
        return self.coherence_block(np.arange(self.size))


Kernel = Union[CoherenceKernel, SeparableKernel]


def build_source_kernel(spec: BaseSourceSpec, grid: Union[DetectorGrid, GridSpec]) -> Kernel:
    """
    Construye el núcleo de coherencia de la fuente sobre la malla del detector.

    Con emisores explícitos se obtiene un núcleo denso; con un tamaño RMS por
    eje, el núcleo separable equivalente.

    Raises:
        NumericalError: Si el resultado no es semidefinido positivo.
    """
    if isinstance(grid, GridSpec):
        lengths = spec.coherence_lengths(grid.axes)
        grid = DetectorGrid.from_spec(grid, lengths)
    if grid.size == 0:
        raise ValueError("La malla del detector está vacía.")

    if spec.emitters is not None:
        positions = np.array([e.position for e in spec.emitters], dtype=float)
        if positions.shape[1] != len(grid.axes):
            raise ValueError(
                f"Los emisores tienen dimensión {positions.shape[1]} pero la malla tiene {len(grid.axes)} ejes."
            )
        weights = np.array([e.weight for e in spec.emitters], dtype=float)
        if grid.size > 4000:
            logger.warning(f"Núcleo denso de {grid.size} puntos: memoria y tiempo elevados.")
        kernel: Kernel = CoherenceKernel.from_emitters(
            grid, positions, weights, spec.phase_scale(), spec.envelope_rms
        )
    else:
        kernel = SeparableKernel.gaussian(grid, spec.coherence_lengths(grid.axes), spec.envelope_rms)

    top = float(np.max(kernel.eigenvalues)) if kernel.n_modes else 0.0
    logger.info(f"Núcleo construido: {grid.size} puntos, {kernel.n_modes} modos, autovalor máximo {top:.4g}")
    if kernel.n_modes == 1:
        logger.warning("Fuente monomodo: coherencia total, g² de bosones igual a 2 en todas partes.")
    return kernel


def scale_to_occupation(kernel: Kernel, mean_count: float) -> Kernel:
    """
    Escala uniformemente las ocupaciones para que Σλ = mean_count, sin que
    ningún autovalor supere 1.
    """
    total = float(np.sum(kernel.eigenvalues))
    if total <= 0:
        return kernel
    factor = mean_count / total
    top = float(np.max(kernel.eigenvalues))
    if factor * top > 1.0:
        capped = 1.0 / top
        logger.warning(
            f"Ocupación limitada a 1: número medio {mean_count:.4g} no alcanzable, "
            f"se obtiene {capped * total:.4g}."
        )
        factor = capped
    return kernel.scaled(factor)
