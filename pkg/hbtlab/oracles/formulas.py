# --- hbtlab/oracles/formulas.py ---

"""
Predicciones analíticas con las que se contrasta cada resultado Monte Carlo.

Los símbolos sobrecargados se separan en cantidades con nombre propio:
número de celdas de fase (`phase_cell_count`), factor de reducción del
contraste (`contrast_reduction`) y aceleración de la gravedad
(`CONSTANTS.g_earth`).

Las fórmulas evaluables desde la línea de comandos se registran con el
decorador `formula`, que además valida y convierte los argumentos.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Literal, Sequence, Tuple, Union

import numpy as np
from pydantic import NonNegativeFloat, PositiveFloat, validate_call

from hbtlab.core.model import CONSTANTS, NumericalError, Statistics
from hbtlab.sources.kernels import Kernel

logger = logging.getLogger(__name__)

CountingStatisticsKind = Union[Statistics, Literal["poisson"]]


@dataclass(frozen=True)
class FormulaEntry:
    name: str
    anchor: str
    func: Callable


# Registro de fórmulas por nombre de subcomando.
_formula_registry: Dict[str, FormulaEntry] = {}


def formula(name: str, anchor: str):
    """
    Decorador que registra una fórmula evaluable por nombre.

    Args:
        name (str): Nombre público de la fórmula (p. ej. 'einstein-variance').
        anchor (str): Descripción física de la fórmula que se imprime junto al valor.
    """

    def decorator(func: Callable) -> Callable:
        if name in _formula_registry:
            raise ValueError(f"Fórmula '{name}' ya está registrada.")
        validated = validate_call(func)
        _formula_registry[name] = FormulaEntry(name, anchor, validated)
        return validated

    return decorator


def available_formulas() -> Dict[str, FormulaEntry]:
    return dict(sorted(_formula_registry.items()))


def evaluate(name: str, args: Sequence[str]) -> Tuple[Dict[str, float], str]:
    """
    Evalúa una fórmula registrada con argumentos en texto.

    Returns:
        Los valores con nombre y la descripción de la fórmula.

    Raises:
        KeyError: Si la fórmula no existe (el mensaje lista las disponibles).
    """
    entry = _formula_registry.get(name)
    if entry is None:
        raise KeyError(f"Fórmula desconocida '{name}'. Disponibles: {', '.join(available_formulas())}")
    value = entry.func(*args)
    values = value if isinstance(value, dict) else {"value": float(value)}
    return values, entry.anchor


# --- Fluctuaciones de número ---

@formula("einstein-variance", "fluctuación de número δN² = ⟨N⟩ ± ⟨N⟩²/g (+ bosones, − fermiones, sin término de onda para Poisson)")
def einstein_variance(mean_n: NonNegativeFloat, g: PositiveFloat, statistics: CountingStatisticsKind) -> float:
    """
    Varianza del número de partículas en un volumen con g celdas de fase.

    Raises:
        NumericalError: Para fermiones con ocupación ⟨N⟩/g > 1.
    """
    if statistics == Statistics.BOSON:
        return mean_n + mean_n**2 / g
    if statistics == Statistics.FERMION:
        if mean_n / g > 1.0:
            raise NumericalError(f"Ocupación fermiónica {mean_n / g:.4g} > 1: no física.")
        return mean_n - mean_n**2 / g
    return float(mean_n)


@formula("phase-cell-count", "número de celdas de fase g = (ΔxΔp/h)³")
def phase_cell_count(dx: PositiveFloat, dp: PositiveFloat) -> float:
    return (dx * dp / CONSTANTS.h) ** 3


@formula("relative-fluctuations", "fluctuación relativa de partícula 1/√⟨N⟩ y de onda 1/√g")
def relative_fluctuations(mean_n: PositiveFloat, g: PositiveFloat) -> Dict[str, float]:
    return {"shot_noise": 1.0 / math.sqrt(mean_n), "wave_noise": 1.0 / math.sqrt(g)}


# --- Interferencia de dos partículas ---

@dataclass(frozen=True)
class AmplitudePair:
    """Amplitudes ⟨a|1⟩, ⟨a|2⟩, ⟨b|1⟩, ⟨b|2⟩ de dos puntos fuente a dos detectores."""

    a1: complex
    a2: complex
    b1: complex
    b2: complex

    def __post_init__(self):
        if not all(math.isfinite(abs(v)) for v in (self.a1, self.a2, self.b1, self.b2)):
            raise ValueError("Las amplitudes deben tener módulo finito.")


def two_particle_probability(amps: AmplitudePair, statistics: Statistics) -> float:
    """Probabilidad de detección conjunta: suma o resta de amplitudes, o suma de probabilidades."""
    direct = amps.a1 * amps.b2
    exchange = amps.a2 * amps.b1
    statistics = Statistics(statistics)
    if statistics is Statistics.BOSON:
        return abs(direct + exchange) ** 2
    if statistics is Statistics.FERMION:
        return abs(direct - exchange) ** 2
    if statistics is Statistics.DISTINGUISHABLE:
        return abs(direct) ** 2 + abs(exchange) ** 2
    raise ValueError(f"Estadística no admitida para dos partículas: '{statistics.value}'.")


@formula("two-particle", "P = |⟨a|1⟩⟨b|2⟩ ± ⟨a|2⟩⟨b|1⟩|² (amplitudes complejas en notación Python, p. ej. 1+2j)")
def _two_particle_from_text(a1: str, a2: str, b1: str, b2: str, statistics: Statistics) -> float:
    amps = AmplitudePair(*(complex(v.replace(" ", "")) for v in (a1, a2, b1, b2)))
    return two_particle_probability(amps, statistics)


@formula("g2-zero", "g²(0) ideal: 2 para bosones caóticos (⟨I²⟩ = 2⟨I⟩²), 0 para fermiones, 1 sin correlación")
def bunching_amplitude(statistics: Statistics) -> float:
    return {Statistics.BOSON: 2.0, Statistics.FERMION: 0.0}.get(statistics, 1.0)


def analytic_g2(kernel: Kernel, i: int, j: int, statistics: Statistics) -> float:
    """g² = 1 + σ|g1_ij|², con σ = +1 bosones, −1 fermiones y 0 sin correlación."""
    statistics = Statistics(statistics)
    if statistics in (Statistics.COHERENT, Statistics.DISTINGUISHABLE):
        return 1.0
    coherence = abs(kernel.g1(i, j)) ** 2
    return 1.0 + coherence if statistics is Statistics.BOSON else 1.0 - coherence


def emitter_pair_g2(amplitudes: np.ndarray, i: int, j: int, statistics: Statistics) -> float:
    """
    g² por enumeración exhaustiva de pares ordenados de emisores (a, b),
    normalizada con la suma para partículas distinguibles.

    `amplitudes[a, k]` es la amplitud del emisor a en el punto k.
    """
    statistics = Statistics(statistics)
    if statistics is Statistics.COHERENT:
        return 1.0
    n_emitters = amplitudes.shape[0]
    joint = 0.0
    reference = 0.0
    for a in range(n_emitters):
        for b in range(n_emitters):
            amps = AmplitudePair(
                complex(amplitudes[a, i]), complex(amplitudes[a, j]),
                complex(amplitudes[b, i]), complex(amplitudes[b, j]),
            )
            joint += two_particle_probability(amps, statistics)
            reference += two_particle_probability(amps, Statistics.DISTINGUISHABLE)
    if reference == 0:
        raise NumericalError("Intensidad nula en los puntos del par.")
    return joint / reference


def effective_mode_count(kernel: Kernel, indices: Sequence[int]) -> float:
    """Número efectivo de modos de una celda: (tr C)² / ‖C‖²_F."""
    block = kernel.coherence_block(indices)
    trace = float(np.real(np.trace(block)))
    frobenius = float(np.sum(np.abs(block) ** 2))
    return trace**2 / frobenius if frobenius > 0 else 0.0


# --- Longitudes de correlación ---

@formula("corr-length-light", "longitud de correlación de la luz λL/2πs")
def correlation_length_light(wavelength: PositiveFloat, distance: PositiveFloat, size: PositiveFloat) -> float:
    return wavelength * distance / (2.0 * math.pi * size)


@formula("corr-length-atoms", "longitud de correlación de átomos en tiempo de vuelo ht/2πms")
def correlation_length_atoms(mass: PositiveFloat, flight_time: PositiveFloat, size: PositiveFloat) -> float:
    return CONSTANTS.h * flight_time / (2.0 * math.pi * mass * size)


@formula("angular-size", "tamaño angular de la fuente s/L = λ/(2π·ancho)")
def source_angular_size_from_width(wavelength: PositiveFloat, width: PositiveFloat) -> float:
    return wavelength / (2.0 * math.pi * width)


# --- Resolución del detector ---

@formula("blurred-length", "longitud tras el desenfoque gaussiano √(l² + 4d²)")
def blurred_length(length: PositiveFloat, resolution: NonNegativeFloat) -> float:
    return math.sqrt(length**2 + 4.0 * resolution**2)


def contrast_reduction(lengths: Sequence[float], resolution: Sequence[float]) -> float:
    """η = Π_a l_a/√(l_a² + 4d_a²); un eje de longitud infinita no reduce el contraste."""
    if len(lengths) != len(resolution):
        raise ValueError("lengths y resolution deben tener el mismo número de ejes.")
    factor = 1.0
    for length, d in zip(lengths, resolution):
        if length <= 0 or d < 0:
            raise ValueError("Las longitudes deben ser positivas y la resolución no negativa.")
        if math.isinf(length):
            continue
        factor *= length / blurred_length(length, d)
    return factor


@formula("contrast-reduction", "reducción del contraste Π l/√(l² + 4d²); argumentos lx ly lz dx dy dz")
def _contrast_reduction_from_text(
    lx: PositiveFloat, ly: PositiveFloat, lz: PositiveFloat,
    dx: NonNegativeFloat, dy: NonNegativeFloat, dz: NonNegativeFloat,
) -> float:
    return contrast_reduction((lx, ly, lz), (dx, dy, dz))


# --- Normalización por pares totales ---

def total_mode_count(kernel: Kernel) -> float:
    """Número efectivo de modos de toda la malla: (Σλ)² / Σλ²."""
    eigenvalues = np.asarray(kernel.eigenvalues)
    square = float(np.sum(eigenvalues**2))
    return float(np.sum(eigenvalues)) ** 2 / square if square > 0 else 0.0


def normalized_tail_level(effective_modes: float, statistics: Statistics) -> float:
    """
    Nivel de g² a gran separación cuando se normaliza con el total de pares:
    1/(1 + 1/M) para bosones y 1/(1 − 1/M) para fermiones, con M modos.
    """
    statistics = Statistics(statistics)
    if statistics not in (Statistics.BOSON, Statistics.FERMION) or effective_modes <= 0:
        return 1.0
    sign = 1.0 if statistics is Statistics.BOSON else -1.0
    if sign < 0 and effective_modes <= 1.0:
        return math.inf
    return 1.0 / (1.0 + sign / effective_modes)
