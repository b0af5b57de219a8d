# --- hbtlab/core/model.py ---

"""
Tipos de dominio compartidos por todas las etapas del laboratorio.

Convención de unidades: todo el código trabaja en SI (metros, segundos,
kilogramos). Los tipos son inmutables una vez construidos, de modo que pueden
compartirse en solo lectura entre procesos de trabajo.
"""

import enum
from dataclasses import dataclass, field
from typing import Iterable, List, Union

import numpy as np


# --- Excepciones ---

class ConfigError(ValueError):
    """Configuración inválida. El mensaje enumera las claves problemáticas."""


class EventFileError(ValueError):
    """Archivo de eventos mal formado o ilegible."""


class NumericalError(RuntimeError):
    """Fallo numérico: núcleo no semidefinido, ocupación no física, etc."""


class FitError(NumericalError):
    """El ajuste no convergió. Conserva el mejor residuo alcanzado."""

    def __init__(self, message: str, best_residual: float = float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


# --- Constantes ---

@dataclass(frozen=True)
class PhysicalConstants:
    h: float = 6.62607015e-34  # J·s
    g_earth: float = 9.81  # m/s², solo para derivar la velocidad de llegada
    c: float = 299792458.0  # m/s, reloj de llegada en modo fotón


CONSTANTS = PhysicalConstants()

HELIUM4_MASS = 6.646e-27  # kg
HELIUM3_MASS = 5.008e-27  # kg


class Statistics(str, enum.Enum):
    BOSON = "boson"
    FERMION = "fermion"
    COHERENT = "coherent"
    DISTINGUISHABLE = "distinguishable"


# --- Aleatoriedad reproducible ---

SAMPLING_STREAM = 0
DETECTOR_STREAM = 1


@dataclass(frozen=True)
class RngStream:
    """
    Flujo aleatorio independiente por disparo.

    El par (seed, stream_id) determina bit a bit el generador, con
    independencia del orden o del número de procesos que simulen disparos.
    """

    seed: int
    stream_id: int

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"La semilla debe ser un entero de 64 bits sin signo, se recibió {self.seed}")
        if self.stream_id < 0:
            raise ValueError(f"stream_id debe ser no negativo, se recibió {self.stream_id}")

    def generator(self, purpose: int = SAMPLING_STREAM) -> np.random.Generator:
        """Devuelve un generador nuevo para el subflujo `purpose` del disparo."""
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, purpose))
        return np.random.default_rng(sequence)


RandomSource = Union[RngStream, np.random.Generator]


def as_generator(rng: RandomSource) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    return rng


# --- Eventos ---

@dataclass(frozen=True)
class DetectionEvent:
    shot_id: int
    x: float
    y: float
    t: float


def _frozen_array(values) -> np.ndarray:
    array = np.array(values, dtype=np.float64).reshape(-1)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class EventSet:
    """Puntos muestreados en un disparo, en columnas (x, y, t)."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    statistics: Statistics

    def __post_init__(self):
        for name in ("x", "y", "t"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        if not len(self.x) == len(self.y) == len(self.t):
            raise ValueError("Las columnas x, y, t deben tener la misma longitud.")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.t))):
            raise ValueError("Todas las coordenadas de los eventos deben ser finitas.")

    def __len__(self) -> int:
        return len(self.x)

    @classmethod
    def empty(cls, statistics: Statistics) -> "EventSet":
        return cls(np.empty(0), np.empty(0), np.empty(0), statistics)

    def to_shot(self, shot_id: int) -> "Shot":
        return Shot(shot_id=shot_id, x=self.x, y=self.y, t=self.t, source_tag=self.statistics)


@dataclass(frozen=True, eq=False)
class Shot:
    """
    Un disparo: una liberación de la nube o una realización de la fuente.

    Los disparos vacíos son legales y se conservan, porque aportan información
    de normalización a la estadística de conteo.
    """

    shot_id: int
    x: np.ndarray = field(default_factory=lambda: np.empty(0))
    y: np.ndarray = field(default_factory=lambda: np.empty(0))
    t: np.ndarray = field(default_factory=lambda: np.empty(0))
    source_tag: Statistics = Statistics.DISTINGUISHABLE

    def __post_init__(self):
        if self.shot_id < 0:
            raise ValueError(f"shot_id debe ser no negativo, se recibió {self.shot_id}")
        for name in ("x", "y", "t"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))
        if not len(self.x) == len(self.y) == len(self.t):
            raise ValueError("Las columnas x, y, t deben tener la misma longitud.")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y)) and np.all(np.isfinite(self.t))):
            raise ValueError(f"Coordenadas no finitas en el disparo {self.shot_id}.")
        if np.any(self.t < 0):
            raise ValueError(f"Tiempos de llegada negativos en el disparo {self.shot_id}.")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def events(self) -> List[DetectionEvent]:
        return [
            DetectionEvent(self.shot_id, float(x), float(y), float(t))
            for x, y, t in zip(self.x, self.y, self.t)
        ]

    @classmethod
    def from_events(
        cls, shot_id: int, events: Iterable[DetectionEvent], source_tag: Statistics
    ) -> "Shot":
        events = list(events)
        foreign = [e for e in events if e.shot_id != shot_id]
        if foreign:
            raise ValueError(f"{len(foreign)} eventos no pertenecen al disparo {shot_id}.")
        return cls(
            shot_id=shot_id,
            x=[e.x for e in events],
            y=[e.y for e in events],
            t=[e.t for e in events],
            source_tag=source_tag,
        )

    def sorted_by_time(self) -> "Shot":
        order = np.argsort(self.t, kind="stable")
        return Shot(self.shot_id, self.x[order], self.y[order], self.t[order], self.source_tag)
