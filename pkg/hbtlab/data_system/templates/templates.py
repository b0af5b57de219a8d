# --- hbtlab/data_system/templates/templates.py ---

"""
Módulo para definir los contratos de configuración del laboratorio
utilizando Pydantic para una validación robusta.

Las especificaciones de fuente son polimórficas: un registro asocia el campo
'mode' ("photon" o "atom") con su clase, de modo que un diccionario se
deserializa siempre a la plantilla correcta. Cada modo declara sus propios
parámetros físicos, así que nunca pueden mezclarse (λ, L) con (m, t).
"""

import abc
import configparser
import json
import logging
import math
import os
from pathlib import Path
from typing import Any, ClassVar, Dict, List, Literal, Optional, Tuple, Type, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from hbtlab.core.model import CONSTANTS, HELIUM4_MASS, ConfigError, Statistics

logger = logging.getLogger(__name__)

Axis = Literal["x", "y", "z"]
AXES: Tuple[str, ...] = ("x", "y", "z")

OUTPUT_DIR_ENV = "HBTLAB_OUTPUT_DIR"

# Registro para la deserialización polimórfica.
# Almacena un mapeo de 'mode' a su clase de fuente correspondiente.
_source_registry: Dict[str, Type["BaseSourceSpec"]] = {}


def register_source(mode: str):
    """
    Decorador para registrar una clase de fuente en el registro global.

    Args:
        mode (str): El identificador único del modo de la fuente.

    Raises:
        ValueError: Si el modo ya ha sido registrado.
    """

    def decorator(cls: Type["BaseSourceSpec"]) -> Type["BaseSourceSpec"]:
        if mode in _source_registry:
            raise ValueError(f"Modo de fuente '{mode}' ya está registrado.")
        _source_registry[mode] = cls
        setattr(cls, "mode", mode)
        return cls

    return decorator


def _broadcast_axes(value: Any, axes: Tuple[str, ...]) -> Any:
    """Un escalar se aplica a todos los ejes; un diccionario se deja como está."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return {axis: value for axis in axes}
    return value


class Emitter(BaseModel):
    """Emisor puntual de la fuente: posición (m) y peso relativo."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    position: Tuple[float, ...]
    weight: float = Field(gt=0)

    @model_validator(mode="before")
    @classmethod
    def accept_pairs(cls, data: Any) -> Any:
        """Acepta también la forma compacta [posición, peso] de los archivos de configuración."""
        if isinstance(data, (list, tuple)) and len(data) == 2:
            position, weight = data
            if isinstance(position, (int, float)):
                position = [position]
            return {"position": position, "weight": weight}
        return data


class BaseSourceSpec(BaseModel, abc.ABC):
    """
    Clase base abstracta de las especificaciones de fuente.

    La geometría se describe con una lista explícita de emisores o con el
    tamaño RMS gaussiano por eje ('size'); exactamente una de las dos.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: ClassVar[str]

    statistics: Statistics = Statistics.BOSON
    mean_count: float = Field(default=1000.0, gt=0)
    emitters: Optional[List[Emitter]] = None
    size: Optional[Dict[Axis, float]] = None
    envelope_rms: Optional[Dict[Axis, float]] = None

    @model_validator(mode="after")
    def validate_geometry(self) -> "BaseSourceSpec":
        if (self.emitters is None) == (self.size is None):
            raise ValueError("Debe indicarse exactamente uno de 'emitters' o 'size'.")
        if self.emitters is not None:
            if not self.emitters:
                raise ValueError("La lista de emisores no puede estar vacía.")
            dims = {len(e.position) for e in self.emitters}
            if len(dims) != 1 or 0 in dims:
                raise ValueError("Todos los emisores deben tener posiciones de la misma dimensión.")
            total = sum(e.weight for e in self.emitters)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"Los pesos de los emisores deben sumar 1, suman {total}.")
        if self.size is not None and any(s <= 0 for s in self.size.values()):
            raise ValueError("Los tamaños RMS de la fuente deben ser positivos.")
        if self.envelope_rms is not None and any(s <= 0 for s in self.envelope_rms.values()):
            raise ValueError("Los anchos de la envolvente deben ser positivos.")
        return self

    @abc.abstractmethod
    def phase_scale(self) -> float:
        """Factor κ tal que la fase del emisor j en el punto x es κ·u_j·x (rad/m²)."""

    @abc.abstractmethod
    def arrival_clock(self) -> Tuple[float, float]:
        """Devuelve (t_ref, v_ref): tiempo medio de llegada y velocidad común de llegada."""

    @property
    def emitter_dimension(self) -> Optional[int]:
        return len(self.emitters[0].position) if self.emitters else None

    def rms_size(self, axes: Tuple[str, ...]) -> Dict[str, float]:
        """Tamaño RMS s de la fuente en cada eje (ancho de la distribución ponderada de emisores)."""
        if self.size is not None:
            return {axis: self.size[axis] for axis in axes}
        weights = [e.weight for e in self.emitters]
        sizes = {}
        for k, axis in enumerate(axes):
            coords = [e.position[k] for e in self.emitters]
            mean = sum(w * u for w, u in zip(weights, coords))
            sizes[axis] = math.sqrt(sum(w * (u - mean) ** 2 for w, u in zip(weights, coords)))
        return sizes

    def coherence_lengths(self, axes: Tuple[str, ...]) -> Dict[str, float]:
        """Longitud de correlación 1/(κ·s) por eje; infinita si la fuente no tiene extensión en ese eje."""
        kappa = self.phase_scale()
        return {
            axis: (1.0 / (kappa * s) if s > 0 else math.inf)
            for axis, s in self.rms_size(axes).items()
        }

    def to_dict(self) -> Dict[str, Any]:
        """Serializa la instancia a un diccionario, incluyendo el modo."""
        data = self.model_dump(mode="json", exclude_none=True)
        data["mode"] = self.mode
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BaseSourceSpec":
        """
        Deserializa un diccionario a la clase de fuente registrada para su 'mode'.

        Raises:
            ValueError: Si falta 'mode' o no corresponde a una fuente registrada.
        """
        data_copy = dict(data)
        mode = data_copy.pop("mode", None)
        if not mode:
            raise ValueError("El diccionario debe contener 'mode' para la deserialización.")
        target_class = _source_registry.get(mode)
        if not target_class:
            raise ValueError(f"Modo de fuente desconocido: '{mode}'. Disponibles: {sorted(_source_registry)}")
        return target_class(**data_copy)


@register_source("photon")
class PhotonSourceSpec(BaseSourceSpec):
    """Fuente de luz: longitud de onda λ y distancia de propagación L."""

    wavelength: float = Field(gt=0)
    distance: float = Field(gt=0)

    def phase_scale(self) -> float:
        return 2.0 * math.pi / (self.wavelength * self.distance)

    def arrival_clock(self) -> Tuple[float, float]:
        return self.distance / CONSTANTS.c, CONSTANTS.c


@register_source("atom")
class AtomSourceSpec(BaseSourceSpec):
    """Nube atómica en caída libre: masa m y tiempo de vuelo t."""

    mass: float = Field(default=HELIUM4_MASS, gt=0)
    flight_time: float = Field(default=0.3, gt=0)

    def phase_scale(self) -> float:
        return 2.0 * math.pi * self.mass / (CONSTANTS.h * self.flight_time)

    def arrival_clock(self) -> Tuple[float, float]:
        return self.flight_time, CONSTANTS.g_earth * self.flight_time


def default_source() -> AtomSourceSpec:
    # Régimen de helio-4 con longitud de correlación transversal ≈ 0.27 mm tras 0.3 s.
    return AtomSourceSpec(size={"x": 1.76e-5, "y": 1.76e-5})


class GridSpec(BaseModel):
    """
    Malla regular del plano de detección sobre la que se discretiza el núcleo.

    Los puntos son centros de celda. Si no se fija 'points', el paso se elige
    como longitud de coherencia / pitch_factor.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    axes: Tuple[Axis, ...] = ("x", "y")
    half_width: Dict[Axis, float] = Field(default_factory=lambda: {"x": 1.5e-3, "y": 1.5e-3})
    points: Optional[Dict[Axis, int]] = None
    pitch_factor: float = Field(default=8.0, gt=0)
    jitter: bool = True

    @model_validator(mode="before")
    @classmethod
    def broadcast_scalars(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            axes = tuple(data.get("axes", ("x", "y")))
            if isinstance(data.get("axes"), str):
                axes = tuple(a.strip() for a in data["axes"].split(","))
                data["axes"] = axes
            for key in ("half_width", "points"):
                if key in data:
                    data[key] = _broadcast_axes(data[key], axes)
        return data

    @model_validator(mode="after")
    def validate_axes(self) -> "GridSpec":
        if not self.axes or len(set(self.axes)) != len(self.axes):
            raise ValueError("'axes' debe ser una lista no vacía de ejes distintos.")
        missing = [a for a in self.axes if a not in self.half_width]
        if missing:
            raise ValueError(f"Falta half_width para los ejes {missing}.")
        if any(self.half_width[a] <= 0 for a in self.axes):
            raise ValueError("half_width debe ser positivo.")
        if self.points is not None:
            if any(a not in self.points or self.points[a] < 1 for a in self.axes):
                raise ValueError("'points' debe dar al menos un punto por eje.")
        return self

    def resolve_points(self, lengths: Dict[str, float]) -> Dict[str, int]:
        """Número de puntos por eje, fijado o derivado del paso máximo admisible."""
        if self.points is not None:
            return {a: self.points[a] for a in self.axes}
        resolved = {}
        for axis in self.axes:
            length = lengths.get(axis, math.inf)
            if not math.isfinite(length):
                resolved[axis] = 1
                continue
            resolved[axis] = max(1, math.ceil(2.0 * self.half_width[axis] * self.pitch_factor / length - 1e-9))
        return resolved


class DetectorSpec(BaseModel):
    """Detector de placa de microcanales: apertura, resolución, eficiencia y reloj de llegada."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    aperture_radius: float = Field(default=0.040, gt=0)
    resolution_rms: Tuple[float, float, float] = (5e-4, 5e-4, 1e-5)
    efficiency: float = Field(default=1.0, gt=0, le=1)
    v_ref: Optional[float] = Field(default=None, gt=0)
    t_ref: Optional[float] = Field(default=None, ge=0)

    @field_validator("resolution_rms")
    @classmethod
    def non_negative_resolution(cls, v: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(d < 0 for d in v):
            raise ValueError("Las componentes de la resolución deben ser no negativas.")
        return v

    def resolution(self, axis: str) -> float:
        return self.resolution_rms[AXES.index(axis)]

    def with_clock(self, t_ref: float, v_ref: float) -> "DetectorSpec":
        """Completa el reloj de llegada con el de la fuente si no se fijó explícitamente."""
        return self.model_copy(
            update={
                "t_ref": self.t_ref if self.t_ref is not None else t_ref,
                "v_ref": self.v_ref if self.v_ref is not None else v_ref,
            }
        )


class BinningSpec(BaseModel):
    """Histograma de separaciones: ejes, ancho de bin y separación máxima por eje."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    axes: Tuple[Axis, ...] = ("x", "y")
    bin_width: Dict[Axis, float]
    max_separation: Dict[Axis, float]
    signed: bool = False
    v_ref: float = Field(default=1.0, gt=0)

    @model_validator(mode="before")
    @classmethod
    def broadcast_scalars(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            if isinstance(data.get("axes"), str):
                data["axes"] = tuple(a.strip() for a in data["axes"].split(","))
            axes = tuple(data.get("axes", ("x", "y")))
            for key in ("bin_width", "max_separation"):
                if key in data:
                    data[key] = _broadcast_axes(data[key], axes)
        return data

    @model_validator(mode="after")
    def validate_bins(self) -> "BinningSpec":
        if not self.axes or len(set(self.axes)) != len(self.axes):
            raise ValueError("'axes' debe ser una lista no vacía de ejes distintos.")
        for axis in self.axes:
            if axis not in self.bin_width or axis not in self.max_separation:
                raise ValueError(f"Faltan bin_width o max_separation para el eje '{axis}'.")
            if self.bin_width[axis] <= 0:
                raise ValueError("bin_width debe ser positivo.")
            if self.max_separation[axis] < self.bin_width[axis]:
                raise ValueError("max_separation no puede ser menor que bin_width.")
        return self

    @property
    def n_bins(self) -> Tuple[int, ...]:
        """Bins por eje (un lado): ceil(max/ancho)."""
        return tuple(
            max(1, math.ceil(self.max_separation[a] / self.bin_width[a] - 1e-9)) for a in self.axes
        )

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(2 * n if self.signed else n for n in self.n_bins)

    @classmethod
    def default_for(
        cls,
        lengths: Dict[str, float],
        resolution: Dict[str, float],
        axes: Tuple[str, ...],
        v_ref: float = 1.0,
    ) -> "BinningSpec":
        """
        Binning por defecto: ancho = min(l, d)/4 sin bajar de l/8, y separación
        máxima = 10·l, con l la longitud de correlación esperada en el eje.
        """
        widths, maxima = {}, {}
        for axis in axes:
            length = lengths[axis]
            if not math.isfinite(length):
                raise ConfigError(f"binning: la longitud esperada en '{axis}' es infinita; indique el binning explícitamente.")
            d = resolution.get(axis, 0.0)
            scale = max(min(length, d), length / 2.0) if d > 0 else length
            widths[axis] = scale / 4.0
            maxima[axis] = 10.0 * length
        return cls(axes=axes, bin_width=widths, max_separation=maxima, v_ref=v_ref)


class CountingCell(BaseModel):
    """Caja alineada con los ejes: límites [inferior, superior) en metros por eje."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    bounds: Dict[Axis, Tuple[float, float]]

    @field_validator("bounds")
    @classmethod
    def ordered_bounds(cls, v: Dict[str, Tuple[float, float]]) -> Dict[str, Tuple[float, float]]:
        if any(lo >= hi for lo, hi in v.values()):
            raise ValueError("Cada límite inferior debe ser menor que el superior.")
        return v


def _default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "hbt_output"))


class RunConfig(BaseModel):
    """
    Configuración completa de una ejecución.

    Todos los valores por defecto quedan registrados en el manifiesto, de modo
    que cada ejecución se describe a sí misma.
    """

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    source: BaseSourceSpec = Field(default_factory=default_source)
    grid: GridSpec = Field(default_factory=GridSpec)
    detector: DetectorSpec = Field(default_factory=DetectorSpec)
    binning: Optional[BinningSpec] = None
    shots: int = Field(default=1000, ge=0)
    seed: int = Field(default=0, ge=0, lt=2**64)
    output_dir: Path = Field(default_factory=_default_output_dir)
    n_jobs: int = 1
    pairing: Literal["consecutive", "cyclic", "all"] = "consecutive"
    normalization: Literal["per_shot", "total_pairs"] = "per_shot"
    fit_sign: Optional[Literal[-1, 0, 1]] = None

    @field_validator("n_jobs")
    @classmethod
    def nonzero_jobs(cls, v: int) -> int:
        if v == 0:
            raise ValueError("n_jobs debe ser positivo o negativo (-1 usa todos los núcleos), no 0.")
        return v

    @model_validator(mode="after")
    def complete_defaults(self) -> "RunConfig":
        axes = self.grid.axes
        if self.source.emitters is not None and self.source.emitter_dimension != len(axes):
            raise ValueError(
                f"Los emisores tienen dimensión {self.source.emitter_dimension} pero la malla tiene ejes {axes}."
            )
        if self.source.size is not None:
            missing = [a for a in axes if a not in self.source.size]
            if missing:
                raise ValueError(f"source.size no define los ejes de la malla {missing}.")
        t_ref, v_ref = self.source.arrival_clock()
        self.detector = self.detector.with_clock(t_ref, v_ref)
        if self.binning is None:
            self.binning = BinningSpec.default_for(
                self.expected_lengths(),
                {a: self.detector.resolution(a) for a in axes},
                axes,
                v_ref=self.detector.v_ref,
            )
        elif self.binning.v_ref != self.detector.v_ref:
            self.binning = self.binning.model_copy(update={"v_ref": self.detector.v_ref})
        return self

    def expected_lengths(self) -> Dict[str, float]:
        return self.source.coherence_lengths(self.grid.axes)

    def to_dict(self) -> Dict[str, Any]:
        """Serializa la configuración completa (con los valores por defecto resueltos)."""
        return {
            "source": self.source.to_dict(),
            "grid": self.grid.model_dump(mode="json", exclude_none=True),
            "detector": self.detector.model_dump(mode="json", exclude_none=True),
            "binning": self.binning.model_dump(mode="json"),
            "shots": self.shots,
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "n_jobs": self.n_jobs,
            "pairing": self.pairing,
            "normalization": self.normalization,
            "fit_sign": self.fit_sign,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """
        Construye y valida una configuración a partir de un diccionario anidado.

        Raises:
            ConfigError: Con la lista de todas las claves problemáticas.
        """
        data = dict(data)
        problems: List[str] = []
        if "source" in data:
            try:
                source = {"mode": "atom", **data["source"]}
                if source["mode"] == "atom" and "size" not in source and "emitters" not in source:
                    source["size"] = default_source().size
                data["source"] = BaseSourceSpec.from_dict(source)
            except ValidationError as e:
                problems.extend(_describe_errors(e, prefix="source"))
            except ValueError as e:
                problems.append(f"source.mode: {e}")
        if problems:
            raise ConfigError("Configuración inválida:\n  " + "\n  ".join(problems))
        try:
            return cls(**data)
        except ValidationError as e:
            raise ConfigError("Configuración inválida:\n  " + "\n  ".join(_describe_errors(e))) from e


def _describe_errors(error: ValidationError, prefix: str = "") -> List[str]:
    lines = []
    for item in error.errors():
        loc = ".".join(str(part) for part in item["loc"])
        key = f"{prefix}.{loc}" if prefix and loc else (prefix or loc)
        lines.append(f"{key}: {item['msg']}")
    return lines


def _parse_value(raw: str) -> Any:
    """Interpreta un valor como JSON (números, listas, objetos) o lo deja como cadena."""
    text = raw.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _unflatten(flat: Dict[str, str]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {}
    for dotted, raw in flat.items():
        parts = dotted.split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Configuración inválida:\n  {dotted}: choca con la clave '{part}'.")
            node = child
        node[parts[-1]] = _parse_value(raw)
    return nested


def parse_run_config(text: str) -> RunConfig:
    """Interpreta el texto plano 'clave.con.puntos = valor' de un archivo de configuración."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as e:
        raise ConfigError(f"Configuración inválida:\n  {e}") from e
    return RunConfig.from_dict(_unflatten(dict(parser["run"])))


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"No se pudo leer la configuración {path}: {e}") from e
    config = parse_run_config(text)
    logger.info(f"Configuración cargada de {path}: fuente {config.source.mode}/{config.source.statistics.value}")
    return config
