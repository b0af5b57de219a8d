# --- hbtlab/pipeline/orchestrator.py ---

"""
Orquestador de una ejecución: fuente → detector → correlador → ajuste.

Cada etapa se configura una sola vez a partir del `RunConfig`. El núcleo de
coherencia se construye una vez y se comparte en solo lectura entre los
procesos que simulan disparos; cada disparo usa su propio flujo aleatorio,
así que los resultados no dependen del número de procesos.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, cpu_count, delayed

from hbtlab import __version__
from hbtlab.core.model import RngStream, Shot, Statistics
from hbtlab.correlator.estimators import CorrelationFunction, estimate_g2
from hbtlab.correlator.fitting import FitResult, fit_g2
from hbtlab.correlator.pair_counter import cross_shot_histogram, pair_histogram
from hbtlab.data_system.event_files import read_events, write_events
from hbtlab.data_system.templates.templates import DetectorSpec, RunConfig
from hbtlab.detector.tof_detector import apply_detector
from hbtlab.oracles.formulas import (
    blurred_length,
    bunching_amplitude,
    contrast_reduction,
    normalized_tail_level,
    total_mode_count,
)
from hbtlab.sources.kernels import Kernel, build_source_kernel
from hbtlab.sources.samplers import ArrivalClock, prepare_kernel, sample_shot

logger = logging.getLogger(__name__)

EVENTS_FILE = "events.txt"
MANIFEST_FILE = "manifest.json"
CORRELATION_FILE = "g2.txt"
FIT_FILE = "fit.txt"


def _simulate_block(
    kernel: Kernel,
    statistics: Statistics,
    mean_count: float,
    clock: ArrivalClock,
    jitter: bool,
    detector: DetectorSpec,
    seed: int,
    shot_ids: Sequence[int],
) -> List[Shot]:
    shots = []
    for shot_id in shot_ids:
        stream = RngStream(seed, int(shot_id))
        events = sample_shot(kernel, statistics, mean_count, stream, clock, jitter)
        measured = apply_detector(events, detector, stream)
        shots.append(measured.to_shot(int(shot_id)).sorted_by_time())
    return shots


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


class HBTOrchestrator:
    def __init__(self, config: RunConfig):
        self.config = config
        self.statistics = config.source.statistics
        self.clock = ArrivalClock(t_ref=config.detector.t_ref, v_ref=config.detector.v_ref)
        self._kernel: Optional[Kernel] = None

    @property
    def kernel(self) -> Kernel:
        """Núcleo de la fuente, preparado para la estadística (ocupaciones escaladas para fermiones)."""
        if self._kernel is None:
            raw = build_source_kernel(self.config.source, self.config.grid)
            self._kernel = prepare_kernel(raw, self.statistics, self.config.source.mean_count)
        return self._kernel

    # --- Etapas ---

    def simulate(self, shots: Optional[int] = None) -> List[Shot]:
        n_shots = self.config.shots if shots is None else shots
        if n_shots == 0:
            logger.info("Cero disparos solicitados; no se simula nada.")
            return []
        kernel = self.kernel
        n_jobs = self.config.n_jobs
        ids = np.arange(n_shots)
        workers = cpu_count() if n_jobs < 0 else n_jobs
        n_blocks = 1 if n_jobs == 1 else min(n_shots, 4 * workers)
        blocks = [block for block in np.array_split(ids, n_blocks) if block.size]
        results = Parallel(n_jobs=n_jobs)(
            delayed(_simulate_block)(
                kernel, self.statistics, self.config.source.mean_count, self.clock,
                self.config.grid.jitter, self.config.detector, self.config.seed, block,
            )
            for block in blocks
        )
        simulated = [shot for block in results for shot in block]
        n_events = sum(len(s) for s in simulated)
        logger.info(
            f"Simulados {len(simulated)} disparos {self.statistics.value}: {n_events} eventos "
            f"({n_events / len(simulated):.1f} por disparo)"
        )
        return simulated

    def correlate(self, shots: Sequence[Shot]) -> CorrelationFunction:
        """Histogramas en el mismo disparo y entre disparos, y estimador de g²."""
        if len(shots) < 2:
            raise ValueError(f"Se necesitan al menos 2 disparos para correlacionar, hay {len(shots)}.")
        binning = self.config.binning
        same = pair_histogram(shots, binning, n_jobs=self.config.n_jobs)
        cross = cross_shot_histogram(shots, binning, plan=self.config.pairing, n_jobs=self.config.n_jobs)
        return estimate_g2(same, cross, normalization=self.config.normalization)

    def fit(self, corr: CorrelationFunction) -> FitResult:
        return fit_g2(corr, sign_hint=self.config.fit_sign)

    # --- Predicciones y artefactos ---

    def predictions(self) -> Dict[str, Any]:
        """Predicciones analíticas de la configuración, para comparar con el ajuste."""
        config = self.config
        lengths = config.expected_lengths()
        resolution = {axis: config.detector.resolution(axis) for axis in config.grid.axes}
        binned = [a for a in config.binning.axes if a in lengths]
        contrast = contrast_reduction([lengths[a] for a in binned], [resolution[a] for a in binned])
        sign = {Statistics.BOSON: 1, Statistics.FERMION: -1}.get(self.statistics, 0)
        modes = total_mode_count(self.kernel)
        return {
            "statistics": self.statistics.value,
            "g2_zero_ideal": bunching_amplitude(self.statistics),
            "g2_zero_measured": 1.0 + sign * contrast,
            "contrast": contrast if sign else 0.0,
            "effective_modes": modes,
            "g2_tail": self._tail_level(modes),
            "correlation_lengths": {a: _finite_or_none(l) for a, l in lengths.items()},
            "blurred_lengths": {
                a: _finite_or_none(blurred_length(l, resolution[a])) if math.isfinite(l) else None
                for a, l in lengths.items()
            },
        }

    def _tail_level(self, modes: float) -> Optional[float]:
        """Nivel esperado de la cola lejana de g² con la normalización configurada."""
        if self.config.normalization == "per_shot":
            return 1.0
        return _finite_or_none(normalized_tail_level(modes, self.statistics))

    def manifest(self, artifacts: Dict[str, str]) -> Dict[str, Any]:
        return {
            "code_version": __version__,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "predictions": self.predictions(),
            "artifacts": artifacts,
        }

    def write_manifest(self, artifacts: Dict[str, str]) -> Path:
        path = Path(self.config.output_dir) / MANIFEST_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.manifest(artifacts), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        logger.info(f"Manifiesto escrito en {path}")
        return path

    def run_simulation(self) -> List[Shot]:
        """Simula, escribe el archivo de eventos y el manifiesto."""
        shots = self.simulate()
        write_events(shots, Path(self.config.output_dir) / EVENTS_FILE)
        self.write_manifest({"events": EVENTS_FILE})
        return shots

    def write_correlation(self, corr: CorrelationFunction) -> Path:
        path = Path(self.config.output_dir) / CORRELATION_FILE
        corr.write_table(path)
        return path

    def write_fit(self, fit: FitResult) -> Path:
        path = Path(self.config.output_dir) / FIT_FILE
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(fit.to_text() + "\n", encoding="utf-8")
        logger.info(f"Informe del ajuste escrito en {path}")
        return path

    def run_correlation(self, events_path: Path) -> FitResult:
        """Lee un archivo de eventos, escribe la tabla de g² y el informe del ajuste."""
        shots = read_events(events_path)
        corr = self.correlate(shots)
        self.write_correlation(corr)
        fit = self.fit(corr)
        self.write_fit(fit)
        return fit
