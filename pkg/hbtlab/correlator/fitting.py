# --- hbtlab/correlator/fitting.py ---

"""
Ajuste por mínimos cuadrados ponderados del modelo de pico/valle gaussiano:

    g²(Δ) = 1 + σ·η·exp(−Σ_a Δ_a²/l_a²)

σ = +1 (agrupamiento, bosones) o −1 (antiagrupamiento, fermiones).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.optimize import least_squares

from hbtlab.core.model import FitError
from hbtlab.correlator.estimators import CorrelationFunction
from hbtlab.data_system.templates.templates import AXES

logger = logging.getLogger(__name__)

MIN_BINS_PER_AXIS = 5
SIGN_BINS = 5
START_LENGTHS = (0.1, 0.25, 0.5)


@dataclass(frozen=True)
class FitResult:
    """Resultado del ajuste; las longitudes de ejes no ajustados valen NaN."""

    eta: float
    sign: int
    lengths: Dict[str, float]
    chi2red: float
    eta_err: float = float("nan")
    length_errs: Dict[str, float] = field(default_factory=dict)
    n_bins: int = 0

    @property
    def g2_zero(self) -> float:
        return 1.0 + self.sign * self.eta

    def to_text(self) -> str:
        """Informe clave=valor: `eta=… sign=… lx=… ly=… lz=… chi2red=…` y los errores."""
        parts = [f"eta={self.eta:.10g}", f"sign={self.sign:+d}" if self.sign else "sign=0"]
        parts += [f"l{a}={self.lengths.get(a, math.nan):.10g}" for a in AXES]
        parts.append(f"chi2red={self.chi2red:.10g}")
        parts.append(f"eta_err={self.eta_err:.10g}")
        parts += [f"l{a}_err={self.length_errs.get(a, math.nan):.10g}" for a in AXES]
        parts.append(f"n_bins={self.n_bins}")
        return " ".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "FitResult":
        values = dict(token.split("=", 1) for token in text.split())
        return cls(
            eta=float(values["eta"]),
            sign=int(values["sign"]),
            lengths={a: float(values[f"l{a}"]) for a in AXES},
            chi2red=float(values["chi2red"]),
            eta_err=float(values.get("eta_err", "nan")),
            length_errs={a: float(values.get(f"l{a}_err", "nan")) for a in AXES},
            n_bins=int(values.get("n_bins", 0)),
        )


def _choose_sign(points: np.ndarray, g2: np.ndarray, err: np.ndarray) -> int:
    """Signo de (g² − 1) en los bins más cercanos al origen, media ponderada."""
    nearest = np.argsort(np.linalg.norm(points, axis=1), kind="stable")[:SIGN_BINS]
    weights = 1.0 / err[nearest] ** 2
    excess = float(np.sum(weights * (g2[nearest] - 1.0)) / np.sum(weights))
    return 1 if excess >= 0 else -1


def fit_g2(corr: CorrelationFunction, sign_hint: Optional[int] = None) -> FitResult:
    """
    Ajusta η y una longitud por eje del binning.

    El signo se fija con `sign_hint` o, si no se da, por el signo de g²−1
    cerca del origen. Con `sign_hint=0` se devuelve el modelo nulo g² ≡ 1.

    Raises:
        FitError: Si algún eje tiene menos de 5 bins válidos o ningún
                  arranque converge; lleva el mejor residuo alcanzado.
    """
    valid = (corr.valid & (corr.stderr > 0)).reshape(-1)
    points = corr.points()[valid]
    g2 = corr.g2.reshape(-1)[valid]
    err = corr.stderr.reshape(-1)[valid]
    axes = corr.binning.axes

    for k, axis in enumerate(axes):
        distinct = np.unique(points[:, k]).size
        if distinct < MIN_BINS_PER_AXIS:
            raise FitError(f"El eje {axis} solo tiene {distinct} bins válidos; se necesitan {MIN_BINS_PER_AXIS}.")

    nan_lengths = {a: math.nan for a in AXES}
    if sign_hint == 0:
        chi2 = float(np.sum(((g2 - 1.0) / err) ** 2))
        return FitResult(0.0, 0, nan_lengths, chi2 / len(g2), 0.0, dict(nan_lengths), len(g2))

    sign = int(sign_hint) if sign_hint is not None else _choose_sign(points, g2, err)
    scales = np.array([corr.binning.max_separation[a] for a in axes])
    scaled = points / scales

    def residuals(params: np.ndarray) -> np.ndarray:
        eta, lengths = params[0], params[1:]
        model = 1.0 + sign * eta * np.exp(-np.sum((scaled / lengths) ** 2, axis=1))
        return (model - g2) / err

    near = np.argsort(np.linalg.norm(points, axis=1), kind="stable")[:SIGN_BINS]
    eta0 = float(np.clip(abs(np.mean(g2[near]) - 1.0), 0.01, 1.5))
    # longitud mínima: un bin por eje
    floor = np.array([corr.binning.bin_width[a] for a in axes]) / scales
    lower = np.concatenate([[0.0], floor])
    upper = np.concatenate([[2.0], np.full(len(axes), np.inf)])

    best = None
    for l0 in START_LENGTHS:
        start = np.concatenate([[eta0], np.maximum(np.full(len(axes), l0), 1.5 * floor)])
        result = least_squares(
            residuals, start, bounds=(lower, upper), method="trf",
            ftol=1e-12, xtol=1e-12, gtol=1e-12, max_nfev=2000,
        )
        logger.debug(f"Arranque l0={l0}: coste {result.cost:.6g}, estado {result.status}")
        if best is None or (result.success and (not best.success or result.cost < best.cost)):
            best = result

    dof = len(g2) - len(best.x)
    if not best.success or dof <= 0:
        raise FitError(
            f"El ajuste de g² no convergió: {best.message}", best_residual=float(2.0 * best.cost)
        )

    covariance = np.linalg.pinv(best.jac.T @ best.jac)
    errors = np.sqrt(np.clip(np.diag(covariance), 0.0, None))
    lengths = dict(nan_lengths)
    length_errs = dict(nan_lengths)
    for k, axis in enumerate(axes):
        lengths[axis] = float(best.x[1 + k] * scales[k])
        length_errs[axis] = float(errors[1 + k] * scales[k])

    fit = FitResult(
        eta=float(best.x[0]),
        sign=sign,
        lengths=lengths,
        chi2red=float(2.0 * best.cost / dof),
        eta_err=float(errors[0]),
        length_errs=length_errs,
        n_bins=int(len(g2)),
    )
    logger.info(f"Ajuste de g²: {fit.to_text()}")
    return fit
