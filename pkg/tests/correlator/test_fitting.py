# --- tests/correlator/test_fitting.py ---

"""Pruebas del ajuste gaussiano de g²."""

import math

import numpy as np
import pytest

from hbtlab.core.model import FitError
from hbtlab.correlator.estimators import CorrelationFunction
from hbtlab.correlator.fitting import FitResult, fit_g2
from hbtlab.data_system.templates.templates import BinningSpec


def _synthetic(binning: BinningSpec, eta: float, sign: int, lengths: dict, stderr: float = 0.01) -> CorrelationFunction:
    """g² exacto del modelo gaussiano evaluado en los centros de bin."""
    empty = CorrelationFunction(binning, np.zeros(binning.shape), np.zeros(binning.shape))
    points = empty.points()
    exponent = sum((points[:, k] / lengths[a]) ** 2 for k, a in enumerate(binning.axes))
    g2 = 1.0 + sign * eta * np.exp(-exponent)
    return CorrelationFunction(binning, g2.reshape(binning.shape), np.full(binning.shape, stderr))


def test_noiseless_bunching_peak_is_recovered():
    """η = 1 y l = 100 µm se recuperan con precisión relativa de 1e-6."""
    binning = BinningSpec(axes=("x",), bin_width=1e-5, max_separation=1e-3)
    corr = _synthetic(binning, 1.0, +1, {"x": 1e-4})

    fit = fit_g2(corr)

    assert fit.sign == 1
    assert fit.eta == pytest.approx(1.0, rel=1e-6)
    assert fit.lengths["x"] == pytest.approx(1e-4, rel=1e-6)
    assert math.isnan(fit.lengths["y"])
    assert fit.chi2red == pytest.approx(0.0, abs=1e-8)
    assert fit.g2_zero == pytest.approx(2.0, rel=1e-6)
    assert fit.n_bins == 100


def test_antibunching_dip_in_two_dimensions():
    binning = BinningSpec(axes=("x", "y"), bin_width=2e-5, max_separation=6e-4)
    corr = _synthetic(binning, 0.8, -1, {"x": 1e-4, "y": 2e-4})

    fit = fit_g2(corr)

    assert fit.sign == -1
    assert fit.eta == pytest.approx(0.8, rel=1e-5)
    assert fit.lengths["x"] == pytest.approx(1e-4, rel=1e-5)
    assert fit.lengths["y"] == pytest.approx(2e-4, rel=1e-5)


def test_noisy_data_gives_reasonable_chi2_and_errors():
    binning = BinningSpec(axes=("x",), bin_width=1e-5, max_separation=1e-3)
    exact = _synthetic(binning, 0.5, +1, {"x": 2e-4}, stderr=0.02)
    noisy = exact.g2 + np.random.default_rng(0).normal(0.0, 0.02, exact.g2.shape)

    fit = fit_g2(CorrelationFunction(binning, noisy, exact.stderr))

    assert abs(fit.eta - 0.5) < 5 * fit.eta_err
    assert abs(fit.lengths["x"] - 2e-4) < 5 * fit.length_errs["x"]
    assert 0.6 < fit.chi2red < 1.5


def test_free_sign_fit_on_flat_data_keeps_length_above_one_bin():
    """Ruido plano con los bins del origen altos: el pico no puede estrecharse por debajo de un bin."""
    # --- Arrange ---
    binning = BinningSpec(axes=("x", "y"), bin_width=1e-5, max_separation=2e-4)
    noise = np.random.default_rng(3).normal(0.0, 0.01, binning.shape)
    noise[:2, :2] = 0.03
    corr = CorrelationFunction(binning, 1.0 + noise, np.full(binning.shape, 0.01))

    # --- Act ---
    fit = fit_g2(corr)

    # --- Assert ---
    assert fit.sign == 1
    assert fit.lengths["x"] >= 1e-5 * (1 - 1e-9)
    assert fit.lengths["y"] >= 1e-5 * (1 - 1e-9)
    # el error de η corresponde al de unos pocos bins, no a un Jacobiano degenerado
    assert fit.eta_err > 1e-3


def test_sign_hint_zero_returns_flat_model():
    binning = BinningSpec(axes=("x",), bin_width=1e-5, max_separation=1e-4)
    corr = CorrelationFunction(binning, np.full(10, 1.1), np.full(10, 0.1))

    fit = fit_g2(corr, sign_hint=0)

    assert (fit.eta, fit.sign) == (0.0, 0)
    assert fit.g2_zero == 1.0
    assert fit.chi2red == pytest.approx(1.0)


def test_too_few_valid_bins_raise_fit_error():
    binning = BinningSpec(axes=("x",), bin_width=1e-5, max_separation=1e-4)
    g2 = np.full(10, np.nan)
    g2[:4] = [2.0, 1.8, 1.4, 1.1]
    corr = CorrelationFunction(binning, g2, np.where(np.isnan(g2), np.nan, 0.1))

    with pytest.raises(FitError):
        fit_g2(corr)


def test_fit_result_text_roundtrip():
    fit = FitResult(
        eta=0.97,
        sign=-1,
        lengths={"x": 2.7e-4, "y": 2.6e-4, "z": math.nan},
        chi2red=1.03,
        eta_err=0.02,
        length_errs={"x": 1e-5, "y": 1.1e-5, "z": math.nan},
        n_bins=400,
    )

    text = fit.to_text()
    again = FitResult.from_text(text)

    assert text.startswith("eta=0.97 sign=-1 lx=0.00027 ly=0.00026 lz=nan chi2red=1.03")
    assert (again.eta, again.sign, again.n_bins) == (0.97, -1, 400)
    assert again.lengths["x"] == 2.7e-4
    assert math.isnan(again.lengths["z"])
    assert again.length_errs["y"] == 1.1e-5
