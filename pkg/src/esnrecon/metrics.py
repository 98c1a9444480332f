"""Reconstruction and derivative accuracy metrics: NRMSE, per-step squared
error series, and histogram density estimates for distribution comparison."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def nrmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Root mean squared error normalized by the truth range.

    The range max(truth) - min(truth) is taken over the evaluated set, so
    train and test scores each use their own normalization.
    """
    estimate = np.asarray(estimate, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if estimate.shape != truth.shape:
        raise ValueError("estimate and truth must have equal length")
    if truth.size < 2:
        raise ValueError("need at least two samples")
    span = float(np.max(truth) - np.min(truth))
    if span <= 0.0:
        raise ValueError("truth range is zero; NRMSE undefined")
    return float(np.sqrt(np.mean((estimate - truth) ** 2)) / span)


def squared_error_series(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-step squared norm of the column difference, ||a_j - b_j||^2."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return np.sum(diff * diff, axis=0)


def pdf_histogram(series: np.ndarray, n_bins: int,
                  span: tuple[float, float] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width histogram density over [min, max] (or an explicit span).

    Densities are normalized to unit integral. Pass the combined range of
    several series as ``span`` to compare their densities on shared bins.
    A constant series degenerates to a single unit-width bin.
    """
    series = np.asarray(series, dtype=float).ravel()
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if series.size == 0:
        raise ValueError("series is empty")
    lo, hi = (float(np.min(series)), float(np.max(series))) if span is None else span
    if lo == hi:
        edges = np.array([lo - 0.5, lo + 0.5])
        return edges, np.array([1.0])
    densities, edges = np.histogram(series, bins=n_bins, range=(lo, hi), density=True)
    return edges, densities


def histogram_l1_distance(edges: np.ndarray, density_a: np.ndarray,
                          density_b: np.ndarray) -> float:
    """Integral of |p - q| over shared bins."""
    widths = np.diff(edges)
    return float(np.sum(np.abs(density_a - density_b) * widths))


@dataclass
class HistogramComparison:
    """Truth and reconstruction densities of one variable on shared bins."""

    variable: str
    dataset: str  # "train" or "test"
    edges: np.ndarray
    truth_density: np.ndarray
    estimate_density: np.ndarray

    @property
    def l1_distance(self) -> float:
        return histogram_l1_distance(self.edges, self.truth_density,
                                     self.estimate_density)


def compare_histograms(variable: str, dataset: str, truth: np.ndarray,
                       estimate: np.ndarray, n_bins: int) -> HistogramComparison:
    """Histogram both series on bins spanning their combined range."""
    lo = float(min(np.min(truth), np.min(estimate)))
    hi = float(max(np.max(truth), np.max(estimate)))
    edges, dens_truth = pdf_histogram(truth, n_bins, span=(lo, hi))
    _, dens_est = pdf_histogram(estimate, n_bins, span=(lo, hi))
    return HistogramComparison(variable=variable, dataset=dataset, edges=edges,
                               truth_density=dens_truth, estimate_density=dens_est)


@dataclass
class MetricsReport:
    """Collected scores for one trained network."""

    nrmse_train: dict[str, float] = field(default_factory=dict)
    nrmse_test: dict[str, float] = field(default_factory=dict)
    mean_losses: dict[str, float] = field(default_factory=dict)
    histograms: list[HistogramComparison] = field(default_factory=list)
