"""Reference methods and the metric suite for the comparison protocol."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError
from .grid import GridSeries


def persistence_forecast(history: GridSeries, horizon: int) -> GridSeries:
    """Repeat the final observed frame for every lead time."""
    if history.n_steps < 1:
        raise InputError("history is empty")
    last = history.values[-1]
    return history.copy_with(np.repeat(last[None], horizon, axis=0))


@dataclass
class PCAModel:
    mean: np.ndarray          # (features,)
    components: np.ndarray    # (features, n_components)
    singular_values: np.ndarray
    field_shape: tuple[int, int, int]


def pca_fit(data: GridSeries, n_components: int) -> PCAModel:
    """Linear basis of the flattened training frames via SVD."""
    t_len, m, n, p = data.shape
    flat = data.values.reshape(t_len, -1)
    if n_components > min(t_len, flat.shape[1]):
        raise ConfigurationError(
            f"n_components={n_components} exceeds min(T, m*n*p)={min(t_len, flat.shape[1])}")
    mean = flat.mean(axis=0)
    centered = flat - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    return PCAModel(mean, vt[:n_components].T.copy(), s.copy(), (m, n, p))


def pca_reconstruct(model: PCAModel, data: GridSeries) -> GridSeries:
    """Project frames onto the basis and map back (plus the training mean)."""
    t_len = data.n_steps
    if data.shape[1:] != model.field_shape:
        raise InputError(f"field shape {data.shape[1:]} does not match fitted {model.field_shape}")
    flat = data.values.reshape(t_len, -1)
    scores = (flat - model.mean) @ model.components
    recon = scores @ model.components.T + model.mean
    return data.copy_with(recon.reshape(data.shape))


def mse_map(truth: GridSeries, pred: GridSeries) -> np.ndarray:
    """Per-location mean squared error over the series, shape (m, n, p)."""
    if truth.shape != pred.shape:
        raise InputError(f"shape mismatch: {truth.shape} vs {pred.shape}")
    diff = truth.values - pred.values
    return np.mean(diff * diff, axis=0)


def median_iqr(values) -> tuple[float, float]:
    """Median and interquartile range with linearly interpolated quartiles."""
    flat = np.asarray(values, dtype=np.float64).ravel()
    q1, med, q3 = np.percentile(flat, [25.0, 50.0, 75.0])
    return float(med), float(q3 - q1)


def coverage(lower: GridSeries, upper: GridSeries, truth: GridSeries) -> float:
    """Percent of (location, time, variable) points with truth inside the band."""
    if lower.shape != truth.shape or upper.shape != truth.shape:
        raise InputError("interval and truth shapes differ")
    inside = (truth.values >= lower.values) & (truth.values <= upper.values)
    return 100.0 * float(inside.mean())


def grand_mean_coverage(lower: GridSeries, upper: GridSeries, truth: GridSeries) -> float:
    """Coverage of the spatially averaged series by the averaged band."""
    if lower.shape != truth.shape or upper.shape != truth.shape:
        raise InputError("interval and truth shapes differ")
    lo = lower.values.mean(axis=(1, 2, 3))
    hi = upper.values.mean(axis=(1, 2, 3))
    tr = truth.values.mean(axis=(1, 2, 3))
    inside = (tr >= lo) & (tr <= hi)
    return 100.0 * float(inside.mean())


@dataclass
class EvalReport:
    """Median/IQR per method plus empirical coverages, with run metadata."""

    mse: dict[str, tuple[float, float]] = field(default_factory=dict)
    coverages: dict[str, dict[int, float]] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add_mse(self, method: str, values) -> None:
        self.mse[method] = median_iqr(values)

    def add_coverage(self, kind: str, level: int, percent: float) -> None:
        self.coverages.setdefault(kind, {})[level] = percent

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("section,name,metric,value\n")
        for method, (med, iqr) in sorted(self.mse.items()):
            buf.write(f"mse,{method},median,{med:.10g}\n")
            buf.write(f"mse,{method},iqr,{iqr:.10g}\n")
        for kind, levels in sorted(self.coverages.items()):
            for level, pct in sorted(levels.items()):
                buf.write(f"coverage,{kind},{level},{pct:.10g}\n")
        for key, value in sorted(self.meta.items()):
            buf.write(f"meta,{key},,{value}\n")
        return buf.getvalue()

    def save_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_csv())

    def format_table(self) -> str:
        lines = []
        if self.mse:
            width = max(len(m) for m in self.mse)
            lines.append(f"{'method'.ljust(width)}  median MSE      IQR")
            for method, (med, iqr) in sorted(self.mse.items()):
                lines.append(f"{method.ljust(width)}  {med:<14.6g}  {iqr:.6g}")
        for kind, levels in sorted(self.coverages.items()):
            lines.append(f"coverage ({kind}):")
            for level, pct in sorted(levels.items(), reverse=True):
                lines.append(f"  {level}% nominal -> {pct:.1f}% empirical")
        return "\n".join(lines)
