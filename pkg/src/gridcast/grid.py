"""Time-indexed stacks of multi-channel 2D fields and min-max normalization."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, InputError


@dataclass
class NormRecord:
    """Per-variable min/max taken over a training window."""

    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=np.float64)
        self.maxs = np.asarray(self.maxs, dtype=np.float64)

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormRecord":
        return cls(np.asarray(d["mins"]), np.asarray(d["maxs"]))


@dataclass
class GridSeries:
    """A (T, m, n, p) stack of fields with physical metadata.

    values are stored time-major, row-major within a slice, channels last.
    norm is set on normalized series and holds the statistics needed to invert.
    """

    values: np.ndarray
    dt: float = 1.0
    var_names: list[str] | None = None
    height_m: float | None = None
    norm: NormRecord | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 4:
            raise ConfigurationError(f"GridSeries values must be (T, m, n, p), got {self.values.shape}")
        if self.var_names is None:
            self.var_names = [f"var{i}" for i in range(self.values.shape[3])]
        if len(self.var_names) != self.values.shape[3]:
            raise ConfigurationError("var_names length does not match channel count")

    @property
    def shape(self):
        return self.values.shape

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    def frame(self, t: int) -> np.ndarray:
        return self.values[t]

    def window(self, start: int, stop: int | None = None) -> "GridSeries":
        return replace(self, values=self.values[start:stop].copy())

    def copy_with(self, values: np.ndarray, **kw) -> "GridSeries":
        return replace(self, values=values, **kw)


def minmax_stats(data: GridSeries, n_frames: int | None = None) -> NormRecord:
    """Per-variable min/max over the first n_frames slices (all slices if None)."""
    window = data.values if n_frames is None else data.values[:n_frames]
    mins = window.min(axis=(0, 1, 2))
    maxs = window.max(axis=(0, 1, 2))
    if np.any(maxs - mins <= 0):
        flat = [data.var_names[i] for i in np.nonzero(maxs - mins <= 0)[0]]
        raise InputError(f"degenerate range (max == min) for variable(s) {flat}")
    return NormRecord(mins, maxs)


def normalize(data: GridSeries, stats: NormRecord | None = None,
              n_frames: int | None = None) -> GridSeries:
    """Map each variable through (x - min) / (max - min).

    Statistics come from `stats` when given, otherwise from the first
    n_frames slices of `data` itself. Values outside the statistics window
    may map outside [0, 1]; they are deliberately not clipped.
    """
    if data.norm is not None:
        raise InputError("series is already normalized")
    if stats is None:
        stats = minmax_stats(data, n_frames)
    scaled = (data.values - stats.mins) / (stats.maxs - stats.mins)
    return data.copy_with(scaled, norm=stats)


def denormalize(data: GridSeries) -> GridSeries:
    """Invert normalize using the stored record."""
    if data.norm is None:
        raise InputError("series carries no normalization record")
    raw = data.values * (data.norm.maxs - data.norm.mins) + data.norm.mins
    return data.copy_with(raw, norm=None)
