"""Hub-height wind extrapolation and turbine power conversion."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

from .errors import ConfigurationError, InputError
from .grid import GridSeries

SHEAR_COEFFICIENT = 1.0 / 7.0


@dataclass
class PowerCurve:
    """Piecewise-linear map from hub-height wind speed (m/s) to power (kW).

    The table covers [cut-in, cut-out]; power is zero below cut-in (the first
    breakpoint) and zero above cut-out (the last breakpoint, turbine
    shutdown). Between the rated speed and cut-out the table holds the rated
    plateau.
    """

    name: str
    hub_height: float
    speeds: np.ndarray
    powers: np.ndarray

    def __post_init__(self):
        self.speeds = np.asarray(self.speeds, dtype=np.float64)
        self.powers = np.asarray(self.powers, dtype=np.float64)
        if self.speeds.ndim != 1 or self.speeds.shape != self.powers.shape or self.speeds.size < 2:
            raise ConfigurationError("curve needs matching 1-D speed and power columns")
        if np.any(np.diff(self.speeds) <= 0):
            raise ConfigurationError("curve speeds must be strictly increasing")
        if np.any(self.powers < 0):
            raise ConfigurationError("curve powers must be nonnegative")

    @property
    def cut_in(self) -> float:
        return float(self.speeds[0])

    @property
    def cut_out(self) -> float:
        return float(self.speeds[-1])

    @property
    def rated_power(self) -> float:
        return float(self.powers.max())

    @classmethod
    def from_csv(cls, path, name: str = "custom", hub_height: float = 80.0) -> "PowerCurve":
        speeds, powers = [], []
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != ["speed_ms", "power_kw"]:
                raise ConfigurationError(
                    f"curve CSV must have header speed_ms,power_kw, got {reader.fieldnames}")
            for row in reader:
                speeds.append(float(row["speed_ms"]))
                powers.append(float(row["power_kw"]))
        return cls(name, hub_height, np.array(speeds), np.array(powers))


def shipped_curve() -> PowerCurve:
    """The bundled N100-2500 style curve: 2500 kW rated, 80 m hub."""
    ref = resources.files("gridcast.data").joinpath("n100_2500.csv")
    with resources.as_file(ref) as path:
        return PowerCurve.from_csv(path, name="N100-2500", hub_height=80.0)


def extrapolate(speeds: GridSeries, source_height: float, target_height: float,
                kappa: float = SHEAR_COEFFICIENT) -> GridSeries:
    """Power-law height extrapolation: every value times (target/source)**kappa."""
    if source_height <= 0 or target_height <= 0:
        raise ConfigurationError("heights must be positive")
    if np.any(speeds.values < 0):
        raise InputError("wind speeds must be nonnegative")
    factor = (target_height / source_height) ** kappa
    return replace(speeds, values=speeds.values * factor, height_m=target_height)


def power(speed, curve: PowerCurve):
    """Power (kW) at the given hub-height speed(s) via the curve's interpolation."""
    speed = np.asarray(speed, dtype=np.float64)
    if np.any(speed < 0):
        raise InputError("wind speeds must be nonnegative")
    out = np.interp(speed, curve.speeds, curve.powers)
    out = np.where(speed < curve.cut_in, 0.0, out)
    out = np.where(speed > curve.cut_out, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def power_map(speeds: GridSeries, curve: PowerCurve, source_height: float,
              kappa: float = SHEAR_COEFFICIENT) -> tuple[GridSeries, float, float]:
    """Extrapolate to hub height, then convert each cell and time to power.

    Expects a single wind-speed-magnitude channel. Returns the power series
    plus its domain mean and standard deviation.
    """
    if speeds.shape[3] != 1:
        raise InputError(f"power conversion expects 1 channel (speed magnitude), got {speeds.shape[3]}")
    at_hub = speeds if source_height == curve.hub_height else extrapolate(
        speeds, source_height, curve.hub_height, kappa)
    kw = power(at_hub.values, curve)
    series = GridSeries(kw, dt=speeds.dt, var_names=["power_kw"], height_m=curve.hub_height)
    return series, float(kw.mean()), float(kw.std())
