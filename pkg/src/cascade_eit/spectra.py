"""Probe absorption spectra, EIT dip metrics and unit conversion."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .lindblad import SystemParams, build_liouvillian
from .steady import SolverError, solve_steady_state

__all__ = [
    "DEFAULT_GRID",
    "SpectrumCurve",
    "DipMetrics",
    "CoverageError",
    "default_grid",
    "sweep_probe_detuning",
    "dip_metrics",
    "integrated_absorption",
    "peak_positions",
    "to_physical_units",
]

DEFAULT_GRID = (-4.0, 4.0, 801)

# sodium 3S1/2 -> 3P1/2: 2*gamma21 = 2*pi*10 MHz
GAMMA21_MHZ = 5.0
GAMMA21_ANGULAR = 2 * math.pi * GAMMA21_MHZ * 1e6  # rad/s


class CoverageError(ValueError):
    """The detuning grid does not span the absorption features."""


@dataclass(frozen=True, eq=False)
class SpectrumCurve:
    delta_p_grid: np.ndarray
    im_rho21: np.ndarray
    params: SystemParams

    def __post_init__(self):
        if len(self.delta_p_grid) != len(self.im_rho21):
            raise ValueError("grid and values differ in length")
        if np.any(np.diff(self.delta_p_grid) <= 0):
            raise ValueError("detuning grid must be strictly increasing")


@dataclass(frozen=True)
class DipMetrics:
    line_center_value: float
    peak_value: float
    dip_depth_fraction: float


def default_grid() -> np.ndarray:
    lo, hi, n = DEFAULT_GRID
    return np.linspace(lo, hi, n)


def _im_rho21(params: SystemParams, dp: float) -> float:
    try:
        sol = solve_steady_state(build_liouvillian(params.replace(delta_p=float(dp))))
    except SolverError as exc:
        exc.args = (f"at delta_p={dp}: {exc}",) + exc.args[1:]
        raise
    return float(sol.rho_ss[1, 0].imag)


def sweep_probe_detuning(params: SystemParams, grid=None, threads: int = 1) -> SpectrumCurve:
    """Im(rho21) in steady state for every probe detuning in ``grid``."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("detuning grid must be a non-empty 1-D sequence")
    if threads == 1:
        values = [_im_rho21(params, dp) for dp in grid]
    else:
        with ThreadPoolExecutor(max_workers=threads or None) as pool:
            values = list(pool.map(lambda dp: _im_rho21(params, dp), grid))
    return SpectrumCurve(delta_p_grid=grid, im_rho21=np.array(values), params=params)


def dip_metrics(curve: SpectrumCurve) -> DipMetrics:
    grid, values = curve.delta_p_grid, curve.im_rho21
    if grid[0] > -3.0 or grid[-1] < 3.0:
        raise CoverageError(f"grid [{grid[0]}, {grid[-1]}] does not span [-3, 3]")
    center = int(np.argmin(np.abs(grid)))
    half_step = 0.5 * np.max(np.diff(grid)) if grid.size > 1 else 0.0
    if abs(grid[center]) > half_step + 1e-12:
        raise CoverageError("grid has no point near delta_p = 0")
    peak = float(values.max())
    line_center = float(values[center])
    depth = 0.0 if peak <= 0 else 1.0 - line_center / peak
    return DipMetrics(line_center_value=line_center, peak_value=peak, dip_depth_fraction=depth)


def integrated_absorption(curve: SpectrumCurve) -> float:
    return float(np.trapezoid(curve.im_rho21, curve.delta_p_grid))


def peak_positions(curve: SpectrumCurve) -> np.ndarray:
    """Detunings of the strict interior local maxima, highest first."""
    v = curve.im_rho21
    idx = np.flatnonzero((v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])) + 1
    idx = idx[np.argsort(-v[idx], kind="stable")]
    return curve.delta_p_grid[idx]


def to_physical_units(value: float, kind: str) -> float:
    """Convert a dimensionless quantity to sodium units.

    Rates and frequencies come back in MHz (angular value divided by 2 pi),
    times in nanoseconds.
    """
    if kind in ("rate", "frequency"):
        return value * GAMMA21_MHZ
    if kind == "time":
        return value / GAMMA21_ANGULAR * 1e9
    raise ValueError(f"unknown quantity kind {kind!r}; expected rate, frequency or time")
