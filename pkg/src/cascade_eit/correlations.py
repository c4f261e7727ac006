"""Normalized two-time intensity correlations from the regression theorem.

After a photon is emitted on a transition the atom is left in the lower
level of that transition. Propagating this reset state with the same
generator and reading the population of the emitting level, divided by its
steady-state value, gives G(tau).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dynamics import Method, propagate
from .lindblad import Liouvillian, SystemParams, basis_state
from .steady import SolverError, SteadyStateSolution

__all__ = [
    "Transition",
    "NormalizationError",
    "CorrelationCurve",
    "Region",
    "reset_state",
    "g2",
    "classify_regions",
]

MIN_EMITTER_POPULATION = 1e-14
NEGATIVE_ROUNDOFF = -1e-10


class Transition(str, enum.Enum):
    PROBE = "probe"  # 2 -> 1
    PUMP = "pump"  # 3 -> 2

    @property
    def upper(self) -> int:
        return 2 if self is Transition.PROBE else 3

    @property
    def lower(self) -> int:
        return 1 if self is Transition.PROBE else 2


class NormalizationError(SolverError):
    """Steady-state population of the emitting level is (numerically) zero."""


@dataclass(frozen=True, eq=False)
class CorrelationCurve:
    transition: Transition
    taus: np.ndarray
    values: np.ndarray
    params: SystemParams | None = None


@dataclass(frozen=True)
class Region:
    start: float
    end: float
    label: str  # "classical" (G > 1) or "nonclassical" (G < 1)


def reset_state(transition) -> np.ndarray:
    """State of the atom right after emitting on ``transition``."""
    return basis_state(Transition(transition).lower)


def g2(L: Liouvillian, sol: SteadyStateSolution, transition, taus,
       method=Method.MATRIX_EXPONENTIAL) -> CorrelationCurve:
    transition = Transition(transition)
    j = transition.upper
    p_ss = float(sol.rho_ss[j - 1, j - 1].real)
    if p_ss <= MIN_EMITTER_POPULATION:
        raise NormalizationError(
            f"{transition.value} transition: steady-state population of level {j} "
            f"is {p_ss:.3e}, G(tau) is undefined"
        )
    taus = np.asarray(taus, dtype=float)
    if taus.ndim != 1 or taus.size == 0 or taus[0] < 0 or np.any(np.diff(taus) <= 0):
        raise ValueError("taus must be a non-empty, strictly increasing, non-negative sequence")

    # propagate() needs a grid starting at zero
    grid = taus if taus[0] == 0.0 else np.concatenate(([0.0], taus))
    result = propagate(L, reset_state(transition), grid, method=method)
    populations = result.population(j)
    if grid is not taus:
        populations = populations[1:]

    values = populations / p_ss
    if np.any(values < NEGATIVE_ROUNDOFF):
        worst = values.min()
        raise SolverError(f"negative correlation value {worst:.3e} beyond round-off")
    values = np.where(values < 0, 0.0, values)
    params = L.params if isinstance(L, Liouvillian) else None
    return CorrelationCurve(transition=transition, taus=taus, values=values, params=params)


def _crossing(t0, y0, t1, y1, level):
    if y1 == y0:
        return 0.5 * (t0 + t1)
    return t0 + (level - y0) * (t1 - t0) / (y1 - y0)


def classify_regions(curve: CorrelationCurve, tol: float = 1e-6) -> list[Region]:
    """Split the delay axis into classical (G > 1) and nonclassical (G < 1) intervals.

    Points with ``|G - 1| <= tol`` carry no label. Boundaries are located by
    linear interpolation between grid points; runs spanning less than two
    grid steps are absorbed into a neighbouring run.
    """
    taus = np.asarray(curve.taus, dtype=float)
    dev = np.asarray(curve.values, dtype=float) - 1.0
    if taus.size < 2:
        return []
    step = float(np.median(np.diff(taus)))
    signs = np.where(dev > tol, 1, np.where(dev < -tol, -1, 0))

    # runs as [sign, first_index, last_index]
    runs: list[list[int]] = []
    for k, s in enumerate(signs):
        if runs and runs[-1][0] == s:
            runs[-1][2] = k
        else:
            runs.append([int(s), k, k])

    def span(run):
        return taus[run[2]] - taus[run[1]]

    changed = True
    while changed and len(runs) > 1:
        changed = False
        for idx, run in enumerate(runs):
            if span(run) >= 2 * step - 1e-12 * step:
                continue
            prev = runs[idx - 1] if idx > 0 else None
            nxt = runs[idx + 1] if idx + 1 < len(runs) else None
            if prev is not None and nxt is not None and prev[0] == nxt[0]:
                prev[2] = nxt[2]
                del runs[idx:idx + 2]
            elif prev is not None and (nxt is None or span(prev) >= span(nxt)):
                prev[2] = run[2]
                del runs[idx]
            elif nxt is not None:
                nxt[1] = run[1]
                del runs[idx]
            else:
                continue
            changed = True
            break

    def boundary(left, right):
        a, b = left[2], right[1]
        if left[0] != 0 and right[0] != 0 and left[0] != right[0]:
            level = 0.0
        elif left[0] != 0:
            level = left[0] * tol
        else:
            level = right[0] * tol
        t = _crossing(taus[a], dev[a], taus[b], dev[b], level)
        return float(min(max(t, taus[a]), taus[b]))

    regions = []
    for idx, run in enumerate(runs):
        if run[0] == 0:
            continue
        start = float(taus[0]) if idx == 0 else boundary(runs[idx - 1], run)
        end = float(taus[-1]) if idx == len(runs) - 1 else boundary(run, runs[idx + 1])
        regions.append(Region(start, end, "classical" if run[0] > 0 else "nonclassical"))
    return regions
