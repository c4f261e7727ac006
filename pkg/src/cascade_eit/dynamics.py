"""Time propagation of the density matrix.

Two independent routes are provided so they can check each other:

* ``"matrix-exponential"``: exp(L t) by scaling and squaring with a
  diagonal Pade approximant (Higham 2005 degree selection).
* ``"adaptive-ode"``: an embedded Runge-Kutta pair (DOP853) from scipy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .lindblad import ORDER, Liouvillian, validate_density_matrix, vectorize
from .steady import SolverError

__all__ = [
    "Method",
    "PropagationResult",
    "ScalingError",
    "StiffnessError",
    "PropagationError",
    "expm",
    "matrix_exponential",
    "propagate",
]

ODE_RTOL = 1e-9
ODE_ATOL = 1e-12
DRIFT_TOL = 1e-8
TRAJECTORY_PSD_TOL = 1e-7
MAX_SQUARINGS = 64


class Method(str, enum.Enum):
    MATRIX_EXPONENTIAL = "matrix-exponential"
    ADAPTIVE_ODE = "adaptive-ode"


class ScalingError(SolverError):
    """exp(L t) cannot be formed without overflow."""


class StiffnessError(SolverError):
    """The adaptive integrator could not advance."""


class PropagationError(SolverError):
    """A propagated state drifted outside the physical set."""


# Pade numerator coefficients b_0..b_13 for degree 13; lower degrees below.
_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0, 960960.0,
         16380.0, 182.0, 1.0),
}
# 1-norm bounds for backward error below unit roundoff
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def _pade_uv(A, m):
    b = _PADE[m]
    ident = np.eye(A.shape[0], dtype=A.dtype)
    A2 = A @ A
    if m == 13:
        A4 = A2 @ A2
        A6 = A2 @ A4
        U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
                 + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
        V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
             + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
        return U, V
    powers = [ident, A2]
    while len(powers) < (m + 1) // 2:
        powers.append(powers[-1] @ A2)
    U = A @ sum(b[2 * k + 1] * P for k, P in enumerate(powers))
    V = sum(b[2 * k] * P for k, P in enumerate(powers))
    return U, V


def expm(A) -> np.ndarray:
    """Matrix exponential by scaling and squaring."""
    A = np.asarray(A)
    A = A.astype(np.result_type(A.dtype, np.float64))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expm needs a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ScalingError("matrix has non-finite entries")
    norm = np.linalg.norm(A, 1)

    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            U, V = _pade_uv(A, m)
            return np.linalg.solve(V - U, V + U)

    s = max(0, math.ceil(math.log2(norm / _THETA[13]))) if norm > 0 else 0
    if s > MAX_SQUARINGS:
        raise ScalingError(f"norm {norm:.3e} needs {s} squarings, limit is {MAX_SQUARINGS}")
    U, V = _pade_uv(A / 2.0**s, 13)
    X = np.linalg.solve(V - U, V + U)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(s):
            X = X @ X
    if not np.all(np.isfinite(X)):
        raise ScalingError(f"overflow while squaring (norm {norm:.3e}, {s} squarings)")
    return X


def _matrix(L) -> np.ndarray:
    return L.matrix if isinstance(L, Liouvillian) else np.asarray(L, dtype=complex)


def matrix_exponential(L: Liouvillian, t: float) -> np.ndarray:
    """Propagator exp(L t) acting on vectorized states."""
    if not t >= 0:
        raise ValueError(f"propagation time must be >= 0, got {t!r}")
    return expm(_matrix(L) * t)


@dataclass(frozen=True, eq=False)
class PropagationResult:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), 3, 3)
    method: Method

    def population(self, level: int) -> np.ndarray:
        return self.states[:, level - 1, level - 1].real

    def element(self, i: int, j: int) -> np.ndarray:
        return self.states[:, i - 1, j - 1]


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-D sequence")
    if times[0] != 0.0:
        raise ValueError("times must start at 0")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return times


# position of conj(rho_ij) for every vectorized element rho_ij
_CONJ = np.array([0, 1, 2, 4, 3, 6, 5, 8, 7])


def _hermitize(vec, t, method):
    """Average a vectorized state with its conjugate transpose, rejecting large drift."""
    partner = vec[_CONJ].conj()
    drift = np.max(np.abs(vec - partner))
    if drift > DRIFT_TOL:
        raise PropagationError(f"{method.value}: Hermiticity drift {drift:.3e} at tau={t}")
    return 0.5 * (vec + partner)


def _check_physical(states, times, method):
    """Trace and positivity of every (already Hermitian) state."""
    traces = np.trace(states, axis1=1, axis2=2).real
    bad = np.flatnonzero(np.abs(traces - 1.0) > DRIFT_TOL)
    if bad.size:
        k = bad[0]
        raise PropagationError(f"{method.value}: trace {traces[k]!r} at tau={times[k]}")
    lowest = np.linalg.eigvalsh(states)[:, 0]
    bad = np.flatnonzero(lowest < -TRAJECTORY_PSD_TOL)
    if bad.size:
        k = bad[0]
        raise PropagationError(
            f"{method.value}: negative eigenvalue {lowest[k]:.3e} at tau={times[k]}")


def _by_expm(matrix, rho0, times):
    method = Method.MATRIX_EXPONENTIAL
    cache: dict[float, np.ndarray] = {}
    vecs = np.empty((times.size, 9), dtype=complex)
    vecs[0] = vec = vectorize(rho0)
    for k in range(1, times.size):
        dt = times[k] - times[k - 1]
        # keyed on the rounded step so uniform grids reuse one propagator
        key = round(dt, 12)
        U = cache.get(key)
        if U is None:
            U = cache[key] = expm(matrix * dt)
        vecs[k] = vec = _hermitize(U @ vec, times[k], method)
    return vecs


def _by_ode(matrix, rho0, times, params):
    method = Method.ADAPTIVE_ODE
    sol = solve_ivp(
        lambda t, y: matrix @ y,
        (0.0, float(times[-1])),
        vectorize(rho0),
        method="DOP853",
        t_eval=times,
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
    )
    if sol.status != 0:
        raise StiffnessError(f"adaptive integration failed for {params}: {sol.message}")
    vecs = sol.y.T.copy()
    vecs[0] = vectorize(rho0)
    for k in range(1, times.size):
        vecs[k] = _hermitize(vecs[k], times[k], method)
    return vecs


def propagate(L: Liouvillian, rho0, times, method=Method.MATRIX_EXPONENTIAL) -> PropagationResult:
    """Evolve ``rho0`` under ``L`` and return the states at ``times``."""
    method = Method(method)
    times = _check_times(times)
    rho0 = validate_density_matrix(rho0).copy()
    matrix = _matrix(L)
    params = L.params if isinstance(L, Liouvillian) else None
    if method is Method.MATRIX_EXPONENTIAL:
        vecs = _by_expm(matrix, rho0, times)
    else:
        vecs = _by_ode(matrix, rho0, times, params)
    states = np.empty((times.size, 3, 3), dtype=complex)
    for k, (i, j) in enumerate(ORDER):
        states[:, i, j] = vecs[:, k]
    states[0] = rho0
    _check_physical(states[1:], times[1:], method)
    return PropagationResult(times=times, states=states, method=method)
