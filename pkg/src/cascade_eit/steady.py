"""Steady state of the cascade master equation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lindblad import Liouvillian, devectorize, validate_density_matrix

__all__ = [
    "SolverError",
    "DegenerateSteadyStateError",
    "SteadyStateSolution",
    "solve_steady_state",
    "population_difference",
]

COND_LIMIT = 1e12
RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Numerical failure in one of the solvers."""


class DegenerateSteadyStateError(SolverError):
    """The trace-constrained system has no unique solution."""

    def __init__(self, message, rank_deficiency):
        super().__init__(message)
        self.rank_deficiency = rank_deficiency


@dataclass(frozen=True, eq=False)
class SteadyStateSolution:
    rho_ss: np.ndarray
    residual_norm: float

    @property
    def populations(self) -> np.ndarray:
        return np.diag(self.rho_ss).real.copy()

    def element(self, i: int, j: int) -> complex:
        """rho_ij with one-based level labels."""
        return complex(self.rho_ss[i - 1, j - 1])


def solve_steady_state(L: Liouvillian) -> SteadyStateSolution:
    """Solve L vec(rho) = 0 with Tr(rho) = 1.

    The rho11 row is replaced by the trace condition and the resulting
    square system is solved directly. A condition number above 1e12 is
    treated as a non-unique steady state.
    """
    matrix = L.matrix if isinstance(L, Liouvillian) else np.asarray(L, dtype=complex)
    A = matrix.copy()
    A[0, :] = 0.0
    A[0, :3] = 1.0
    b = np.zeros(9, dtype=complex)
    b[0] = 1.0

    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        deficiency = 9 - np.linalg.matrix_rank(A, tol=np.linalg.norm(A, 2) / COND_LIMIT)
        raise DegenerateSteadyStateError(
            f"steady state is not unique (condition number {cond:.3e}, "
            f"rank deficiency {deficiency})",
            rank_deficiency=int(deficiency),
        )
    vec = np.linalg.solve(A, b)
    residual = float(np.max(np.abs(matrix @ vec)))
    if residual > RESIDUAL_TOL:
        raise SolverError(f"steady-state residual {residual:.3e} exceeds {RESIDUAL_TOL}")

    rho = devectorize(vec)
    rho = 0.5 * (rho + rho.conj().T)
    validate_density_matrix(rho)
    return SteadyStateSolution(rho_ss=rho, residual_norm=residual)


def population_difference(sol: SteadyStateSolution) -> float:
    """rho22 - rho11 in steady state."""
    return float(sol.rho_ss[1, 1].real - sol.rho_ss[0, 0].real)
