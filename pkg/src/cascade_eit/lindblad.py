"""Master-equation generator for the incoherently pumped three-level cascade.

Levels are labelled 1 (ground), 2 (intermediate) and 3 (top). The probe
drives 1-2, the pump/control field drives 2-3. All quantities are
dimensionless, measured in units of ``gamma21``.

The density matrix is vectorized in the fixed order::

    (rho11, rho22, rho33, rho12, rho21, rho13, rho31, rho23, rho32)

so that the three populations come first.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

__all__ = [
    "ORDER",
    "INDEX",
    "ParameterError",
    "StateError",
    "SystemParams",
    "Liouvillian",
    "build_liouvillian",
    "apply_generator",
    "vectorize",
    "devectorize",
    "basis_state",
    "validate_density_matrix",
]

# (row, column) of the 3x3 matrix, zero-based, in vectorization order
ORDER: tuple[tuple[int, int], ...] = (
    (0, 0), (1, 1), (2, 2),
    (0, 1), (1, 0),
    (0, 2), (2, 0),
    (1, 2), (2, 1),
)
INDEX: dict[tuple[int, int], int] = {ij: k for k, ij in enumerate(ORDER)}

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-9


class ParameterError(ValueError):
    """Raised when a parameter set violates its invariants."""


class StateError(ValueError):
    """Raised when a matrix is not a valid density matrix."""


@dataclass(frozen=True)
class SystemParams:
    """Rates, Rabi frequencies and detunings, all in units of gamma21.

    Rates are stored un-doubled: the population equations use ``2*gamma21``,
    ``2*gamma32``, ``2*lambda12`` and ``2*lambda13``.
    """

    gamma21: float = 1.0
    gamma32: float = 0.0
    lambda12: float = 0.0
    lambda13: float = 0.0
    omega_p: float = 0.0
    omega_c: float = 0.0
    delta_p: float = 0.0
    delta_c: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
                raise ParameterError(f"{f.name} must be a real number, got {value!r}")
            if not math.isfinite(value):
                raise ParameterError(f"{f.name} must be finite, got {value!r}")
            object.__setattr__(self, f.name, float(value))
        if self.gamma21 <= 0:
            raise ParameterError(f"gamma21 must be > 0, got {self.gamma21}")
        for name in ("gamma32", "lambda12", "lambda13"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)}")

    def replace(self, **changes) -> SystemParams:
        return SystemParams(**{**asdict(self), **changes})

    def as_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """9x9 generator acting on the vectorized density matrix."""

    matrix: np.ndarray
    params: SystemParams | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (9, 9):
            raise ValueError(f"Liouvillian must be 9x9, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __matmul__(self, other):
        return self.matrix @ other


def _equations(p: SystemParams) -> dict[tuple[int, int], dict[tuple[int, int], complex]]:
    """Right-hand sides for rho11, rho22, rho33, rho12, rho23, rho13.

    Each entry maps a density-matrix element to its coefficient; the
    remaining three rows follow by complex conjugation.
    """
    g21, g32 = p.gamma21, p.gamma32
    l12, l13 = p.lambda12, p.lambda13
    wp, wc = p.omega_p, p.omega_c
    dp, dc = p.delta_p, p.delta_c
    pump = l12 + l13
    return {
        (0, 0): {
            (0, 0): -2 * pump,
            (1, 1): 2 * g21,
            (1, 0): 1j * wp,
            (0, 1): -1j * wp,
        },
        (1, 1): {
            (0, 0): 2 * l12,
            (2, 2): 2 * g32,
            (1, 1): -2 * g21,
            (1, 0): -1j * wp,
            (0, 1): 1j * wp,
            (1, 2): -1j * wc,
            (2, 1): 1j * wc,
        },
        (2, 2): {
            (0, 0): 2 * l13,
            (2, 2): -2 * g32,
            (1, 2): 1j * wc,
            (2, 1): -1j * wc,
        },
        (0, 1): {
            (0, 1): -(g21 + pump + 1j * dp),
            (1, 1): 1j * wp,
            (0, 0): -1j * wp,
            (0, 2): -1j * wc,
        },
        # the pump-field population term is rho33 (the printed "rho32" is
        # inconsistent with the rho22/rho33 lines and with Hermiticity)
        (1, 2): {
            (1, 2): -(g21 + g32 + 1j * dc),
            (2, 2): 1j * wc,
            (1, 1): -1j * wc,
            (0, 2): 1j * wp,
        },
        (0, 2): {
            (0, 2): -(g32 + pump + 1j * (dp + dc)),
            (1, 2): 1j * wp,
            (0, 1): -1j * wc,
        },
    }


def build_liouvillian(params: SystemParams) -> Liouvillian:
    if not isinstance(params, SystemParams):
        raise ParameterError(f"expected SystemParams, got {type(params).__name__}")
    L = np.zeros((9, 9), dtype=complex)
    for (i, j), terms in _equations(params).items():
        row = INDEX[(i, j)]
        for elem, coeff in terms.items():
            L[row, INDEX[elem]] += coeff
        if i != j:
            # d(rho_ji)/dt = conj(d(rho_ij)/dt)
            conj_row = INDEX[(j, i)]
            for (a, b), coeff in terms.items():
                L[conj_row, INDEX[(b, a)]] += np.conj(coeff)
    return Liouvillian(L, params)


def vectorize(rho) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (3, 3):
        raise StateError(f"density matrix must be 3x3, got shape {rho.shape}")
    return np.array([rho[i, j] for i, j in ORDER])


def devectorize(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    if vec.shape != (9,):
        raise StateError(f"vectorized state must have length 9, got shape {vec.shape}")
    rho = np.empty((3, 3), dtype=complex)
    for k, (i, j) in enumerate(ORDER):
        rho[i, j] = vec[k]
    return rho


def basis_state(level: int) -> np.ndarray:
    """Projector |level><level| for level in {1, 2, 3}."""
    if level not in (1, 2, 3):
        raise ValueError(f"level must be 1, 2 or 3, got {level!r}")
    rho = np.zeros((3, 3), dtype=complex)
    rho[level - 1, level - 1] = 1.0
    return rho


def validate_density_matrix(rho, *, hermitian_tol=HERMITIAN_TOL, trace_tol=TRACE_TOL,
                            psd_tol=PSD_TOL) -> np.ndarray:
    """Check Hermiticity, unit trace and positivity; return the array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (3, 3):
        raise StateError(f"density matrix must be 3x3, got shape {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise StateError("density matrix has non-finite entries")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > hermitian_tol:
        raise StateError(f"density matrix is not Hermitian (deviation {herm:.3e})")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > trace_tol:
        raise StateError(f"density matrix trace is {tr!r}, expected 1")
    lowest = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lowest < -psd_tol:
        raise StateError(f"density matrix is not positive semidefinite (eigenvalue {lowest:.3e})")
    return rho


def apply_generator(L: Liouvillian, rho) -> np.ndarray:
    """Return d(rho)/dt as a 3x3 matrix."""
    rho = np.asarray(rho, dtype=complex)
    herm = np.max(np.abs(rho - rho.conj().T)) if rho.shape == (3, 3) else np.inf
    if herm > HERMITIAN_TOL:
        raise StateError("apply_generator requires a Hermitian 3x3 matrix")
    matrix = L.matrix if isinstance(L, Liouvillian) else np.asarray(L)
    return devectorize(matrix @ vectorize(rho))
