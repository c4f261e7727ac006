import numpy as np
import pytest
from hypothesis import strategies as st

from cascade_eit import SystemParams

LEGEND = (0.0, 0.001, 0.01, 0.1, 0.5, 1.0)

# EIT figures: unequal decays (gamma32 = 0.16) or equal decays (gamma32 = 1)
UNEQUAL = SystemParams(gamma21=1.0, gamma32=0.16, omega_p=0.01, omega_c=0.5)
EQUAL = SystemParams(gamma21=1.0, gamma32=1.0, omega_p=0.01, omega_c=0.5)
PURE_DECAY = SystemParams(gamma21=1.0)


def figure_sets():
    """Every (gamma32, omega_c, lambda12) combination behind the spectrum and G22 figures."""
    out = []
    for base in (UNEQUAL, EQUAL):
        for wc in (0.5, 1.0):
            for l12 in LEGEND:
                out.append(base.replace(omega_c=wc, lambda12=l12))
    return out


def superoperator(p: SystemParams) -> np.ndarray:
    """Row-major vectorized Lindblad generator built from H and jump operators.

    Independent of the package: written from the rotating-frame Hamiltonian
    and the four incoherent channels, then permuted to the package ordering.
    """
    H = np.zeros((3, 3), dtype=complex)
    H[0, 1] = H[1, 0] = -p.omega_p
    H[1, 2] = H[2, 1] = -p.omega_c
    H[1, 1] = -p.delta_p
    H[2, 2] = -p.delta_p - p.delta_c

    def op(i, j):
        m = np.zeros((3, 3))
        m[i, j] = 1.0
        return m

    jumps = [
        np.sqrt(2 * p.gamma21) * op(0, 1),
        np.sqrt(2 * p.gamma32) * op(1, 2),
        np.sqrt(2 * p.lambda12) * op(1, 0),
        np.sqrt(2 * p.lambda13) * op(2, 0),
    ]
    eye = np.eye(3)
    L = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for c in jumps:
        cc = c.conj().T @ c
        L += np.kron(c, c.conj()) - 0.5 * (np.kron(cc, eye) + np.kron(eye, cc.T))
    # row-major flat index of (rho11, rho22, rho33, rho12, rho21, rho13, rho31, rho23, rho32)
    perm = [0, 4, 8, 1, 3, 2, 6, 5, 7]
    return L[np.ix_(perm, perm)]


def random_density_matrix(rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_params(rng: np.random.Generator) -> SystemParams:
    return SystemParams(
        gamma21=rng.uniform(0.1, 3.0),
        gamma32=rng.uniform(0.0, 3.0),
        lambda12=rng.uniform(0.0, 2.0),
        lambda13=rng.uniform(0.0, 2.0),
        omega_p=rng.uniform(-2.0, 2.0),
        omega_c=rng.uniform(-2.0, 2.0),
        delta_p=rng.uniform(-4.0, 4.0),
        delta_c=rng.uniform(-4.0, 4.0),
    )


_rate = st.floats(0.0, 3.0, allow_nan=False)
_field = st.floats(-3.0, 3.0, allow_nan=False)

params_strategy = st.builds(
    SystemParams,
    gamma21=st.floats(0.05, 3.0),
    gamma32=_rate,
    lambda12=_rate,
    lambda13=_rate,
    omega_p=_field,
    omega_c=_field,
    delta_p=st.floats(-5.0, 5.0),
    delta_c=st.floats(-5.0, 5.0),
)

# all four rates strictly positive: unique steady state guaranteed
connected_params_strategy = st.builds(
    SystemParams,
    gamma21=st.floats(0.1, 3.0),
    gamma32=st.floats(0.05, 3.0),
    lambda12=st.floats(0.01, 2.0),
    lambda13=st.floats(0.01, 2.0),
    omega_p=_field,
    omega_c=_field,
    delta_p=st.floats(-5.0, 5.0),
    delta_c=st.floats(-5.0, 5.0),
)


@st.composite
def density_matrices(draw):
    parts = draw(st.lists(st.floats(-1.0, 1.0), min_size=18, max_size=18))
    a = np.array(parts[:9]).reshape(3, 3) + 1j * np.array(parts[9:]).reshape(3, 3)
    rho = a @ a.conj().T + 1e-3 * np.eye(3)
    return rho / np.trace(rho).real


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def equation_rhs(p: SystemParams, r: np.ndarray) -> np.ndarray:
    """The six equations of motion written out term by term, plus conjugates."""
    r11, r22, r33 = r[0, 0], r[1, 1], r[2, 2]
    r12, r21, r13, r23, r32 = r[0, 1], r[1, 0], r[0, 2], r[1, 2], r[2, 1]
    g21, g32, l12, l13 = p.gamma21, p.gamma32, p.lambda12, p.lambda13
    wp, wc, dp, dc = p.omega_p, p.omega_c, p.delta_p, p.delta_c
    d = np.zeros((3, 3), dtype=complex)
    d[0, 0] = -2 * (l12 + l13) * r11 + 2 * g21 * r22 + 1j * wp * (r21 - r12)
    d[1, 1] = (2 * l12 * r11 + 2 * g32 * r33 - 2 * g21 * r22
               - 1j * wp * (r21 - r12) - 1j * wc * (r23 - r32))
    d[2, 2] = 2 * l13 * r11 - 2 * g32 * r33 + 1j * wc * (r23 - r32)
    d[0, 1] = -(g21 + l12 + l13 + 1j * dp) * r12 + 1j * wp * (r22 - r11) - 1j * wc * r13
    d[1, 2] = -(g21 + g32 + 1j * dc) * r23 + 1j * wc * (r33 - r22) + 1j * wp * r13
    d[0, 2] = -(g32 + (l12 + l13) + 1j * (dp + dc)) * r13 + 1j * wp * r23 - 1j * wc * r12
    for i, j in ((0, 1), (1, 2), (0, 2)):
        d[j, i] = np.conj(d[i, j])
    return d
