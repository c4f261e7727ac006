"""Quantum-jump (Monte Carlo wave-function) oracle for the cascade atom.

This module deliberately shares no code with the master-equation path: it
builds its own non-Hermitian effective Hamiltonian and jump channels from
``SystemParams`` and estimates populations and G(tau) by averaging
stochastic pure-state trajectories.

Every jump operator maps onto a single bare level, so after any jump the
wave function is |1>, |2> or |3>. The no-jump evolution from each of these
three states is therefore tabulated once on a fixed grid of step ``dt``
(norm and normalized populations), and trajectories are advanced from jump
to jump: draw r, find where the tabulated squared norm first drops to r,
locate the crossing by linear interpolation of the norm between grid
points, choose a channel in proportion to rate * |psi_source|^2, and reset.

Trajectory ``k`` draws its random numbers from its own stream, seeded by
``SeedSequence(seed, spawn_key=(stream, k))``, so its history does not
depend on how many other trajectories run beside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .lindblad import SystemParams

__all__ = [
    "JumpChannel",
    "TrajectoryEstimate",
    "TrajectoryError",
    "PopulationEstimates",
    "EquilibriumEstimate",
    "jump_channels",
    "effective_hamiltonian",
    "run_trajectories",
    "steady_populations",
    "g2_from_trajectories",
]

DT = 1e-3
MIN_TRAJECTORIES = 100
T_BURN = 40.0
T_WINDOW = 40.0
# largest allowed fractional norm loss per grid step before dt is halved
MAX_STEP_DROP = 0.05
MAX_REFINEMENTS = 8
ROULETTE_WEIGHT = 1e-9
WINDOW_POINTS = 21
NUMERICAL_FLOOR = 1e-12
_BUFFER = 64

# stream identifiers inside one seed
_STREAM_RUN = 0
_STREAM_RESET = 1
_STREAM_EQUILIBRIUM = 2
_STREAM_STATIONARY = 3


class TrajectoryError(RuntimeError):
    pass


@dataclass(frozen=True)
class JumpChannel:
    """Incoherent transfer ``source -> target`` at the full rate ``rate``."""

    source: int
    target: int
    rate: float

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("jump channel must connect two different levels")
        if self.rate < 0:
            raise ValueError(f"jump rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class TrajectoryEstimate:
    mean: float
    std_error: float
    n_trajectories: int
    quantity: str

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError(f"std_error must be >= 0, got {self.std_error}")
        if self.n_trajectories < 1:
            raise ValueError("an estimate needs at least one trajectory")

    def agrees_with(self, value: float, n_sigma: float = 3.0, atol: float = NUMERICAL_FLOOR) -> bool:
        """``|mean - value| <= n_sigma * std_error + atol``.

        ``atol`` covers the deterministic round-off of the tabulated no-jump
        evolution, which matters only when the statistical error vanishes
        (e.g. forced estimates of a pure decay).
        """
        return abs(self.mean - value) <= n_sigma * self.std_error + atol


def jump_channels(params: SystemParams) -> list[JumpChannel]:
    return [
        JumpChannel(2, 1, 2 * params.gamma21),
        JumpChannel(3, 2, 2 * params.gamma32),
        JumpChannel(1, 2, 2 * params.lambda12),
        JumpChannel(1, 3, 2 * params.lambda13),
    ]


def effective_hamiltonian(params: SystemParams) -> np.ndarray:
    """H - (i/2) sum_c C_c^dagger C_c in the frame rotating with both lasers."""
    H = np.zeros((3, 3), dtype=complex)
    H[0, 1] = H[1, 0] = -params.omega_p
    H[1, 2] = H[2, 1] = -params.omega_c
    H[1, 1] = -params.delta_p
    H[2, 2] = -(params.delta_p + params.delta_c)
    for ch in jump_channels(params):
        H[ch.source - 1, ch.source - 1] -= 0.5j * ch.rate
    return H


class _Streams:
    """Per-trajectory uniform random numbers, buffered for vectorized draws."""

    def __init__(self, seed: int, stream: int, n: int):
        self._gens = [
            np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, k)))
            for k in range(n)
        ]
        self._buf = np.array([g.random(_BUFFER) for g in self._gens])
        self._ptr = np.zeros(n, dtype=np.intp)

    def draw(self, idx: np.ndarray) -> np.ndarray:
        for k in idx[self._ptr[idx] >= _BUFFER]:
            self._buf[k] = self._gens[k].random(_BUFFER)
            self._ptr[k] = 0
        out = self._buf[idx, self._ptr[idx]]
        self._ptr[idx] += 1
        return out


class _NoJumpTables:
    """No-jump evolution from each bare level on a grid of step ``dt``.

    ``log_norm[k, i]`` is log ||psi||^2 after i steps starting from level
    k + 1, ``pops[k, i]`` the normalized populations and ``cum[k, i]`` their
    running time integral.
    """

    def __init__(self, params: SystemParams, horizon: float, dt: float):
        heff = effective_hamiltonian(params)
        for _ in range(MAX_REFINEMENTS + 1):
            if self._tabulate(heff, horizon, dt):
                break
            dt /= 2
        else:
            raise TrajectoryError(
                f"no-jump norm still drops by more than {MAX_STEP_DROP:.0%} per step "
                f"at dt={dt:.3e} for {params}"
            )
        self.dt = dt

    def _tabulate(self, heff, horizon, dt) -> bool:
        steps = max(1, math.ceil(horizon / dt - 1e-9)) + 1
        U = scipy.linalg.expm(-1j * heff * dt)
        log_norm = np.zeros((3, steps))
        pops = np.zeros((3, steps, 3))
        psi = np.eye(3, dtype=complex)  # column k: state started in level k + 1
        pops[:, 0] = np.eye(3)
        for i in range(1, steps):
            psi = U @ psi
            norm2 = np.sum(np.abs(psi) ** 2, axis=0)
            if not np.all(np.isfinite(norm2)) or np.any(norm2 <= 0):
                return False
            psi = psi / np.sqrt(norm2)
            log_norm[:, i] = log_norm[:, i - 1] + np.log(norm2)
            pops[:, i] = (np.abs(psi) ** 2).T
        if np.max(-np.diff(log_norm, axis=1)) > -math.log1p(-MAX_STEP_DROP):
            return False
        # norm is non-increasing; clean up round-off so searchsorted is valid
        self.log_norm = np.minimum.accumulate(log_norm, axis=1)
        self.pops = pops
        self.cum = np.concatenate(
            [np.zeros((3, 1, 3)), np.cumsum(0.5 * dt * (pops[:, 1:] + pops[:, :-1]), axis=1)],
            axis=1,
        )
        return True

    def _locate(self, s):
        x = np.asarray(s) / self.dt
        i = np.clip(np.floor(x).astype(np.intp), 0, self.pops.shape[1] - 2)
        return i, (x - i)[..., None]

    def populations(self, level: np.ndarray, s: np.ndarray) -> np.ndarray:
        i, w = self._locate(s)
        return (1 - w) * self.pops[level, i] + w * self.pops[level, i + 1]

    def norm(self, level: np.ndarray, s: np.ndarray) -> np.ndarray:
        i, w = self._locate(s)
        w = w[..., 0]
        return (1 - w) * np.exp(self.log_norm[level, i]) + w * np.exp(self.log_norm[level, i + 1])

    def integral(self, level: np.ndarray, s: np.ndarray) -> np.ndarray:
        i, w = self._locate(s)
        return (1 - w) * self.cum[level, i] + w * self.cum[level, i + 1]

    def jump_delay(self, level: np.ndarray, log_r: np.ndarray) -> np.ndarray:
        """Time after a reset into ``level`` at which ||psi||^2 falls to r (inf if never)."""
        out = np.full(level.shape, np.inf)
        for k in range(3):
            sel = np.flatnonzero(level == k)
            if sel.size == 0:
                continue
            table = self.log_norm[k]
            i = np.searchsorted(-table, -log_r[sel], side="left")
            hit = i < table.size
            i, sel, lr = i[hit], sel[hit], log_r[sel][hit]
            i = np.maximum(i, 1)
            # linear interpolation of the squared norm between grid points
            lo = table[i - 1]
            ratio_hi = np.exp(table[i] - lo)
            ratio_r = np.exp(lr - lo)
            frac = np.clip((1 - ratio_r) / np.where(ratio_hi < 1, 1 - ratio_hi, 1.0), 0.0, 1.0)
            out[sel] = (i - 1 + frac) * self.dt
        return out


@dataclass
class _Outcome:
    samples: np.ndarray | None  # (n, T, 3) populations at the sample times
    window_average: np.ndarray | None  # (n, 3)
    jump_counts: np.ndarray  # (n, n_channels) jumps inside the window
    channels: list[JumpChannel]
    window: tuple[float, float] | None


def _simulate(params: SystemParams, levels: np.ndarray, streams: _Streams, t_end: float,
              dt: float, sample_times=None, window=None) -> _Outcome:
    n = levels.size
    tables = _NoJumpTables(params, t_end, dt)
    channels, rates, sources, targets = _channel_arrays(params)

    if sample_times is not None:
        sample_times = np.asarray(sample_times, dtype=float)
        samples = np.full((n, sample_times.size, 3), np.nan)
    else:
        samples = None
    acc = np.zeros((n, 3)) if window is not None else None
    counts = np.zeros((n, len(channels)), dtype=np.int64)

    level = levels.astype(np.intp).copy()
    t0 = np.zeros(n)
    with np.errstate(divide="ignore"):
        log_r = np.log(streams.draw(np.arange(n)))
    active = np.arange(n)

    while active.size:
        lv = level[active]
        start = t0[active]
        t1 = start + tables.jump_delay(lv, log_r[active])
        jumps = t1 < t_end
        end = np.where(jumps, t1, t_end)

        if samples is not None:
            a = np.searchsorted(sample_times, start, side="left")
            b = np.where(jumps, np.searchsorted(sample_times, end, side="left"),
                         np.searchsorted(sample_times, end, side="right"))
            m = b - a
            if m.sum():
                rows = np.repeat(np.arange(active.size), m)
                offsets = np.arange(m.sum()) - np.repeat(np.cumsum(m) - m, m)
                cols = a[rows] + offsets
                s = sample_times[cols] - start[rows]
                samples[active[rows], cols] = tables.populations(lv[rows], s)

        if acc is not None:
            w0, w1 = window
            lo = np.clip(start, w0, w1)
            hi = np.clip(end, w0, w1)
            part = hi > lo
            if part.any():
                rows = np.flatnonzero(part)
                acc[active[rows]] += (tables.integral(lv[rows], hi[rows] - start[rows])
                                      - tables.integral(lv[rows], lo[rows] - start[rows]))

        idx = np.flatnonzero(jumps)
        if idx.size == 0:
            break
        who = active[idx]
        before = tables.populations(lv[idx], t1[idx] - start[idx])
        choice = _choose_channel(before, rates, sources, streams.draw(who))
        if window is not None:
            inside = (t1[idx] >= window[0]) & (t1[idx] < window[1])
            np.add.at(counts, (who[inside], choice[inside]), 1)
        level[who] = targets[choice]
        t0[who] = t1[idx]
        with np.errstate(divide="ignore"):
            log_r[who] = np.log(streams.draw(who))
        active = who

    window_average = None
    if acc is not None:
        window_average = acc / (window[1] - window[0])
    return _Outcome(samples, window_average, counts, channels, window)


def _channel_arrays(params):
    channels = [ch for ch in jump_channels(params) if ch.rate > 0]
    rates = np.array([ch.rate for ch in channels])
    sources = np.array([ch.source - 1 for ch in channels], dtype=np.intp)
    targets = np.array([ch.target - 1 for ch in channels], dtype=np.intp)
    return channels, rates, sources, targets


def _choose_channel(before, rates, sources, u):
    weights = rates[None, :] * before[:, sources]
    total = weights.sum(axis=1)
    if np.any(total <= 0):
        raise TrajectoryError("jump triggered with no populated decay channel")
    cum = np.cumsum(weights, axis=1) / total[:, None]
    return np.minimum((u[:, None] >= cum).sum(axis=1), len(rates) - 1)


def _choose_channel_defensive(before, rates, sources, u):
    """Sample a channel from q = (p + uniform over open channels) / 2.

    Returns the channel index and the likelihood ratio p/q (at most 2), so
    rare channels are visited often without biasing the estimate.
    """
    weights = rates[None, :] * before[:, sources]
    total = weights.sum(axis=1)
    if np.any(total <= 0):
        raise TrajectoryError("jump triggered with no populated decay channel")
    p = weights / total[:, None]
    open_ = p > 0
    q = 0.5 * p + 0.5 * open_ / open_.sum(axis=1, keepdims=True)
    cum = np.cumsum(q, axis=1)
    choice = np.minimum((u[:, None] >= cum).sum(axis=1), len(rates) - 1)
    rows = np.arange(choice.size)
    return choice, p[rows, choice] / q[rows, choice]


def _forced_populations(params: SystemParams, levels: np.ndarray, streams: _Streams,
                        times: np.ndarray, dt: float) -> np.ndarray:
    """Per-trajectory population estimates at each time, shape (n, T, 3).

    Stratified on whether a jump happens before the target time T: the
    no-jump branch is added with its exact weight ||psi(T)||^2 and a jump is
    then forced by drawing the norm threshold uniformly in (||psi(T)||^2, 1],
    carrying the weight 1 - ||psi(T)||^2. The channel of the first jump is
    drawn from a defensive mixture and reweighted; later jumps use the
    natural channel probabilities so likelihood ratios never compound. Russian roulette ends walkers whose
    weight falls below ROULETTE_WEIGHT. The estimate is unbiased for the
    same unraveling and resolves rare excursions a plain ensemble misses.
    """
    n = levels.size
    tables = _NoJumpTables(params, max(float(times[-1]), dt), dt)
    _, rates, sources, targets = _channel_arrays(params)
    out = np.zeros((n, times.size, 3))
    for j, T in enumerate(times):
        weight = np.ones(n)
        level = levels.astype(np.intp).copy()
        t0 = np.zeros(n)
        active = np.arange(n)
        first = True
        while active.size:
            lv = level[active]
            rem = T - t0[active]
            survive = tables.norm(lv, rem)
            out[active, j] += (weight[active] * survive)[:, None] * tables.populations(lv, rem)
            w_jump = weight[active] * (1.0 - survive)

            small = w_jump < ROULETTE_WEIGHT
            keep = ~small
            if small.any():
                u = streams.draw(active[small])
                lucky = u * ROULETTE_WEIGHT < w_jump[small]
                keep[np.flatnonzero(small)[lucky]] = True
                w_jump[small] = np.where(lucky, ROULETTE_WEIGHT, 0.0)
            active, lv, rem = active[keep], lv[keep], rem[keep]
            survive, w_jump = survive[keep], w_jump[keep]
            if active.size == 0:
                break

            r = survive + streams.draw(active) * (1.0 - survive)
            with np.errstate(divide="ignore"):
                delay = tables.jump_delay(lv, np.log(r))
            delay = np.minimum(delay, rem)
            before = tables.populations(lv, delay)
            u = streams.draw(active)
            if first:
                choice, ratio = _choose_channel_defensive(before, rates, sources, u)
                w_jump = w_jump * ratio
                first = False
            else:
                choice = _choose_channel(before, rates, sources, u)
            level[active] = targets[choice]
            t0[active] += delay
            weight[active] = w_jump
    return out


def _initial_levels(rho0, n: int, streams: _Streams) -> np.ndarray:
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (3, 3):
        raise ValueError("rho0 must be a 3x3 matrix")
    if np.max(np.abs(rho0 - np.diag(np.diag(rho0)))) > 1e-12:
        raise ValueError("the trajectory oracle only accepts diagonal initial states")
    p = np.diag(rho0).real
    if np.any(p < -1e-12) or abs(p.sum() - 1) > 1e-10:
        raise ValueError("rho0 diagonal must be a probability distribution")
    cum = np.cumsum(np.clip(p, 0, None))
    u = streams.draw(np.arange(n)) * cum[-1]
    return np.minimum(np.searchsorted(cum, u, side="right"), 2)


def _check_n(n: int):
    if n < MIN_TRAJECTORIES:
        raise ValueError(f"need at least {MIN_TRAJECTORIES} trajectories, got {n}")


def _check_times(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValueError("sample times must be a sorted, non-negative sequence")
    return times


def _std_error(samples: np.ndarray) -> np.ndarray:
    return np.std(samples, axis=0, ddof=1) / np.sqrt(samples.shape[0])


@dataclass(frozen=True, eq=False)
class PopulationEstimates:
    times: np.ndarray
    mean: np.ndarray  # (len(times), 3)
    std_error: np.ndarray
    n_trajectories: int

    def estimate(self, level: int, t: float) -> TrajectoryEstimate:
        k = int(np.argmin(np.abs(self.times - t)))
        return TrajectoryEstimate(
            mean=float(self.mean[k, level - 1]),
            std_error=float(self.std_error[k, level - 1]),
            n_trajectories=self.n_trajectories,
            quantity=f"population{level}(t={self.times[k]:g})",
        )


def run_trajectories(params: SystemParams, rho0, t_end: float, n: int, seed: int,
                     sample_times=None, dt: float = DT, estimator: str = "forced") -> PopulationEstimates:
    """Ensemble-averaged level populations at ``sample_times``.

    ``rho0`` must be diagonal; each trajectory starts in a level drawn from
    its diagonal. By default populations are reported every 0.5.

    ``estimator="plain"`` averages the normalized populations of freely
    jumping trajectories. ``"forced"`` (the default) stratifies on whether a
    jump happens before each sample time; both are unbiased, the forced
    one has far smaller variance when the populations of interest are fed
    by rare jumps.
    """
    _check_n(n)
    if sample_times is None:
        sample_times = np.linspace(0.0, t_end, int(round(t_end / 0.5)) + 1)
    sample_times = _check_times(sample_times)
    if sample_times[-1] > t_end:
        raise ValueError("sample times extend beyond t_end")
    streams = _Streams(seed, _STREAM_RUN, n)
    levels = _initial_levels(rho0, n, streams)
    if estimator == "forced":
        samples = _forced_populations(params, levels, streams, sample_times, dt)
    elif estimator == "plain":
        samples = _simulate(params, levels, streams, t_end, dt, sample_times=sample_times).samples
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return PopulationEstimates(
        times=sample_times,
        mean=samples.mean(axis=0),
        std_error=_std_error(samples),
        n_trajectories=n,
    )


@dataclass(frozen=True, eq=False)
class EquilibriumEstimate:
    """Time-averaged stationary populations and jump statistics."""

    populations: tuple[TrajectoryEstimate, ...]
    channels: tuple[JumpChannel, ...]
    jump_rates: tuple[TrajectoryEstimate, ...]  # observed jumps per unit time
    rate_mismatch: tuple[TrajectoryEstimate, ...]  # observed - rate * <P_source>
    per_trajectory: np.ndarray  # (n, 3) window-averaged forced estimates
    plain_populations: tuple[TrajectoryEstimate, ...]  # from the freely jumping ensemble


def _window_times(t_burn: float, t_window: float) -> np.ndarray:
    if t_window <= 0 or t_burn < 0:
        raise ValueError("need t_burn >= 0 and t_window > 0")
    return np.linspace(t_burn, t_burn + t_window, WINDOW_POINTS)


def _stationary(params, n, seed, stream, dt, t_burn, t_window) -> np.ndarray:
    """Per-trajectory forced estimates averaged over the window, shape (n, 3)."""
    streams = _Streams(seed, stream, n)
    times = _window_times(t_burn, t_window)
    return _forced_populations(params, np.zeros(n, dtype=np.intp), streams, times, dt).mean(axis=1)


def _estimates(samples: np.ndarray, n: int, name: str) -> tuple[TrajectoryEstimate, ...]:
    return tuple(
        TrajectoryEstimate(float(samples[:, j].mean()), float(_std_error(samples[:, j])),
                           n, f"{name}{j + 1}")
        for j in range(3)
    )


def steady_populations(params: SystemParams, n: int, seed: int, dt: float = DT,
                       t_burn: float = T_BURN, t_window: float = T_WINDOW) -> EquilibriumEstimate:
    """Stationary populations and jump statistics from trajectories started in level 1.

    Populations are forced-jump estimates averaged over ``WINDOW_POINTS``
    times spread across ``[t_burn, t_burn + t_window]``. Jump rates come from
    a separate freely jumping ensemble, counted over the same window and
    compared with rate * (time-averaged source population) of that ensemble.
    """
    _check_n(n)
    window = _window_times(t_burn, t_window)
    stationary = _stationary(params, n, seed, _STREAM_STATIONARY, dt, t_burn, t_window)

    streams = _Streams(seed, _STREAM_RUN, n)
    out = _simulate(params, np.zeros(n, dtype=np.intp), streams, window[-1], dt,
                    window=(window[0], window[-1]))
    per_traj = out.window_average
    rates, mismatch = [], []
    for c, ch in enumerate(out.channels):
        observed = out.jump_counts[:, c] / t_window
        diff = observed - ch.rate * per_traj[:, ch.source - 1]
        label = f"{ch.source}->{ch.target}"
        rates.append(TrajectoryEstimate(float(observed.mean()), float(_std_error(observed)),
                                        n, f"jump_rate[{label}]"))
        mismatch.append(TrajectoryEstimate(float(diff.mean()), float(_std_error(diff)),
                                           n, f"jump_rate_mismatch[{label}]"))
    return EquilibriumEstimate(
        populations=_estimates(stationary, n, "steady_population"),
        channels=tuple(out.channels),
        jump_rates=tuple(rates),
        rate_mismatch=tuple(mismatch),
        per_trajectory=stationary,
        plain_populations=_estimates(per_traj, n, "plain_steady_population"),
    )


def g2_from_trajectories(params: SystemParams, transition, taus, n: int, seed: int,
                         dt: float = DT, t_burn: float = T_BURN,
                         t_window: float = T_WINDOW) -> list[TrajectoryEstimate]:
    """G(tau) for the probe ("probe", 2->1) or pump ("pump", 3->2) transition.

    The numerator comes from forced-jump trajectories started in the lower
    level of the transition; the denominator from an independent equilibrium
    ensemble of this oracle. Errors are delete-one jackknife estimates over trajectory
    pairs.
    """
    _check_n(n)
    name = getattr(transition, "value", transition)
    if name not in ("probe", "pump"):
        raise ValueError(f"unknown transition {transition!r}")
    upper, lower = (2, 1) if name == "probe" else (3, 2)

    denom = _stationary(params, n, seed, _STREAM_EQUILIBRIUM, dt, t_burn, t_window)[:, upper - 1]
    if denom.mean() <= 1e-10:
        raise TrajectoryError(
            f"{name} transition: stationary population of level {upper} is "
            f"{denom.mean():.3e}, G(tau) is undefined"
        )

    taus = _check_times(taus)
    streams = _Streams(seed, _STREAM_RESET, n)
    numer = _forced_populations(params, np.full(n, lower - 1, dtype=np.intp), streams,
                                taus, dt)[:, :, upper - 1]  # (n, T)

    sum_num = numer.sum(axis=0)
    sum_den = denom.sum()
    g = sum_num / sum_den
    loo = (sum_num[None, :] - numer) / (sum_den - denom)[:, None]
    var = (n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0)
    return [
        TrajectoryEstimate(float(g[k]), float(np.sqrt(var[k])), n, f"g2_{name}(tau={taus[k]:g})")
        for k in range(taus.size)
    ]
