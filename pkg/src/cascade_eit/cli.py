"""Command-line front end.

Usage::

    cascade-eit CONFIG.json [--output DIR] [--threads N] [--seed S] [--ntraj N]

A config selects one of four modes (steady, spectrum, g2, validate), the
system parameters, an optional grid and an optional parameter sweep. Results
are written as CSV next to a JSON manifest.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .correlations import Transition, g2
from .dynamics import Method
from .lindblad import ParameterError, SystemParams, build_liouvillian
from .spectra import DEFAULT_GRID, sweep_probe_detuning
from .steady import SolverError, population_difference, solve_steady_state

__all__ = ["ConfigError", "RunConfig", "parse_config", "run", "main"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_IO = 3
EXIT_VALIDATION_FAILED = 4

MODES = ("steady", "spectrum", "g2", "validate")
DEFAULT_G2_GRID = (0.0, 20.0, 2001)
DEFAULT_SEED = 42
DEFAULT_NTRAJ = 20000
VALIDATE_TAUS = (0.5, 1.0, 2.0, 5.0, 10.0)

_TOP_KEYS = {"mode", "params", "grid", "sweep", "output", "seed", "ntraj", "transition", "method"}
_GRID_KEYS = {"min", "max", "points"}
_SWEEP_KEYS = {"param", "values"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    mode: str
    params: SystemParams
    grid: tuple[float, float, int] | None = None
    sweep: tuple[tuple[str, tuple[float, ...]], ...] = ()
    output: str | None = None
    seed: int = DEFAULT_SEED
    ntraj: int = DEFAULT_NTRAJ
    transition: str = "probe"
    method: str = Method.MATRIX_EXPONENTIAL.value

    def grid_values(self) -> np.ndarray | None:
        if self.grid is None:
            return None
        lo, hi, n = self.grid
        return np.linspace(lo, hi, n)

    def sweep_members(self) -> list[tuple[tuple[tuple[str, float], ...], SystemParams]]:
        """All (label, params) combinations of the sweep, in order."""
        if not self.sweep:
            return [((), self.params)]
        names = [name for name, _ in self.sweep]
        members = []
        for combo in itertools.product(*(values for _, values in self.sweep)):
            label = tuple(zip(names, combo))
            members.append((label, self.params.replace(**dict(label))))
        return members

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "params": self.params.as_dict(),
            "seed": self.seed,
            "ntraj": self.ntraj,
            "transition": self.transition,
            "method": self.method,
        }
        if self.grid is not None:
            out["grid"] = {"min": self.grid[0], "max": self.grid[1], "points": self.grid[2]}
        if self.sweep:
            out["sweep"] = [{"param": name, "values": list(values)} for name, values in self.sweep]
        if self.output is not None:
            out["output"] = self.output
        return out


def _reject_constant(name):
    raise ConfigError(f"non-finite number {name} is not allowed")


def _number(value, where) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where} must be finite")
    return float(value)


def _integer(value, where, minimum) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{where} must be >= {minimum}, got {value}")
    return value


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def parse_config(text) -> RunConfig:
    """Parse and validate a JSON run configuration (strict: unknown keys are errors)."""
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError(f"config is not valid UTF-8: {exc}") from exc
    if not isinstance(text, str) or not text.strip():
        raise ConfigError("config is empty")
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc
    _check_keys(doc, _TOP_KEYS, "config")

    mode = doc.get("mode")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {mode!r}")
    if "params" not in doc:
        raise ConfigError("missing required field 'params'")
    raw_params = doc["params"]
    _check_keys(raw_params, set(SystemParams.field_names()), "params")
    values = {k: _number(v, f"params.{k}") for k, v in raw_params.items()}
    try:
        params = SystemParams(**values)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc

    grid = None
    if mode in ("spectrum", "g2"):
        raw_grid = doc.get("grid")
        if raw_grid is None:
            grid = DEFAULT_GRID if mode == "spectrum" else DEFAULT_G2_GRID
        else:
            _check_keys(raw_grid, _GRID_KEYS, "grid")
            missing = _GRID_KEYS - set(raw_grid)
            if missing:
                raise ConfigError(f"grid is missing {', '.join(sorted(missing))}")
            lo = _number(raw_grid["min"], "grid.min")
            hi = _number(raw_grid["max"], "grid.max")
            n = _integer(raw_grid["points"], "grid.points", 2)
            if hi <= lo:
                raise ConfigError("grid.max must exceed grid.min")
            if mode == "g2" and lo != 0:
                raise ConfigError("g2 grid must start at tau = 0")
            grid = (lo, hi, n)
    elif "grid" in doc:
        raise ConfigError(f"grid is not used in {mode} mode")

    sweep = []
    raw_sweep = doc.get("sweep", [])
    if not isinstance(raw_sweep, list):
        raise ConfigError("sweep must be a list of {param, values} objects")
    for k, entry in enumerate(raw_sweep):
        _check_keys(entry, _SWEEP_KEYS, f"sweep[{k}]")
        name = entry.get("param")
        if name not in SystemParams.field_names():
            raise ConfigError(f"sweep[{k}].param must be a SystemParams field, got {name!r}")
        if mode == "spectrum" and name == "delta_p":
            raise ConfigError("delta_p is the spectrum axis and cannot be swept")
        vals = entry.get("values")
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"sweep[{k}].values must be a non-empty list")
        sweep.append((name, tuple(_number(v, f"sweep[{k}].values") for v in vals)))
    names = [name for name, _ in sweep]
    if len(set(names)) != len(names):
        raise ConfigError("each parameter may be swept only once")

    transition = doc.get("transition", "probe")
    if transition not in ("probe", "pump"):
        raise ConfigError(f"transition must be probe or pump, got {transition!r}")
    method = doc.get("method", Method.MATRIX_EXPONENTIAL.value)
    if method not in {m.value for m in Method}:
        raise ConfigError(f"method must be one of {[m.value for m in Method]}, got {method!r}")
    output = doc.get("output")
    if output is not None and (not isinstance(output, str) or not output or "/" in output):
        raise ConfigError("output must be a plain file name stem")

    config = RunConfig(
        mode=mode,
        params=params,
        grid=grid,
        sweep=tuple(sweep),
        output=output,
        seed=_integer(doc.get("seed", DEFAULT_SEED), "seed", 0),
        ntraj=_integer(doc.get("ntraj", DEFAULT_NTRAJ), "ntraj", 100),
        transition=transition,
        method=method,
    )
    # every sweep member must be a valid parameter set
    try:
        config.sweep_members()
    except ParameterError as exc:
        raise ConfigError(f"sweep produces invalid parameters: {exc}") from exc
    return config


def _fmt(x) -> str:
    """Shortest round-trip decimal form of a double."""
    return repr(float(x))


def _label(label) -> str:
    def compact(v):
        v = float(v)
        return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)
    return ";".join(f"{name}={compact(v)}" for name, v in label)


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _map(fn, items, threads):
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads or os.cpu_count()) as pool:
        return list(pool.map(fn, items))


def _steady_rows(config, threads):
    members = config.sweep_members()

    def one(member):
        _, params = member
        sol = solve_steady_state(build_liouvillian(params))
        r = sol.rho_ss
        return [r[0, 0].real, r[1, 1].real, r[2, 2].real,
                r[0, 1].real, r[0, 1].imag, r[0, 2].real, r[0, 2].imag,
                r[1, 2].real, r[1, 2].imag, population_difference(sol)]

    results = _map(one, members, threads)
    header = ["rho11", "rho22", "rho33", "re_rho12", "im_rho12", "re_rho13", "im_rho13",
              "re_rho23", "im_rho23", "pop_diff_21"]
    names = [name for name, _ in config.sweep]
    rows = [[v for _, v in label] + res for (label, _), res in zip(members, results)]
    return names + header, rows


def _curve_columns(config, threads, axis_name, value_name, compute):
    members = config.sweep_members()
    axis = config.grid_values()
    columns = _map(lambda m: compute(m[1], axis), members, threads)
    if config.sweep:
        header = [axis_name] + [f"{value_name}_{_label(label)}" for label, _ in members]
    else:
        header = [axis_name, value_name]
    rows = [[axis[k]] + [col[k] for col in columns] for k in range(axis.size)]
    return header, rows


def _spectrum(params, grid):
    return sweep_probe_detuning(params, grid).im_rho21


def _g2_values(config):
    transition = Transition(config.transition)

    def compute(params, taus):
        L = build_liouvillian(params)
        return g2(L, solve_steady_state(L), transition, taus, method=config.method).values
    return compute


def _validate_rows(config, threads):
    from .trajectories import g2_from_trajectories, steady_populations

    rows = []
    for label, params in config.sweep_members():
        tag = _label(label) or "base"
        L = build_liouvillian(params)
        sol = solve_steady_state(L)
        eq = steady_populations(params, config.ntraj, config.seed)
        for j, est in enumerate(eq.populations):
            rows.append((tag, est.quantity, est, float(sol.rho_ss[j, j].real)))
        for est in eq.rate_mismatch:
            rows.append((tag, est.quantity, est, 0.0))
        taus = np.array(VALIDATE_TAUS)
        reference = g2(L, sol, config.transition, taus).values
        estimates = g2_from_trajectories(params, config.transition, taus, config.ntraj, config.seed)
        for est, ref in zip(estimates, reference):
            rows.append((tag, est.quantity, est, float(ref)))
    return rows


def _write_validation(path: Path, rows) -> bool:
    lines = ["sweep,quantity,oracle_mean,oracle_std_error,reference,n_sigma,pass"]
    all_ok = True
    for tag, quantity, est, ref in rows:
        diff = abs(est.mean - ref)
        sigma = diff / est.std_error if est.std_error > 0 else (0.0 if diff == 0 else math.inf)
        ok = est.agrees_with(ref)
        all_ok &= ok
        lines.append(",".join([tag, quantity, _fmt(est.mean), _fmt(est.std_error), _fmt(ref),
                               _fmt(sigma), "pass" if ok else "FAIL"]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return all_ok


def run(config: RunConfig, output_dir, name: str = "run", threads: int = 1) -> int:
    """Compute the configured data product and write CSV plus manifest.

    Returns the process exit status.
    """
    started = time.perf_counter()
    base = Path(output_dir) / (config.output or name)
    csv_path = base.with_name(base.name + ".csv")
    manifest_path = base.with_name(base.name + ".manifest.json")
    validation_ok = True
    try:
        if config.mode == "steady":
            header, rows = _steady_rows(config, threads)
        elif config.mode == "spectrum":
            header, rows = _curve_columns(config, threads, "delta_p", "im_rho21", _spectrum)
        elif config.mode == "g2":
            value = "g22" if config.transition == "probe" else "g33"
            header, rows = _curve_columns(config, threads, "tau", value, _g2_values(config))
        else:
            rows = _validate_rows(config, threads)
    except (SolverError, ParameterError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    try:
        Path(output_dir).mkdir(parents=True, exist_ok=True)
        if config.mode == "validate":
            validation_ok = _write_validation(csv_path, rows)
        else:
            _write_csv(csv_path, header, rows)
        manifest = {
            "config": config.to_dict(),
            "version": __version__,
            "outputs": [csv_path.name],
            "duration_ms": round((time.perf_counter() - started) * 1000.0, 3),
        }
        with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO

    if not validation_ok:
        print(f"validation failed; see {csv_path}", file=sys.stderr)
        return EXIT_VALIDATION_FAILED
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cascade-eit",
        description="Steady states, EIT spectra and G2 correlations of an incoherently "
                    "pumped three-level cascade atom.",
    )
    parser.add_argument("config", help="JSON run configuration")
    parser.add_argument("--output", default=".", help="output directory (default: .)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads, 0 = auto")
    parser.add_argument("--seed", type=int, help="random seed for validate mode")
    parser.add_argument("--ntraj", type=int, help="trajectory count for validate mode")
    args = parser.parse_args(argv)

    if args.threads < 0:
        parser.error("--threads must be >= 0")
    try:
        text = Path(args.config).read_bytes()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        config = parse_config(text)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = _integer(args.seed, "--seed", 0)
        if args.ntraj is not None:
            overrides["ntraj"] = _integer(args.ntraj, "--ntraj", 100)
        if overrides:
            config = parse_config(json.dumps({**config.to_dict(), **overrides}))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(config, args.output, name=Path(args.config).stem, threads=args.threads)


if __name__ == "__main__":
    sys.exit(main())
