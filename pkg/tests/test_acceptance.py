"""Acceptance criteria, one test per criterion.

Each test prints a single ``criterion N [PASS|FAIL]`` line (also collected in
the terminal summary) and then asserts. Run on its own with::

    pytest tests/test_acceptance.py -v
    python tests/test_acceptance.py
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from cascade_eit import (
    SystemParams,
    apply_generator,
    basis_state,
    build_liouvillian,
    classify_regions,
    dip_metrics,
    g2,
    integrated_absorption,
    matrix_exponential,
    peak_positions,
    propagate,
    solve_steady_state,
    sweep_probe_detuning,
)
from cascade_eit.dynamics import Method
from cascade_eit.trajectories import g2_from_trajectories, steady_populations

from conftest import (
    EQUAL,
    UNEQUAL,
    equation_rhs,
    figure_sets,
    random_density_matrix,
    random_params,
)

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
WEAK_PUMPING = (0.001, 0.01, 0.1)
STRONG_PUMPING = (0.5, 1.0)
G2_TAUS = np.round(np.arange(0, 5001) * 0.01, 10)  # [0, 50] step 0.01


def report(log, number, title, checks):
    """checks: list of (name, ok, detail)."""
    ok = all(c[1] for c in checks)
    parts = [f"{name}: {'ok' if good else 'FAILED'} ({detail})" for name, good, detail in checks]
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title} | " + "; ".join(parts)
    print(line)
    log.append(line)
    assert ok, line


def curve(p, taus=G2_TAUS):
    L = build_liouvillian(p)
    return g2(L, solve_steady_state(L), "probe", taus)


def overlaps(a_start, a_end, b_start, b_end):
    return min(a_end, b_end) - max(a_start, b_start) > 0


def test_criterion_1_generator_correctness(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(20240101)
    worst_herm = worst_trace = worst_eq = 0.0
    for _ in range(20):
        p = random_params(rng)
        L = build_liouvillian(p)
        for _ in range(100):
            rho = random_density_matrix(rng)
            d = apply_generator(L, rho)
            worst_herm = max(worst_herm, np.max(np.abs(d - d.conj().T)))
            worst_trace = max(worst_trace, abs(np.trace(d)))
            worst_eq = max(worst_eq, np.max(np.abs(d - equation_rhs(p, rho))))
    elapsed = time.perf_counter() - start
    report(acceptance_log, 1, "generator correctness", [
        ("hermitian output", worst_herm <= 1e-12, f"max {worst_herm:.2e} <= 1e-12"),
        ("zero trace", worst_trace <= 1e-12, f"max {worst_trace:.2e} <= 1e-12"),
        ("matches equations of motion", worst_eq <= 1e-13, f"max {worst_eq:.2e} <= 1e-13"),
        ("runtime", elapsed < 1.0, f"{elapsed:.2f} s < 1 s"),
    ])


def test_criterion_2_two_level_oracle(acceptance_log):
    start = time.perf_counter()
    worst = 0.0
    for wp in (0.01, 0.1, 0.5, 1.0, 3.0):
        for dp in np.linspace(-5.0, 5.0, 50):
            # gamma32 > 0 drains the uncoupled top level
            p = SystemParams(gamma32=0.16, omega_p=wp, delta_p=dp)
            rho22 = solve_steady_state(build_liouvillian(p)).rho_ss[1, 1].real
            worst = max(worst, abs(rho22 - wp**2 / (1 + dp**2 + 2 * wp**2)))
    elapsed = time.perf_counter() - start
    report(acceptance_log, 2, "two-level analytic oracle", [
        ("rho22 closed form", worst <= 1e-10, f"max error {worst:.2e} <= 1e-10"),
        ("runtime", elapsed < 1.0, f"{elapsed:.2f} s < 1 s"),
    ])


def test_criterion_3_eit_dip_unequal_decays(acceptance_log):
    start = time.perf_counter()
    c = sweep_probe_detuning(UNEQUAL)
    m = dip_metrics(c)
    asym = float(np.max(np.abs(c.im_rho21 - c.im_rho21[::-1])))
    step = float(np.max(np.diff(c.delta_p_grid)))
    peaks = np.sort(peak_positions(c)[:2])
    wc = UNEQUAL.omega_c
    peaks_ok = peaks.size == 2 and np.all(np.abs(peaks - [-wc, wc]) <= step + 1e-12)
    elapsed = time.perf_counter() - start
    report(acceptance_log, 3, "EIT dip with unequal decays", [
        ("dip depth", 0.85 <= m.dip_depth_fraction <= 1.0,
         f"{m.dip_depth_fraction:.4f} in [0.85, 1.0]"),
        ("symmetry", asym <= 1e-9, f"max |asymmetry| {asym:.2e} <= 1e-9"),
        ("maxima at +-omega_c", bool(peaks_ok),
         f"maxima at {peaks.tolist()} vs +-{wc} within {step:g}"),
        ("runtime", elapsed < 5.0, f"{elapsed:.2f} s < 5 s"),
    ])


def test_criterion_4_pumping_insensitivity(acceptance_log):
    checks = []
    for wc in (0.5, 1.0):
        base_curve = sweep_probe_detuning(UNEQUAL.replace(omega_c=wc))
        base = dip_metrics(base_curve)
        base_area = integrated_absorption(base_curve)
        for l12 in WEAK_PUMPING:
            m = dip_metrics(sweep_probe_detuning(UNEQUAL.replace(omega_c=wc, lambda12=l12)))
            rel = {
                "center": abs(m.line_center_value / base.line_center_value - 1),
                "peak": abs(m.peak_value / base.peak_value - 1),
                "depth": abs(m.dip_depth_fraction / base.dip_depth_fraction - 1),
            }
            worst = max(rel, key=rel.get)
            checks.append((f"omega_c={wc} lambda12={l12} metrics within 10%", rel[worst] <= 0.10,
                           ", ".join(f"{k} {v:.1%}" for k, v in rel.items())))
        for l12 in STRONG_PUMPING:
            c = sweep_probe_detuning(UNEQUAL.replace(omega_c=wc, lambda12=l12))
            m = dip_metrics(c)
            peaks = peak_positions(c)
            flanked = np.any(peaks < 0) and np.any(peaks > 0)
            area = integrated_absorption(c)
            checks.append((f"omega_c={wc} lambda12={l12} dip gone or shallow",
                           (not flanked) or m.dip_depth_fraction < 0.5,
                           f"two-sided maxima {bool(flanked)}, depth {m.dip_depth_fraction:.3f}"))
            checks.append((f"omega_c={wc} lambda12={l12} less absorption", area < base_area,
                           f"area {area:.3e} < {base_area:.3e}"))
    report(acceptance_log, 4, "incoherent-pump insensitivity of EIT", checks)


def test_criterion_5_equal_decay_contrast(acceptance_log):
    checks = []
    for wc in (0.5, 1.0):
        unequal = dip_metrics(sweep_probe_detuning(UNEQUAL.replace(omega_c=wc))).dip_depth_fraction
        equal = dip_metrics(sweep_probe_detuning(EQUAL.replace(omega_c=wc))).dip_depth_fraction
        checks.append((f"omega_c={wc}", equal <= 0.5 * unequal,
                       f"equal-decay depth {equal:.4f} <= half of {unequal:.4f}"))
    report(acceptance_log, 5, "equal-decay contrast", checks)


def test_criterion_6_g22_structure(acceptance_log):
    start = time.perf_counter()
    curves = {p: curve(p) for p in figure_sets()}
    g0 = max(c.values[0] for c in curves.values())
    tail = max(abs(c.values[-1] - 1) for c in curves.values())
    checks = [
        ("G22(0) = 0", g0 == 0.0, f"max G22(0) = {float(g0)!r} over {len(curves)} sets"),
        ("|G22(50) - 1| <= 1e-4", tail <= 1e-4, f"max {tail:.2e}"),
    ]
    end = float(G2_TAUS[-1])
    for wc in (0.5, 1.0):
        regions = classify_regions(curves[UNEQUAL.replace(omega_c=wc)])
        classical = [r for r in regions if r.label == "classical"]
        first = classical[0] if classical else None
        starts_early = first is not None and first.start <= 2.0
        persists = first is not None and first.end == end and first is regions[-1]
        summary = ", ".join(f"{r.label[0]}[{r.start:.2f},{r.end:.2f}]" for r in regions)
        checks.append((f"lambda12=0 omega_c={wc} classical from tau<=2", starts_early, summary))
        checks.append((f"lambda12=0 omega_c={wc} classical to end of grid", persists,
                       f"last region {regions[-1].label} ending {regions[-1].end:.2f}"))
        base_classical = classical
        for l12 in WEAK_PUMPING:
            pumped = classify_regions(curves[UNEQUAL.replace(omega_c=wc, lambda12=l12)])
            hits = [(r, b) for r in pumped if r.label == "nonclassical"
                    for b in base_classical if overlaps(r.start, r.end, b.start, b.end)]
            checks.append((f"omega_c={wc} lambda12={l12} nonclassical where unpumped is classical",
                           bool(hits),
                           f"nonclassical [{hits[0][0].start:.2f},{hits[0][0].end:.2f}]" if hits
                           else "no overlap"))
    window = [r for r in classify_regions(curves[EQUAL.replace(omega_c=1.0)])
              if r.label == "classical" and overlaps(r.start, r.end, 2.5, 4.0)]
    checks.append(("equal decays omega_c=1 classical window over [2.5, 4]", bool(window),
                   f"classical [{window[0].start:.2f},{window[0].end:.2f}]" if window else "none"))
    elapsed = time.perf_counter() - start
    checks.append(("runtime", elapsed < 10.0, f"{elapsed:.2f} s < 10 s"))
    report(acceptance_log, 6, "G22 structural properties", checks)


def test_criterion_7_propagator_cross_validation(acceptance_log):
    taus = np.round(np.arange(0, 1001) * 0.01, 10)
    worst_diff = worst_semi = 0.0
    sets = figure_sets()
    for p in sets:
        L = build_liouvillian(p)
        a = propagate(L, basis_state(1), taus, Method.MATRIX_EXPONENTIAL)
        b = propagate(L, basis_state(1), taus, Method.ADAPTIVE_ODE)
        worst_diff = max(worst_diff, np.max(np.abs(a.states - b.states)))
        semi = matrix_exponential(L, 2.0) - matrix_exponential(L, 0.7) @ matrix_exponential(L, 1.3)
        worst_semi = max(worst_semi, np.max(np.abs(semi)))
    report(acceptance_log, 7, "propagator cross-validation", [
        ("expm vs adaptive ODE", worst_diff <= 1e-7, f"max |d rho| {worst_diff:.2e} <= 1e-7 over {len(sets)} sets"),
        ("semigroup", worst_semi <= 1e-9, f"max {worst_semi:.2e} <= 1e-9"),
    ])


@pytest.mark.slow
def test_criterion_8_trajectory_oracle(acceptance_log):
    start = time.perf_counter()
    n, seed = 20000, 42
    taus = [0.5, 1.0, 2.0, 5.0, 10.0]
    checks = []
    for l12 in (0.0, 0.1):
        p = UNEQUAL.replace(lambda12=l12)
        L = build_liouvillian(p)
        sol = solve_steady_state(L)
        eq = steady_populations(p, n, seed)
        for j, est in enumerate(eq.populations):
            ref = sol.rho_ss[j, j].real
            checks.append((f"lambda12={l12} rho{j + 1}{j + 1}", est.agrees_with(ref),
                           f"{est.mean:.6g} +- {est.std_error:.2g} vs {ref:.6g}"))
        ref = g2(L, sol, "probe", taus).values
        for est, tau, r in zip(g2_from_trajectories(p, "probe", taus, n, seed), taus, ref):
            checks.append((f"lambda12={l12} G22({tau:g})", est.agrees_with(r),
                           f"{est.mean:.4f} +- {est.std_error:.4f} vs {r:.4f}"))
    elapsed = time.perf_counter() - start
    checks.append(("runtime", elapsed <= 300.0, f"{elapsed:.0f} s <= 300 s"))
    report(acceptance_log, 8, "trajectory-oracle agreement (n=20000, 3 SE)", checks)


def _cli(config, out):
    proc = subprocess.run([sys.executable, "-m", "cascade_eit", str(config), "--output", str(out)],
                          capture_output=True, text=True)
    return proc.returncode


def _manifest(path):
    doc = json.loads(path.read_text())
    doc.pop("duration_ms")
    return doc


def test_criterion_9_determinism(acceptance_log, tmp_path):
    validate = tmp_path / "validate_small.json"
    validate.write_text(json.dumps({"mode": "validate", "seed": 42, "ntraj": 200,
                                    "params": UNEQUAL.replace(lambda12=0.1).as_dict()}))
    checks = []
    for config in (CONFIGS / "fig3a.json", CONFIGS / "fig2a.json", validate):
        codes = [_cli(config, tmp_path / f"run{k}") for k in (1, 2)]
        stem = json.loads(config.read_text()).get("output", config.stem)
        csvs = [(tmp_path / f"run{k}" / f"{stem}.csv").read_bytes() for k in (1, 2)]
        manifests = [_manifest(tmp_path / f"run{k}" / f"{stem}.manifest.json") for k in (1, 2)]
        checks.append((f"{stem} csv", codes[0] == codes[1] and csvs[0] == csvs[1],
                       f"exit {codes}, {len(csvs[0])} bytes identical={csvs[0] == csvs[1]}"))
        checks.append((f"{stem} manifest", manifests[0] == manifests[1], "equal apart from duration"))
    report(acceptance_log, 9, "CLI determinism", checks)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
