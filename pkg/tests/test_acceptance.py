"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are repeated in the terminal summary of the pytest run.  Runtime
limits are part of each criterion and are checked on the wall clock.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from polymerchain.checks import (count_mismatches, eigenvalue_discrepancy,
                                 identity_residuals, phase_derivative_residual)
from polymerchain.cli import bundled_spec
from polymerchain.config import parse_spec
from polymerchain.critical import build_frame, scan_critical
from polymerchain.model import PolymerEnsemble, dimer_ensemble
from polymerchain.observables import (ids_formula, ids_samples, lyapunov_formula,
                                      lyapunov_mc)
from polymerchain.parallel import map_blocks
from polymerchain.runner import run
from polymerchain.transfer import polymer_matrices, unit_vector
from polymerchain.transport import (MomentSeries, diffusion_exponent, moment_series,
                                    periodic_source, random_source)

from conftest import record


def spec(name):
    return parse_spec(bundled_spec(name + ".spec"))


def column(report, name):
    j = report.columns.index(name)
    return np.array([r[j] for r in report.rows], dtype=float)


def test_criterion_01_critical_energies():
    t0 = time.perf_counter()
    dimer = scan_critical(dimer_ensemble(0.5), (-2, 2))
    control = scan_critical(dimer_ensemble(1.5), (-2, 2))
    two_one = scan_critical(PolymerEnsemble.from_arrays([1, 1], [0, 0], [1], [0.4]), (-2, 2))
    dt = time.perf_counter() - t0
    ok = (len(dimer) == 2 and np.max(np.abs(np.array(dimer) - [-0.5, 0.5])) <= 1e-9
          and control == [] and len(two_one) == 1 and abs(two_one[0]) <= 1e-9 and dt < 1)
    record(1, ok, f"dimer {dimer}, lambda=1.5 {control}, 2/1 example {two_one}, {dt:.2f} s")
    assert ok


def test_criterion_02_identities():
    t0 = time.perf_counter()
    res = identity_residuals(1000, seed=1)
    dt = time.perf_counter() - t0
    worst = max(res.values())
    ok = worst <= 1e-10 and dt < 5
    detail = ", ".join(f"{k} {v:.1e}" for k, v in res.items())
    record(2, ok, f"{detail}; {dt:.2f} s")
    assert ok


def test_criterion_03_phase_derivative():
    t0 = time.perf_counter()
    r = phase_derivative_residual(100, seed=1, n_max=50, h=1e-6)
    dt = time.perf_counter() - t0
    ok = r < 1e-6 and dt < 5
    record(3, ok, f"max residual {r:.2e} over 100 windows, {dt:.2f} s")
    assert ok


def test_criterion_04_oscillation_theorem():
    t0 = time.perf_counter()
    bad = count_mismatches(200, seed=1, n_max=60)
    ev = eigenvalue_discrepancy(20, seed=1, n_max=200)
    dt = time.perf_counter() - t0
    ok = bad == 0 and ev["dense"] <= 1e-9 and ev["ql"] <= 1e-9 and dt < 30
    record(4, ok, f"{bad} count mismatches in 200, eigenvalues vs dense {ev['dense']:.1e}, "
                  f"vs QL {ev['ql']:.1e}, {dt:.1f} s")
    assert ok


def test_criterion_05_quadratic_lyapunov():
    t0 = time.perf_counter()
    sp = spec("lyapunov_dimer_0.5")
    rep = run(sp)
    dt = time.perf_counter() - t0
    eps, g, se = column(rep, "eps"), column(rep, "gamma_mc"), column(rep, "gamma_stderr")
    frame = build_frame(sp.ensemble, 0.5)
    forms = [lyapunov_formula(frame, e) for e in eps]
    slope = np.polyfit(np.log(eps), np.log(g), 1)[0]
    tol = np.array([max(3 * s, 10 * f.b_max ** 3) for s, f in zip(se, forms)])
    dev = np.abs(g - [f.leading for f in forms])
    ok = (eps.size == 8 and sp.get("n_polymers") == 1000 and sp.get("n_samples") == 1000
          and abs(slope - 2) <= 0.2 and np.all(dev <= tol) and dt < 600)
    record(5, ok, f"slope {slope:.3f}, max |MC - formula|/tolerance {np.max(dev / tol):.2f}, "
                  f"{dt:.1f} s")
    assert ok


def test_criterion_06_linear_ids():
    t0 = time.perf_counter()
    frame = build_frame(dimer_ensemble(0.5), 0.5)
    N, n, h = 10_000, 400, 0.01
    x = ids_samples(frame.ensemble, [0.5 - h, 0.5, 0.5 + h], N, n, seed=3)
    dt = time.perf_counter() - t0
    f = ids_formula(frame)
    d = (x[:, 2] - x[:, 0]) / (2 * h)
    slope, slope_se = d.mean(), d.std(ddof=1) / math.sqrt(n)
    const, const_se = x[:, 1].mean(), x[:, 1].std(ddof=1) / math.sqrt(n)
    ok_slope = abs(slope - f.slope) <= 3 * slope_se + 0.1 * abs(f.slope)
    ok_const = abs(const - f.constant) <= 2 * const_se + 5 / (2 * N)
    ok = ok_slope and ok_const and dt < 300
    record(6, ok, f"slope {slope:.5f}+-{slope_se:.1e} vs {f.slope:.5f}; "
                  f"N(E_c) {const:.5f}+-{const_se:.5f} vs {f.constant:.5f}; {dt:.1f} s")
    assert ok


def test_criterion_07_counterexample():
    t0 = time.perf_counter()
    sp = spec("counterexample")
    ens = sp.ensemble
    rep = run(sp)
    gamma, gamma_se = rep.rows[0][1], rep.rows[0][2]
    mats = polymer_matrices(ens, 0.0)
    up = [math.log(np.linalg.norm(mats[s] @ unit_vector(math.pi / 2))) for s in (1, -1)]
    e0 = [math.log(np.linalg.norm(mats[s] @ unit_vector(0.0))) for s in (1, -1)]
    # nodes avoiding the atom at theta = 0, two different grids
    alt = lyapunov_mc(ens, 0.0, sp.get("n_polymers"), sp.get("n_samples"), sp.seed, n_theta=37)
    dt = time.perf_counter() - t0
    ok_gamma = abs(gamma - 0.5) <= 0.02
    ok_block = all(abs(u - math.log(0.5)) <= 1e-12 for u in up)
    ok_atom = abs(alt.value - gamma) <= 3 * math.hypot(alt.std_error, gamma_se) + 1e-9
    ok = ok_gamma and ok_block and ok_atom and dt < 60
    record(7, ok, f"gamma_0(0) {gamma:.5f} per site ({gamma * 3:.5f} per polymer), target 0.5; "
                  f"log|T e_pi/2| = {up[0]:.4f}, {up[1]:.4f} (target {math.log(0.5):.4f}); "
                  f"log|T e_0| = {e0[0]:.4f}, {e0[1]:.4f}; node grids agree: {ok_atom}; "
                  f"{dt:.1f} s")
    assert ok


@pytest.mark.slow
def test_criterion_08_boundedness_and_deviations():
    t0 = time.perf_counter()
    sp = spec("deviations_dimer_0.5")
    rep = run(sp)
    dt = time.perf_counter() - t0
    N = column(rep, "N")
    q99 = column(rep, "sup_norm_q99")
    frac, hi = column(rep, "weyl_exceedance"), column(rep, "weyl_ci_high")
    wq = column(rep, "weyl_max_q99")
    flat = q99.max() / q99.min() - 1
    ok = (N.tolist() == [2 ** 10, 2 ** 12, 2 ** 14] and sp.get("alpha") == 0.2
          and sp.get("n_samples") == 10_000 and flat <= 0.2
          and np.all(np.diff(frac) <= 0) and np.all(np.diff(wq) < 0)
          and frac[-1] < 0.01 and dt < 900)
    record(8, ok, f"sup-norm q99 {np.round(q99, 3).tolist()} (spread {flat:.1%}); "
                  f"exceedance {frac.tolist()} (95% upper {np.round(hi, 5).tolist()}); "
                  f"q99 max|I|/N^0.7 {np.round(wq, 3).tolist()}; {dt:.0f} s")
    assert ok


def test_criterion_09_level_spacing():
    t0 = time.perf_counter()
    sp = spec("levels_dimer_0.5")
    rep = run(sp)
    dt = time.perf_counter() - t0
    passes = column(rep, "passes")
    C = rep.rows[0][7]
    ok = (sp.get("N")[0] == 2000 and sp.get("alpha") == 0.1 and passes.size == 200
          and passes.mean() >= 0.95 and dt < 900)
    record(9, ok, f"C = {C:.3f} from calibration, {passes.mean():.1%} of 200 samples pass, "
                  f"{dt:.1f} s")
    assert ok


def test_criterion_10a_green_vs_oracle():
    sp = spec("transport_window")
    rep = run(sp)
    g, o = rep.rows[0][1], rep.rows[0][2]
    rel = abs(g / o - 1)
    ok = sp.get("radius") == 100 and rep.rows[0][0] == 50 and rel <= 0.02
    record("10a", ok, f"M_2(50) resolvent {g:.6f}, oracle {o:.6f}, rel. diff {rel:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_10b_periodic_lower_bound():
    T = np.geomspace(50, 2000, 9)
    ens = dimer_ensemble(0.5)
    ratios, slopes = {}, {}
    for name, pattern in (("+", [1]), ("-", [-1]), ("+-", [1, -1])):
        s = moment_series(periodic_source(ens, pattern), 2, T, "propagation")
        ratios[name] = s.M / T
        slopes[name] = diffusion_exponent(MomentSeries(1.0, T, s.M / T, s.method)).beta
    # C is fitted on the lower half of the range and checked on all of it
    lower = T <= math.sqrt(50 * 2000)
    C = min(float(r[lower].min()) for r in ratios.values())
    holds = all(np.all(r >= C) for r in ratios.values())
    ok = all(v >= 0 for v in slopes.values()) and C > 0 and holds
    record("10b", ok, "exponent of M_2/T: " + ", ".join(f"{k} {v:.3f}" for k, v in slopes.items())
           + f"; M_2 >= {C:.3g} T on [50, 2000]: {holds}")
    assert ok


def _dimer_fits(ens, T, seed, start, stop):
    out = np.empty((stop - start, 2))
    for row, i in enumerate(range(start, stop)):
        s = moment_series(random_source(ens, seed, i), 2, T, "propagation")
        out[row, 0] = diffusion_exponent(s.restrict(25, 1000)).beta
        out[row, 1] = diffusion_exponent(s.restrict(50, 2000)).beta
    return out


@pytest.mark.slow
def test_criterion_10c_random_dimer_exponent():
    from functools import partial
    t0 = time.perf_counter()
    sp = spec("transport_exponents_dimer")
    T = np.asarray(sp.get("T"))
    n = sp.get("n_samples")
    fits = map_blocks(partial(_dimer_fits, sp.ensemble, T, sp.seed), n, 1, block=1)
    dt = time.perf_counter() - t0
    q_short, q_long = np.quantile(fits[:, 0], 0.1), np.quantile(fits[:, 1], 0.1)
    # the bound is asymptotic from below, so the gap is the shortfall under 3/4
    gap_short, gap_long = max(0.0, 0.75 - q_short), max(0.0, 0.75 - q_long)
    shrinks = gap_long < gap_short or gap_long == 0.0
    ok = n == 50 and T.max() <= 2000 and q_long >= 0.67 and shrinks and dt < 3600
    record("10c", ok, f"10% quantile of beta: {q_short:.4f} on [25, 1000], {q_long:.4f} on "
                      f"[50, 2000]; shortfall {gap_short:.4f} -> {gap_long:.4f}; "
                      f"median {np.median(fits[:, 1]):.4f}; {dt:.0f} s")
    assert ok


def test_criterion_10d_free_chain():
    sp = spec("transport_free")
    rep = run(sp)
    beta = rep.rows[0][1]
    ok = abs(beta - 1.0) <= 0.05
    record("10d", ok, f"free chain beta {beta:.5f}")
    assert ok


def test_criterion_11_reproducibility():
    names = ["dimer_0.5", "identities", "lyapunov_dimer_0.5", "ids_dimer_0.5",
             "levels_dimer_0.5", "transport_window", "counterexample"]
    same = {}
    for name in names:
        sp = spec(name)
        same[name] = run(sp, workers=1).to_csv().encode() == run(sp, workers=8).to_csv().encode()
    ok = all(same.values())
    record(11, ok, ", ".join(f"{k} {'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
    assert ok
