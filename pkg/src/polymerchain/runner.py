"""Run an :class:`ExperimentSpec` and write its CSV report.

Every kind has a fixed column schema.  Floats are written with 17
significant digits, and all Monte Carlo work is reduced in sample order, so
a spec and seed give byte-identical files for any number of workers.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path

import numpy as np

from .checks import (count_mismatches, eigenvalue_discrepancy, identity_residuals,
                     phase_derivative_residual)
from .config import ExperimentSpec
from .critical import (build_frame, critical_order, find_critical, first_order,
                       scan_critical)
from .errors import OrderUndetermined
from .model import MINUS, PLUS
from .observables import (fit_level_constant, ids_formula, ids_mc, level_statistics,
                          lyapunov_formula, lyapunov_mc, transfer_boundedness_tail)
from .parallel import map_blocks
from .phase_flow import deviation_tail
from .transport import (diffusion_exponent, free_source, moment_green, moment_series,
                        moment_spectral_oracle, periodic_source, random_source)

SCHEMAS = {
    "critical_scan": ["E_c", "eta_plus", "eta_minus", "order", "c_plus_re", "c_plus_im",
                      "c_minus_re", "c_minus_im", "d_plus", "d_minus"],
    "lyapunov_sweep": ["eps", "gamma_mc", "gamma_stderr", "gamma_formula"],
    "ids_sweep": ["eps", "ids_mc", "ids_stderr", "ids_formula"],
    "levels": ["sample", "n_levels", "spacing_min", "spacing_max", "spread_min",
               "spread_max", "required_C", "C", "passes"],
    "deviations": ["N", "delta", "sup_norm_q99", "weyl_exceedance", "weyl_ci_low",
                   "weyl_ci_high", "weyl_max_q99"],
    "transport": ["T", "M_green", "M_oracle", "beta_window"],
    "transport_exponents": ["index", "beta", "beta_minus", "beta_plus"],
    "identities": ["check", "instances", "max_residual", "tolerance", "passed"],
}

VERBS = {"scan-critical": "critical_scan", "lyapunov": "lyapunov_sweep",
         "ids": "ids_sweep", "levels": "levels", "deviations": "deviations",
         "transport": "transport", "exponents": "transport_exponents",
         "identities": "identities"}


@dataclass
class Report:
    kind: str
    columns: list
    rows: list
    summary: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([format_value(x) for x in row])
        return buf.getvalue()


def format_value(x) -> str:
    """Round-trip text for a CSV cell: integers as is, floats with 17 digits."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    return str(x)


def _frame(spec: ExperimentSpec):
    e = spec.get("energy")
    return build_frame(spec.ensemble, e) if e is not None else find_critical(spec.ensemble)


def _critical_scan(spec):
    ens = spec.ensemble
    roots = scan_critical(ens, (spec.get("e_min"), spec.get("e_max")))
    rows = []
    for e in roots:
        frame = build_frame(ens, e)
        c, d = first_order(frame)
        try:
            order = critical_order(frame)
        except OrderUndetermined:
            order = -1
        rows.append([e, frame.eta[PLUS], frame.eta[MINUS], order,
                     c[PLUS].real, c[PLUS].imag, c[MINUS].real, c[MINUS].imag,
                     d[PLUS], d[MINUS]])
    found = ", ".join("%.12g" % e for e in roots) or "none"
    return rows, f"critical energies: {found}"


def _lyapunov(spec):
    critical = spec.get("critical", True)
    if critical:
        frame = _frame(spec)
        energy, M = frame.energy, frame.M
    else:
        energy, M = spec.get("energy"), None
    rows = []
    for eps in spec.get("eps"):
        mc = lyapunov_mc(spec.ensemble, energy + eps, spec.get("n_polymers"),
                         spec.get("n_samples"), spec.seed, frame_matrix=M,
                         n_theta=spec.get("n_theta"), workers=spec.get("workers"))
        formula = lyapunov_formula(frame, eps).leading if critical else float("nan")
        rows.append([float(eps), mc.value, mc.std_error, formula])
    eps = np.abs([r[0] for r in rows])
    g = np.array([r[1] for r in rows])
    summary = f"E = {energy:.12g}"
    if critical and eps.size >= 2 and np.all(g > 0):
        summary += f", log-log slope {np.polyfit(np.log(eps), np.log(g), 1)[0]:.4f}"
    return rows, summary


def _ids(spec):
    frame = _frame(spec)
    eps = np.asarray(spec.get("eps"), dtype=float)
    N = int(np.atleast_1d(spec.get("N"))[0])
    ests = ids_mc(spec.ensemble, frame.energy + eps, N, spec.get("n_samples"),
                  spec.seed, workers=spec.get("workers"))
    rows = [[float(e), est.value, est.std_error, ids_formula(frame, e).value]
            for e, est in zip(eps, ests)]
    f0 = ids_formula(frame)
    return rows, (f"E_c = {frame.energy:.12g}, formula N(E_c) = {f0.constant:.10g}, "
                  f"slope {f0.slope:.10g}")


def _levels(spec):
    frame = _frame(spec)
    N = int(np.atleast_1d(spec.get("N"))[0])
    alpha, workers = spec.get("alpha"), spec.get("workers")
    cal_seed = spec.get("calibration_seed", spec.seed + 1)
    cal = level_statistics(frame, N, alpha, spec.get("calibration_samples"), cal_seed,
                           workers=workers)
    C = fit_level_constant(cal, spec.get("quantile"))
    rep = level_statistics(frame, N, alpha, spec.get("n_samples"), spec.seed, C,
                           workers=workers)
    rows = [[i, s.eigenvalues.size, s.spacing_min, s.spacing_max, s.spread_min,
             s.spread_max, s.required_constant, C, bool(ok)]
            for i, (s, ok) in enumerate(zip(rep.samples, rep.passes()))]
    return rows, f"C = {C:.6g}, pass fraction {rep.pass_fraction():.4f}"


def _deviations(spec):
    frame = _frame(spec)
    alpha, workers = spec.get("alpha"), spec.get("workers")
    n_w = spec.get("n_samples")
    n_b = spec.get("norm_samples", n_w)
    rows = []
    for N in np.atleast_1d(spec.get("N")):
        N = int(N)
        delta = N ** (-0.5 - alpha)
        bound = transfer_boundedness_tail(frame, N, alpha, n_b, spec.seed, delta=delta,
                                          workers=workers)
        tail = deviation_tail(frame, alpha, N, n_w, spec.seed, delta=delta,
                              workers=workers)
        rows.append([N, delta, bound.quantile(0.99), tail.fraction, tail.ci_low,
                     tail.ci_high, float(np.quantile(tail.values, 0.99)) / N ** (0.5 + alpha)])
    return rows, "exceedance fractions: " + ", ".join("%.4g" % r[3] for r in rows)


def _source(spec, index=None):
    conf = spec.get("configuration")
    if conf == "free":
        return free_source()
    if conf == "periodic":
        return periodic_source(spec.ensemble, spec.get("pattern"))
    idx = spec.get("index") if index is None else index
    return random_source(spec.ensemble, spec.seed, idx, spec.get("stationary"))


def _local_slopes(T, M, q):
    if T.size < 2:
        return np.full(T.size, np.nan)
    return np.gradient(np.log(M), q * np.log(T))


def _transport(spec):
    q = spec.get("q")
    T = np.sort(np.asarray(spec.get("T"), dtype=float))
    src = _source(spec)
    radius = spec.get("radius")
    if radius is not None:
        w = src.window(radius)
        green = np.array([moment_green(w, q, t) for t in T])
        oracle = np.atleast_1d(moment_spectral_oracle(w, q, T))
        where = f"window [-{radius}, {radius}]"
    else:
        green = moment_series(src, q, T, "green").M
        oracle = moment_series(src, q, T, "oracle").M
        where = "adaptive truncation"
    slopes = _local_slopes(T, green, q)
    rows = [[t, g, o, s] for t, g, o, s in zip(T, green, oracle, slopes)]
    dev = float(np.max(np.abs(green / oracle - 1)))
    return rows, f"{where}: max |M_green/M_oracle - 1| = {dev:.3g}"


def _exponent_block(spec, q, T, lo, hi, start, stop):
    out = np.empty((stop - start, 3))
    for row, i in enumerate(range(start, stop)):
        s = moment_series(_source(spec, i), q, T, spec.get("method"))
        out[row] = tuple(diffusion_exponent(s.restrict(lo, hi)))
    return out


def _exponents(spec):
    q = spec.get("q")
    T = np.sort(np.asarray(spec.get("T"), dtype=float))
    lo, hi = spec.get("fit_min", T[0]), spec.get("fit_max", T[-1])
    n = spec.get("n_samples") if spec.get("configuration") == "random" else 1
    fn = partial(_exponent_block, spec, q, T, lo, hi)
    fits = map_blocks(fn, n, spec.get("workers"), block=1)
    rows = [[i, *fits[i]] for i in range(n)]
    return rows, (f"beta: median {np.median(fits[:, 0]):.4f}, "
                  f"10% quantile {np.quantile(fits[:, 0], 0.1):.4f}")


# residual tolerances of the randomized consistency checks
IDENTITY_TOL = 1e-10
DERIVATIVE_TOL = 1e-6
EIGEN_TOL = 1e-9


def _identities(spec):
    n = spec.get("n_instances")
    rows = []
    for name, val in identity_residuals(n, spec.seed).items():
        rows.append([name, n, val, IDENTITY_TOL, val <= IDENTITY_TOL])
    n3 = max(1, n // 10)
    r3 = phase_derivative_residual(n3, spec.seed)
    rows.append(["phase_derivative", n3, r3, DERIVATIVE_TOL, r3 <= DERIVATIVE_TOL])
    n4 = max(1, n // 5)
    bad = count_mismatches(n4, spec.seed)
    rows.append(["count_vs_sturm", n4, float(bad), 0.0, bad == 0])
    ev = eigenvalue_discrepancy(max(1, n // 50), spec.seed)
    for name, val in ev.items():
        rows.append([f"eigenvalues_vs_{name}", max(1, n // 50), val, EIGEN_TOL,
                     val <= EIGEN_TOL])
    failed = [r[0] for r in rows if not r[4]]
    return rows, "all checks passed" if not failed else "failed: " + ", ".join(failed)


_RUNNERS = {"critical_scan": _critical_scan, "lyapunov_sweep": _lyapunov,
            "ids_sweep": _ids, "levels": _levels, "deviations": _deviations,
            "transport": _transport, "transport_exponents": _exponents,
            "identities": _identities}


def run(spec: ExperimentSpec, seed: int | None = None, workers: int | None = None) -> Report:
    """Run the experiment; ``seed`` and ``workers`` override the spec."""
    params = dict(spec.params)
    if seed is not None:
        params["seed"] = int(seed)
    if workers is not None:
        params["workers"] = int(workers)
    spec = replace(spec, params=params)
    rows, summary = _RUNNERS[spec.kind](spec)
    return Report(spec.kind, SCHEMAS[spec.kind], rows, f"{spec.kind}: {summary}")


def write_report(report: Report, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_csv())
    return path


def output_path(spec: ExperimentSpec, out_dir=None, key="csv", suffix=".csv") -> Path:
    """Where the report goes: the spec's ``[output]`` entry, or ``<kind><suffix>``, under ``out_dir``."""
    name = spec.output.get(key)
    if name is None:
        stem = Path(spec.source).stem if spec.source else spec.kind
        name = stem + suffix
    p = Path(name)
    if out_dir is not None and not p.is_absolute():
        p = Path(out_dir) / p
    return p
