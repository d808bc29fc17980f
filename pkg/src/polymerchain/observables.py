"""Lyapunov exponent, integrated density of states and finite volume statistics.

Monte Carlo estimators are paired with the perturbative formulas valid near a
critical energy.  Every estimator draws configuration ``i`` from the stream
``(seed, i)`` and reduces per-sample values in sample order, so results do
not depend on how the work was split across processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from numba import njit
from scipy.spatial import ConvexHull, QhullError

from .critical import (CriticalFrame, first_order, reflection_coefficients,
                       require_regular)
from .errors import AnomalousAngles, ValidationError
from .model import MINUS, PLUS, PolymerEnsemble, random_window, sample_signs
from .parallel import map_blocks
from .phase_flow import sign_index
from .pruefer import (_phase_end, count_eigenvalues_below, eigenvalues_by_index,
                      eigenvector)
from .transfer import polymer_transfer


class WindowTooNarrow(ValidationError):
    pass


@dataclass
class EstimateWithError:
    value: float
    std_error: float
    n_samples: int
    meta: dict = field(default_factory=dict)
    samples: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, x, **meta):
        x = np.asarray(x, dtype=float)
        se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
        return cls(float(x.mean()), se, int(x.size), meta, x)


def theta_nodes(n: int = 64) -> np.ndarray:
    """Midpoint nodes on ``[0, pi)``; no node sits on ``0`` or ``pi/2``."""
    return (np.arange(n) + 0.5) * math.pi / n


@njit(cache=True)
def _log_norm_growth(mats, idx, thetas):
    """Per sample, the theta-average of log |A_{w_{k-1}} ... A_{w_0} e_theta|."""
    ns, k = idx.shape
    nt = thetas.size
    out = np.empty(ns)
    for s in range(ns):
        tot = 0.0
        for q in range(nt):
            x = math.cos(thetas[q])
            y = math.sin(thetas[q])
            acc = 0.0
            for l in range(k):
                m = mats[idx[s, l]]
                xn = m[0, 0] * x + m[0, 1] * y
                yn = m[1, 0] * x + m[1, 1] * y
                x = xn
                y = yn
                if (l & 7) == 7:
                    r = math.hypot(x, y)
                    acc += math.log(r)
                    x /= r
                    y /= r
            acc += math.log(math.hypot(x, y))
            tot += acc
        out[s] = tot / nt
    return out


@njit(cache=True)
def _log_norm_product(mats, idx):
    """Per sample log ||A_{w_{k-1}} ... A_{w_0}|| (operator norm)."""
    ns, k = idx.shape
    out = np.empty(ns)
    for s in range(ns):
        p = np.eye(2)
        acc = 0.0
        for l in range(k):
            p = mats[idx[s, l]] @ p
            if (l & 7) == 7:
                r = np.abs(p).max()
                acc += math.log(r)
                p /= r
        fro = (p * p).sum()
        det = abs(p[0, 0] * p[1, 1] - p[0, 1] * p[1, 0])
        acc += 0.5 * math.log(0.5 * (fro + math.sqrt(max(fro * fro - 4 * det * det, 0.0))))
        out[s] = acc
    return out


def _lyap_block(ensemble, mats, n_polymers, seed, thetas, method, start, stop):
    idx = sign_index(sample_signs(ensemble, n_polymers, seed, np.arange(start, stop)))
    if method == "vector":
        g = _log_norm_growth(mats, idx, thetas)
    else:
        g = _log_norm_product(mats, idx)
    return g / (n_polymers * ensemble.mean_length)


def lyapunov_mc(ensemble: PolymerEnsemble, energy: float, n_polymers: int,
                n_samples: int, seed: int, frame_matrix=None, n_theta: int = 64,
                method: str = "vector", workers: int = 1) -> EstimateWithError:
    """Lyapunov exponent per site from i.i.d. polymer products.

    Parameters
    ----------
    frame_matrix : (2, 2) array, optional
        Conjugate the polymer matrices by ``M``.  The limit is unchanged but
        near a critical energy the rotation frame removes the O(1/k) bias of
        a finite product.
    method : {'vector', 'norm'}
        ``'vector'`` averages ``log |T e_theta|`` over ``n_theta`` midpoint
        nodes; ``'norm'`` uses the operator norm of the product.
    """
    M = np.eye(2) if frame_matrix is None else np.asarray(frame_matrix, dtype=float)
    Minv = np.linalg.inv(M)
    mats = np.array([M @ polymer_transfer(ensemble.polymer(s), energy) @ Minv
                     for s in (PLUS, MINUS)])
    fn = partial(_lyap_block, ensemble, mats, int(n_polymers), int(seed),
                 theta_nodes(n_theta), method)
    x = map_blocks(fn, n_samples, workers)
    return EstimateWithError.from_samples(
        x, estimator=f"lyapunov_{method}", energy=energy, n_polymers=n_polymers)


@dataclass
class LyapunovFormula:
    leading: float
    intermediate: float
    random_phase: float
    b_max: float


def lyapunov_formula(frame: CriticalFrame, eps: float) -> LyapunovFormula:
    """Second order Lyapunov exponent at ``E_c + eps``.

    ``leading`` is ``2 p+ p- |b+ sin eta- - b- sin eta+|^2 / (<L> |1 - <e^{2i eta}>|^2)``
    and ``intermediate`` the equivalent form split into a random phase part
    ``<|b|^2>/(2<L>)`` and a correlation part; both agree to O(|b|^3).
    """
    require_regular(frame)
    ens = frame.ensemble
    co = reflection_coefficients(frame, eps)
    b = co.b
    eta = {s: frame.eta[s] + math.remainder(co.eta(s) - frame.eta[s], 2 * math.pi)
           for s in (PLUS, MINUS)}
    e2 = ens.average(np.exp(2j * eta[PLUS]), np.exp(2j * eta[MINUS]))
    if abs(1 - e2) < 1e-12:
        raise AnomalousAngles("<exp(2 i eta^eps)> = 1")
    L = ens.mean_length
    num = abs(b[PLUS] * math.sin(eta[MINUS]) - b[MINUS] * math.sin(eta[PLUS])) ** 2
    leading = 2 * ens.p_plus * ens.p_minus / L * num / abs(1 - e2) ** 2
    ei = {s: np.exp(1j * eta[s]) for s in (PLUS, MINUS)}
    x = ens.average(b[PLUS] * ei[PLUS], b[MINUS] * ei[MINUS])
    y = ens.average(np.conj(b[PLUS]) * ei[PLUS], np.conj(b[MINUS]) * ei[MINUS])
    rpa = ens.average(abs(b[PLUS]) ** 2, abs(b[MINUS]) ** 2) / (2 * L)
    inter = rpa + float(np.real(x * y / (1 - e2))) / L
    return LyapunovFormula(float(leading), float(inter), float(rpa),
                           float(max(abs(b[PLUS]), abs(b[MINUS]))))


def _ids_block(ensemble, energies, N, seed, start, stop):
    out = np.empty((stop - start, energies.size))
    for row, i in enumerate(range(start, stop)):
        w = random_window(ensemble, 0, N - 1, seed, i, stationary=True)
        th, _ = _phase_end(w.t, w.v, energies, 0.0)
        out[row] = th / (math.pi * N)
    return out


def ids_samples(ensemble: PolymerEnsemble, energies, N: int, n_samples: int,
                seed: int, workers: int = 1) -> np.ndarray:
    """Per sample ``theta(N)/(pi N)``, shape ``(n_samples, len(energies))``."""
    e = np.atleast_1d(np.asarray(energies, dtype=float))
    fn = partial(_ids_block, ensemble, e, int(N), int(seed))
    return map_blocks(fn, n_samples, workers)


def ids_mc(ensemble: PolymerEnsemble, energy, N: int, n_samples: int, seed: int,
           workers: int = 1):
    """IDS from the Pruefer winding on ``N``-site windows of the stationary chain.

    Common random numbers are used across energies.  Returns one
    ``EstimateWithError`` for scalar ``energy`` and a list otherwise.
    """
    x = ids_samples(ensemble, energy, N, n_samples, seed, workers)
    ests = [EstimateWithError.from_samples(x[:, j], estimator="ids_pruefer",
                                           energy=float(e), N=N)
            for j, e in enumerate(np.atleast_1d(energy))]
    return ests[0] if np.ndim(energy) == 0 else ests


def ids_slope_mc(ensemble: PolymerEnsemble, center: float, eps: float, N: int,
                 n_samples: int, seed: int, workers: int = 1) -> EstimateWithError:
    """Symmetric difference ``(N(E+eps) - N(E-eps)) / (2 eps)`` with paired samples."""
    x = ids_samples(ensemble, [center - eps, center + eps], N, n_samples, seed, workers)
    return EstimateWithError.from_samples((x[:, 1] - x[:, 0]) / (2 * eps),
                                          estimator="ids_slope", center=center, eps=eps)


@dataclass
class IDSFormula:
    constant: float
    slope: float
    eps: float

    @property
    def value(self) -> float:
        return self.constant + self.eps * self.slope


def ids_formula(frame: CriticalFrame, eps: float = 0.0) -> IDSFormula:
    """First order IDS ``(<eta> + eps <d>) / (pi <L>)`` with lifted polymer angles."""
    require_regular(frame, second=False)
    ens = frame.ensemble
    _, d = first_order(frame)
    L = ens.mean_length
    const = ens.average(frame.eta_lift[PLUS], frame.eta_lift[MINUS]) / (math.pi * L)
    slope = ens.average(d[PLUS], d[MINUS]) / (math.pi * L)
    return IDSFormula(float(const), float(slope), float(eps))


# --- finite volume level statistics -------------------------------------------------

@dataclass
class LevelSample:
    eigenvalues: np.ndarray
    spacing_min: float
    spacing_max: float
    spread_min: float
    spread_max: float

    @property
    def required_constant(self) -> float:
        """Smallest ``C`` for which both two-sided bounds hold (in units of ``N``)."""
        return max(self.spacing_max, 1 / self.spacing_min,
                   self.spread_max, 1 / self.spread_min)


@dataclass
class LevelReport:
    N: int
    alpha: float
    window: tuple
    samples: list
    constant: float | None = None

    @property
    def required(self) -> np.ndarray:
        return np.array([s.required_constant for s in self.samples])

    @property
    def counts(self) -> np.ndarray:
        return np.array([s.eigenvalues.size for s in self.samples])

    def passes(self, C: float | None = None) -> np.ndarray:
        C = self.constant if C is None else C
        return self.required <= C

    def pass_fraction(self, C: float | None = None) -> float:
        return float(np.mean(self.passes(C)))

    @property
    def spacing_ratio(self) -> np.ndarray:
        return np.array([s.spacing_max / s.spacing_min for s in self.samples])


def level_sample(window, lo: float, hi: float) -> LevelSample:
    """Eigenvalues in ``[lo, hi)`` of one window and their spacing/spreading.

    Spacings and the eigenfunction weights ``|psi(k-1)|^2 + |psi(k)|^2`` are
    multiplied by ``N``.
    """
    N = window.size
    n_lo, n_hi = count_eigenvalues_below(window, np.array([lo, hi]))
    if n_hi - n_lo < 3:
        raise WindowTooNarrow(f"only {n_hi - n_lo} eigenvalues in [{lo}, {hi}]")
    ev = eigenvalues_by_index(window, np.arange(n_lo + 1, n_hi + 1), (lo, hi))
    sp = np.diff(ev) * N
    smin, smax = np.inf, 0.0
    for e in ev:
        psi = eigenvector(window, e, tol=1e-6)
        w2 = psi ** 2
        weight = w2 + np.concatenate(([0.0], w2[:-1]))
        smin = min(smin, weight.min() * N)
        smax = max(smax, weight.max() * N)
    return LevelSample(ev, float(sp.min()), float(sp.max()), float(smin), float(smax))


def _level_block(ensemble, N, lo, hi, seed, start, stop):
    out = []
    for i in range(start, stop):
        w = random_window(ensemble, 0, N - 1, seed, i, stationary=True)
        out.append(level_sample(w, lo, hi))
    arr = np.empty(len(out), dtype=object)
    arr[:] = out
    return arr


def level_statistics(frame: CriticalFrame, N: int, alpha: float, n_samples: int,
                     seed: int, C: float | None = None, workers: int = 1) -> LevelReport:
    """Eigenvalue spacing and eigenfunction spreading near ``E_c``.

    The window is ``[E_c - N^{-1/2-alpha}, E_c + N^{-1/2-alpha}]``.
    """
    if alpha <= 0:
        raise ValidationError("alpha must be positive", key="alpha")
    half = N ** (-0.5 - alpha)
    lo, hi = frame.energy - half, frame.energy + half
    fn = partial(_level_block, frame.ensemble, int(N), lo, hi, int(seed))
    samples = list(map_blocks(fn, n_samples, workers, block=16))
    return LevelReport(int(N), float(alpha), (lo, hi), samples, C)


def fit_level_constant(report: LevelReport, quantile: float = 0.975) -> float:
    """Empirical constant ``C`` from a calibration run."""
    return float(np.quantile(report.required, quantile))


# --- transfer matrix boundedness ------------------------------------------------------

@njit(cache=True)
def _hermitian_coords(P):
    """Coordinates of ``P_k^* P_k`` and ``P_k^{-1} P_k^{-*}`` for det-one ``P_k``.

    A Hermitian det-one matrix ``[[h0 + h1, h2 + i h3], [h2 - i h3, h0 - h1]]``
    is stored as ``(h0, h1, h2, h3)``; then ``tr(H Q) = 2 <h, q>`` and
    ``h0 = sqrt(1 + h1^2 + h2^2 + h3^2)``.
    """
    n = P.shape[0]
    X = np.empty((n, 4))
    Y = np.empty((n, 4))
    for k in range(n):
        a = P[k]
        h = a.conj().T @ a
        X[k, 0] = 0.5 * (h[0, 0].real + h[1, 1].real)
        X[k, 1] = 0.5 * (h[0, 0].real - h[1, 1].real)
        X[k, 2] = h[0, 1].real
        X[k, 3] = h[0, 1].imag
        inv = np.empty((2, 2), dtype=np.complex128)
        inv[0, 0] = a[1, 1]
        inv[0, 1] = -a[0, 1]
        inv[1, 0] = -a[1, 0]
        inv[1, 1] = a[0, 0]
        q = inv @ inv.conj().T
        Y[k, 0] = 0.5 * (q[0, 0].real + q[1, 1].real)
        Y[k, 1] = 0.5 * (q[0, 0].real - q[1, 1].real)
        Y[k, 2] = q[0, 1].real
        Y[k, 3] = q[0, 1].imag
    return X, Y


def _hull_candidates(Z):
    """Rows of ``Z`` that can maximise ``<x, z>`` for any ``x`` with ``x0 > 0``.

    ``z0`` is a convex function of the remaining coordinates, so a maximiser
    can always be taken among the vertices of their convex hull.
    """
    rest = Z[:, 1:]
    keep = np.ptp(rest, axis=0) > 1e-12 * max(1.0, float(np.abs(rest).max()))
    rest = rest[:, keep]
    if rest.shape[1] == 0 or Z.shape[0] <= rest.shape[1] + 2:
        return Z
    try:
        hull = ConvexHull(rest)
    except QhullError:
        return np.unique(np.round(Z, 14), axis=0)
    return Z[hull.vertices]


def _pair_scan(X, Y):
    """Largest ``||T(k, m)||`` and a bound on the rounding error of ``||.||^2``."""
    xc, yc = _hull_candidates(X), _hull_candidates(Y)
    best = max(2.0, 2.0 * float(np.max(xc @ yc.T)))
    # 2 <x, y> cancels down from roughly 4 x0 y0
    err = 8.0 * np.finfo(float).eps * float(X[:, 0].max()) * float(Y[:, 0].max())
    return math.sqrt(0.5 * (best + math.sqrt(max(best * best - 4.0, 0.0)))), err / best


@njit(cache=True)
def _sup_norm_chained(mats, idx):
    """``max ||T(k, m)||`` with every product chained forward from ``m``; O(N^2)."""
    n = idx.size
    best = 1.0
    for m in range(n):
        p = np.eye(2, dtype=np.complex128)
        for k in range(m, n):
            p = mats[idx[k]] @ p
            fro = (np.abs(p) ** 2).sum()
            det = abs(p[0, 0] * p[1, 1] - p[0, 1] * p[1, 0])
            s = math.sqrt(0.5 * (fro + math.sqrt(max(fro * fro - 4 * det * det, 0.0))))
            if s > best:
                best = s
    return best


def _prefix(mats, idx):
    n = idx.size
    P = np.empty((n + 1, 2, 2), dtype=np.complex128)
    P[0] = np.eye(2)
    for l in range(n):
        P[l + 1] = mats[idx[l]] @ P[l]
    return P


_prefix_nb = njit(cache=True)(_prefix)


def sup_transfer_norm(mats, idx, rtol: float = 1e-10) -> float:
    """Exact ``sup_{0<=m<=k<=N} ||T(k, m)||`` for a sign index sequence.

    ``||T(k, m)|| = ||T(m, k)||`` in SL(2, C), so the supremum runs over all
    pairs and ``||T(k,m)||_F^2 = 2 <x_k, y_m>`` reduces it to a bilinear
    maximisation.  When the prefix products grow so large that this inner
    product loses more than ``rtol`` to cancellation, the pairs are scanned
    directly instead.
    """
    mats = np.asarray(mats, dtype=np.complex128)
    idx = np.asarray(idx, dtype=np.int64)
    X, Y = _hermitian_coords(_prefix_nb(mats, idx))
    val, rel_err = _pair_scan(X, Y)
    if rel_err > rtol:
        return float(_sup_norm_chained(mats, idx))
    return val


def sup_transfer_norm_bruteforce(mats, idx) -> float:
    """Reference: every ``T(k, m)`` multiplied out, plain numpy."""
    mats = np.asarray(mats)
    best = 1.0
    for m in range(len(idx)):
        A = np.eye(2, dtype=complex)
        for k in range(m, len(idx)):
            A = mats[idx[k]] @ A
            best = max(best, float(np.linalg.norm(A, 2)))
    return best


def two_direction_bound(mats, idx) -> float:
    """Upper bound ``2 (max_k max_{theta=0,pi/2} |T(k,0) e_theta|)^2``.

    Follows from ``||A|| <= sqrt(2) max_{theta in {0, pi/2}} |A e_theta|`` and
    ``T(k, m) = T(k, 0) T(m, 0)^{-1}``.
    """
    P = _prefix_nb(mats, idx)
    cols = np.sqrt(np.abs(P[:, 0, 0]) ** 2 + np.abs(P[:, 1, 0]) ** 2)
    cols2 = np.sqrt(np.abs(P[:, 0, 1]) ** 2 + np.abs(P[:, 1, 1]) ** 2)
    g = float(np.max(np.maximum(cols, cols2)))
    return 2.0 * g * g


def _site_mats(window, z):
    t, v = window.t, window.v
    mats = np.zeros((t.size, 2, 2), dtype=np.complex128)
    mats[:, 0, 0] = (v - z) / t
    mats[:, 0, 1] = -t
    mats[:, 1, 0] = 1.0 / t
    return mats


def _bound_block(ensemble, N, z, level, method, seed, start, stop):
    out = np.empty(stop - start)
    if level == "polymer":
        mats = np.array([polymer_transfer(ensemble.polymer(s), z) for s in (PLUS, MINUS)],
                        dtype=np.complex128)
        idx_all = sign_index(sample_signs(ensemble, N, seed, np.arange(start, stop)))
    for row, i in enumerate(range(start, stop)):
        if level == "polymer":
            m, idx = mats, idx_all[row]
        else:
            w = random_window(ensemble, 0, N - 1, seed, i, stationary=True)
            m, idx = _site_mats(w, z), np.arange(N)
        out[row] = sup_transfer_norm(m, idx) if method == "exact" else \
            two_direction_bound(m, idx)
    return out


@dataclass
class BoundednessReport:
    N: int
    delta: float
    kappa: float
    sup_norms: np.ndarray

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.sup_norms, q))

    def tail(self, threshold: float) -> float:
        return float(np.mean(self.sup_norms > threshold))


def transfer_boundedness_tail(frame: CriticalFrame, N: int, alpha: float,
                              n_samples: int, seed: int, delta: float | None = None,
                              kappa: float = 0.0, level: str = "polymer",
                              method: str = "exact", workers: int = 1) -> BoundednessReport:
    """Distribution of ``sup_{0<=m<=k<=N} ||T^{E_c+delta+i kappa}(k, m)||``.

    ``delta`` defaults to ``N^{-1/2-alpha}``.  ``level='polymer'`` multiplies
    ``N`` polymer matrices from the i.i.d. sequence; ``level='site'`` uses the
    first ``N`` sites of the stationary chain.
    """
    require_regular(frame, second=False)
    if abs(frame.mean_exp(2)) >= 1 - 1e-12:
        raise AnomalousAngles("|<exp(2 i eta)>| = 1")
    delta = N ** (-0.5 - alpha) if delta is None else delta
    z = frame.energy + delta + 1j * kappa
    fn = partial(_bound_block, frame.ensemble, int(N), z, level, method, int(seed))
    x = map_blocks(fn, n_samples, workers, block=16)
    return BoundednessReport(int(N), float(delta), float(kappa), x)
