"""Polymer phase shifts, action multipliers and their random iteration.

In the rotation frame ``M`` of a critical energy each polymer acts on the
projective line through

    rho(theta) e_{S(theta)} = M T^{E_c+eps} M^{-1} e_theta.

Writing ``e_theta`` in the basis ``v = (1, -i)/sqrt(2)``, ``v_bar`` turns this
into the real-linear complex map ``zeta -> a zeta + conj(b) conj(zeta)`` with
``zeta = rho e^{i theta}``.  All orbit routines below iterate that map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.stats import binomtest

from .critical import (CriticalFrame, complex_coefficients, first_order,
                       frame_angle, frame_angle_inverse, require_regular)
from .errors import ExpansionRangeError
from .model import MINUS, PLUS, PolymerEnsemble, sample_signs
from .parallel import map_blocks
from .pruefer import free_phase_lift
from .transfer import polymer_transfer, unit_vector


def sign_index(signs):
    """``+1 -> 0`` and ``-1 -> 1`` for array lookups."""
    return ((1 - np.asarray(signs, dtype=np.int64)) // 2).astype(np.int64)


class PhaseShiftMap:
    """Polymer phase shifts for a frame ``M`` at energy ``E``.

    Parameters
    ----------
    ensemble : PolymerEnsemble
    energy : float
    M : (2, 2) array
        Any SL(2, R) matrix; at a critical energy use the rotation frame.
    eps : float
        Detuning from the reference energy, stored for bookkeeping only.
    frame : CriticalFrame, optional

    Notes
    -----
    ``S - theta`` is lifted by following the free Pruefer phase through the
    polymer at ``theta = 0`` and then continuously in ``theta``.  Because
    ``|b| < |a|`` the variation of ``S - theta`` over ``theta`` is less than
    ``pi``, so the nearest representative to that reference is the lift.
    """

    def __init__(self, ensemble: PolymerEnsemble, energy: float, M=None,
                 eps: float = 0.0, frame: CriticalFrame | None = None):
        self.ensemble = ensemble
        self.energy = float(energy)
        self.M = np.eye(2) if M is None else np.asarray(M, dtype=float)
        self.eps = float(eps)
        self.frame = frame
        Minv = np.linalg.inv(self.M)
        self.A, self.a, self.b, self.ref = {}, {}, {}, {}
        for s in (PLUS, MINUS):
            poly = ensemble.polymer(s)
            A = self.M @ polymer_transfer(poly, self.energy) @ Minv
            self.A[s] = A
            self.a[s], self.b[s] = complex_coefficients(A)
            free0 = frame_angle_inverse(self.M, 0.0)
            free1, _ = free_phase_lift(poly.t, poly.v, self.energy, np.array([free0]))
            self.ref[s] = float(frame_angle(self.M, free1[0]))

    @classmethod
    def at_critical(cls, frame: CriticalFrame, eps: float, max_b: float | None = 0.3):
        """Map at ``E_c + eps``; refuses when ``|b| >= max_b`` (expansions invalid)."""
        out = cls(frame.ensemble, frame.energy + eps, frame.M, eps, frame)
        bmax = max(abs(out.b[PLUS]), abs(out.b[MINUS]))
        if max_b is not None and bmax >= max_b:
            raise ExpansionRangeError(
                f"|b| = {bmax:.3g} at eps = {eps} exceeds the small-eps guard {max_b}")
        return out

    # packed arrays for the numba kernels, index 0 is '+', 1 is '-'
    @property
    def packed(self):
        a = np.array([self.a[PLUS], self.a[MINUS]], dtype=complex)
        b = np.array([self.b[PLUS], self.b[MINUS]], dtype=complex)
        ref = np.array([self.ref[PLUS], self.ref[MINUS]])
        return a, b, ref

    def eta(self, sign: int) -> float:
        """Phase ``eta^eps`` of ``a``, lifted next to the reference angle."""
        return self.ref[sign] + math.remainder(np.angle(self.a[sign]) - self.ref[sign],
                                               2 * math.pi)

    def mean(self, plus_value, minus_value):
        return self.ensemble.average(plus_value, minus_value)

    def mean_exp_eta(self, k: int) -> complex:
        return complex(self.mean(np.exp(1j * k * self.eta(PLUS)),
                                 np.exp(1j * k * self.eta(MINUS))))


def phase_shift(pmap: PhaseShiftMap, sign: int, theta):
    """Phase shift ``S(theta)`` and multiplier ``rho(theta)`` of one polymer."""
    theta = np.asarray(theta, dtype=float)
    a, b, ref = pmap.a[sign], pmap.b[sign], pmap.ref[sign]
    w = a + np.conj(b) * np.exp(-2j * theta)
    shift = np.angle(w) - ref
    shift = ref + np.mod(shift + math.pi, 2 * math.pi) - math.pi
    rho = np.abs(w)
    return theta + shift, rho


def phase_shift_direct(pmap: PhaseShiftMap, sign: int, theta):
    """Same quantities from the matrix action and the Pruefer lift (reference route)."""
    theta = np.asarray(theta, dtype=float)
    poly = pmap.ensemble.polymer(sign)
    free0 = frame_angle_inverse(pmap.M, theta)
    free1, _ = free_phase_lift(poly.t, poly.v, pmap.energy, free0)
    S = frame_angle(pmap.M, free1)
    w = unit_vector(theta) @ pmap.A[sign].T
    return S, np.linalg.norm(w, axis=-1)


def expansion_residuals(pmap: PhaseShiftMap, sign: int, theta):
    """Remainders of the second order expansions of ``log rho^2`` and ``e^{2i(S-theta)}``."""
    theta = np.asarray(theta, dtype=float)
    a, b = pmap.a[sign], pmap.b[sign]
    eta = pmap.eta(sign)
    S, rho = phase_shift(pmap, sign, theta)
    e2 = np.exp(2j * theta)
    ab = a * b
    r_log = np.log(rho ** 2) - (2 * np.real(ab * e2) + abs(b) ** 2 - np.real(ab ** 2 * e2 ** 2))
    approx = (np.exp(2j * eta) + np.conj(b) * np.exp(1j * eta) / e2
              - b * np.exp(3j * eta) * e2)
    r_shift = np.abs(np.exp(2j * (S - theta)) - approx)
    return np.abs(r_log), r_shift


@njit(cache=True)
def _orbit(a, b, ref, idx, theta0):
    """Lifted phases S^0..S^N and log rho along one sign sequence."""
    n = idx.size
    S = np.empty(n + 1)
    logrho = np.empty(n)
    S[0] = theta0
    th = theta0
    for l in range(n):
        k = idx[l]
        w = a[k] + np.conj(b[k]) * np.exp(-2j * th)
        d = math.atan2(w.imag, w.real) - ref[k]
        d = d - 2 * math.pi * math.floor((d + math.pi) / (2 * math.pi))
        th = th + ref[k] + d
        S[l + 1] = th
        logrho[l] = math.log(abs(w))
    return S, logrho


def iterate_shifts(pmap: PhaseShiftMap, signs, theta0: float = 0.0):
    """Orbit ``S^{l+1} = S_{omega_l}(S^l)`` with ``S^0 = theta0``.

    Returns
    -------
    S : ndarray, shape (N+1,)
    log_rho : ndarray, shape (N,)
        ``log rho_{omega_l}(S^l)``; their sum is the log-norm of the rotated
        transfer product applied to ``e_theta0``.
    """
    a, b, ref = pmap.packed
    return _orbit(a, b, ref, sign_index(signs), float(theta0))


@dataclass
class WeylSumTrajectory:
    """Partial sums ``I_k = sum_{l<k} c_{omega_l} e^{2 i j S^l}`` for ``k = 0..N``."""

    partial_sums: np.ndarray
    j: int
    c: dict
    theta0: float
    eps: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.partial_sums)))


def default_weyl_coefficients(pmap: PhaseShiftMap) -> dict:
    if pmap.frame is None:
        raise ValueError("Weyl coefficients default to c from a critical frame")
    return first_order(pmap.frame)[0]


def weyl_sum(pmap: PhaseShiftMap, signs, theta: float = 0.0, j: int = 1,
             c: dict | None = None) -> WeylSumTrajectory:
    """Weyl-type oscillatory sum along one configuration."""
    c = default_weyl_coefficients(pmap) if c is None else c
    S, _ = iterate_shifts(pmap, signs, theta)
    cs = np.where(np.asarray(signs) == PLUS, c[PLUS], c[MINUS])
    terms = cs * np.exp(2j * j * S[:-1])
    partial = np.concatenate(([0.0], np.cumsum(terms)))
    return WeylSumTrajectory(partial, j, dict(c), float(theta), pmap.eps)


def weyl_sum_expectation(pmap: PhaseShiftMap, N: int, c: dict | None = None) -> complex:
    """First order prediction ``N <c> <conj(b) e^{i eta}> / (1 - <e^{2 i eta}>)``."""
    c = default_weyl_coefficients(pmap) if c is None else c
    num = pmap.mean(np.conj(pmap.b[PLUS]) * np.exp(1j * pmap.eta(PLUS)),
                    np.conj(pmap.b[MINUS]) * np.exp(1j * pmap.eta(MINUS)))
    return complex(N * pmap.mean(c[PLUS], c[MINUS]) * num / (1 - pmap.mean_exp_eta(2)))


@njit(cache=True)
def _weyl_max(a, b, cc, idx, theta0, j):
    """max_k |I_k| and the final sum, rows of idx are samples."""
    ns, n = idx.shape
    out = np.empty(ns)
    final = np.empty(ns, dtype=np.complex128)
    for s in range(ns):
        zeta = complex(math.cos(theta0), math.sin(theta0))
        acc = 0.0 + 0.0j
        best = 0.0
        for l in range(n):
            k = idx[s, l]
            u = zeta / abs(zeta)
            acc += cc[k] * u ** (2 * j)
            m = abs(acc)
            if m > best:
                best = m
            zeta = a[k] * u + np.conj(b[k]) * np.conj(u)
        out[s] = best
        final[s] = acc
    return out, final


def _weyl_block(ensemble, a, b, cc, N, seed, theta, j, start, stop):
    signs = sample_signs(ensemble, N, seed, np.arange(start, stop))
    m, _ = _weyl_max(a, b, cc, sign_index(signs), float(theta), int(j))
    return m


def weyl_max_samples(pmap: PhaseShiftMap, N: int, n_samples: int, seed: int,
                     theta: float = 0.0, j: int = 1, c: dict | None = None,
                     workers: int = 1) -> np.ndarray:
    """``max_{k<=N} |I^j_k|`` for ``n_samples`` i.i.d. configurations."""
    from functools import partial
    c = default_weyl_coefficients(pmap) if c is None else c
    a, b, _ = pmap.packed
    cc = np.array([c[PLUS], c[MINUS]], dtype=complex)
    fn = partial(_weyl_block, pmap.ensemble, a, b, cc, int(N), int(seed), theta, j)
    return map_blocks(fn, n_samples, workers)


@dataclass
class TailEstimate:
    fraction: float
    ci_low: float
    ci_high: float
    n_samples: int
    threshold: float
    values: np.ndarray

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.values, q))


def wilson_tail(values, threshold: float) -> TailEstimate:
    values = np.asarray(values)
    hits = int(np.sum(values >= threshold))
    ci = binomtest(hits, values.size).proportion_ci(0.95, method="wilson")
    return TailEstimate(hits / values.size, float(ci.low), float(ci.high),
                        int(values.size), float(threshold), values)


def deviation_tail(frame: CriticalFrame, alpha: float, N: int, n_samples: int,
                   seed: int, delta: float | None = None, theta: float = 0.0,
                   workers: int = 1) -> TailEstimate:
    """Fraction of configurations with ``max_{k<=N} |I^1_k| >= N^{1/2+alpha}``.

    ``delta`` defaults to ``N^{-1/2}``.  ``values`` holds the per-sample
    maxima.
    """
    require_regular(frame, second=False)
    if abs(frame.mean_exp(2)) >= 1 - 1e-12:
        from .errors import AnomalousAngles
        raise AnomalousAngles("|<exp(2 i eta)>| = 1")
    delta = N ** -0.5 if delta is None else delta
    pmap = PhaseShiftMap.at_critical(frame, delta, max_b=None)
    m = weyl_max_samples(pmap, N, n_samples, seed, theta, 1, workers=workers)
    return wilson_tail(m, N ** (0.5 + alpha))


@dataclass
class InvariantMoments:
    m2: complex
    m4: complex
    se2: float
    se4: float
    n_steps: int


def invariant_moment_formula(pmap: PhaseShiftMap) -> complex:
    """First order ``int e^{2i theta} d nu = <conj(b) e^{i eta}> / (1 - <e^{2 i eta}>)``."""
    num = pmap.mean(np.conj(pmap.b[PLUS]) * np.exp(1j * pmap.eta(PLUS)),
                    np.conj(pmap.b[MINUS]) * np.exp(1j * pmap.eta(MINUS)))
    return complex(num / (1 - pmap.mean_exp_eta(2)))


@njit(cache=True)
def _moment_orbit(a, b, idx, theta0, burn_in, n_batches):
    zeta = complex(math.cos(theta0), math.sin(theta0))
    n = idx.size
    steps = n - burn_in
    per = steps // n_batches
    m2 = np.zeros(n_batches, dtype=np.complex128)
    m4 = np.zeros(n_batches, dtype=np.complex128)
    for l in range(n):
        u = zeta / abs(zeta)
        if l >= burn_in:
            bi = (l - burn_in) // per
            if bi < n_batches:
                u2 = u * u
                m2[bi] += u2
                m4[bi] += u2 * u2
        k = idx[l]
        zeta = a[k] * u + np.conj(b[k]) * np.conj(u)
    return m2 / per, m4 / per


def invariant_moments(pmap: PhaseShiftMap, burn_in: int = 1000,
                      n_steps: int = 10 ** 6, seed: int = 0,
                      theta0: float = 0.0, n_batches: int = 100) -> InvariantMoments:
    """Time averages of ``e^{2i theta}`` and ``e^{4i theta}`` along one orbit.

    Standard errors come from batch means.
    """
    signs = sample_signs(pmap.ensemble, burn_in + n_steps, seed, [0])[0]
    a, b, _ = pmap.packed
    m2, m4 = _moment_orbit(a, b, sign_index(signs), float(theta0), burn_in, n_batches)

    def se(x):
        return float(np.sqrt((np.var(x.real, ddof=1) + np.var(x.imag, ddof=1)) / x.size))
    return InvariantMoments(complex(m2.mean()), complex(m4.mean()), se(m2), se(m4),
                            n_steps)


def random_phase_lyapunov(pmap: PhaseShiftMap) -> float:
    """Lyapunov exponent if the incoming phases were uniform and independent.

    The uniform average of ``log rho^2`` is exactly ``log(1 + |b|^2)``.
    """
    L = pmap.ensemble.mean_length
    return float(pmap.mean(math.log1p(abs(pmap.b[PLUS]) ** 2),
                           math.log1p(abs(pmap.b[MINUS]) ** 2)) / (2 * L))


def random_phase_lyapunov_mc(pmap: PhaseShiftMap, n_draws: int, seed: int):
    """Monte Carlo of the random phase approximation; returns (mean, stderr)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    theta = rng.uniform(0, np.pi, n_draws)
    plus = rng.random(n_draws) < pmap.ensemble.p_plus
    _, rp = phase_shift(pmap, PLUS, theta)
    _, rm = phase_shift(pmap, MINUS, theta)
    x = np.log(np.where(plus, rp, rm)) / pmap.ensemble.mean_length
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(n_draws))


def correlation_term(pmap: PhaseShiftMap) -> float:
    """Memory contribution ``Re(<b e^{i eta}> <conj(b) e^{i eta}> / (1 - <e^{2 i eta}>)) / <L>``."""
    e = {s: np.exp(1j * pmap.eta(s)) for s in (PLUS, MINUS)}
    x = pmap.mean(pmap.b[PLUS] * e[PLUS], pmap.b[MINUS] * e[MINUS])
    y = pmap.mean(np.conj(pmap.b[PLUS]) * e[PLUS], np.conj(pmap.b[MINUS]) * e[MINUS])
    return float(np.real(x * y / (1 - pmap.mean_exp_eta(2))) / pmap.ensemble.mean_length)
