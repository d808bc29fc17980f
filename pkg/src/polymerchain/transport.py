"""Time-averaged moments of the position operator.

For a wave packet started on site 0 the exponentially averaged moments are

    M_q(T) = int_0^inf (dt/T) exp(-t/T) <0| e^{iHt} |X|^q e^{-iHt} |0>.

Three independent routes are provided:

* ``green``: the resolvent identity
  ``M_q(T) = (1/(2 pi T)) sum_n |n|^q int dE |G^{E + i/(2T)}(n)|^2``
  with the Green's column obtained from stable continued fraction ratios and
  the energy integral done by adaptive Gauss-Legendre panels;
* ``oracle``: exact evaluation in the eigenbasis of a truncated operator,
  where the time average becomes a Lorentzian weight on level differences;
* ``propagation``: Chebyshev time evolution of the packet, with the time
  average integrated exactly against the piecewise linear sampled moments.

Growth exponents are least squares slopes of ``log M_q`` against
``q log T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from numba import njit
from scipy.linalg import eigh_tridiagonal
from scipy.special import gammaincc, gamma as gamma_fn, jv

from .errors import (FrontEscape, InsufficientRange, InsufficientWindow,
                     QuadratureUnderResolved, SingularSystem, ValidationError)
from .model import (JacobiWindow, PolymerEnsemble, assemble,
                    periodic_configuration, random_window)
from .pruefer import spectral_bounds

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


# --------------------------------------------------------------------------
# Green's column


@njit(cache=True)
def _column(t, v, i0, z, out):
    """Solve the Dirichlet system ``(H - z) G = delta_{i0}`` into ``out``.

    Ratios ``G(i)/G(i-1)`` (right of ``i0``) and ``G(i)/G(i+1)`` (left) are
    obtained by backward continued fractions, which are stable for
    ``Im z > 0``.
    """
    n = t.size
    r = 0.0 + 0.0j
    for i in range(n - 1, i0, -1):
        tr = t[i + 1] * r if i + 1 < n else 0.0j
        r = t[i] / ((v[i] - z) - tr)
        out[i] = r
    l = 0.0 + 0.0j
    for i in range(0, i0):
        tl = t[i] * l if i > 0 else 0.0j
        l = t[i + 1] / ((v[i] - z) - tl)
        out[i] = l
    d = v[i0] - z
    if i0 + 1 < n:
        d -= t[i0 + 1] * out[i0 + 1]
    if i0 > 0:
        d -= t[i0] * out[i0 - 1]
    out[i0] = 1.0 / d
    for i in range(i0 + 1, n):
        out[i] = out[i] * out[i - 1]
    for i in range(i0 - 1, -1, -1):
        out[i] = out[i] * out[i + 1]


@njit(cache=True)
def _moment_integrand(t, v, i0, energies, eta, qs, inner):
    """``sum_n |n|^q |G(n)|^2`` per energy and exponent.

    Returns an array ``(n_E, n_q, 2)``; the last axis holds the full sum and
    the sum restricted to ``|n| <= inner`` (for truncation control).
    """
    n = t.size
    nq = qs.size
    out = np.zeros((energies.size, nq, 2))
    g = np.empty(n, dtype=np.complex128)
    pw = np.empty((n, nq))
    for i in range(n):
        d = abs(i - i0)
        for k in range(nq):
            pw[i, k] = 1.0 if qs[k] == 0.0 else (0.0 if d == 0 else d ** qs[k])
    for e in range(energies.size):
        _column(t, v, i0, energies[e] + 1j * eta, g)
        for i in range(n):
            a = g[i].real * g[i].real + g[i].imag * g[i].imag
            inside = abs(i - i0) <= inner
            for k in range(nq):
                c = pw[i, k] * a
                out[e, k, 0] += c
                if inside:
                    out[e, k, 1] += c
    return out


@dataclass
class GreenColumn:
    """Values ``G^z(n) = <n|(H - z)^{-1}|0>`` of a Dirichlet truncation.

    ``values[i]`` belongs to site ``n_min + i``; ``radius`` is the distance
    from the origin to the nearer truncation edge.
    """

    z: complex
    n_min: int
    values: np.ndarray
    radius: int
    window: JacobiWindow = field(repr=False)

    def at(self, n):
        return self.values[np.asarray(n) - self.n_min]

    def residuals(self) -> np.ndarray:
        """``(H - z) G - delta_0`` on every site of the truncation."""
        w, g = self.window, self.values
        res = (w.v - self.z) * g
        res[:-1] -= w.t[1:] * g[1:]
        res[1:] -= w.t[1:] * g[:-1]
        res[-self.n_min] -= 1.0
        return res


def green_column(window: JacobiWindow, z: complex, radius: int | None = None) -> GreenColumn:
    """Green's function column at the origin of the window restricted to ``[-radius, radius]``.

    Parameters
    ----------
    window : JacobiWindow
        Must contain the origin (and ``[-radius, radius]`` if given).
    z : complex
        Spectral parameter with ``Im z > 0``.
    radius : int, optional
        Truncation radius; by default the whole window is used.
    """
    z = complex(z)
    if not z.imag > 0:
        raise SingularSystem(f"need Im z > 0, got {z}")
    if radius is not None:
        if -radius < window.n_min or radius > window.n_max:
            raise InsufficientWindow(
                f"window [{window.n_min}, {window.n_max}] does not cover "
                f"[-{radius}, {radius}]")
        window = window.sub(-radius, radius)
    if not window.n_min <= 0 <= window.n_max:
        raise InsufficientWindow("window must contain the origin")
    g = np.empty(window.size, dtype=complex)
    _column(window.t, window.v, -window.n_min, z, g)
    if not np.all(np.isfinite(g)):
        raise SingularSystem("Green's column overflowed")
    rad = min(-window.n_min, window.n_max)
    return GreenColumn(z, window.n_min, g, rad, window)


def free_green_origin(z: complex) -> complex:
    """``G^z(0)`` of the free chain ``t = 1, v = 0``: ``1/sqrt(z^2 - 4)`` with ``Im > 0``."""
    z = complex(z)
    g = 1.0 / np.sqrt(z * z - 4.0)
    return complex(g if g.imag > 0 else -g)


# --------------------------------------------------------------------------
# Energy quadrature


@dataclass
class QuadratureResult:
    """Energy integral of the moment integrand.

    ``value`` and ``inner`` have one entry per exponent; ``error`` is the
    estimated absolute quadrature error.
    """

    value: np.ndarray
    inner: np.ndarray
    error: np.ndarray
    n_energies: int


def _gl_panels(fn, a, b):
    """Eight point Gauss-Legendre sum on each panel ``[a_i, b_i]``."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    f = fn(x)
    f = f.reshape((a.size, _GL_X.size) + f.shape[1:])
    w = (half[:, None] * _GL_W[None, :]).reshape((a.size, _GL_X.size) + (1,) * (f.ndim - 2))
    return np.sum(f * w, axis=1), x.size


def _adaptive_pairs(fn, lo, hi, width, rtol, max_depth):
    """Adaptive panel integration of a vector valued ``fn`` on ``[lo, hi]``.

    Every panel is compared with the sum over its two halves.  Panels whose
    difference exceeds their width share of ``rtol`` times the running
    integral are split again; accepted panels contribute the finer value.
    """
    n = max(1, int(math.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, n + 1)
    a, b = edges[:-1], edges[1:]
    coarse, evals = _gl_panels(fn, a, b)
    total = np.zeros(coarse.shape[1:])
    err = np.zeros(coarse.shape[1:])
    estimate = np.abs(coarse.sum(axis=0))
    extra = (1,) * (coarse.ndim - 1)
    for _ in range(max_depth + 1):
        m = 0.5 * (a + b)
        left, k1 = _gl_panels(fn, a, m)
        right, k2 = _gl_panels(fn, m, b)
        evals += k1 + k2
        fine = left + right
        diff = np.abs(fine - coarse)
        estimate = np.maximum(estimate, np.abs(total + fine.sum(axis=0)))
        share = ((b - a) / (hi - lo)).reshape((-1,) + extra)
        tol = rtol * share * np.maximum(estimate, 1e-300)
        ok = np.all(diff <= tol, axis=tuple(range(1, diff.ndim)))
        total += fine[ok].sum(axis=0)
        err += diff[ok].sum(axis=0)
        if np.all(ok):
            return total, err, evals
        bad = ~ok
        a = np.concatenate([a[bad], m[bad]])
        b = np.concatenate([m[bad], b[bad]])
        coarse = np.concatenate([left[bad], right[bad]])
    raise QuadratureUnderResolved(
        f"energy quadrature did not reach rtol={rtol} after {max_depth} refinements")


def moment_green(window: JacobiWindow, q, T: float, rtol: float = 1e-4,
                 panels_per_width: float = 1.0, max_depth: int = 12,
                 full_output: bool = False):
    """``M_q(T)`` of the Dirichlet window from the resolvent identity.

    The energy integral runs over the Gershgorin hull with panels of width
    ``1/(panels_per_width T)`` (the Lorentzian width of ``|G|^2``) and over
    the two unbounded tails with ``E = edge +- eta tan(phi)``.

    Parameters
    ----------
    window : JacobiWindow
        Must contain the origin.
    q : float or array_like
        Moment exponent(s), ``q >= 0``.
    T : float
        Time scale, ``T > 0``.
    rtol : float
        Relative accuracy requested from the energy quadrature.
    full_output : bool
        If true return a :class:`QuadratureResult` (already divided by
        ``2 pi T``) instead of the moment value(s).
    """
    if not T > 0:
        raise ValidationError(f"T must be positive, got {T}", key="T")
    qs = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(qs < 0):
        raise ValidationError("moment exponent must be nonnegative", key="q")
    if not window.n_min <= 0 <= window.n_max:
        raise InsufficientWindow("window must contain the origin")
    eta = 0.5 / T
    i0 = -window.n_min
    inner = max(1, min(-window.n_min, window.n_max) // 2)
    t, v = window.t, window.v

    def f_energy(e):
        return _moment_integrand(t, v, i0, e, eta, qs, inner)

    lo, hi = spectral_bounds(window)
    width = 1.0 / (panels_per_width * T)
    val, err, n_ev = _adaptive_pairs(f_energy, lo, hi, width, rtol, max_depth)

    # tails: E = hi + eta tan(phi) and E = lo - eta tan(phi), phi in [0, pi/2)
    def f_tail_hi(phi):
        return f_energy(hi + eta * np.tan(phi)) * (eta / np.cos(phi) ** 2)[:, None, None]

    def f_tail_lo(phi):
        return f_energy(lo - eta * np.tan(phi)) * (eta / np.cos(phi) ** 2)[:, None, None]

    for fn in (f_tail_hi, f_tail_lo):
        tv, te, k = _adaptive_pairs(fn, 0.0, 0.5 * math.pi, math.pi / 32, rtol, max_depth)
        val += tv
        err += te
        n_ev += k
    norm = 1.0 / (2.0 * math.pi * T)
    res = QuadratureResult(val[:, 0] * norm, val[:, 1] * norm, err[:, 0] * norm, n_ev)
    if full_output:
        return res
    return float(res.value[0]) if np.ndim(q) == 0 else res.value


# --------------------------------------------------------------------------
# Eigenbasis oracle


def _check_front(window: JacobiWindow, T: float):
    hop = float(np.max(window.t[1:])) if window.size > 1 else 0.0
    if window.size < 4.0 * T * hop:
        raise FrontEscape(
            f"{window.size} sites cannot hold the ballistic front for T={T} "
            f"(need at least {4.0 * T * hop:.0f})")


def moment_spectral_oracle(window: JacobiWindow, q, T, cesaro: bool = False,
                           check_front: bool = True):
    """``M_q(T)`` of the Dirichlet window from its full eigendecomposition.

    With ``a_j(n) = psi_j(n) psi_j(0)`` the time average of
    ``|sum_j a_j(n) exp(-i E_j t)|^2`` against ``exp(-t/T) dt/T`` is
    ``sum_{jk} a_j(n) a_k(n) / (1 + T^2 (E_j - E_k)^2)``.  The Cesaro mean
    ``(1/T) int_0^T`` uses ``sinc(T (E_j - E_k))`` instead.

    Parameters
    ----------
    window : JacobiWindow
    q : float or array_like
    T : float or array_like
    cesaro : bool
    check_front : bool
        Raise :class:`FrontEscape` if the window has fewer than
        ``4 T max_hop`` sites.

    Returns
    -------
    ndarray or float
        Shape ``(len(T), len(q))`` squeezed to the inputs.
    """
    Ts = np.atleast_1d(np.asarray(T, dtype=float))
    qs = np.atleast_1d(np.asarray(q, dtype=float))
    if np.any(Ts <= 0):
        raise ValidationError("T must be positive", key="T")
    if not window.n_min <= 0 <= window.n_max:
        raise InsufficientWindow("window must contain the origin")
    if check_front:
        _check_front(window, float(Ts.max()))
    if window.size == 1:
        evals, vecs = window.v.copy(), np.ones((1, 1))
    else:
        evals, vecs = eigh_tridiagonal(window.v, -window.t[1:])
    c = vecs[-window.n_min]
    dist = np.abs(window.sites).astype(float)
    out = np.empty((Ts.size, qs.size))
    de = evals[:, None] - evals[None, :]
    for k, qq in enumerate(qs):
        w = dist ** qq if qq > 0 else np.ones_like(dist)
        # B_jk = sum_n |n|^q psi_j(n) psi_k(n), weighted by psi_j(0) psi_k(0)
        B = (vecs.T * w) @ vecs * np.outer(c, c)
        for i, tt in enumerate(Ts):
            if cesaro:
                kern = np.sinc(tt * de / math.pi)
            else:
                kern = 1.0 / (1.0 + (tt * de) ** 2)
            out[i, k] = float(np.sum(B * kern))
    if np.ndim(T) == 0 and np.ndim(q) == 0:
        return float(out[0, 0])
    if np.ndim(T) == 0:
        return out[0]
    if np.ndim(q) == 0:
        return out[:, 0]
    return out


# --------------------------------------------------------------------------
# Chebyshev propagation


@njit(cache=True)
def _cheb_step(tp, vp, psi, lo, hi, coef, center, scale, tol, p0, p1, acc):
    """Apply ``sum_k coef[k] T_k((H - center)/scale)`` to ``psi`` on ``[lo, hi]``.

    Arrays are padded by one zero site on each side (index ``i + 1`` holds
    site ``i``), so the Dirichlet edges need no branches.  ``p0, p1, acc``
    are work buffers of the padded size and must be zero outside the
    support.  The support grows by one site per term and is trimmed back
    where the result is below ``tol``.  Returns the new ``(lo, hi)``.
    """
    n = psi.size - 2
    K = coef.size
    inv = 1.0 / scale
    a = lo + 1
    b = hi + 1
    for j in range(a, b + 1):
        p0[j] = psi[j]
        p1[j] = 0.0
        acc[j] = coef[0] * psi[j]
    # p1 <- T_1 psi, p0 <- psi; then alternate roles
    na = max(1, a - 1)
    nb = min(n, b + 1)
    for j in range(na, nb + 1):
        h = ((vp[j] - center) * p0[j] - tp[j] * p0[j - 1] - tp[j + 1] * p0[j + 1]) * inv
        p1[j] = h
        acc[j] += coef[1] * h if K > 1 else 0.0
    a, b = na, nb
    cur, prev = p1, p0
    for k in range(2, K):
        na = max(1, a - 1)
        nb = min(n, b + 1)
        ck = coef[k]
        for j in range(na, nb + 1):
            h = ((vp[j] - center) * cur[j] - tp[j] * cur[j - 1] - tp[j + 1] * cur[j + 1]) * inv
            nxt = 2.0 * h - prev[j]
            prev[j] = nxt
            acc[j] += ck * nxt
        a, b = na, nb
        cur, prev = prev, cur
    while a < b and abs(acc[a]) < tol:
        a += 1
    while b > a and abs(acc[b]) < tol:
        b -= 1
    for j in range(lo + 1, hi + 1 + 1):
        psi[j] = 0.0
    lo_all = max(1, lo + 1 - K)
    hi_all = min(n, hi + 1 + K)
    for j in range(lo_all, hi_all + 1):
        if a <= j <= b:
            psi[j] = acc[j]
        p0[j] = 0.0
        p1[j] = 0.0
        acc[j] = 0.0
    return a - 1, b - 1


def _cheb_coefficients(x: float, phase: float) -> np.ndarray:
    """Coefficients of ``exp(-i x y - i phase)`` in Chebyshev polynomials ``T_k(y)``."""
    K = int(math.ceil(x + 12.0 * max(x, 1.0) ** (1.0 / 3.0) + 30))
    k = np.arange(K)
    c = jv(k, x) * (-1j) ** k * 2.0
    c[0] *= 0.5
    keep = np.nonzero(np.abs(c) > 1e-17)[0]
    c = c[: keep[-1] + 1] if keep.size else c[:1]
    return c * np.exp(-1j * phase)


def time_grid(t_max: float, rel: float = 0.02, dt_min: float = 0.25,
              dt_max: float = 50.0) -> np.ndarray:
    """Sampling times ``0 = t_0 < t_1 < ...`` with steps ``clip(rel t, dt_min, dt_max)``."""
    ts = [0.0]
    while ts[-1] < t_max:
        ts.append(ts[-1] + min(max(rel * ts[-1], dt_min), dt_max))
    return np.asarray(ts)


def propagate_moments(window: JacobiWindow, q, times, tol: float = 1e-15):
    """``m_q(t) = <0|e^{iHt} |X|^q e^{-iHt}|0>`` at increasing ``times``.

    Returns
    -------
    m : ndarray, shape (len(times), len(q))
    norm : ndarray
        ``|psi(t)|^2`` at each time; stays 1 up to the trimming tolerance.

    Raises
    ------
    FrontEscape
        If the packet reaches the edge of the window.
    """
    qs = np.atleast_1d(np.asarray(q, dtype=float))
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) < 0):
        raise ValidationError("times must be nonnegative and increasing", key="times")
    if not window.n_min <= 0 <= window.n_max:
        raise InsufficientWindow("window must contain the origin")
    lo_e, hi_e = spectral_bounds(window)
    center, scale = 0.5 * (lo_e + hi_e), 0.5 * (hi_e - lo_e) * 1.01 + 1e-12
    n = window.size
    psi = np.zeros(n + 2, dtype=complex)
    p0, p1, acc = (np.zeros(n + 2, dtype=complex) for _ in range(3))
    tp = np.zeros(n + 2)
    tp[1:n + 1] = window.t
    tp[1] = 0.0
    vp = np.zeros(n + 2)
    vp[1:n + 1] = window.v
    i0 = -window.n_min
    psi[i0 + 1] = 1.0
    lo = hi = i0
    dist = np.abs(window.sites).astype(float)
    m = np.empty((times.size, qs.size))
    norm = np.empty(times.size)
    t_now = 0.0
    for j, tt in enumerate(times):
        dt = tt - t_now
        if dt > 0:
            coef = _cheb_coefficients(scale * dt, center * dt)
            lo, hi = _cheb_step(tp, vp, psi, lo, hi, coef, center, scale, tol, p0, p1, acc)
            t_now = tt
            if (lo == 0 or hi == window.size - 1) and window.size > 1:
                raise FrontEscape(
                    f"packet reached the window edge at t={tt:.6g}; window "
                    f"[{window.n_min}, {window.n_max}] too small")
        p = np.abs(psi[lo + 1:hi + 2]) ** 2
        d = dist[lo:hi + 1]
        norm[j] = p.sum()
        for k, qq in enumerate(qs):
            m[j, k] = np.dot(p, d ** qq) if qq > 0 else norm[j]
    return m, norm


def exponential_average(times, m, T, tail_power=None):
    """``int_0^inf exp(-t/T) m(t) dt/T`` for piecewise linear ``m`` sampled at ``times``.

    Beyond the last sample ``m`` is continued as ``m_end (t/t_end)^p``, with
    ``p`` the log slope over the last factor of two in time unless given.

    Returns
    -------
    value, tail : float
        The average and the part contributed by the continuation.
    """
    times = np.asarray(times, dtype=float)
    m = np.asarray(m, dtype=float)
    ea = np.exp(-times[:-1] / T)
    eb = np.exp(-times[1:] / T)
    h = np.diff(times)
    s = np.diff(m) / h
    body = float(np.sum(m[:-1] * (ea - eb) + s * (T * (ea - eb) - h * eb)))
    t_end, m_end = times[-1], m[-1]
    if tail_power is None:
        j = int(np.searchsorted(times, 0.5 * t_end))
        if 0 < j < times.size - 1 and m[j] > 0 and m_end > 0:
            tail_power = math.log(m_end / m[j]) / math.log(t_end / times[j])
        else:
            tail_power = 0.0
    p = max(0.0, float(tail_power))
    x = t_end / T
    tail = float(m_end * (T / t_end) ** p * gamma_fn(p + 1) * gammaincc(p + 1, x)) if t_end > 0 else 0.0
    return body + tail, tail


def cesaro_average(times, m, T) -> float:
    """``(1/T) int_0^T m(t) dt`` for piecewise linear ``m``; needs ``T <= times[-1]``."""
    times = np.asarray(times, dtype=float)
    m = np.asarray(m, dtype=float)
    if T > times[-1]:
        raise InsufficientRange(f"samples end at t={times[-1]}, before T={T}")
    k = int(np.searchsorted(times, T))
    ts = np.concatenate([times[:k], [T]])
    ms = np.concatenate([m[:k], [np.interp(T, times, m)]])
    return float(np.trapezoid(ms, ts) / T) if hasattr(np, "trapezoid") else float(np.trapz(ms, ts) / T)


# --------------------------------------------------------------------------
# Sources of finite windows


@dataclass(frozen=True)
class ChainSource:
    """Deterministic supplier of windows ``[-radius, radius]`` of one operator.

    Windows for different radii must agree on their overlap.
    """

    make: Callable[[int, int], JacobiWindow]
    max_hop: float
    label: str = ""

    def window(self, radius: int) -> JacobiWindow:
        return self.make(-int(radius), int(radius))


def random_source(ensemble: PolymerEnsemble, seed: int, index: int = 0,
                  stationary: bool = True) -> ChainSource:
    """Random polymer chain number ``index`` of ``seed``."""
    def make(a, b):
        return random_window(ensemble, a, b, seed, index, stationary)
    return ChainSource(make, ensemble.max_hop, f"random(seed={seed}, index={index})")


def periodic_source(ensemble: PolymerEnsemble, pattern, offset: int = 0) -> ChainSource:
    """Chain repeating the sign ``pattern``, e.g. ``[1]`` or ``[1, -1]``."""
    pattern = [int(s) for s in np.atleast_1d(pattern)]
    lmin = min(ensemble.plus.length, ensemble.minus.length)

    def make(a, b):
        k = max(-a, b) // lmin + 2
        return assemble(periodic_configuration(pattern, -k, k, offset), ensemble, a, b)
    return ChainSource(make, ensemble.max_hop, f"periodic({pattern})")


def free_source(hop: float = 1.0, potential: float = 0.0) -> ChainSource:
    """Constant chain ``t = hop``, ``v = potential``."""
    def make(a, b):
        n = b - a + 1
        return JacobiWindow(a, np.full(n, float(hop)), np.full(n, float(potential)))
    return ChainSource(make, float(hop), "free")


# --------------------------------------------------------------------------
# Moment series


@dataclass
class MomentSeries:
    """Pairs ``(T, M_q(T))`` computed by one method.

    ``error`` is the estimated absolute error (quadrature plus truncation for
    ``green``, time tail for ``propagation``, zero for ``oracle``).
    """

    q: float
    T: np.ndarray
    M: np.ndarray
    method: str
    error: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.T = np.asarray(self.T, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        if self.T.shape != self.M.shape:
            raise ValueError("T and M must have the same shape")

    def restrict(self, t_lo: float, t_hi: float) -> "MomentSeries":
        keep = (self.T >= t_lo * (1 - 1e-12)) & (self.T <= t_hi * (1 + 1e-12))
        err = None if self.error is None else self.error[keep]
        return MomentSeries(self.q, self.T[keep], self.M[keep], self.method, err,
                            dict(self.meta))


METHODS = ("green", "oracle", "propagation")


def _green_adaptive(source: ChainSource, q: float, T: float, rtol: float,
                    trunc_rtol: float, start_factor: float, max_doublings: int):
    radius = max(16, int(math.ceil(start_factor * T)))
    for _ in range(max_doublings + 1):
        res = moment_green(source.window(radius), [0.0, q], T, rtol=rtol, full_output=True)
        full, inner = res.value[1], res.inner[1]
        trunc = (full - inner) if full > 0 else 0.0
        if trunc <= trunc_rtol * full:
            return full, res.error[1] + trunc, radius
        radius *= 2
    raise QuadratureUnderResolved(
        f"truncation radius {radius // 2} still leaves {trunc / full:.2%} of M_q at T={T}")


def moment_series(source: ChainSource, q: float, T_values, method: str = "green",
                  rtol: float = 1e-3, trunc_rtol: float = 5e-3,
                  tail_factor: float = 8.0, oracle_factor: float = 8.0,
                  cesaro: bool = False) -> MomentSeries:
    """``M_q(T)`` of the infinite chain behind ``source`` for several ``T``.

    Parameters
    ----------
    source : ChainSource
    q : float
    T_values : array_like
    method : {"green", "oracle", "propagation"}
        ``green`` doubles the truncation radius from ``8 T`` until the mass
        in the outer half of the window is below ``trunc_rtol``.  ``oracle``
        diagonalises a single window of radius ``oracle_factor T_max
        max_hop``; it returns the moments of that truncation, which differ
        from the infinite chain once the packet feels the edges.  ``propagation`` evolves the packet once up
        to ``tail_factor T_max``.
    cesaro : bool
        Use the Cesaro mean instead of the exponential average (``oracle``
        and ``propagation`` only).
    """
    Ts = np.sort(np.atleast_1d(np.asarray(T_values, dtype=float)))
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; expected one of {METHODS}",
                              key="method")
    if np.any(Ts <= 0):
        raise ValidationError("T must be positive", key="T")
    q = float(q)
    meta = {"source": source.label, "cesaro": cesaro}
    if method == "green":
        if cesaro:
            raise ValidationError("the resolvent route only gives the exponential average",
                                  key="cesaro")
        vals, errs, radii = [], [], []
        for T in Ts:
            v, e, r = _green_adaptive(source, q, T, rtol, trunc_rtol, 8.0, 6)
            vals.append(v)
            errs.append(e)
            radii.append(r)
        meta["radius"] = radii
        return MomentSeries(q, Ts, vals, method, np.asarray(errs), meta)
    if method == "oracle":
        radius = int(math.ceil(oracle_factor * Ts.max() * source.max_hop)) + 1
        w = source.window(radius)
        M = moment_spectral_oracle(w, q, Ts, cesaro=cesaro)
        meta["radius"] = radius
        return MomentSeries(q, Ts, M, method, np.zeros_like(Ts), meta)
    t_max = tail_factor * Ts.max() if not cesaro else Ts.max()
    times = time_grid(t_max)
    reach = 2.0 * source.max_hop * t_max
    radius = int(math.ceil(reach + 12.0 * max(reach, 1.0) ** (1.0 / 3.0))) + 64
    m, norm = propagate_moments(source.window(radius), q, times)
    m = m[:, 0]
    if cesaro:
        M = np.array([cesaro_average(times, m, T) for T in Ts])
        err = np.zeros_like(M)
    else:
        pairs = [exponential_average(times, m, T) for T in Ts]
        M = np.array([p[0] for p in pairs])
        err = np.array([p[1] for p in pairs])
    meta.update(radius=radius, t_max=float(times[-1]), norm_defect=float(abs(norm[-1] - 1)))
    return MomentSeries(q, Ts, M, method, err, meta)


# --------------------------------------------------------------------------
# Growth exponents


class ExponentFit(NamedTuple):
    """Least squares exponent ``beta`` and windowed extremes ``beta_minus <= beta_plus``."""

    beta: float
    beta_minus: float
    beta_plus: float


def _slope(x, y):
    return float(np.polyfit(x, y, 1)[0])


def diffusion_exponent(series: MomentSeries, min_points: int = 5,
                       min_decades: float = 1.5,
                       window_decades: float = 0.5) -> ExponentFit:
    """Growth exponent of ``M_q(T) ~ T^{q beta}``.

    ``beta`` is the least squares slope of ``log M`` against ``q log T``;
    ``beta_minus`` and ``beta_plus`` are the smallest and largest slopes over
    runs of consecutive points spanning at least ``window_decades``.

    Raises
    ------
    InsufficientRange
        Fewer than ``min_points`` pairs, or a span below ``min_decades``.
    """
    T, M, q = series.T, series.M, series.q
    if T.size < min_points:
        raise InsufficientRange(f"need at least {min_points} (T, M) pairs, got {T.size}")
    if np.any(M <= 0) or q <= 0:
        raise InsufficientRange("moments and q must be positive to fit an exponent")
    x, y = q * np.log10(T), np.log10(M)
    span = math.log10(T.max() / T.min())
    if span < min_decades - 1e-9:
        raise InsufficientRange(f"T spans {span:.2f} decades, need {min_decades}")
    order = np.argsort(x)
    x, y = x[order], y[order]
    lt = np.log10(T[order])
    slopes = []
    for i in range(x.size):
        j = int(np.searchsorted(lt, lt[i] + window_decades - 1e-12))
        if j >= x.size:
            break
        if j - i + 1 >= 3:
            slopes.append(_slope(x[i:j + 1], y[i:j + 1]))
    beta = _slope(x, y)
    if not slopes:
        slopes = [beta]
    return ExponentFit(beta, min(slopes), max(slopes))


def log_grid(t_lo: float, t_hi: float, n: int) -> np.ndarray:
    """``n`` geometrically spaced values from ``t_lo`` to ``t_hi``."""
    return np.geomspace(t_lo, t_hi, n)
