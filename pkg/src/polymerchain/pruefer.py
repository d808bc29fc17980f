"""Pruefer phases, eigenvalue counting and eigenvalue location.

The free Pruefer variables of a solution of ``H u = E u`` are defined by

    (t(n) u(n), u(n-1)) = R(n) (cos theta(n), sin theta(n)),

with the phase lifted so that every site increment lies in
``(-pi/2, 3pi/2)``.  Starting from ``theta(0) = 0`` (Dirichlet condition at the
left end) the number of eigenvalues of the ``N``-site restriction below ``E`` is
``floor(theta(N)/pi + 1/2)`` and the ``j``-th eigenvalue solves
``theta(N) = pi/2 + pi (j - 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import solve_banded

from .errors import NotAnEigenvalue, SolverFailure
from .model import JacobiWindow

HALF_PI = 0.5 * math.pi
TWO_PI = 2.0 * math.pi
_BIG, _SMALL = 1e150, 1e-150


@njit(cache=True)
def _wrap_increment(d):
    # representative of d (mod 2 pi) in (-pi/2, 3 pi/2]
    while d <= -HALF_PI:
        d += TWO_PI
    while d > 3.0 * HALF_PI:
        d -= TWO_PI
    return d


@njit(cache=True)
def _phase_end(t, v, energies, theta0):
    """theta(N) and log R(N) for each energy; the window has N = t.size sites."""
    ne = energies.size
    th_out = np.empty(ne)
    lr_out = np.empty(ne)
    for j in range(ne):
        e = energies[j]
        x = math.cos(theta0)
        y = math.sin(theta0)
        ang = math.atan2(y, x)
        th = theta0
        logr = 0.0
        for n in range(t.size):
            tn = t[n]
            xn = (v[n] - e) / tn * x - tn * y
            yn = x / tn
            new = math.atan2(yn, xn)
            th += _wrap_increment(new - ang)
            ang = new
            r = abs(xn) + abs(yn)
            if r > _BIG or r < _SMALL:
                logr += math.log(r)
                xn /= r
                yn /= r
            x = xn
            y = yn
        th_out[j] = th
        lr_out[j] = logr + math.log(math.hypot(x, y))
    return th_out, lr_out


@njit(cache=True)
def _phase_path(t, v, e, theta0):
    """Full trajectory theta(0..N), log R(0..N)."""
    n_sites = t.size
    th = np.empty(n_sites + 1)
    lr = np.empty(n_sites + 1)
    x = math.cos(theta0)
    y = math.sin(theta0)
    ang = math.atan2(y, x)
    th[0] = theta0
    lr[0] = 0.0
    shift = 0.0
    for n in range(n_sites):
        tn = t[n]
        xn = (v[n] - e) / tn * x - tn * y
        yn = x / tn
        new = math.atan2(yn, xn)
        th[n + 1] = th[n] + _wrap_increment(new - ang)
        ang = new
        r = math.hypot(xn, yn)
        shift += math.log(r)
        lr[n + 1] = shift
        x = xn / r
        y = yn / r
    return th, lr


@njit(cache=True)
def _phase_end_batch(t, v, energies, theta0):
    """Like _phase_end but ``t, v`` are (samples, N) and energies (samples, k)."""
    ns, ne = energies.shape
    th = np.empty((ns, ne))
    lr = np.empty((ns, ne))
    for s in range(ns):
        a, b = _phase_end(t[s], v[s], energies[s], theta0)
        th[s] = a
        lr[s] = b
    return th, lr


def free_phase_lift(t, v, energy, theta0):
    """Lifted free phase after the sites ``t, v`` for an array of initial phases.

    Plain numpy; meant for short blocks such as a single polymer.

    Returns
    -------
    theta : ndarray
        Final lifted phases, same shape as ``theta0``.
    log_r : ndarray
        ``log R`` relative to the unit initial vector.
    """
    theta0 = np.asarray(theta0, dtype=float)
    x, y = np.cos(theta0), np.sin(theta0)
    ang = np.arctan2(y, x)
    th = theta0.copy()
    logr = np.zeros_like(th)
    for tn, vn in zip(np.atleast_1d(t), np.atleast_1d(v)):
        xn = (vn - energy) / tn * x - tn * y
        yn = x / tn
        new = np.arctan2(yn, xn)
        d = np.mod(new - ang + HALF_PI, TWO_PI) - HALF_PI
        d = np.where(d <= -HALF_PI, d + TWO_PI, d)
        th = th + d
        ang = new
        r = np.hypot(xn, yn)
        logr += np.log(r)
        x, y = xn / r, yn / r
    return th, logr


@dataclass
class PhaseTrajectory:
    """Pruefer variables along a window.

    ``theta[n]`` and ``log_r[n]`` refer to the vector entering site
    ``n_min + n`` (``n = 0..N``).  ``u`` holds the solution on the window
    sites scaled by ``exp(-log_u_scale)``.
    """

    energy: float
    n_min: int
    theta: np.ndarray
    log_r: np.ndarray
    u: np.ndarray
    log_u_scale: float
    modified: bool = False

    @property
    def n_sites(self) -> int:
        return self.theta.size - 1


def phase_trajectory(window: JacobiWindow, energy: float, theta0: float = 0.0,
                     frame_matrix=None) -> PhaseTrajectory:
    """Free (or M-modified) Pruefer trajectory through the window.

    Parameters
    ----------
    window : JacobiWindow
    energy : float
    theta0 : float
        Initial free phase; with ``frame_matrix`` given it is the initial
        modified phase instead.
    frame_matrix : (2, 2) array, optional
        If given, return the modified variables
        ``R~ e_{theta~} = M R e_theta`` with ``theta~ = m(theta)``.
    """
    from .critical import frame_angle, frame_angle_inverse
    free0 = theta0 if frame_matrix is None else float(
        frame_angle_inverse(frame_matrix, theta0))
    th, lr = _phase_path(window.t, window.v, float(energy), float(free0))
    # u(n) is the second component of the vector leaving site n
    scale = float(lr[1:].max()) if lr.size > 1 else 0.0
    u = np.exp(lr[1:] - scale) * np.sin(th[1:])
    if frame_matrix is not None:
        M = np.asarray(frame_matrix, dtype=float)
        stretch = np.linalg.norm(np.stack([np.cos(th), np.sin(th)], -1) @ M.T, axis=-1)
        lr = lr + np.log(stretch) - math.log(np.linalg.norm(M @ [math.cos(free0), math.sin(free0)]))
        th = frame_angle(M, th)
    return PhaseTrajectory(float(energy), window.n_min, th, lr, u, scale,
                           frame_matrix is not None)


def phase_at_end(window: JacobiWindow, energies, theta0: float = 0.0):
    """Free phase ``theta(N)`` and ``log R(N)`` for many energies."""
    e = np.atleast_1d(np.asarray(energies, dtype=float))
    return _phase_end(window.t, window.v, e, float(theta0))


def count_eigenvalues_below(window: JacobiWindow, energy) -> np.ndarray | int:
    """Number of eigenvalues of the Dirichlet window strictly below ``energy``."""
    th, _ = phase_at_end(window, energy)
    out = np.floor(th / math.pi + 0.5).astype(np.int64)
    return int(out[0]) if np.ndim(energy) == 0 else out


def spectral_bounds(window: JacobiWindow):
    """Gershgorin interval containing the Dirichlet spectrum."""
    t = np.abs(window.t)
    left = np.concatenate(([0.0], t[1:]))
    right = np.concatenate((t[1:], [0.0]))
    rad = left + right
    return float(np.min(window.v - rad)) - 1e-12, float(np.max(window.v + rad)) + 1e-12


def _bisect_targets(phase_fn, targets, lo, hi, tol, max_iter=200):
    lo = np.full(targets.shape, lo, dtype=float)
    hi = np.full(targets.shape, hi, dtype=float)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if np.all((hi - lo <= tol * np.maximum(1.0, np.abs(mid)))
                  | (mid <= lo) | (mid >= hi)):
            return mid
        below = phase_fn(mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    raise SolverFailure("bisection did not converge")


def eigenvalues_by_index(window: JacobiWindow, indices, bracket=None,
                         tol: float = 1e-14) -> np.ndarray:
    """Eigenvalues ``E_j`` (``j`` counted from 1) of the Dirichlet window.

    Solves ``theta(N; E) = pi/2 + pi (j-1)`` by bisection; the phase is
    strictly increasing in ``E``.
    """
    j = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    if np.any(j < 1) or np.any(j > window.size):
        raise ValueError(f"eigenvalue index must lie in [1, {window.size}]")
    lo, hi = bracket if bracket is not None else spectral_bounds(window)
    targets = HALF_PI + math.pi * (j - 1)
    t, v = window.t, window.v
    return _bisect_targets(lambda e: _phase_end(t, v, e, 0.0)[0],
                           targets.astype(float), lo, hi, tol)


def eigenvalue_by_index(window: JacobiWindow, j: int, bracket=None,
                        tol: float = 1e-14) -> float:
    return float(eigenvalues_by_index(window, [j], bracket, tol)[0])


def eigenvalues_in(window: JacobiWindow, lo: float, hi: float,
                   tol: float = 1e-14) -> np.ndarray:
    """All Dirichlet eigenvalues in ``[lo, hi)``."""
    n_lo, n_hi = count_eigenvalues_below(window, np.array([lo, hi]))
    if n_hi <= n_lo:
        return np.empty(0)
    return eigenvalues_by_index(window, np.arange(n_lo + 1, n_hi + 1), (lo, hi), tol)


def apply_window(window: JacobiWindow, psi) -> np.ndarray:
    """Dirichlet ``H psi`` on the window."""
    psi = np.asarray(psi)
    out = window.v * psi
    off = window.t[1:]
    out[:-1] -= off * psi[1:]
    out[1:] -= off * psi[:-1]
    return out


def eigenvector(window: JacobiWindow, energy: float, tol: float = 1e-8) -> np.ndarray:
    """Normalised Dirichlet eigenvector by inverse iteration.

    Forward shooting amplifies the eigenvalue error exponentially for
    localised states, so the vector is obtained from banded solves of
    ``(H - E) x = b`` instead.

    Raises
    ------
    NotAnEigenvalue
        If the relative residual ``|(H - E) psi|`` exceeds ``tol``.
    """
    n = window.size
    scale = max(1.0, float(np.max(np.abs(window.v)) + 2 * np.max(window.t)))
    ab = np.zeros((3, n))
    ab[0, 1:] = -window.t[1:]
    ab[1] = window.v - energy
    ab[2, :-1] = -window.t[1:]
    psi = np.ones(n) / math.sqrt(n)
    for _ in range(3):
        try:
            x = solve_banded((1, 1), ab, psi)
        except np.linalg.LinAlgError:
            # exactly singular: nudge the shift
            ab[1] -= 1e-14 * scale
            continue
        if not np.all(np.isfinite(x)):
            break
        psi = x / np.linalg.norm(x)
    res = np.linalg.norm(apply_window(window, psi) - energy * psi)
    if not res <= tol * scale:
        raise NotAnEigenvalue(f"residual {res:.3g} at E={energy!r}")
    if psi[np.argmax(np.abs(psi))] < 0:
        psi = -psi
    return psi


def norm_derivative_residual(window: JacobiWindow, energy: float,
                             theta0: float = 0.0, h: float = 1e-6) -> float:
    """Relative mismatch of ``R(N)^2 d theta(N)/dE = sum_l u(l)^2``.

    The derivative is a central finite difference with step ``h``.
    """
    e = np.array([energy - h, energy + h])
    th, _ = _phase_end(window.t, window.v, e, float(theta0))
    dtheta = (th[1] - th[0]) / (2 * h)
    traj = phase_trajectory(window, energy, theta0)
    # sum_l u(l)^2 / R(N)^2 with u(l) = R(l+1) sin theta(l+1)
    lr, th_path = traj.log_r, traj.theta
    rhs = np.sum(np.exp(2 * (lr[1:] - lr[-1])) * np.sin(th_path[1:]) ** 2)
    return abs(dtheta - rhs) / abs(rhs)
