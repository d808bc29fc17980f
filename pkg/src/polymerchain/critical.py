"""Critical energies and the simultaneous rotation frame.

An energy ``E_c`` is critical when the two polymer transfer matrices commute
and each is either elliptic (``|tr| < 2``) or equal to ``+-1``.  Then a single
``M`` in SL(2, R) turns both into rotations, ``M T_{+-} M^{-1} = R(eta_{+-})``.

Near ``E_c`` the rotated polymer matrices are written in the complex basis
``v = (1, -i)/sqrt(2)``, ``v_bar``:

    M T^{E_c+eps} M^{-1} v = a v + b v_bar,   |a|^2 - |b|^2 = 1,

with ``b = eps exp(-i eta) c + O(eps^2)`` and ``arg a = eta + eps d + O(eps^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .errors import (AnomalousAngles, DegenerateFrame, NotCritical,
                     NoCriticalEnergy, OrderUndetermined)
from .model import PLUS, MINUS, Polymer, PolymerEnsemble
from .pruefer import free_phase_lift
from .transfer import norm2x2, polymer_transfer, polymer_transfer_derivative

V_BASIS = np.array([1.0, -1.0j]) / math.sqrt(2.0)


def classify(T, tol: float = 1e-9) -> str:
    """``'identity'``, ``'minus_identity'``, ``'elliptic'`` or ``'hyperbolic'``.

    Parabolic matrices other than ``+-1`` count as hyperbolic here.
    """
    T = np.asarray(T, dtype=float)
    scale = max(1.0, float(np.max(np.abs(T))))
    if np.max(np.abs(T - np.eye(2))) <= tol * scale:
        return "identity"
    if np.max(np.abs(T + np.eye(2))) <= tol * scale:
        return "minus_identity"
    if abs(np.trace(T)) < 2.0 - tol:
        return "elliptic"
    return "hyperbolic"


def commutator(ensemble: PolymerEnsemble, energy: float) -> np.ndarray:
    a = polymer_transfer(ensemble.plus, energy)
    b = polymer_transfer(ensemble.minus, energy)
    return a @ b - b @ a


def _polymer_poly(polymer: Polymer):
    """Entries of the polymer transfer matrix as coefficient arrays in E."""
    one = np.array([1.0])
    m = [[one, np.array([0.0])], [np.array([0.0]), one]]
    for t, v in zip(polymer.t, polymer.v):
        s = [[np.array([v / t, -1.0 / t]), np.array([-t])],
             [np.array([1.0 / t]), np.array([0.0])]]
        m = [[npoly.polyadd(npoly.polymul(s[i][0], m[0][j]),
                            npoly.polymul(s[i][1], m[1][j]))
              for j in range(2)] for i in range(2)]
    return m


def _commutator_polys(ensemble: PolymerEnsemble):
    a = _polymer_poly(ensemble.plus)
    b = _polymer_poly(ensemble.minus)

    def mul(x, y, i, j):
        return npoly.polyadd(npoly.polymul(x[i][0], y[0][j]),
                             npoly.polymul(x[i][1], y[1][j]))
    # [A, B] is traceless: the (0,0), (0,1), (1,0) entries determine it
    return [npoly.polysub(mul(a, b, i, j), mul(b, a, i, j))
            for i, j in ((0, 0), (0, 1), (1, 0))]


def _polish(p, x, iters=50):
    """Newton on p/p' so that multiple roots converge as fast as simple ones."""
    dp = npoly.polyder(p)
    d2p = npoly.polyder(dp)
    for _ in range(iters):
        f = npoly.polyval(x, p)
        g = npoly.polyval(x, dp)
        if f == 0.0 or g == 0.0:
            break
        h = npoly.polyval(x, d2p)
        denom = g * g - f * h
        if denom == 0.0:
            break
        step = f * g / denom
        x_new = x - step
        if abs(step) <= 1e-16 * max(1.0, abs(x)) or not np.isfinite(x_new):
            x = x_new if np.isfinite(x_new) else x
            break
        x = x_new
    return x


def commuting_energies(ensemble: PolymerEnsemble, interval, tol: float = 1e-9):
    """Real energies in ``interval`` where ``[T_+^E, T_-^E] = 0``.

    The commutator entries are polynomials in ``E``; candidates are the real
    roots of the nonzero entries, polished and then checked against all
    entries.  Returns ``None`` if the commutator vanishes identically.
    """
    lo, hi = interval
    polys = [npoly.polytrim(p, 1e-14 * max(1.0, np.max(np.abs(p)))) for p in
             _commutator_polys(ensemble)]
    live = [p for p in polys if not (p.size == 1 and p[0] == 0.0)]
    if not live:
        return None
    cands = []
    for p in live:
        if p.size < 2:
            continue
        for r in npoly.polyroots(p):
            if abs(r.imag) <= 1e-5 * max(1.0, abs(r.real)):
                cands.append(_polish(p, r.real))
    out = []
    for x in sorted(cands):
        if not lo - tol <= x <= hi + tol:
            continue
        c = commutator(ensemble, x)
        scale = norm2x2(polymer_transfer(ensemble.plus, x)) * norm2x2(
            polymer_transfer(ensemble.minus, x))
        if np.max(np.abs(c)) > 1e-7 * scale:
            continue
        if out and abs(x - out[-1]) <= 1e-7 * max(1.0, abs(x)):
            continue
        out.append(float(x))
    return out


def is_critical(ensemble: PolymerEnsemble, energy: float, tol: float = 1e-9) -> bool:
    kinds = [classify(polymer_transfer(ensemble.polymer(s), energy), tol)
             for s in (PLUS, MINUS)]
    if "hyperbolic" in kinds:
        return False
    c = commutator(ensemble, energy)
    return bool(np.max(np.abs(c)) <= tol * max(1.0, float(norm2x2(c + np.eye(2)))))


def scan_critical(ensemble: PolymerEnsemble, interval=(-np.inf, np.inf),
                  tol: float = 1e-9) -> list[float]:
    """All critical energies in ``interval``, sorted.

    An empty list means there are none.  If the transfer matrices commute at
    every energy the problem is periodic rather than random and
    ``NoCriticalEnergy`` is raised.
    """
    lo, hi = interval
    if not np.isfinite(lo) or not np.isfinite(hi):
        # the spectrum, and hence every elliptic energy, lies in a Gershgorin disc
        r = 2 * ensemble.max_hop + max(np.max(np.abs(ensemble.plus.v)),
                                       np.max(np.abs(ensemble.minus.v))) + 1.0
        lo, hi = max(lo, -r), min(hi, r)
    roots = commuting_energies(ensemble, (lo, hi), tol)
    if roots is None:
        raise NoCriticalEnergy(
            "transfer matrices commute at every energy; the ensemble is not random")
    out = []
    for e in roots:
        kinds = [classify(polymer_transfer(ensemble.polymer(s), e), 1e-7)
                 for s in (PLUS, MINUS)]
        if "hyperbolic" not in kinds:
            out.append(e)
    return out


def frame_angle(M, theta):
    """Lifted angle map ``m`` with ``e_{m(theta)} ~ M e_theta``.

    ``m`` is increasing, ``m(theta + pi) = m(theta) + pi`` and
    ``m(0)`` lies in ``(-pi, pi]``.
    """
    M = np.asarray(M, dtype=float)
    theta = np.asarray(theta, dtype=float)
    base = math.atan2(M[1, 0], M[0, 0])
    k = np.floor(theta / math.pi)
    r = theta - k * math.pi
    x = M[0, 0] * np.cos(r) + M[0, 1] * np.sin(r)
    y = M[1, 0] * np.cos(r) + M[1, 1] * np.sin(r)
    rel = np.mod(np.arctan2(y, x) - base, 2 * math.pi)
    # rel lies in [0, pi); guard the wrap at r -> pi
    rel = np.where(rel >= math.pi + 1e-12, rel - 2 * math.pi, rel)
    return base + rel + k * math.pi


def frame_angle_inverse(M, theta):
    M = np.asarray(M, dtype=float)
    Minv = np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]]) / np.linalg.det(M)
    return frame_angle(Minv, theta)


def _rotation_frame(T):
    """``M`` in SL(2, R) with ``M T M^{-1} = R(eta)`` for elliptic ``T``."""
    c = 0.5 * np.trace(T)
    s = math.copysign(math.sqrt(max(0.0, 1.0 - c * c)), T[1, 0])
    eta = math.atan2(s, c)
    # eigenvector u = x + i y for exp(i eta); columns [x, -y] rotate by eta
    x = np.array([c - T[1, 1], T[1, 0]])
    y = np.array([s, 0.0])
    P = np.column_stack([x, -y])
    det = np.linalg.det(P)
    if not det > 0:
        raise DegenerateFrame(f"rotation frame has det {det}")
    M = np.linalg.inv(P) * math.sqrt(det)
    return M, eta


def _angle_of(R, tol):
    c = 0.5 * (R[0, 0] + R[1, 1])
    s = 0.5 * (R[1, 0] - R[0, 1])
    if max(abs(R[0, 0] - R[1, 1]), abs(R[0, 1] + R[1, 0])) > tol * 10:
        raise NotCritical("polymer matrices are not simultaneously rotations")
    eta = math.atan2(s, c)
    return math.pi if eta <= -math.pi else eta


@dataclass(frozen=True)
class CriticalFrame:
    """Simultaneous rotation frame at a critical energy.

    Attributes
    ----------
    energy : float
    M : ndarray
        SL(2, R) matrix with ``M T_{+-} M^{-1} = R(eta_{+-})``.
    eta : dict
        Principal rotation angles in ``(-pi, pi]``.
    eta_lift : dict
        Lifted rotation angles: the increase of the modified Pruefer phase over
        one polymer.  ``eta_lift / (pi L)`` is the polymer's integrated density
        of states at ``E_c``.
    kind : dict
        ``classify`` result for each polymer.
    """

    ensemble: PolymerEnsemble
    energy: float
    M: np.ndarray
    eta: dict
    eta_lift: dict
    kind: dict

    @property
    def cond(self) -> float:
        return float(np.linalg.cond(self.M))

    def mean_exp(self, k: int) -> complex:
        """``<exp(i k eta)>`` over the ensemble."""
        e = self.ensemble
        return complex(e.average(np.exp(1j * k * self.eta[PLUS]),
                                 np.exp(1j * k * self.eta[MINUS])))


def build_frame(ensemble: PolymerEnsemble, energy: float,
                tol: float = 1e-9) -> CriticalFrame:
    """Rotation frame ``M`` at a critical energy.

    Raises
    ------
    NotCritical
        If the polymer matrices do not commute or one is hyperbolic.
    """
    T = {s: polymer_transfer(ensemble.polymer(s), energy) for s in (PLUS, MINUS)}
    kind = {s: classify(T[s], tol) for s in T}
    if "hyperbolic" in kind.values():
        raise NotCritical(f"polymer matrix is not elliptic or +-1 at E={energy}")
    c = T[PLUS] @ T[MINUS] - T[MINUS] @ T[PLUS]
    scale = float(norm2x2(T[PLUS]) * norm2x2(T[MINUS]))
    if np.max(np.abs(c)) > tol * scale:
        raise NotCritical(f"polymer matrices do not commute at E={energy} "
                          f"(|[T+, T-]| = {np.max(np.abs(c)):.3g})")
    elliptic = [s for s in (PLUS, MINUS) if kind[s] == "elliptic"]
    if elliptic:
        M, _ = _rotation_frame(T[elliptic[0]])
    else:
        M = np.eye(2)
    Minv = np.linalg.inv(M)
    eta = {}
    for s in (PLUS, MINUS):
        eta[s] = _angle_of(M @ T[s] @ Minv, tol * scale)
    if np.linalg.cond(M) > 1e8:
        raise DegenerateFrame(f"frame condition number {np.linalg.cond(M):.3g}")
    eta_lift = {s: _lifted_angle(ensemble.polymer(s), energy, M) for s in (PLUS, MINUS)}
    for s in (PLUS, MINUS):
        if abs(math.remainder(eta_lift[s] - eta[s], 2 * math.pi)) > 1e-6:
            raise DegenerateFrame("lifted and principal rotation angles disagree")
    return CriticalFrame(ensemble, float(energy), M, eta, eta_lift, kind)


def _lifted_angle(polymer: Polymer, energy: float, M, theta: float = 0.0) -> float:
    """``S(theta) - theta`` for the polymer in the frame ``M``, Pruefer-lifted."""
    free0 = frame_angle_inverse(M, theta)
    free1, _ = free_phase_lift(polymer.t, polymer.v, energy, np.array([free0]))
    return float(frame_angle(M, free1[0]) - theta)


def find_critical(ensemble: PolymerEnsemble, interval=(-np.inf, np.inf),
                  near: float | None = None) -> CriticalFrame:
    """Frame at the critical energy in ``interval`` (closest to ``near``)."""
    roots = scan_critical(ensemble, interval)
    if not roots:
        raise NoCriticalEnergy(f"no critical energy in {interval}")
    e = roots[0] if near is None else min(roots, key=lambda x: abs(x - near))
    return build_frame(ensemble, e)


@dataclass(frozen=True)
class Coefficients:
    """``a`` and ``b`` of both polymers at one ``eps``."""

    eps: float
    a: dict
    b: dict

    def eta(self, sign: int) -> float:
        return float(np.angle(self.a[sign]))


def rotated_polymer(frame: CriticalFrame, sign: int, eps: float) -> np.ndarray:
    M = frame.M
    T = polymer_transfer(frame.ensemble.polymer(sign), frame.energy + eps)
    return M @ T @ np.linalg.inv(M)


def complex_coefficients(A):
    """``a = v* A v`` and ``b = v^T A v`` for a real 2x2 matrix ``A``."""
    A = np.asarray(A)
    v = V_BASIS
    return complex(v.conj() @ A @ v), complex(v @ A @ v)


def reflection_coefficients(frame: CriticalFrame, eps: float) -> Coefficients:
    a, b = {}, {}
    for s in (PLUS, MINUS):
        a[s], b[s] = complex_coefficients(rotated_polymer(frame, s, eps))
    return Coefficients(float(eps), a, b)


@dataclass(frozen=True)
class ReflectionData:
    """First order data ``c_{+-}`` and ``d_{+-}`` and the order of ``b``."""

    frame: CriticalFrame
    c: dict
    d: dict
    order: int

    def coefficients(self, eps: float) -> Coefficients:
        return reflection_coefficients(self.frame, eps)


def first_order(frame: CriticalFrame):
    """Exact ``c = exp(i eta) db/deps`` and ``d = d eta/deps`` at ``eps = 0``."""
    M = frame.M
    Minv = np.linalg.inv(M)
    c, d = {}, {}
    for s in (PLUS, MINUS):
        dT = polymer_transfer_derivative(frame.ensemble.polymer(s), frame.energy)
        da, db = complex_coefficients(M @ dT @ Minv)
        eta = frame.eta[s]
        c[s] = complex(np.exp(1j * eta) * db)
        d[s] = float(np.imag(da * np.exp(-1j * eta)))
    return c, d


def critical_order(frame: CriticalFrame, eps_values=(2e-3, 1e-3, 5e-4, 2.5e-4),
                   tol: float = 0.25) -> int:
    """Order ``r`` of vanishing of ``b^eps`` as ``eps -> 0``.

    Fitted from the log-log slope of ``max(|b_+|, |b_-|)``.
    """
    eps = np.asarray(eps_values, dtype=float)
    bmax = np.array([max(abs(x) for x in reflection_coefficients(frame, e).b.values())
                     for e in eps])
    if np.any(bmax <= 0):
        raise OrderUndetermined("b vanishes identically on the sample points")
    slope = np.polyfit(np.log(eps), np.log(bmax), 1)[0]
    r = int(round(slope))
    if abs(slope - r) > tol or r < 1:
        raise OrderUndetermined(f"log-log slope {slope:.3f} is not an integer")
    return r


def reflection_data(frame: CriticalFrame) -> ReflectionData:
    c, d = first_order(frame)
    return ReflectionData(frame, c, d, critical_order(frame))


@dataclass(frozen=True)
class AnomalyReport:
    mean_e2: complex
    mean_e4: complex
    first_anomalous: bool
    second_anomalous: bool

    @property
    def anomalous(self) -> bool:
        return self.first_anomalous or self.second_anomalous


def anomaly_report(frame: CriticalFrame, tol: float = 1e-9) -> AnomalyReport:
    """Whether ``<exp(2 i eta)>`` or ``<exp(4 i eta)>`` equals one."""
    m2, m4 = frame.mean_exp(2), frame.mean_exp(4)
    return AnomalyReport(m2, m4, abs(1 - m2) < tol, abs(1 - m4) < tol)


def require_regular(frame: CriticalFrame, second: bool = True, tol: float = 1e-9):
    rep = anomaly_report(frame, tol)
    if rep.first_anomalous or (second and rep.second_anomalous):
        raise AnomalousAngles(
            f"anomalous rotation angles: <e^(2i eta)> = {rep.mean_e2:.6g}, "
            f"<e^(4i eta)> = {rep.mean_e4:.6g}")
    return rep
