"""Transfer matrices of the Jacobi recursion.

For a site with hopping ``t`` and potential ``v`` at spectral parameter ``z``

    T = (1/t) [[v - z, -t^2], [1, 0]]

maps ``(t(n) u(n), u(n-1))`` to ``(t(n+1) u(n+1), u(n))`` along a solution of
``H u = z u``.  Every such matrix has determinant one.  Long products are kept
as a mantissa times a power of two so that they never overflow.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InsufficientConfiguration, NumericalOverflow, SingularTransfer
from .model import Configuration, JacobiWindow, Polymer, PolymerEnsemble

_HI, _LO = 2.0 ** 20, 2.0 ** -20


def site_transfer(t: float, v: float, z: complex = 0.0) -> np.ndarray:
    """Single site matrix ``T_{v-z,t}``."""
    if not t > 0:
        raise SingularTransfer(f"hopping must be positive, got {t}")
    dtype = complex if np.iscomplexobj(z) and np.imag(z) != 0 else float
    z = z if dtype is complex else float(np.real(z))
    return np.array([[(v - z) / t, -t], [1.0 / t, 0.0]], dtype=dtype)


def site_transfer_derivative(t: float) -> np.ndarray:
    """Energy derivative of :func:`site_transfer`; it does not depend on ``v``."""
    return np.array([[-1.0 / t, 0.0], [0.0, 0.0]])


def polymer_transfer(polymer: Polymer, z: complex = 0.0) -> np.ndarray:
    """Product ``T_{L-1} ... T_0`` over the polymer sites, site 0 acting first."""
    m = np.eye(2, dtype=complex if np.imag(z) != 0 else float)
    for t, v in zip(polymer.t, polymer.v):
        m = site_transfer(t, v, z) @ m
    return m


def polymer_transfer_derivative(polymer: Polymer, z: complex = 0.0) -> np.ndarray:
    """Exact energy derivative of :func:`polymer_transfer` by the product rule."""
    mats = [site_transfer(t, v, z) for t, v in zip(polymer.t, polymer.v)]
    L = len(mats)
    # prefix[j] = T_{j-1} ... T_0, suffix[j] = T_{L-1} ... T_{j+1}
    dtype = mats[0].dtype
    prefix = [np.eye(2, dtype=dtype)]
    for m in mats[:-1]:
        prefix.append(m @ prefix[-1])
    suffix = [np.eye(2, dtype=dtype)] * L
    acc = np.eye(2, dtype=dtype)
    for j in range(L - 1, -1, -1):
        suffix[j] = acc
        acc = acc @ mats[j]
    out = np.zeros((2, 2), dtype=dtype)
    for j in range(L):
        out += suffix[j] @ site_transfer_derivative(polymer.t[j]) @ prefix[j]
    return out


def norm2x2(a) -> np.ndarray:
    """Operator 2-norm of one or many 2x2 matrices (leading axes broadcast)."""
    a = np.asarray(a)
    fro = np.sum(np.abs(a) ** 2, axis=(-2, -1))
    det = np.abs(a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0])
    disc = np.sqrt(np.maximum(fro * fro - 4.0 * det * det, 0.0))
    return np.sqrt(0.5 * (fro + disc))


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def unit_vector(theta):
    """``e_theta = (cos theta, sin theta)``; a trailing axis of size 2."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


class ScaledProduct:
    """Matrix stored as ``mantissa * 2**exponent``.

    The mantissa is renormalised whenever its largest entry leaves
    ``[2^-20, 2^20]``; :meth:`normalized` brings its norm into
    ``[1/sqrt(2), sqrt(2)]``.
    """

    __slots__ = ("mantissa", "exponent")

    def __init__(self, mantissa=None, exponent: int = 0):
        if mantissa is None:
            mantissa = np.eye(2)
        self.mantissa = np.array(mantissa)
        self.exponent = int(exponent)
        self._rescale()

    def _rescale(self, force=False):
        big = np.max(np.abs(self.mantissa))
        if big == 0.0 or not np.isfinite(big):
            if not np.isfinite(big):
                raise NumericalOverflow("non-finite entry in transfer product")
            return
        if force or big > _HI or big < _LO:
            e = int(round(math.log2(norm2x2(self.mantissa)))) if force else \
                math.frexp(big)[1]
            self.mantissa = self.mantissa * 2.0 ** -e
            self.exponent += e

    def normalized(self) -> "ScaledProduct":
        out = ScaledProduct(self.mantissa.copy(), self.exponent)
        out._rescale(force=True)
        return out

    def left_multiply(self, a) -> "ScaledProduct":
        """In place ``self <- a @ self``."""
        self.mantissa = np.asarray(a) @ self.mantissa
        self._rescale()
        return self

    def __matmul__(self, other):
        if isinstance(other, ScaledProduct):
            return ScaledProduct(self.mantissa @ other.mantissa,
                                 self.exponent + other.exponent)
        return ScaledProduct(self.mantissa @ np.asarray(other), self.exponent)

    def __rmatmul__(self, other):
        return ScaledProduct(np.asarray(other) @ self.mantissa, self.exponent)

    def inverse(self) -> "ScaledProduct":
        m = self.mantissa
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if det == 0:
            raise SingularTransfer("singular transfer product")
        adj = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
        return ScaledProduct(adj / det, -self.exponent)

    @property
    def matrix(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            m = self.mantissa
            if np.iscomplexobj(m):
                out = np.ldexp(m.real, self.exponent) + 1j * np.ldexp(m.imag, self.exponent)
            else:
                out = np.ldexp(m, self.exponent)
        if not np.all(np.isfinite(out)):
            raise NumericalOverflow(
                f"transfer product of size 2^{self.exponent} overflows")
        return out

    @property
    def log_norm(self) -> float:
        return math.log(float(norm2x2(self.mantissa))) + self.exponent * math.log(2.0)

    def log_norm_on(self, vector) -> float:
        w = self.mantissa @ np.asarray(vector)
        return math.log(float(np.linalg.norm(w))) + self.exponent * math.log(2.0)

    @property
    def log_abs_det(self) -> float:
        # cancellation: only meaningful while the product is well conditioned
        m = self.mantissa
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        return math.log(abs(det)) + 2 * self.exponent * math.log(2.0)

    def __repr__(self):
        return f"ScaledProduct(2^{self.exponent} * {self.mantissa.tolist()})"


def window_transfer(window: JacobiWindow, z: complex, n: int, k: int) -> ScaledProduct:
    """Site level ``T^z(n, k) = T_{n-1} ... T_k``; the inverse of ``T^z(k, n)`` if ``n < k``."""
    if n < k:
        return window_transfer(window, z, k, n).inverse()
    if k < window.n_min or n - 1 > window.n_max:
        raise InsufficientConfiguration(
            f"sites [{k}, {n}) not inside window [{window.n_min}, {window.n_max}]")
    prod = ScaledProduct(np.eye(2, dtype=complex if np.imag(z) != 0 else float))
    for j in range(k - window.n_min, n - window.n_min):
        prod.left_multiply(site_transfer(window.t[j], window.v[j], z))
    return prod


def polymer_matrices(ensemble: PolymerEnsemble, z: complex = 0.0):
    """``{+1: T_+^z, -1: T_-^z}``."""
    return {1: polymer_transfer(ensemble.plus, z), -1: polymer_transfer(ensemble.minus, z)}


def product(config: Configuration, ensemble: PolymerEnsemble, z: complex,
            k: int, m: int) -> ScaledProduct:
    """Polymer level ``T(k, m) = T_{omega_{k-1}} ... T_{omega_m}``.

    For ``k < m`` this is the inverse of ``T(m, k)``.
    """
    if k < m:
        return product(config, ensemble, z, m, k).inverse()
    mats = polymer_matrices(ensemble, z)
    prod = ScaledProduct(np.eye(2, dtype=mats[1].dtype))
    for s in config.block(m, k):
        prod.left_multiply(mats[int(s)])
    return prod


def sign_product(signs, mats) -> ScaledProduct:
    """Product ``T_{s[-1]} ... T_{s[0]}`` for a sign sequence."""
    prod = ScaledProduct(np.eye(2, dtype=mats[1].dtype))
    for s in signs:
        prod.left_multiply(mats[int(s)])
    return prod
