"""Random polymer Jacobi operators.

A polymer is a finite block of hopping amplitudes ``t`` and potential values
``v``.  Two polymers (labelled ``+1`` and ``-1``) are concatenated in an i.i.d.
random order to build the operator

    (H psi)(n) = -t(n+1) psi(n+1) + v(n) psi(n) - t(n) psi(n-1).

Site ``n`` carries the pair ``(t(n), v(n))`` where ``t(n)`` is the hopping
between sites ``n-1`` and ``n``.

Randomness is counter based: every configuration is a pure function of
``(seed, index)``, with separate substreams for the polymers to the right of
the origin, the polymers to the left and the origin polymer itself.  Windows
can therefore be extended on either side without changing what was already
drawn.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientConfiguration, InvalidEnsemble, InvalidPolymer

PLUS, MINUS = 1, -1

_STREAM_RIGHT, _STREAM_LEFT, _STREAM_ORIGIN = 0, 1, 2


@dataclass(frozen=True)
class Polymer:
    """Finite block of hopping amplitudes and potential values.

    Parameters
    ----------
    t : array_like
        Hopping amplitudes, all strictly positive.
    v : array_like
        Potential values, same length as ``t``.
    """

    t: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.t, dtype=float)).copy()
        v = np.atleast_1d(np.asarray(self.v, dtype=float)).copy()
        if t.ndim != 1 or v.ndim != 1:
            raise InvalidPolymer("polymer entries must be one dimensional")
        if t.size == 0:
            raise InvalidPolymer("polymer must have at least one site")
        if t.size != v.size:
            raise InvalidPolymer(
                f"hopping has {t.size} entries but potential has {v.size}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise InvalidPolymer("polymer entries must be finite")
        if np.any(t <= 0):
            raise InvalidPolymer("hopping amplitudes must be strictly positive")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    @property
    def length(self) -> int:
        return int(self.t.size)

    def __eq__(self, other):
        if not isinstance(other, Polymer):
            return NotImplemented
        return (np.array_equal(self.t, other.t)
                and np.array_equal(self.v, other.v))

    def __hash__(self):
        return hash((self.t.tobytes(), self.v.tobytes()))


@dataclass(frozen=True)
class PolymerEnsemble:
    """Two polymers and the probability of drawing the ``+`` one."""

    plus: Polymer
    minus: Polymer
    p_plus: float = 0.5

    def __post_init__(self):
        p = float(self.p_plus)
        if not (0.0 < p < 1.0) or not np.isfinite(p):
            raise InvalidEnsemble(f"p_plus must lie in (0, 1), got {self.p_plus}")
        object.__setattr__(self, "p_plus", p)

    @property
    def p_minus(self) -> float:
        return 1.0 - self.p_plus

    def polymer(self, sign: int) -> Polymer:
        if sign == PLUS:
            return self.plus
        if sign == MINUS:
            return self.minus
        raise ValueError(f"sign must be +1 or -1, got {sign}")

    def prob(self, sign: int) -> float:
        return self.p_plus if sign == PLUS else self.p_minus

    def length(self, sign: int) -> int:
        return self.polymer(sign).length

    @property
    def mean_length(self) -> float:
        return self.p_plus * self.plus.length + self.p_minus * self.minus.length

    @property
    def max_hop(self) -> float:
        return float(max(self.plus.t.max(), self.minus.t.max()))

    def average(self, plus_value, minus_value):
        """Ensemble average ``p+ f(+) + p- f(-)``."""
        return self.p_plus * plus_value + self.p_minus * minus_value

    @classmethod
    def from_arrays(cls, plus_t, plus_v, minus_t, minus_v, p_plus=0.5):
        return cls(Polymer(plus_t, plus_v), Polymer(minus_t, minus_v), p_plus)


def dimer_ensemble(lam: float, p_plus: float = 0.5) -> PolymerEnsemble:
    """Random dimer: potentials ``(lam, lam)`` and ``(-lam, -lam)``, unit hopping."""
    return PolymerEnsemble.from_arrays([1.0, 1.0], [lam, lam],
                                       [1.0, 1.0], [-lam, -lam], p_plus)


def _stream(seed: int, index: int, which: int) -> np.random.Generator:
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    ss = np.random.SeedSequence([int(seed), int(index), which])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Configuration:
    """Finite stretch ``omega_k, k_min <= k <= k_max`` of a polymer sequence.

    ``offset`` is the entry of polymer ``omega_0`` that sits on site 0.
    """

    k_min: int
    signs: np.ndarray
    offset: int = 0
    seed: int | None = None
    index: int | None = None
    stationary: bool = False

    def __post_init__(self):
        s = np.asarray(self.signs, dtype=np.int8)
        if not np.all(np.abs(s) == 1):
            raise ValueError("signs must be +1 or -1")
        if not (self.k_min <= 0 < self.k_min + s.size):
            raise ValueError("configuration must contain the origin polymer")
        s.setflags(write=False)
        object.__setattr__(self, "signs", s)

    @property
    def k_max(self) -> int:
        return self.k_min + self.signs.size - 1

    def sign(self, k: int) -> int:
        if not self.k_min <= k <= self.k_max:
            raise InsufficientConfiguration(
                f"polymer {k} outside sampled range [{self.k_min}, {self.k_max}]")
        return int(self.signs[k - self.k_min])

    def block(self, m: int, k: int) -> np.ndarray:
        """Signs ``omega_m, ..., omega_{k-1}``."""
        if m < self.k_min or k - 1 > self.k_max:
            raise InsufficientConfiguration(
                f"polymers [{m}, {k}) outside sampled range "
                f"[{self.k_min}, {self.k_max}]")
        return self.signs[m - self.k_min:k - self.k_min]


def sample_configuration(ensemble: PolymerEnsemble, k_min: int, k_max: int,
                         seed: int, index: int = 0,
                         stationary: bool = True) -> Configuration:
    """Draw ``omega_{k_min..k_max}`` for sample ``index`` of ``seed``.

    With ``stationary=True`` the origin polymer is size biased, so that site 0
    is uniformly placed inside a polymer of the infinite sequence.  Otherwise
    the sequence is plain i.i.d. and site 0 is the first entry of ``omega_0``.
    """
    if k_min > 0 or k_max < 0:
        raise ValueError("need k_min <= 0 <= k_max")
    p = ensemble.p_plus
    right = _stream(seed, index, _STREAM_RIGHT).random(k_max)
    left = _stream(seed, index, _STREAM_LEFT).random(-k_min)
    origin = _stream(seed, index, _STREAM_ORIGIN)
    if stationary:
        w_plus = p * ensemble.plus.length / ensemble.mean_length
        s0 = PLUS if origin.random() < w_plus else MINUS
        offset = int(origin.integers(ensemble.length(s0)))
    else:
        s0 = PLUS if origin.random() < p else MINUS
        offset = 0
    signs = np.empty(k_max - k_min + 1, dtype=np.int8)
    signs[-k_min] = s0
    signs[-k_min + 1:] = np.where(right < p, PLUS, MINUS)
    # left[j] is polymer -(j+1)
    signs[:-k_min] = np.where(left < p, PLUS, MINUS)[::-1]
    return Configuration(k_min, signs, offset, seed, index, stationary)


def sample_signs(ensemble: PolymerEnsemble, n_polymers: int, seed: int,
                 indices) -> np.ndarray:
    """I.i.d. signs ``omega_0..omega_{n-1}`` for several samples, one row each.

    Row ``i`` equals ``sample_configuration(..., 0, n-1, seed, indices[i],
    stationary=False).signs``.
    """
    indices = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    out = np.empty((indices.size, n_polymers), dtype=np.int8)
    p = ensemble.p_plus
    for row, idx in enumerate(indices):
        out[row, 0] = PLUS if _stream(seed, idx, _STREAM_ORIGIN).random() < p else MINUS
        u = _stream(seed, idx, _STREAM_RIGHT).random(n_polymers - 1)
        out[row, 1:] = np.where(u < p, PLUS, MINUS)
    return out


def periodic_configuration(pattern, k_min: int, k_max: int,
                           offset: int = 0) -> Configuration:
    """Deterministic configuration repeating ``pattern`` with ``omega_0 = pattern[0]``."""
    pattern = np.asarray(pattern, dtype=np.int8)
    ks = np.arange(k_min, k_max + 1)
    return Configuration(k_min, pattern[ks % pattern.size], offset)


@dataclass(frozen=True)
class JacobiWindow:
    """Sites ``n_min..n_max`` of a Jacobi operator.

    ``t[i]`` and ``v[i]`` belong to site ``n_min + i``; ``t[0]`` couples the
    window to the site on its left and is only used by transfer matrices.
    """

    n_min: int
    t: np.ndarray
    v: np.ndarray
    node_positions: np.ndarray = field(default_factory=lambda: np.empty(0, int))
    node_polymers: np.ndarray = field(default_factory=lambda: np.empty(0, int))

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("t and v must be 1-d arrays of equal length")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    @property
    def size(self) -> int:
        return int(self.t.size)

    @property
    def n_max(self) -> int:
        return self.n_min + self.size - 1

    @property
    def sites(self) -> np.ndarray:
        return np.arange(self.n_min, self.n_max + 1)

    def at(self, n):
        i = np.asarray(n) - self.n_min
        return self.t[i], self.v[i]

    def sub(self, n0: int, n1: int) -> "JacobiWindow":
        """Restriction to sites ``n0..n1``."""
        if n0 < self.n_min or n1 > self.n_max or n1 < n0:
            raise InsufficientConfiguration(
                f"sites [{n0}, {n1}] not inside [{self.n_min}, {self.n_max}]")
        i0, i1 = n0 - self.n_min, n1 - self.n_min + 1
        keep = (self.node_positions >= n0) & (self.node_positions <= n1)
        return JacobiWindow(n0, self.t[i0:i1], self.v[i0:i1],
                            self.node_positions[keep], self.node_polymers[keep])

    def dense(self) -> np.ndarray:
        """Dirichlet restriction as a dense symmetric matrix."""
        h = np.diag(self.v)
        off = -self.t[1:]
        h += np.diag(off, 1) + np.diag(off, -1)
        return h


def assemble(config: Configuration, ensemble: PolymerEnsemble,
             n_min: int, n_max: int) -> JacobiWindow:
    """Hopping and potential on sites ``n_min..n_max``."""
    lengths = np.where(config.signs == PLUS, ensemble.plus.length,
                       ensemble.minus.length)
    ks = np.arange(config.k_min, config.k_max + 1)
    i0 = -config.k_min
    starts = np.empty(ks.size, dtype=np.int64)
    starts[i0:] = -config.offset + np.concatenate(([0], np.cumsum(lengths[i0:-1])))
    if i0 > 0:
        starts[:i0] = -config.offset - np.cumsum(lengths[:i0][::-1])[::-1]
    first, last = starts[0], starts[-1] + lengths[-1] - 1
    if n_min < first or n_max > last:
        raise InsufficientConfiguration(
            f"sites [{n_min}, {n_max}] need polymers beyond the sampled range "
            f"(covers [{first}, {last}])")
    t_all = np.concatenate([ensemble.polymer(int(s)).t for s in config.signs])
    v_all = np.concatenate([ensemble.polymer(int(s)).v for s in config.signs])
    a, b = n_min - first, n_max - first + 1
    keep = (starts >= n_min) & (starts <= n_max)
    return JacobiWindow(n_min, t_all[a:b], v_all[a:b], starts[keep], ks[keep])


def covering_configuration(ensemble: PolymerEnsemble, n_min: int, n_max: int,
                           seed: int, index: int = 0,
                           stationary: bool = True) -> Configuration:
    """Sample just enough polymers to cover sites ``n_min..n_max``."""
    lmin = min(ensemble.plus.length, ensemble.minus.length)
    k_max = max(n_max, 0) // lmin + 2
    k_min = -(max(-n_min, 0) // lmin + 2)
    return sample_configuration(ensemble, k_min, k_max, seed, index, stationary)


def random_window(ensemble: PolymerEnsemble, n_min: int, n_max: int,
                  seed: int, index: int = 0,
                  stationary: bool = True) -> JacobiWindow:
    config = covering_configuration(ensemble, n_min, n_max, seed, index, stationary)
    return assemble(config, ensemble, n_min, n_max)
