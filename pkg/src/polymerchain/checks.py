"""Randomised consistency checks between independent computational routes.

Each function draws its instances from ``numpy.random.default_rng(seed)`` and
returns the largest residual seen, so the same checks can be run from the
command line and from the test-suite.
"""

from __future__ import annotations

import math

import numpy as np

from .critical import build_frame, complex_coefficients
from .model import JacobiWindow, dimer_ensemble
from .oracles import sturm_count, tridiagonal_ql_eigenvalues
from .phase_flow import PhaseShiftMap, iterate_shifts, phase_shift, phase_shift_direct
from .pruefer import count_eigenvalues_below, eigenvalues_by_index, norm_derivative_residual
from .transfer import sign_product, unit_vector

_ANOMALOUS_LAMBDA = 1 / math.sqrt(2)


def random_dimer_map(rng):
    """Phase shift map of a random dimer at ``E_c + eps`` with ``|eps| <= 0.1``."""
    while True:
        lam = rng.uniform(0.1, 0.9)
        if abs(lam - _ANOMALOUS_LAMBDA) > 0.03:
            break
    ens = dimer_ensemble(lam, rng.uniform(0.2, 0.8))
    frame = build_frame(ens, lam if rng.random() < 0.5 else -lam)
    eps = rng.uniform(-0.1, 0.1)
    return PhaseShiftMap.at_critical(frame, eps, max_b=None)


def identity_residuals(n_instances: int = 1000, seed: int = 0,
                       chain_length: int = 40) -> dict:
    """Largest residual of each exact identity of the polymer phase dynamics.

    ``unimodular``: ``|a|^2 - |b|^2 = 1``.  ``det``: ``det(M T M^{-1}) = 1``.
    ``rho``: formula ``|a e^{i theta} + conj(b) e^{-i theta}|`` against the
    norm of the matrix action.  ``phase_shift``: formula against the Pruefer
    lift through the polymer sites.  ``telescoping``: log-norm of a product
    of rotated polymer matrices against the sum of ``log rho`` along the
    phase orbit.
    """
    rng = np.random.default_rng(seed)
    out = dict.fromkeys(("unimodular", "det", "rho", "phase_shift", "telescoping"), 0.0)
    for _ in range(n_instances):
        pmap = random_dimer_map(rng)
        theta = rng.uniform(0, math.pi)
        for s in (1, -1):
            A = pmap.A[s]
            a, b = complex_coefficients(A)
            out["unimodular"] = max(out["unimodular"], abs(abs(a) ** 2 - abs(b) ** 2 - 1))
            out["det"] = max(out["det"], abs(np.linalg.det(A) - 1))
            S1, r1 = phase_shift(pmap, s, theta)
            S2, r2 = phase_shift_direct(pmap, s, theta)
            out["rho"] = max(out["rho"], abs(r1 ** 2 - r2 ** 2) / r2 ** 2)
            out["phase_shift"] = max(out["phase_shift"], abs(S1 - S2))
        signs = np.where(rng.random(chain_length) < pmap.ensemble.p_plus, 1, -1)
        _, logrho = iterate_shifts(pmap, signs, theta)
        prod = sign_product(signs, pmap.A)
        direct = prod.log_norm_on(unit_vector(theta))
        out["telescoping"] = max(out["telescoping"],
                                 abs(direct - logrho.sum()) / max(1.0, abs(direct)))
    return {k: float(v) for k, v in out.items()}


def random_jacobi_window(rng, n_max: int) -> JacobiWindow:
    """Window of random size ``2..n_max`` with ``t ~ U(0.5, 1.5)``, ``v ~ U(-1, 1)``."""
    n = int(rng.integers(2, n_max + 1))
    return JacobiWindow(0, rng.uniform(0.5, 1.5, n), rng.uniform(-1, 1, n))


def phase_derivative_residual(n_windows: int = 100, seed: int = 0, n_max: int = 50,
                              h: float = 1e-6) -> float:
    """Largest relative residual of ``R(N)^2 d theta(N)/dE = sum_l u(l)^2``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_windows):
        w = random_jacobi_window(rng, n_max)
        e = rng.uniform(-2.5, 2.5)
        worst = max(worst, norm_derivative_residual(w, e, rng.uniform(0, math.pi), h))
    return float(worst)


def count_mismatches(n_instances: int = 200, seed: int = 0, n_max: int = 60) -> int:
    """Number of instances where the Pruefer count differs from the Sturm count."""
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_instances):
        w = random_jacobi_window(rng, n_max)
        energies = rng.uniform(-4, 4, 5)
        pr = count_eigenvalues_below(w, energies)
        st = np.array([sturm_count(w.v, -w.t[1:], e) for e in energies])
        bad += int(np.any(pr != st))
    return bad


def eigenvalue_discrepancy(n_instances: int = 20, seed: int = 0, n_max: int = 200) -> dict:
    """Largest deviation of the Pruefer eigenvalues from two independent solvers.

    ``dense`` is LAPACK on the dense matrix, ``ql`` the implicit QL iteration
    for tridiagonal matrices.
    """
    rng = np.random.default_rng(seed)
    dense = ql = 0.0
    for i in range(n_instances):
        w = random_jacobi_window(rng, n_max)
        if i == 0:
            w = JacobiWindow(0, rng.uniform(0.5, 1.5, n_max), rng.uniform(-1, 1, n_max))
        ev = eigenvalues_by_index(w, np.arange(1, w.size + 1))
        dense = max(dense, float(np.max(np.abs(ev - np.linalg.eigvalsh(w.dense())))))
        ql = max(ql, float(np.max(np.abs(ev - tridiagonal_ql_eigenvalues(w.v, -w.t[1:])))))
    return {"dense": dense, "ql": ql}
