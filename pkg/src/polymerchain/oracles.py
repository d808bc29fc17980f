"""Independent reference computations used to cross-check the fast routes.

Nothing here shares code with the Pruefer or transport modules.
"""

import math

import numpy as np


def sturm_count(diag, offdiag, energy):
    """Number of eigenvalues below ``energy`` of a symmetric tridiagonal matrix.

    Counts negative pivots of the LDL^T factorisation of ``H - E``.
    ``offdiag[i]`` couples rows ``i`` and ``i+1``.
    """
    diag = np.asarray(diag, dtype=float)
    off2 = np.asarray(offdiag, dtype=float) ** 2
    tiny = np.finfo(float).tiny ** 0.5
    d = diag[0] - energy
    count = int(d < 0)
    for i in range(1, diag.size):
        if d == 0.0:
            d = tiny
        d = diag[i] - energy - off2[i - 1] / d
        count += d < 0
    return int(count)


def tridiagonal_ql_eigenvalues(diag, offdiag, max_iter=60):
    """Eigenvalues of a symmetric tridiagonal matrix by implicit-shift QL.

    Straight translation of the classic ``tqli`` routine, eigenvalues only.
    Intended for small matrices (``N`` up to a few hundred).
    """
    d = np.array(diag, dtype=float)
    n = d.size
    e = np.zeros(n)
    e[:n - 1] = offdiag
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= np.finfo(float).eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise RuntimeError("too many QL iterations")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return np.sort(d)
