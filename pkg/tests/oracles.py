"""Independent reference computations used only for checking.

Everything here deliberately avoids the code paths of the package: the
eigen oracle is a cyclic Jacobi sweep, the SVD oracle is one-sided
(Hestenes) Jacobi, and the Krylov least-squares oracle orthonormalizes the
power basis explicitly and solves with numpy's lstsq.
"""

import numpy as np


def jacobi_eigh(a, sweeps=60, tol=1e-15):
    """Cyclic two-sided Jacobi eigenvalue iteration for symmetric matrices."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                off = max(off, abs(apq))
                if abs(apq) <= tol * np.sqrt(abs(a[p, p] * a[q, q])) or apq == 0.0:
                    continue
                zeta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(zeta) / (abs(zeta) + np.hypot(zeta, 1.0))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                rp = a[:, p].copy()
                rq = a[:, q].copy()
                a[:, p] = c * rp - s * rq
                a[:, q] = s * rp + c * rq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        if off <= 1e-18:
            break
    return np.diag(a).copy(), v


def jacobi_svd(m, sweeps=60):
    """One-sided (Hestenes) Jacobi SVD; returns singular values descending."""
    u = np.array(m, dtype=float)
    transposed = False
    if u.shape[0] < u.shape[1]:
        u = u.T.copy()
        transposed = True
    rows, cols = u.shape
    v = np.eye(cols)
    for _ in range(sweeps):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                alpha = u[:, p] @ u[:, p]
                beta = u[:, q] @ u[:, q]
                gamma = u[:, p] @ u[:, q]
                if abs(gamma) <= 1e-16 * np.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.hypot(zeta, 1.0))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                up = u[:, p].copy()
                u[:, p] = c * up - s * u[:, q]
                u[:, q] = s * up + c * u[:, q]
                vp = v[:, p].copy()
                v[:, p] = c * vp - s * v[:, q]
                v[:, q] = s * vp + c * v[:, q]
        if not rotated:
            break
    svals = np.linalg.norm(u, axis=0)
    order = np.argsort(-svals)
    return svals[order]


def krylov_subspace_minimizer(matvec, b, k):
    """Brute-force minimizer of ||b - A x|| over span{Ab, ..., A^k b}."""
    cols = []
    w = np.asarray(b, dtype=float)
    for _ in range(k):
        w = matvec(w)
        cols.append(w.copy())
    basis, _ = np.linalg.qr(np.column_stack(cols))
    image = np.column_stack([matvec(basis[:, j]) for j in range(basis.shape[1])])
    z, *_ = np.linalg.lstsq(image, b, rcond=None)
    return basis @ z
