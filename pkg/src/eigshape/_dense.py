"""Small dense symmetric-definite eigensolver used as a verification oracle.

``K x = lam M x`` is reduced to standard form with a Cholesky factor of
``M``, tridiagonalized by Householder reflections, and its eigenvalues found
by the implicit-shift QL iteration. The eigenvector of the smallest
eigenvalue comes from inverse iteration on the tridiagonal matrix followed by
back-transformation.
"""
from __future__ import annotations

import math

import numpy as np


class DenseEigenError(ArithmeticError):
    pass


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``a = L L^T``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        s = a[j, j] - L[j, :j] @ L[j, :j]
        if not s > 0:
            raise DenseEigenError(f"matrix is not positive definite (pivot {j}: {s!r})")
        L[j, j] = math.sqrt(s)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def forward_substitute(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``L X = b`` for lower-triangular ``L`` (``b`` may be a matrix)."""
    x = np.array(b, dtype=float, copy=True)
    for i in range(L.shape[0]):
        x[i] = (x[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x


def back_substitute(U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``U X = b`` for upper-triangular ``U``."""
    x = np.array(b, dtype=float, copy=True)
    for i in range(U.shape[0] - 1, -1, -1):
        x[i] = (x[i] - U[i, i + 1:] @ x[i + 1:]) / U[i, i]
    return x


def tridiagonalize(c: np.ndarray):
    """Householder reduction ``c = Q T Q^T``.

    Returns ``(diag, offdiag, reflectors)`` where reflector ``k`` is a unit
    vector acting on indices ``k+1:``.
    """
    a = np.array(c, dtype=float, copy=True)
    n = a.shape[0]
    reflectors = []
    for k in range(n - 2):
        x = a[k + 1:, k]
        norm = np.linalg.norm(x)
        if norm == 0.0:
            reflectors.append(None)
            continue
        alpha = -math.copysign(norm, x[0])
        v = x.copy()
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            reflectors.append(None)
            continue
        v /= vnorm
        sub = a[k + 1:, k + 1:]
        p = sub @ v
        w = 2.0 * p - 2.0 * (v @ p) * v
        sub -= np.outer(v, w) + np.outer(w, v)
        a[k + 1:, k] = 0.0
        a[k, k + 1:] = 0.0
        a[k + 1, k] = a[k, k + 1] = alpha
        reflectors.append(v)
    diag = np.diag(a).copy()
    off = np.diag(a, -1).copy()
    return diag, off, reflectors


def apply_reflectors(reflectors, z: np.ndarray) -> np.ndarray:
    """Compute ``Q z`` for the ``Q`` of :func:`tridiagonalize`."""
    y = np.array(z, dtype=float, copy=True)
    for k in range(len(reflectors) - 1, -1, -1):
        v = reflectors[k]
        if v is None:
            continue
        y[k + 1:] -= 2.0 * v * (v @ y[k + 1:])
    return y


def tridiagonal_eigenvalues(diag, off, max_sweeps: int = 60) -> np.ndarray:
    """All eigenvalues of a symmetric tridiagonal matrix (implicit QL, Wilkinson-type shifts)."""
    d = [float(x) for x in diag]
    n = len(d)
    e = [float(x) for x in off] + [0.0]
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_sweeps:
                raise DenseEigenError(f"QL iteration did not converge for eigenvalue {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            underflow = False
            while i >= l:
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
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return np.array(sorted(d))


def tridiagonal_solve(diag, off, shift, rhs) -> np.ndarray:
    """Solve ``(T - shift I) x = rhs`` by LU with partial pivoting.

    Exactly zero pivots are replaced by a tiny multiple of the matrix norm,
    which is what inverse iteration at a converged eigenvalue needs.
    """
    n = len(diag)
    tiny = np.finfo(float).eps * max(1.0, float(np.max(np.abs(diag)) + 2 * np.max(np.abs(off), initial=0.0)))
    d = [float(x) - shift for x in diag]
    dl = [float(x) for x in off]
    du = [float(x) for x in off]
    du2 = [0.0] * max(n - 2, 0)
    swapped = [False] * max(n - 1, 0)
    for i in range(n - 1):
        if abs(d[i]) >= abs(dl[i]):
            if d[i] == 0.0:
                d[i] = tiny
            fact = dl[i] / d[i]
            dl[i] = fact
            d[i + 1] -= fact * du[i]
        else:
            fact = d[i] / dl[i]
            d[i] = dl[i]
            dl[i] = fact
            tmp = du[i]
            du[i] = d[i + 1]
            d[i + 1] = tmp - fact * d[i + 1]
            if i < n - 2:
                du2[i] = du[i + 1]
                du[i + 1] = -fact * du[i + 1]
            swapped[i] = True
    if d[n - 1] == 0.0:
        d[n - 1] = tiny
    x = [float(v) for v in rhs]
    for i in range(n - 1):
        if not swapped[i]:
            x[i + 1] -= dl[i] * x[i]
        else:
            tmp = x[i]
            x[i] = x[i + 1]
            x[i + 1] = tmp - dl[i] * x[i]
    x[n - 1] /= d[n - 1]
    if n > 1:
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i]
    return np.array(x)


def tridiagonal_eigenvector(diag, off, lam, iterations: int = 3) -> np.ndarray:
    n = len(diag)
    x = np.ones(n) / math.sqrt(n)
    for _ in range(iterations):
        x = tridiagonal_solve(diag, off, lam, x)
        x /= np.linalg.norm(x)
    return x


def smallest_generalized_eigenpair(K: np.ndarray, M: np.ndarray):
    """Smallest eigenpair of ``K x = lam M x`` with ``x^T M x = 1``."""
    n = K.shape[0]
    if n == 1:
        return float(K[0, 0] / M[0, 0]), np.array([1.0 / math.sqrt(M[0, 0])])
    L = cholesky(M)
    X = forward_substitute(L, K)
    C = forward_substitute(L, X.T)
    C = 0.5 * (C + C.T)
    diag, off, refl = tridiagonalize(C)
    evals = tridiagonal_eigenvalues(diag, off)
    lam = float(evals[0])
    z = tridiagonal_eigenvector(diag, off, lam)
    y = apply_reflectors(refl, z)
    x = back_substitute(L.T, y)
    x /= math.sqrt(x @ M @ x)
    lam = float(x @ K @ x)
    return lam, x
