"""Batched small-matrix helpers for fields of shape (n, n, R, R)."""

import numpy as np

from .errors import StateCorruptionError


def dagger(X):
    return np.conj(np.swapaxes(X, -1, -2))


def herm(X):
    return 0.5 * (X + dagger(X))


def inv_small(X):
    """Pointwise inverse; closed forms for R <= 3, LAPACK above."""
    R = X.shape[-1]
    if R == 1:
        return 1.0 / X
    if R == 2:
        a, b = X[..., 0, 0], X[..., 0, 1]
        c, d = X[..., 1, 0], X[..., 1, 1]
        det = a * d - b * c
        out = np.empty_like(X)
        out[..., 0, 0] = d
        out[..., 0, 1] = -b
        out[..., 1, 0] = -c
        out[..., 1, 1] = a
        return out / det[..., None, None]
    if R == 3:
        out = np.empty_like(X)
        for i in range(3):
            i1, i2 = (i + 1) % 3, (i + 2) % 3
            for j in range(3):
                j1, j2 = (j + 1) % 3, (j + 2) % 3
                # adjugate: cofactor transpose
                out[..., j, i] = (X[..., i1, j1] * X[..., i2, j2]
                                  - X[..., i1, j2] * X[..., i2, j1])
        det = (X[..., 0, 0] * out[..., 0, 0] + X[..., 0, 1] * out[..., 1, 0]
               + X[..., 0, 2] * out[..., 2, 0])
        return out / det[..., None, None]
    return np.linalg.inv(X)


def eigvalsh_desc(X):
    """Pointwise Hermitian eigenvalues, sorted descending along the last axis."""
    w = np.linalg.eigvalsh(X)
    return w[..., ::-1]


def eigh_desc(X):
    w, v = np.linalg.eigh(X)
    return w[..., ::-1], v[..., ::-1]


def sqrtm_psd(X, min_eig=0.0):
    """Pointwise Hermitian positive square root (and its inverse)."""
    w, v = np.linalg.eigh(X)
    if np.min(w) <= min_eig:
        raise StateCorruptionError(
            f"matrix field not positive: min eigenvalue {np.min(w):.3e}")
    sw = np.sqrt(w)
    g = (v * sw[..., None, :]) @ dagger(v)
    ginv = (v * (1.0 / sw)[..., None, :]) @ dagger(v)
    return g, ginv


def frob2(X):
    """Pointwise squared Frobenius norm, shape (n, n)."""
    if X.ndim == 2:
        return np.abs(X) ** 2
    return np.sum(np.abs(X) ** 2, axis=(-1, -2))


def trace(X):
    return np.trace(X, axis1=-2, axis2=-1)


def min_eig_h(X):
    """Smallest eigenvalue over all sites of a Hermitian matrix field."""
    return float(np.min(np.linalg.eigvalsh(herm(X))))


def comm(A, B):
    return A @ B - B @ A
