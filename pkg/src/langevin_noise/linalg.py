"""Small dense symmetric linear algebra.

Matrices are plain numpy arrays of shape (d, d), or stacks (..., d, d) where
noted.  Eigendecompositions use cyclic Jacobi rotations applied to the whole
stack at once, which is accurate for the small dimensions used here.
"""

from __future__ import annotations

import numpy as np


class NotPSD(ValueError):
    pass


class FloorViolated(ValueError):
    pass


def symmetrize(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def jacobi_eigh(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and eigenvectors of a symmetric matrix or stack of matrices.

    Returns ``(w, v)`` with ``a = v @ diag(w) @ v.T``; eigenvalues ascending.
    """
    a = symmetrize(a).copy()
    d = a.shape[-1]
    v = np.broadcast_to(np.eye(d), a.shape).copy()
    if d == 1:
        return a[..., 0, :].copy(), v
    scale = np.sqrt(np.sum(a * a, axis=(-1, -2)))
    upper = np.triu(np.ones((d, d), dtype=bool), 1)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(a[..., upper] ** 2, axis=-1))
        # converged matrices are frozen individually, so a matrix's result
        # does not depend on which other matrices share the batch
        pending = off > tol * np.maximum(scale, 1e-300)
        if not np.any(pending):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[..., p, q]
                app = a[..., p, p]
                aqq = a[..., q, q]
                active = pending & (np.abs(apq) > 1e-300)
                safe = np.where(active, apq, 1.0)
                theta = (aqq - app) / (2.0 * safe)
                with np.errstate(over="ignore"):
                    t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(theta == 0.0, 1.0, t)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c = np.where(active, c, 1.0)[..., None]
                s = np.where(active, s, 0.0)[..., None]
                # columns p, q
                ap = a[..., :, p].copy()
                aq = a[..., :, q].copy()
                a[..., :, p] = c * ap - s * aq
                a[..., :, q] = s * ap + c * aq
                # rows p, q
                ap = a[..., p, :].copy()
                aq = a[..., q, :].copy()
                a[..., p, :] = c * ap - s * aq
                a[..., q, :] = s * ap + c * aq
                vp = v[..., :, p].copy()
                vq = v[..., :, q].copy()
                v[..., :, p] = c * vp - s * vq
                v[..., :, q] = s * vp + c * vq
    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[..., None, :], axis=-1)
    return w, v


def psd_sqrt(g: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Positive semidefinite square root of a symmetric matrix (or stack).

    Eigenvalues in [-tol, 0) are clamped to zero; anything more negative
    raises NotPSD.  ``tol`` defaults to 1e-10 times the spectral norm.
    """
    g = symmetrize(g)
    w, v = jacobi_eigh(g)
    if tol is None:
        tol = 1e-10 * np.max(np.abs(w), axis=-1, keepdims=True)
    tol = np.asarray(tol, dtype=float)
    if np.any(w < -np.broadcast_to(tol, w.shape)):
        raise NotPSD(f"minimum eigenvalue {float(np.min(w)):.3e} below -tol")
    root = np.sqrt(np.clip(w, 0.0, None))
    return symmetrize((v * root[..., None, :]) @ np.swapaxes(v, -1, -2))


def diffusion_remainder(m: np.ndarray, c_m: float) -> np.ndarray:
    """N = sqrt(M^2 - c_m^2 I), requiring M to dominate 2 c_m I."""
    m = symmetrize(m)
    d = m.shape[-1]
    w, _ = jacobi_eigh(m)
    if np.any(w[..., 0] < 2.0 * c_m * (1.0 - 1e-12)):
        raise FloorViolated(f"minimum eigenvalue {float(np.min(w[..., 0])):.4g} < 2*c_m = {2.0 * c_m:.4g}")
    return psd_sqrt(m @ m - c_m**2 * np.eye(d))


def eldan_sides(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """tr((sqrt A - sqrt B)^2) and tr((A - B)^2 A^{-1}) for stacks of matrices."""
    a = symmetrize(a)
    b = symmetrize(b)
    wa, _ = jacobi_eigh(a)
    if np.any(wa[..., 0] <= 0):
        raise NotPSD("A must be positive definite")
    diff = psd_sqrt(a) - psd_sqrt(b)
    ab = a - b
    lhs = np.trace(diff @ diff, axis1=-2, axis2=-1)
    rhs = np.trace(ab @ ab @ np.linalg.inv(a), axis1=-2, axis2=-1)
    return lhs, rhs


def check_eldan_inequality(a: np.ndarray, b: np.ndarray) -> tuple[float, float, bool]:
    """Compare tr((sqrt A - sqrt B)^2) against tr((A - B)^2 A^{-1})."""
    lhs, rhs = eldan_sides(a, b)
    lhs, rhs = float(lhs), float(rhs)
    return lhs, rhs, lhs <= rhs + 1e-8 * (1.0 + abs(rhs))
