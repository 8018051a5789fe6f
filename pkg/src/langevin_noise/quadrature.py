"""Vectorized adaptive Simpson quadrature over many panels at once."""

from __future__ import annotations

import numpy as np


class QuadratureNotConverged(RuntimeError):
    pass


def _simpson(fa, fm, fb, width):
    return width * (fa + 4.0 * fm + fb) / 6.0


def adaptive_simpson(f, a, b, rtol: float = 1e-8, atol: float = 1e-15, max_depth: int = 40) -> np.ndarray:
    """Integrate a vectorized ``f`` over each panel [a_i, b_i].

    Panels are refined independently until the Richardson error estimate
    drops below max(rtol * |estimate|, atol) scaled to the sub-panel width.
    """
    shape = np.broadcast(np.asarray(a), np.asarray(b)).shape
    a, b = (np.atleast_1d(np.broadcast_to(np.asarray(x, dtype=float), shape)) for x in (a, b))
    total = np.zeros(a.shape)
    owner = np.arange(a.size)
    lo, hi = a.ravel().copy(), b.ravel().copy()
    mid = 0.5 * (lo + hi)
    flo, fmid, fhi = f(lo), f(mid), f(hi)
    whole = _simpson(flo, fmid, fhi, hi - lo)
    # per-panel tolerance fixed from the coarse estimate
    tol = np.maximum(rtol * np.abs(whole), atol)
    out = total.ravel()
    for _ in range(max_depth):
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = _simpson(flo, flm, fmid, mid - lo)
        right = _simpson(fmid, frm, fhi, hi - mid)
        err = left + right - whole
        done = np.abs(err) <= 15.0 * tol
        np.add.at(out, owner[done], (left + right + err / 15.0)[done])
        keep = ~done
        if not np.any(keep):
            return out.reshape(shape)
        # split survivors into halves, each with half the tolerance
        owner = np.concatenate([owner[keep], owner[keep]])
        tol = np.concatenate([tol[keep], tol[keep]]) * 0.5
        new_lo = np.concatenate([lo[keep], mid[keep]])
        new_hi = np.concatenate([mid[keep], hi[keep]])
        flo = np.concatenate([flo[keep], fmid[keep]])
        fhi = np.concatenate([fmid[keep], fhi[keep]])
        fmid = np.concatenate([flm[keep], frm[keep]])
        whole = np.concatenate([left[keep], right[keep]])
        lo, hi = new_lo, new_hi
        mid = 0.5 * (lo + hi)
    raise QuadratureNotConverged(f"{owner.size} sub-panels unconverged after depth {max_depth}")


def cumulative(f, nodes: np.ndarray, rtol: float = 1e-8, atol: float = 1e-15) -> np.ndarray:
    """Running integral of f from nodes[0] to each node."""
    panels = adaptive_simpson(f, nodes[:-1], nodes[1:], rtol=rtol, atol=atol)
    return np.concatenate([[0.0], np.cumsum(panels)])


def hermite(nodes: np.ndarray, values: np.ndarray, slopes: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Cubic Hermite interpolation on a uniform grid (r clipped to the grid)."""
    h = nodes[1] - nodes[0]
    r = np.clip(r, nodes[0], nodes[-1])
    k = np.minimum(((r - nodes[0]) / h).astype(np.int64), nodes.size - 2)
    t = (r - nodes[k]) / h
    t2 = t * t
    t3 = t2 * t
    return (
        (2 * t3 - 3 * t2 + 1) * values[k]
        + (t3 - 2 * t2 + t) * h * slopes[k]
        + (-2 * t3 + 3 * t2) * values[k + 1]
        + (t3 - t2) * h * slopes[k + 1]
    )
