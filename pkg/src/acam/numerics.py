"""Vectorized bracketing root finder used by every DC solve."""

import numpy as np

from .errors import ConvergenceError

# Bisection runs until the bracket is this narrow, then a single secant step
# through the final bracket polishes the root.
BISECT_TOL = 1e-7


def bisect_root(f, lo, hi, *, tol=BISECT_TOL, maxiter=200, allow_unbracketed=False):
    """Root of a monotone function on ``[lo, hi]``, elementwise.

    ``f`` must accept and return arrays broadcastable against ``lo``/``hi``.
    Either monotone direction is accepted. Unbracketed entries raise
    :class:`ConvergenceError`, or become NaN when ``allow_unbracketed`` is set.
    """
    lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    lo = lo.copy()
    hi = hi.copy()
    f_lo = np.asarray(f(lo), dtype=float)
    f_hi = np.asarray(f(hi), dtype=float)
    lo, hi, f_lo, f_hi = np.broadcast_arrays(lo, hi, f_lo, f_hi)
    lo, hi, f_lo, f_hi = lo.copy(), hi.copy(), f_lo.copy(), f_hi.copy()
    if not (np.all(np.isfinite(f_lo)) and np.all(np.isfinite(f_hi))):
        raise ConvergenceError("non-finite residual at bracket ends")

    bad = np.sign(f_lo) * np.sign(f_hi) > 0
    if np.any(bad) and not allow_unbracketed:
        raise ConvergenceError(f"{int(bad.sum())} root(s) not bracketed")
    # orient every bracket so that f(lo) <= 0 <= f(hi)
    flip = f_lo > f_hi
    lo[flip], hi[flip] = hi[flip].copy(), lo[flip].copy()
    f_lo[flip], f_hi[flip] = f_hi[flip].copy(), f_lo[flip].copy()

    for _ in range(maxiter):
        if np.all(np.abs(hi - lo) <= tol):
            break
        mid = 0.5 * (lo + hi)
        f_mid = np.asarray(f(mid), dtype=float)
        f_mid = np.broadcast_to(f_mid, mid.shape)
        up = f_mid > 0
        hi = np.where(up, mid, hi)
        f_hi = np.where(up, f_mid, f_hi)
        lo = np.where(up, lo, mid)
        f_lo = np.where(up, f_lo, f_mid)
    else:
        raise ConvergenceError("bisection did not reach tolerance")

    denom = f_hi - f_lo
    with np.errstate(invalid="ignore", divide="ignore"):
        secant = lo - f_lo * (hi - lo) / denom
    root = np.where((denom > 0) & np.isfinite(secant), secant, 0.5 * (lo + hi))
    # keep the polished root inside the final bracket
    root = np.clip(root, np.minimum(lo, hi), np.maximum(lo, hi))
    if np.any(bad):
        root = np.where(bad, np.nan, root)
    return root
