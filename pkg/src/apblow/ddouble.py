"""Vectorised double-double arithmetic.

A double-double number is an unevaluated sum ``hi + lo`` of two float64
values with ``|lo| <= ulp(hi)/2``. All functions accept numpy arrays (or
scalars) and broadcast like ufuncs.
"""

import numpy as np

_SPLITTER = 134217729.0  # 2**27 + 1


def two_sum(a, b):
    """Error-free transformation ``a + b = s + e``."""
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


def quick_two_sum(a, b):
    # requires |a| >= |b|
    s = a + b
    e = b - (s - a)
    return s, e


def _split(a):
    t = _SPLITTER * a
    hi = t - (t - a)
    return hi, a - hi


def two_prod(a, b):
    """Error-free transformation ``a * b = p + e`` (Dekker)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def dd_add(ah, al, bh, bl):
    s, e = two_sum(ah, bh)
    t, f = two_sum(al, bl)
    e = e + t
    s, e = quick_two_sum(s, e)
    e = e + f
    return quick_two_sum(s, e)


def dd_sub(ah, al, bh, bl):
    return dd_add(ah, al, -np.asarray(bh), -np.asarray(bl))


def dd_add_float(ah, al, b):
    s, e = two_sum(ah, b)
    e = e + al
    return quick_two_sum(s, e)


def dd_mul(ah, al, bh, bl):
    p, e = two_prod(ah, bh)
    e = e + (ah * bl + al * bh)
    return quick_two_sum(p, e)


def dd_sqr(ah, al):
    return dd_mul(ah, al, ah, al)


def dd_sum_squares(hi, lo, axis=-1):
    """Sum of squares along ``axis`` accumulated in double-double."""
    hi = np.moveaxis(np.asarray(hi, dtype=np.float64), axis, 0)
    lo = np.moveaxis(np.asarray(lo, dtype=np.float64), axis, 0)
    sh = np.zeros(hi.shape[1:])
    sl = np.zeros(hi.shape[1:])
    for h, l in zip(hi, lo):
        qh, ql = dd_sqr(h, l)
        sh, sl = dd_add(sh, sl, qh, ql)
    return sh, sl


def dd_sqrt(ah, al):
    """Square root of a non-negative double-double (one Newton step)."""
    ah = np.asarray(ah, dtype=np.float64)
    al = np.asarray(al, dtype=np.float64)
    x = np.sqrt(ah)
    with np.errstate(divide="ignore", invalid="ignore"):
        px, pe = two_prod(x, x)
        rh, rl = dd_sub(ah, al, px, pe)
        corr = np.where(x > 0, (rh + rl) / (2.0 * np.where(x > 0, x, 1.0)), 0.0)
    return quick_two_sum(x, corr)


def dd_to_float(hi, lo):
    return np.asarray(hi) + np.asarray(lo)
