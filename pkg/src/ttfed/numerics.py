"""Scalar kernels used by the bandwidth allocator: the lower real branch of
the Lambert-W function and a guarded bisection root finder.

Everything here works in 64-bit floats and is free of shared state.
"""
import math
from typing import Callable

INV_E = math.exp(-1.0)
LAMBERT_MAX_ITER = 100
BISECT_MAX_ITER = 200


class LambertDomainError(ValueError):
    pass


class BracketError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def _branch_point_seed(x: float) -> float:
    # series of W_-1 around x = -1/e in p = -sqrt(2(1 + e*x))
    p = -math.sqrt(max(0.0, 2.0 * (1.0 + math.e * x)))
    return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3


def _asymptotic_seed(x: float) -> float:
    l1 = math.log(-x)
    l2 = math.log(-l1)
    return l1 - l2 + l2 / l1


def lambert_w_minus1(x: float) -> float:
    """Return w <= -1 with w*exp(w) == x for -1/e <= x < 0 (Halley iteration)."""
    if not (-INV_E <= x < 0.0):
        raise LambertDomainError(f"W_-1 is real only on [-1/e, 0), got {x!r}")
    if x == -INV_E:
        return -1.0

    w = _branch_point_seed(x) if x < -0.25 else _asymptotic_seed(x)
    w = min(w, -1.0)

    for _ in range(LAMBERT_MAX_ITER):
        ew = math.exp(w)
        f = w * ew - x
        if abs(f) <= 1e-16 * abs(x):
            break
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        if denom == 0.0:
            break
        step = f / denom
        w_next = w - step
        if w_next > -1.0:
            # Halley overshot across the branch point; bisect toward it
            w_next = (w - 1.0) / 2.0
        if abs(w_next - w) <= 4.0 * math.ulp(w):
            w = w_next
            break
        w = w_next

    residual = abs(w * math.exp(w) - x) / abs(x)
    if residual > 1e-12:
        raise ConvergenceError(f"W_-1({x!r}) stalled at residual {residual:.3e}")
    return w


def bisect_root(f: Callable[[float], float], lo: float, hi: float, tol: float,
                max_iter: int = BISECT_MAX_ITER) -> float:
    """Bisection on a sign-changing bracket [lo, hi]."""
    if not lo < hi:
        raise BracketError(f"empty bracket [{lo!r}, {hi!r}]")
    if tol <= 0.0:
        raise ValueError("tol must be positive")

    f_lo = f(lo)
    f_hi = f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0.0) == (f_hi > 0.0):
        raise BracketError(f"f({lo!r}) and f({hi!r}) have the same sign")

    for _ in range(max_iter):
        mid = lo + (hi - lo) / 2.0
        if mid <= lo or mid >= hi:
            # float resolution of the bracket exhausted
            return mid
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
        if hi - lo < tol:
            return lo + (hi - lo) / 2.0

    raise ConvergenceError(f"bisection did not converge in {max_iter} iterations")
