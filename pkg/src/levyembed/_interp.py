"""Fast cubic interpolation on uniform grids.

scipy's CubicSpline does the coefficient solve; evaluation is a direct
index computation, which is several times faster than the generic
searchsorted path and matters inside the per-step clock loop.
"""
from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline


class UniformCubic:
    """Cubic spline on x0 + k*dx, k = 0..n-1, with callable tails outside.

    ``left``/``right`` are called with the out-of-range abscissae (and the
    derivative order) and must return arrays of matching shape.
    """

    def __init__(self, x0, dx, values, left=None, right=None, bc_type="not-a-knot"):
        values = np.asarray(values, dtype=float)
        n = values.shape[0]
        if n < 4:
            raise ValueError("need at least 4 nodes")
        self.x0 = float(x0)
        self.dx = float(dx)
        self.n = n
        self.x1 = self.x0 + (n - 1) * self.dx
        x = self.x0 + self.dx * np.arange(n)
        cs = CubicSpline(x, values, bc_type=bc_type)
        # c[k, i] multiplies (x - x_i)^(3-k)
        self._c = np.ascontiguousarray(cs.c)
        self.values = values
        self.left = left
        self.right = right

    def _locate(self, x):
        s = (x - self.x0) / self.dx
        i = np.floor(s).astype(np.intp)
        np.clip(i, 0, self.n - 2, out=i)
        return i, x - (self.x0 + i * self.dx)

    def __call__(self, x, nu=0):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        i, d = self._locate(x)
        c = self._c
        if nu == 0:
            y = ((c[0, i] * d + c[1, i]) * d + c[2, i]) * d + c[3, i]
        elif nu == 1:
            y = (3.0 * c[0, i] * d + 2.0 * c[1, i]) * d + c[2, i]
        elif nu == 2:
            y = 6.0 * c[0, i] * d + 2.0 * c[1, i]
        else:
            raise ValueError("derivative order must be 0, 1 or 2")
        lo = x < self.x0
        hi = x > self.x1
        if lo.any():
            y[lo] = self.left(x[lo], nu) if self.left is not None else 0.0
        if hi.any():
            y[hi] = self.right(x[hi], nu) if self.right is not None else 0.0
        return y[0] if scalar else y

    def inside(self, x):
        return (x >= self.x0) & (x <= self.x1)


def power_tail(x_ref, y_ref, slope):
    """Tail y_ref * (|x|/|x_ref|)^slope, with derivatives."""
    ax = abs(x_ref)
    sign = 1.0 if x_ref > 0 else -1.0

    def f(x, nu=0):
        r = np.abs(x) / ax
        y = y_ref * r ** slope
        if nu == 0:
            return y
        d1 = slope * y / np.abs(x) * sign
        if nu == 1:
            return d1
        return slope * (slope - 1.0) * y / x ** 2

    return f


def exp_tail(x_ref, y_ref, rate):
    """Tail y_ref * exp(-rate*|x - x_ref|), with derivatives."""
    sign = 1.0 if x_ref > 0 else -1.0

    def f(x, nu=0):
        y = y_ref * np.exp(-rate * np.abs(x - x_ref))
        if nu == 0:
            return y
        if nu == 1:
            return -rate * sign * y
        return rate * rate * y

    return f


def fit_tail(x, y, side):
    """Pick a power-law or exponential continuation for a decaying tail.

    ``x``/``y`` are a handful of samples ordered toward infinity. Returns
    a tail callable and a tag. Non-positive samples give an identically
    zero tail.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if np.any(y <= 0) or not np.all(np.isfinite(y)):
        return (lambda z, nu=0: np.zeros_like(np.asarray(z, float))), "zero"
    lx, ly = np.log(np.abs(x)), np.log(y)
    p_pow = np.polyfit(lx, ly, 1)
    p_exp = np.polyfit(np.abs(x), ly, 1)
    r_pow = np.sum((np.polyval(p_pow, lx) - ly) ** 2)
    r_exp = np.sum((np.polyval(p_exp, np.abs(x)) - ly) ** 2)
    xe, ye = x[-1], y[-1]
    if r_pow <= r_exp and p_pow[0] < -1.0:
        return power_tail(xe, ye, p_pow[0]), "power"
    rate = max(-p_exp[0], 1e-12)
    return exp_tail(xe, ye, rate), "exponential"
