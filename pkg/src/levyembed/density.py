"""Initial/target densities, their Fourier transforms and regularity surrogates.

Fourier convention: h^(xi) = ∫ e^{i xi x} h(x) dx.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special
from scipy.interpolate import PchipInterpolator

from ._interp import UniformCubic
from .errors import UnsupportedKind

KINDS = ("gaussian", "gaussian-mixture", "laplace", "stable-marginal", "tabulated")


# ---------------------------------------------------------------------------
# standardized symmetric stable law, phi(xi) = exp(-|xi|^a)


def _stable_series(a, x, K=4, integrated=False):
    """Large-|x| expansion of the standardized density (or of its upper tail)."""
    ax = np.abs(x)
    out = np.zeros_like(ax)
    for k in range(1, K + 1):
        if integrated:
            c = special.gamma(a * k) / math.factorial(k)
            p = -a * k
        else:
            c = special.gamma(a * k + 1) / math.factorial(k)
            p = -a * k - 1
        out += (-1) ** (k + 1) * c * math.sin(k * math.pi * a / 2) * ax ** p
    return out / math.pi


class _StandardStable:
    """Density and CDF tables of exp(-|xi|^a) by FFT with asymptotic tails."""

    def __init__(self, a, dx=1 / 256, n=2 ** 20):
        self.a = a
        P = n * dx
        k = np.fft.fftfreq(n, d=dx) * 2 * np.pi
        spec = np.exp(-np.abs(k) ** a) * (-1.0) ** np.arange(n)
        vals = np.real(np.fft.fft(spec)) / P
        x = (np.arange(n) - n // 2) * dx
        lim = P / 8
        keep = np.abs(x) <= lim
        xs, ps = x[keep], vals[keep]
        # remove the periodic images p(x + kP), k != 0, using the tail series
        # summed in closed form: sum_k |kP ± x|^-q = P^-q zeta(q, 1 ± x/P)
        for j in range(1, 5):
            q = a * j + 1
            cj = ((-1) ** (j + 1) * special.gamma(a * j + 1) / math.factorial(j)
                  * math.sin(j * math.pi * a / 2) / math.pi)
            ps = ps - cj * P ** (-q) * (special.zeta(q, 1 + xs / P) + special.zeta(q, 1 - xs / P))
        self.edge = float(xs[-1])
        self.pdf_table = UniformCubic(xs[0], dx, ps,
                                      left=lambda z, nu=0: self._tail_pdf(z, nu),
                                      right=lambda z, nu=0: self._tail_pdf(z, nu))
        # CDF: cumulative integral of the spline, anchored by symmetry at 0
        c = self.pdf_table._c
        seg = c[0] * dx ** 4 / 4 + c[1] * dx ** 3 / 3 + c[2] * dx ** 2 / 2 + c[3] * dx
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        i0 = len(xs) // 2  # index of x = 0
        cum = cum - cum[i0] + 0.5
        self.cdf_table = UniformCubic(xs[0], dx, cum,
                                      left=lambda z, nu=0: _stable_series(a, z, integrated=True),
                                      right=lambda z, nu=0: 1 - _stable_series(a, z, integrated=True))

    def _tail_pdf(self, z, nu):
        if nu == 0:
            return _stable_series(self.a, z)
        h = 1e-4 * np.abs(z)
        if nu == 1:
            return (_stable_series(self.a, z + h) - _stable_series(self.a, z - h)) / (2 * h)
        return (_stable_series(self.a, z + h) - 2 * _stable_series(self.a, z)
                + _stable_series(self.a, z - h)) / h ** 2

    def pdf(self, x, nu=0):
        if self.a == 1.0:
            x = np.asarray(x, float)
            return 1.0 / (math.pi * (1 + x * x)) if nu == 0 else self.pdf_table(x, nu)
        return self.pdf_table(x, nu)

    def cdf(self, x):
        if self.a == 1.0:
            return 0.5 + np.arctan(np.asarray(x, float)) / math.pi
        return np.clip(self.cdf_table(x), 0.0, 1.0)


@lru_cache(maxsize=8)
def standard_stable(a):
    return _StandardStable(float(a))


def cms_standard(a, u, w, beta=0.0):
    """Chambers-Mallows-Stuck draw with E exp(i xi S) = exp(-|xi|^a (1 - i beta sgn tan(pi a/2))).

    u ~ U(-pi/2, pi/2), w ~ Exp(1). For a == 1 only beta = 0 is supported.
    """
    if a == 1.0:
        if beta != 0.0:
            raise UnsupportedKind("asymmetric index-1 sampling is not implemented")
        return np.tan(u)
    t = beta * math.tan(math.pi * a / 2)
    B = math.atan(t) / a
    S = (1 + t * t) ** (1 / (2 * a))
    au = a * (u + B)
    return S * np.sin(au) / np.cos(u) ** (1 / a) * (np.cos(u - au) / w) ** ((1 - a) / a)


# ---------------------------------------------------------------------------
# tabulated densities: PCHIP interior, exponential tails


def _seg_moments_exp(z, n):
    """M_n(z) = ∫_0^1 s^n e^{zs} ds for complex z array, n = 0..3."""
    z = np.asarray(z, complex)
    out = [np.empty_like(z) for _ in range(n + 1)]
    small = np.abs(z) < 1.0
    if small.any():
        zs = z[small]
        for m in range(n + 1):
            acc = np.zeros_like(zs)
            term = np.ones_like(zs)
            for k in range(0, 24):
                if k:
                    term = term * zs / k
                acc += term / (m + k + 1)
            out[m][small] = acc
    big = ~small
    if big.any():
        zb = z[big]
        ez = np.exp(zb)
        prev = (ez - 1) / zb
        out[0][big] = prev
        for m in range(1, n + 1):
            prev = (ez - m * prev) / zb
            out[m][big] = prev
    return out


class _Tabulated:
    def __init__(self, grid, values):
        x = np.asarray(grid, float)
        v = np.asarray(values, float)
        if x.ndim != 1 or x.size < 4 or x.size != v.size:
            raise ValueError("tabulated density needs at least 4 matching nodes")
        if np.any(np.diff(x) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise ValueError("tabulated density values must be strictly positive")
        self.x, self.v_raw = x, v
        rates = []
        width = x[-1] - x[0]
        for i0, i1 in ((1, 0), (-2, -1)):
            lam = (math.log(v[i0]) - math.log(v[i1])) / abs(x[i1] - x[i0])
            if lam <= 0:
                # flat or rising edges get a steep cut-off so the tail carries ~no mass
                lam = 1e6 * v[i1]
            lam = max(lam, 1.0 / width)
            rates.append(lam)
        self.lam_l, self.lam_r = rates
        p = PchipInterpolator(x, v)
        inner = float(p.integrate(x[0], x[-1]))
        total = inner + v[0] / self.lam_l + v[-1] / self.lam_r
        self.norm = total
        self.v = v / total
        self.p = PchipInterpolator(x, self.v)
        self.c = self.p.c  # (4, n-1): coefficients of (x - x_i)^(3-k)
        self.h = np.diff(x)
        self._cdf_nodes = np.concatenate([[self.v[0] / self.lam_l],
                                          self.v[0] / self.lam_l + np.cumsum(self._seg_integrals())])

    def _seg_integrals(self):
        c, h = self.c, self.h
        return c[0] * h ** 4 / 4 + c[1] * h ** 3 / 3 + c[2] * h ** 2 / 2 + c[3] * h

    def pdf(self, z):
        z = np.asarray(z, float)
        out = np.empty_like(z)
        lo, hi = z < self.x[0], z > self.x[-1]
        mid = ~(lo | hi)
        out[mid] = self.p(z[mid])
        out[lo] = self.v[0] * np.exp(self.lam_l * (z[lo] - self.x[0]))
        out[hi] = self.v[-1] * np.exp(-self.lam_r * (z[hi] - self.x[-1]))
        return out

    def cdf(self, z):
        z = np.asarray(z, float)
        out = np.empty_like(z)
        lo, hi = z < self.x[0], z > self.x[-1]
        mid = ~(lo | hi)
        out[lo] = self.v[0] / self.lam_l * np.exp(self.lam_l * (z[lo] - self.x[0]))
        out[hi] = 1 - self.v[-1] / self.lam_r * np.exp(-self.lam_r * (z[hi] - self.x[-1]))
        zm = z[mid]
        i = np.clip(np.searchsorted(self.x, zm, side="right") - 1, 0, len(self.h) - 1)
        d = zm - self.x[i]
        c = self.c
        part = c[0, i] * d ** 4 / 4 + c[1, i] * d ** 3 / 3 + c[2, i] * d ** 2 / 2 + c[3, i] * d
        out[mid] = self._cdf_nodes[i] + part
        return np.clip(out, 0.0, 1.0)

    def ppf(self, q):
        q = np.asarray(q, float)
        out = np.empty_like(q)
        F0, F1 = self._cdf_nodes[0], self._cdf_nodes[-1]
        lo, hi = q < F0, q > F1
        mid = ~(lo | hi)
        out[lo] = self.x[0] + np.log(q[lo] * self.lam_l / self.v[0]) / self.lam_l
        out[hi] = self.x[-1] - np.log((1 - q[hi]) * self.lam_r / self.v[-1]) / self.lam_r
        # piecewise: invert the cubic CDF segment by a few Newton steps from linear guess
        qm = q[mid]
        i = np.clip(np.searchsorted(self._cdf_nodes, qm, side="right") - 1, 0, len(self.h) - 1)
        a, b = self._cdf_nodes[i], self._cdf_nodes[i + 1]
        frac = np.where(b > a, (qm - a) / np.where(b > a, b - a, 1.0), 0.0)
        d = frac * self.h[i]
        c = self.c
        for _ in range(30):
            F = a + c[0, i] * d ** 4 / 4 + c[1, i] * d ** 3 / 3 + c[2, i] * d ** 2 / 2 + c[3, i] * d
            f = ((c[0, i] * d + c[1, i]) * d + c[2, i]) * d + c[3, i]
            step = (F - qm) / np.maximum(f, 1e-300)
            d = np.clip(d - step, 0.0, self.h[i])
            if np.max(np.abs(step)) < 1e-14 * max(1.0, np.max(np.abs(self.x))):
                break
        out[mid] = self.x[i] + d
        return out

    def _fourier_segments(self, xv):
        """Segment-wise series form; accurate for small |xi|."""
        c, h, x0 = self.c, self.h, self.x[:-1]
        out = np.empty(xv.shape, complex)
        chunk = max(1, 2_000_000 // len(h))
        for s in range(0, xv.size, chunk):
            xs = xv[s:s + chunk][:, None]
            M = _seg_moments_exp(1j * xs * h[None, :], 3)
            # ∫_0^h e^{i xi v} Σ c_k v^(3-k) dv = Σ c_k h^(4-k) M_(3-k)(i xi h)
            seg = (c[3] * h * M[0] + c[2] * h ** 2 * M[1] + c[1] * h ** 3 * M[2]
                   + c[0] * h ** 4 * M[3])
            out[s:s + chunk] = np.sum(np.exp(1j * xs * x0[None, :]) * seg, axis=1)
        return out

    def _fourier_parts(self, xv):
        """Integration by parts, exact on cubic pieces.

        Each segment contributes e^{wx}(f/w - f'/w^2 + f''/w^3 - f'''/w^4)
        evaluated between its knots, with w = i xi.
        """
        c, h, xk = self.c, self.h, self.x
        # one-sided values at the left (d=0) and right (d=h) ends of each segment
        fl, f1l, f2l = c[3], c[2], 2 * c[1]
        fr = ((c[0] * h + c[1]) * h + c[2]) * h + c[3]
        f1r = (3 * c[0] * h + 2 * c[1]) * h + c[2]
        f2r = 6 * c[0] * h + 2 * c[1]
        f3 = 6 * c[0]
        out = np.empty(xv.shape, complex)
        chunk = max(1, 2_000_000 // len(xk))
        for s in range(0, xv.size, chunk):
            w = 1j * xv[s:s + chunk][:, None]
            E = np.exp(w * xk[None, :])
            w2 = w * w
            right = fr / w - f1r / w2 + f2r / (w2 * w) - f3 / (w2 * w2)
            left = fl / w - f1l / w2 + f2l / (w2 * w) - f3 / (w2 * w2)
            out[s:s + chunk] = np.sum(E[:, 1:] * right - E[:, :-1] * left, axis=1)
        return out

    def fourier(self, xi):
        xi = np.asarray(xi, float)
        xv = xi.ravel()
        small = np.abs(xv) * (self.x[-1] - self.x[0]) < 2.0
        body = np.empty(xv.shape, complex)
        if small.any():
            body[small] = self._fourier_segments(xv[small])
        if (~small).any():
            body[~small] = self._fourier_parts(xv[~small])
        tails = (self.v[0] * np.exp(1j * xv * self.x[0]) / (self.lam_l + 1j * xv)
                 + self.v[-1] * np.exp(1j * xv * self.x[-1]) / (self.lam_r - 1j * xv))
        return (body + tails).reshape(xi.shape)

    def moment(self, k, absolute=False):
        """∫ x^k h (or ∫ |x|^k h); exact for the piecewise-cubic + exponential model."""
        t, w = np.polynomial.legendre.leggauss(8)
        # split at 0 for |x|
        xs = self.x
        if absolute and xs[0] < 0 < xs[-1] and not np.any(xs == 0):
            xs = np.sort(np.append(xs, 0.0))
        a, b = xs[:-1], xs[1:]
        y = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * t[None, :]
        ww = 0.5 * (b - a)[:, None] * w[None, :]
        f = np.abs(y) ** k if absolute else y ** k
        body = float(np.sum(f * self.p(y) * ww))
        tails = 0.0
        for side, x_e, v_e, lam in ((1, self.x[-1], self.v[-1], self.lam_r),
                                    (-1, self.x[0], self.v[0], self.lam_l)):
            # ∫ over the exponential tail by Gauss-Laguerre
            tl, wl = np.polynomial.laguerre.laggauss(40)
            yy = x_e + side * tl / lam
            f = np.abs(yy) ** k if absolute else yy ** k
            tails += float(np.sum(wl * f)) * v_e / lam
        return body + tails


# ---------------------------------------------------------------------------


class DensitySpec:
    """A strictly positive probability density on the real line.

    Treat instances as immutable: tables and moments are computed once at
    construction.
    """

    def __init__(self, kind, **params):
        if kind not in KINDS:
            raise UnsupportedKind(f"unknown density kind {kind!r}")
        self.kind = kind
        self.params = params
        if kind == "gaussian":
            self._m, self._v = float(params["mean"]), float(params["variance"])
            if self._v <= 0:
                raise ValueError("variance must be positive")
        elif kind == "gaussian-mixture":
            w = np.asarray(params["weights"], float)
            m = np.asarray(params["means"], float)
            v = np.asarray(params["variances"], float)
            if not (w.shape == m.shape == v.shape) or np.any(w <= 0) or np.any(v <= 0):
                raise ValueError("mixture needs positive weights and variances of equal length")
            self._w, self._mm, self._vv = w / w.sum(), m, v
        elif kind == "laplace":
            self._m, self._b = float(params["mean"]), float(params["scale"])
            if self._b <= 0:
                raise ValueError("laplace scale must be positive")
        elif kind == "stable-marginal":
            a, c, t = float(params["index"]), float(params["scale"]), float(params["time"])
            if not (0 < a < 2) or c <= 0 or t <= 0:
                raise ValueError("stable marginal needs index in (0,2), scale > 0, time > 0")
            self._a, self._ct = a, c * t
            self._s = (c * t) ** (1 / a)
            self._std = standard_stable(a)
        else:
            self._tab = _Tabulated(params["grid"], params["values"])
        self._moments = self._compute_moments()

    # constructors -----------------------------------------------------------
    @classmethod
    def gaussian(cls, mean=0.0, variance=1.0):
        return cls("gaussian", mean=float(mean), variance=float(variance))

    @classmethod
    def mixture(cls, weights, means, variances):
        return cls("gaussian-mixture", weights=list(map(float, weights)),
                   means=list(map(float, means)), variances=list(map(float, variances)))

    @classmethod
    def laplace(cls, mean=0.0, scale=1.0):
        return cls("laplace", mean=float(mean), scale=float(scale))

    @classmethod
    def stable_marginal(cls, index, scale=1.0, time=1.0):
        """Law of a symmetric stable process with eta = -scale |u|^index at ``time``."""
        return cls("stable-marginal", index=float(index), scale=float(scale), time=float(time))

    @classmethod
    def tabulated(cls, grid, values):
        return cls("tabulated", grid=[float(x) for x in grid], values=[float(v) for v in values])

    @classmethod
    def from_csv(cls, path):
        try:
            data = np.loadtxt(path, delimiter=",")
        except ValueError:
            data = np.loadtxt(path, delimiter=",", skiprows=1)
        return cls.tabulated(data[:, 0], data[:, 1])

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d):
        p = dict(d.get("params", {}))
        if d.get("kind") == "tabulated" and "csv" in p:
            return cls.from_csv(p["csv"])
        return cls(d["kind"], **p)

    def __repr__(self):
        return f"DensitySpec({self.kind!r}, {self.params!r})"

    # evaluation -------------------------------------------------------------
    def pdf(self, x):
        x = np.asarray(x, float)
        k = self.kind
        if k == "gaussian":
            return np.exp(-0.5 * (x - self._m) ** 2 / self._v) / math.sqrt(2 * math.pi * self._v)
        if k == "gaussian-mixture":
            z = x[..., None]
            return np.sum(self._w * np.exp(-0.5 * (z - self._mm) ** 2 / self._vv)
                          / np.sqrt(2 * math.pi * self._vv), axis=-1)
        if k == "laplace":
            return np.exp(-np.abs(x - self._m) / self._b) / (2 * self._b)
        if k == "stable-marginal":
            return self._std.pdf(x / self._s) / self._s
        return self._tab.pdf(x)

    __call__ = pdf

    def cdf(self, x):
        x = np.asarray(x, float)
        k = self.kind
        if k == "gaussian":
            return special.ndtr((x - self._m) / math.sqrt(self._v))
        if k == "gaussian-mixture":
            z = x[..., None]
            return np.sum(self._w * special.ndtr((z - self._mm) / np.sqrt(self._vv)), axis=-1)
        if k == "laplace":
            z = (x - self._m) / self._b
            return np.where(z < 0, 0.5 * np.exp(np.minimum(z, 0)), 1 - 0.5 * np.exp(-np.maximum(z, 0)))
        if k == "stable-marginal":
            return self._std.cdf(x / self._s)
        return self._tab.cdf(x)

    def log_fourier(self, xi):
        """log h^(xi) for kinds where it is available in closed form, else None."""
        xi = np.asarray(xi, float)
        k = self.kind
        if k == "gaussian":
            return 1j * self._m * xi - 0.5 * self._v * xi * xi
        if k == "laplace":
            return 1j * self._m * xi - np.log1p((self._b * xi) ** 2)
        if k == "stable-marginal":
            return -self._ct * np.abs(xi) ** self._a + 0j
        return None

    def fourier(self, xi):
        """h^(xi) = ∫ e^{i xi x} h(x) dx."""
        xi = np.asarray(xi, float)
        lf = self.log_fourier(xi)
        if lf is not None:
            return np.exp(lf)
        if self.kind == "gaussian-mixture":
            z = xi[..., None]
            return np.sum(self._w * np.exp(1j * self._mm * z - 0.5 * self._vv * z * z), axis=-1)
        return self._tab.fourier(xi)

    def sample(self, rng, n=None):
        """Inverse-CDF draws (stable marginals use the exact CMS construction)."""
        size = 1 if n is None else n
        k = self.kind
        if k == "stable-marginal":
            u = rng.uniform(-math.pi / 2, math.pi / 2, size)
            w = rng.standard_exponential(size)
            out = self._s * cms_standard(self._a, u, w)
        else:
            q = rng.random(size)
            out = self.ppf(q)
        return float(out[0]) if n is None else out

    def ppf(self, q):
        q = np.asarray(q, float)
        k = self.kind
        if k == "gaussian":
            return self._m + math.sqrt(self._v) * special.ndtri(q)
        if k == "laplace":
            return np.where(q < 0.5, self._m + self._b * np.log(2 * q),
                            self._m - self._b * np.log(2 * (1 - q)))
        if k == "tabulated":
            return self._tab.ppf(q)
        # monotone numeric inversion on a bracketing grid
        R = 40 * self.scale
        qt = float(np.min(np.minimum(q, 1 - q))) if q.size else 0.5
        if self.heavy_tailed and 0 < qt < 1e-3:
            R = max(R, 2 * self.tail_radius(qt))
        lo, hi = self.center - R, self.center + R
        grid = np.linspace(lo, hi, 20001)
        if R > 40 * self.scale:
            # geometric spacing keeps resolution near the center
            pos = np.geomspace(1e-3 * self.scale, R, 10000)
            grid = self.center + np.concatenate([-pos[::-1], [0.0], pos])
        F = self.cdf(grid)
        x = np.interp(q, F, grid)
        for _ in range(3):
            x = x - (self.cdf(x) - q) / np.maximum(self.pdf(x), 1e-300)
        return x

    # moments and scales -------------------------------------------------------
    def _compute_moments(self):
        k = self.kind
        if k == "gaussian":
            m, v = self._m, self._v
            s = math.sqrt(v)
            absm = s * math.sqrt(2 / math.pi) * math.exp(-m * m / (2 * v)) + m * (1 - 2 * special.ndtr(-m / s))
            return {"mean": m, "second": v + m * m, "third": m ** 3 + 3 * m * v,
                    "fourth": m ** 4 + 6 * m * m * v + 3 * v * v, "abs_first": absm}
        if k == "gaussian-mixture":
            w, m, v = self._w, self._mm, self._vv
            s = np.sqrt(v)
            absm = s * math.sqrt(2 / math.pi) * np.exp(-m * m / (2 * v)) + m * (1 - 2 * special.ndtr(-m / s))
            return {"mean": float(w @ m), "second": float(w @ (v + m * m)),
                    "third": float(w @ (m ** 3 + 3 * m * v)),
                    "fourth": float(w @ (m ** 4 + 6 * m * m * v + 3 * v * v)),
                    "abs_first": float(w @ absm)}
        if k == "laplace":
            m, b = self._m, self._b
            return {"mean": m, "second": m * m + 2 * b * b, "third": m ** 3 + 6 * m * b * b,
                    "fourth": m ** 4 + 12 * m * m * b * b + 24 * b ** 4,
                    "abs_first": abs(m) + b * math.exp(-abs(m) / b)}
        if k == "stable-marginal":
            a = self._a
            inf = math.inf
            absm = self._s * 2 / math.pi * special.gamma(1 - 1 / a) if a > 1 else inf
            return {"mean": 0.0 if a > 1 else math.nan, "second": inf, "third": math.nan,
                    "fourth": inf, "abs_first": absm}
        t = self._tab
        return {"mean": t.moment(1), "second": t.moment(2), "third": t.moment(3),
                "fourth": t.moment(4), "abs_first": t.moment(1, absolute=True)}

    @property
    def moments(self):
        return dict(self._moments)

    @property
    def mean(self):
        return self._moments["mean"]

    @property
    def heavy_tailed(self):
        return self.kind == "stable-marginal"

    @property
    def center(self):
        m = self._moments["mean"]
        return 0.0 if not math.isfinite(m) else m

    @property
    def scale(self):
        """Standard deviation, or the stable scale (c t)^(1/a) for heavy tails."""
        if self.kind == "stable-marginal":
            return self._s
        return math.sqrt(max(self._moments["second"] - self._moments["mean"] ** 2, 1e-300))

    def tail_radius(self, mass):
        """Radius R (around the center) with P(|X - center| > R) <= mass."""
        if self.kind == "gaussian":
            return math.sqrt(self._v) * float(special.ndtri(1 - mass / 2))
        if self.kind == "stable-marginal":
            f = lambda r: 2 * (1 - float(self._std.cdf(r))) - mass
            hi = 10.0
            while f(hi) > 0:
                hi *= 2
            return self._s * optimize.brentq(f, 0.0, hi, xtol=1e-10)
        c = self.center
        f = lambda r: (1 - float(self.cdf(c + r))) + float(self.cdf(c - r)) - mass
        hi = self.scale
        while f(hi) > 0:
            hi *= 2
        return optimize.brentq(f, 0.0, hi, xtol=1e-10 * hi)

    def pdf_derivatives(self, x):
        """(h', h'') by central differences of the evaluator (used in surrogates)."""
        x = np.asarray(x, float)
        d = 1e-4 * self.scale
        f0, fp, fm = self.pdf(x), self.pdf(x + d), self.pdf(x - d)
        return (fp - fm) / (2 * d), (fp - 2 * f0 + fm) / (d * d)


class DensityPair:
    """(h0, h1) with an accurate g^ = h1^ - h0^."""

    def __init__(self, h0: DensitySpec, h1: DensitySpec):
        self.h0, self.h1 = h0, h1

    def g(self, x):
        return self.h1.pdf(x) - self.h0.pdf(x)

    def g_hat(self, xi):
        xi = np.asarray(xi, float)
        l0, l1 = self.h0.log_fourier(xi), self.h1.log_fourier(xi)
        if l0 is not None and l1 is not None:
            # exp(l0) * expm1(l1 - l0) avoids cancellation near xi = 0
            d = l1 - l0
            small = np.abs(d) < 1.0
            with np.errstate(over="ignore", invalid="ignore"):
                near = np.exp(l0) * np.expm1(np.where(small, d, 0.0))
            return np.where(small, near, np.exp(l1) - np.exp(l0))
        return self.h1.fourier(xi) - self.h0.fourier(xi)

    def moment_differences(self):
        """Δm_k = m_k(h1) - m_k(h0) for k = 1..4 (nan/inf when undefined)."""
        keys = ("mean", "second", "third", "fourth")
        out = []
        for k in keys:
            a, b = self.h1.moments[k], self.h0.moments[k]
            out.append(a - b if (math.isfinite(a) and math.isfinite(b)) else math.nan)
        return out

    @property
    def identical(self):
        return self.h0.to_dict() == self.h1.to_dict()

    def default_extent(self):
        """Half-width X of the reporting grid."""
        X = max(abs(h.center) + 8 * h.scale for h in (self.h0, self.h1))
        if self.h0.heavy_tailed or self.h1.heavy_tailed:
            X = max(X, max(abs(h.center) + h.tail_radius(5e-5) for h in (self.h0, self.h1)))
        return X

    def default_spacing(self, X=None):
        X = self.default_extent() if X is None else X
        return min(X / 2 ** 12, min(self.h0.scale, self.h1.scale) / 128)

    def to_dict(self):
        return {"h0": self.h0.to_dict(), "h1": self.h1.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(DensitySpec.from_dict(d["h0"]), DensitySpec.from_dict(d["h1"]))


def fourier(spec: DensitySpec, xi):
    return spec.fourier(xi)


# ---------------------------------------------------------------------------
# regularity surrogates


def _sample_grid(h: DensitySpec):
    """Sampling points for finite-difference surrogates, plus the spacing."""
    if h.kind == "tabulated":
        x = h._tab.x
        return x, np.diff(x)
    d = h.scale / 64
    x = h.center + d * np.arange(-16 * 64, 16 * 64 + 1)
    return x, np.full(x.size - 1, d)


def _continuity(h):
    x, _ = _sample_grid(h)
    y = h.pdf(x)
    fine = np.max(np.abs(np.diff(y)))
    coarse = np.max(np.abs(np.diff(y[::2])))
    ratio = fine / coarse if coarse > 0 else 0.0
    return {"check": "continuity", "jump_ratio": ratio, "pass": bool(ratio < 0.75)}


def _decay(h):
    r = h.center + h.scale * 10.0 ** np.arange(1, 9)
    vals = np.maximum(h.pdf(r), h.pdf(2 * h.center - r))
    ok = bool(vals[-1] < 1e-8 and np.all(np.diff(vals[-4:]) <= 0))
    return {"check": "decay", "edge_value": float(vals[-1]), "pass": ok}


def _derivatives(h):
    x, _ = _sample_grid(h)
    out = {"check": "derivatives"}
    norms = []
    for xs in (x, x[::2]):
        y = h.pdf(xs)
        d1 = np.diff(y) / np.diff(xs)
        xm = 0.5 * (xs[1:] + xs[:-1])
        d2 = np.diff(d1) / np.diff(xm)
        l1_1 = float(np.sum(np.abs(d1) * np.diff(xs)))
        l1_2 = float(np.sum(np.abs(d2) * np.diff(xm)))
        norms.append((l1_1, l1_2, d1, d2))
    (a1, a2, d1, d2), (b1, b2, _, _) = norms
    r1 = a1 / b1 if b1 > 0 else 1.0
    r2 = a2 / b2 if b2 > 0 else 1.0
    edge = max(abs(d1[0]), abs(d1[-1]), abs(d2[0]), abs(d2[-1]))
    scale = max(np.max(np.abs(d1)), 1e-300)
    out.update(l1_first=a1, l1_second=a2, refine_ratio_first=r1, refine_ratio_second=r2,
               edge_derivative=float(edge))
    conv = abs(r1 - 1) < 0.25 and abs(r2 - 1) < 0.25
    out["pass"] = bool(conv and edge < 1e-6 * scale)
    return out


def _compact_fourier_support(pair: DensityPair):
    s = min(pair.h0.scale, pair.h1.scale)
    xi_max = 30.0 / s
    xi = np.linspace(0.0, xi_max, 3001)
    a = np.abs(pair.g_hat(xi))
    above = np.nonzero(a >= 1e-10)[0]
    r_tol = float(xi[above[-1]]) if above.size else 0.0
    nz = np.nonzero(a > 0)[0]
    r_exact = float(xi[nz[-1]]) if nz.size else 0.0
    ok = r_exact < 0.9 * xi_max
    return {"check": "compact_fourier_support", "radius": r_tol, "exact_zero_beyond": r_exact,
            "scan_limit": xi_max, "pass": bool(ok)}


def check_regularity(pair: DensityPair, cls) -> dict:
    """Numerical surrogates for the smoothness each process type needs.

    Never raises; returns per-check measurements and an overall flag.
    """
    tag = cls.tag if hasattr(cls, "tag") else str(cls)
    checks = []
    if tag == "S":
        for name, h in (("h0", pair.h0), ("h1", pair.h1)):
            for c in (_continuity(h), _decay(h)):
                checks.append({"density": name, **c})
    elif tag == "Zero":
        for name, h in (("h0", pair.h0), ("h1", pair.h1)):
            for c in (_derivatives(h), _decay(h)):
                checks.append({"density": name, **c})
    elif tag == "D":
        checks.append({"density": "g", **_compact_fourier_support(pair)})
    else:
        raise ValueError(f"unknown class tag {tag!r}")
    return {"class": tag, "checks": checks, "pass": all(c["pass"] for c in checks)}
