"""Lévy triplets, characteristic exponents and (adjoint) generators.

Conventions: the characteristic exponent is

    eta(u) = -alpha2 u^2 / 2 + i u gamma + ∫ (e^{iuy} - 1 - iuy 1{|y|<=1}) nu(dy)

so that E[exp(iu L_t)] = exp(t eta(u)). Fourier transforms use the
kernel e^{+i xi x}; with that kernel the adjoint generator acts as the
multiplier eta(xi).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .errors import QuadratureError, UnsupportedKind

_GL_T, _GL_W = np.polynomial.legendre.leggauss(16)
# nodes/weights on [0, 1]
_GL01_T = 0.5 * (_GL_T + 1.0)
_GL01_W = 0.5 * _GL_W
_GL12_T, _GL12_W = np.polynomial.legendre.leggauss(12)


# ---------------------------------------------------------------------------
# jump measures


@dataclass(frozen=True)
class JumpMeasure:
    """Lévy measure nu.

    kind is one of ``none``, ``atoms``, ``stable`` or ``tabulated``.

    * atoms: ``locations``/``rates`` of finitely many point masses.
    * stable: density k_+ y^{-1-a} on y>0 and k_- |y|^{-1-a} on y<0 with
      k_± = w_± c / A(a), A(a) = ∫_0^∞ (1-cos z) z^{-1-a} dz.  With equal
      weights this gives eta(u) = -c|u|^a.  ``cutoff`` records the
      small-jump truncation used by approximate samplers.
    * tabulated: piecewise-linear density through (grid, values), zero
      outside the grid.
    """

    kind: str = "none"
    locations: tuple = ()
    rates: tuple = ()
    index: float = 0.0
    scale: float = 0.0
    left: float = 0.5
    right: float = 0.5
    cutoff: float = 0.1
    grid: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        k = self.kind
        if k == "none":
            return
        if k == "atoms":
            if len(self.locations) != len(self.rates) or not self.locations:
                raise ValueError("atoms need matching, non-empty locations and rates")
            if any(x == 0.0 for x in self.locations):
                raise ValueError("jump measure may not charge 0")
            if any(not (r > 0.0) for r in self.rates):
                raise ValueError("atom rates must be positive")
        elif k == "stable":
            if not (0.0 < self.index < 2.0):
                raise ValueError("stable index must lie in (0, 2)")
            if not (self.scale > 0.0):
                raise ValueError("stable scale must be positive")
            if self.left < 0 or self.right < 0 or self.left + self.right <= 0:
                raise ValueError("stable weights must be nonnegative, not both 0")
            if not (0.0 < self.cutoff <= 1.0):
                raise ValueError("cutoff must lie in (0, 1]")
        elif k == "tabulated":
            g = np.asarray(self.grid, float)
            v = np.asarray(self.values, float)
            if g.ndim != 1 or g.size < 2 or g.size != v.size:
                raise ValueError("tabulated measure needs matching grid/values")
            if np.any(np.diff(g) <= 0):
                raise ValueError("grid must be strictly increasing")
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise ValueError("measure density must be finite and nonnegative")
        else:
            raise UnsupportedKind(f"unknown jump measure kind {k!r}")

    # constructors -------------------------------------------------------
    @classmethod
    def none(cls):
        return cls("none")

    @classmethod
    def atoms(cls, locations, rates):
        return cls("atoms", locations=tuple(float(x) for x in locations),
                   rates=tuple(float(r) for r in rates))

    @classmethod
    def stable(cls, index, scale, left=0.5, right=0.5, cutoff=0.1):
        left, right = float(left), float(right)
        s = left + right
        if abs(s - 1.0) > 1e-12:  # already-normalized weights pass through so JSON round-trips
            left, right = left / s, right / s
        return cls("stable", index=float(index), scale=float(scale),
                   left=left, right=right, cutoff=float(cutoff))

    @classmethod
    def tabulated(cls, grid, values):
        g = np.asarray(grid, float)
        v = np.asarray(values, float)
        # split segments at 0 and ±1 so the compensator indicator is piecewise smooth
        for b in (-1.0, 0.0, 1.0):
            if g[0] < b < g[-1] and not np.any(g == b):
                j = np.searchsorted(g, b)
                vb = v[j - 1] + (v[j] - v[j - 1]) * (b - g[j - 1]) / (g[j] - g[j - 1])
                g = np.insert(g, j, b)
                v = np.insert(v, j, vb)
        return cls("tabulated", grid=tuple(g.tolist()), values=tuple(v.tolist()))

    # derived quantities ---------------------------------------------------
    @property
    def is_zero(self):
        if self.kind == "none":
            return True
        if self.kind == "tabulated":
            return not np.any(np.asarray(self.values) > 0)
        return False

    def stable_coefficients(self):
        """(k_plus, k_minus) of the power-law density."""
        a = self.index
        A = math.pi / 2 if a == 1.0 else special.gamma(1 - a) * math.cos(math.pi * a / 2) / a
        return self.right * self.scale / A, self.left * self.scale / A

    def reflected(self):
        """Image of nu under y -> -y."""
        if self.kind in ("none",):
            return self
        if self.kind == "atoms":
            return JumpMeasure.atoms([-x for x in self.locations], self.rates)
        if self.kind == "stable":
            return JumpMeasure("stable", index=self.index, scale=self.scale,
                               left=self.right, right=self.left, cutoff=self.cutoff)
        g = -np.asarray(self.grid)[::-1]
        v = np.asarray(self.values)[::-1]
        return JumpMeasure("tabulated", grid=tuple(g.tolist()), values=tuple(v.tolist()))

    def is_symmetric(self, tol=1e-12):
        if self.kind == "none":
            return True
        if self.kind == "atoms":
            a = sorted(zip(self.locations, self.rates))
            b = sorted(zip((-x for x in self.locations), self.rates))
            return all(abs(p[0] - q[0]) <= tol and abs(p[1] - q[1]) <= tol * max(1, p[1])
                       for p, q in zip(a, b))
        if self.kind == "stable":
            return abs(self.left - self.right) <= tol
        g = np.asarray(self.grid)
        v = np.asarray(self.values)
        vr = np.interp(-g, g, v, left=0.0, right=0.0)
        return bool(np.max(np.abs(vr - v)) <= tol * max(1.0, np.max(v)))

    def small_moment(self):
        """∫ (y^2 ∧ 1) nu(dy); finite for every valid representation."""
        if self.kind == "none":
            return 0.0
        if self.kind == "atoms":
            return sum(r * min(x * x, 1.0) for x, r in zip(self.locations, self.rates))
        if self.kind == "stable":
            a = self.index
            kp, km = self.stable_coefficients()
            return (kp + km) * (1.0 / (2.0 - a) + 1.0 / a)
        g = np.asarray(self.grid)
        v = np.asarray(self.values)
        w = np.minimum(g * g, 1.0)
        return float(integrate.trapezoid(w * v, g))

    def density(self, y):
        """Density of nu at y (atoms have none)."""
        y = np.asarray(y, float)
        if self.kind == "stable":
            kp, km = self.stable_coefficients()
            ay = np.abs(y)
            with np.errstate(divide="ignore"):
                d = np.where(y > 0, kp, km) * ay ** (-1.0 - self.index)
            return np.where(y == 0, 0.0, d)
        if self.kind == "tabulated":
            return np.interp(y, self.grid, self.values, left=0.0, right=0.0)
        if self.kind == "none":
            return np.zeros_like(y)
        raise UnsupportedKind("atomic measures have no density")

    # serialization --------------------------------------------------------
    def to_dict(self):
        if self.kind == "none":
            return {"kind": "none", "params": {}}
        if self.kind == "atoms":
            return {"kind": "atoms", "params": {"locations": list(self.locations),
                                                "rates": list(self.rates)}}
        if self.kind == "stable":
            return {"kind": "stable", "params": {"index": self.index, "scale": self.scale,
                                                 "left": self.left, "right": self.right,
                                                 "cutoff": self.cutoff}}
        return {"kind": "tabulated", "params": {"grid": list(self.grid),
                                                "values": list(self.values)}}

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind", "none")
        p = d.get("params", {})
        if kind == "none":
            return cls.none()
        if kind == "atoms":
            return cls.atoms(p["locations"], p["rates"])
        if kind == "stable":
            return cls.stable(p["index"], p["scale"], p.get("left", 0.5), p.get("right", 0.5),
                              p.get("cutoff", 0.1))
        if kind == "tabulated":
            return cls.tabulated(p["grid"], p["values"])
        raise UnsupportedKind(f"unknown jump measure kind {kind!r}")


@dataclass(frozen=True)
class LevyTriplet:
    """Generating triplet (alpha2, gamma, nu)."""

    alpha2: float = 0.0
    gamma: float = 0.0
    nu: JumpMeasure = field(default_factory=JumpMeasure.none)

    def __post_init__(self):
        if not (self.alpha2 >= 0.0):
            raise ValueError("alpha2 must be nonnegative")
        if self.alpha2 == 0.0 and self.gamma == 0.0 and self.nu.is_zero:
            raise ValueError("constant process: alpha2, gamma and nu all vanish")
        if not math.isfinite(self.nu.small_moment()):
            raise ValueError("∫(y^2 ∧ 1) nu(dy) is not finite")

    @classmethod
    def brownian(cls, variance=1.0, drift=0.0):
        return cls(float(variance), float(drift), JumpMeasure.none())

    @classmethod
    def symmetric_stable(cls, index, scale=1.0):
        return cls(0.0, 0.0, JumpMeasure.stable(index, scale))

    def reflected(self):
        """Triplet of the dual process -L: (alpha2, -gamma, nu(-dy))."""
        return LevyTriplet(self.alpha2, -self.gamma, self.nu.reflected())

    @property
    def is_symmetric(self):
        return self.gamma == 0.0 and self.nu.is_symmetric()

    @property
    def closed_form(self):
        k = self.nu.kind
        if k == "none":
            return "gaussian"
        if k == "stable" and self.alpha2 == 0.0 and self.gamma == 0.0:
            return "stable"
        if k == "atoms" and self.alpha2 == 0.0:
            return "compound-poisson"
        return "mixed"

    def to_dict(self):
        return {"alpha2": self.alpha2, "gamma": self.gamma, "nu": self.nu.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d.get("alpha2", 0.0)), float(d.get("gamma", 0.0)),
                   JumpMeasure.from_dict(d.get("nu", {"kind": "none"})))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


# ---------------------------------------------------------------------------
# characteristic exponent


def _stable_part(nu, u):
    a = nu.index
    kp, km = nu.stable_coefficients()
    au = np.abs(u)
    sg = np.sign(u)
    if a == 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(au > 0, np.log(au), 0.0)
        # one-sided piece: -pi|u|/2 + iu(1 - gamma_E - log|u|)
        re = -(kp + km) * math.pi / 2 * au
        im = (kp - km) * u * (1.0 - np.euler_gamma - lg)
        return re + 1j * im
    g = special.gamma(-a)
    c, s = math.cos(math.pi * a / 2), math.sin(math.pi * a / 2)
    ua = au ** a
    return g * ua * ((kp + km) * c - 1j * sg * (kp - km) * s) + 1j * u * (kp - km) / (a - 1.0)


def _phi1(w):
    """(e^w - 1)/w for complex w, accurate near 0."""
    w = np.asarray(w, complex)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-3
    ws = w[small]
    out[small] = 1 + ws / 2 + ws * ws / 6 + ws ** 3 / 24
    wl = w[~small]
    out[~small] = np.expm1(wl) / wl
    return out


def _phi2(w):
    """(e^w (w - 1) + 1)/w^2, the normalized ∫_0^1 v e^{wv} dv."""
    w = np.asarray(w, complex)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-2
    ws = w[small]
    out[small] = 0.5 + ws / 3 + ws * ws / 8 + ws ** 3 / 30 + ws ** 4 / 144
    wl = w[~small]
    out[~small] = (np.exp(wl) * (wl - 1.0) + 1.0) / (wl * wl)
    return out


def _tabulated_part(nu, u):
    """Exact integral of the compensated kernel against a piecewise-linear density.

    Short-phase segments use 12-point Gauss-Legendre on a cancellation-free
    form of the kernel; long-phase segments use the closed-form (Filon)
    integral of e^{iuy} times a linear function.
    """
    g = np.asarray(nu.grid)
    v = np.asarray(nu.values)
    p, q = g[:-1], g[1:]
    h = q - p
    vp, vq = v[:-1], v[1:]
    slope = (vq - vp) / h
    mid = 0.5 * (p + q)
    inner = (np.abs(mid) <= 1.0).astype(float)
    mass = 0.5 * h * (vp + vq)
    # first moment ∫ y nu over each segment (exact for linear nu)
    mom1 = h * (vp * (p / 2 + q / 2) + (vq - vp) * (p / 6 + q / 3))
    yq = mid[:, None] + 0.5 * h[:, None] * _GL12_T[None, :]
    wq = 0.5 * h[:, None] * _GL12_W[None, :]
    nq = vp[:, None] + slope[:, None] * (yq - p[:, None])
    out = np.empty(u.shape, complex)
    for k, uk in enumerate(u.ravel()):
        if uk == 0.0:
            out.flat[k] = 0.0
            continue
        phase = np.abs(uk) * h
        short = phase <= 2.0
        tot = 0.0 + 0.0j
        if short.any():
            z = uk * yq[short]
            re = -2.0 * np.sin(0.5 * z) ** 2
            s = np.sin(z)
            comp = np.where(np.abs(z) < 1e-3, -z ** 3 / 6 + z ** 5 / 120, s - z)
            im = np.where(inner[short][:, None] > 0, comp, s)
            tot += np.sum((re + 1j * im) * nq[short] * wq[short])
        lg = ~short
        if lg.any():
            w = 1j * uk * h[lg]
            seg = np.exp(1j * uk * p[lg]) * h[lg] * (vp[lg] * _phi1(w) + slope[lg] * h[lg] * _phi2(w))
            tot += np.sum(seg) - np.sum(mass[lg]) - 1j * uk * np.sum(mom1[lg] * inner[lg])
        out.flat[k] = tot
    return out


def eta_eval(triplet: LevyTriplet, u):
    """Characteristic exponent at u (scalar or array)."""
    uu = np.asarray(u, float)
    scalar = uu.ndim == 0
    uu = np.atleast_1d(uu)
    out = -0.5 * triplet.alpha2 * uu * uu + 1j * triplet.gamma * uu
    nu = triplet.nu
    if nu.kind == "atoms":
        x = np.asarray(nu.locations)
        lam = np.asarray(nu.rates)
        z = uu[..., None] * x
        comp = np.where(np.abs(x) <= 1.0, 1.0, 0.0)
        re = -2.0 * np.sin(0.5 * z) ** 2
        im = np.sin(z) - comp * z
        out = out + np.sum((re + 1j * im) * lam, axis=-1)
    elif nu.kind == "stable":
        out = out + _stable_part(nu, uu)
    elif nu.kind == "tabulated":
        out = out + _tabulated_part(nu, uu)
    return complex(out[0]) if scalar else out


@dataclass(frozen=True)
class CharExponent:
    """eta bound to its triplet, callable on arrays."""

    triplet: LevyTriplet

    @property
    def closed_form(self):
        return self.triplet.closed_form

    def __call__(self, u):
        return eta_eval(self.triplet, u)

    def taylor(self):
        """Coefficients (c1, c2, c3, c4) with eta(u) ≈ Σ c_k u^k, or None.

        Available only when nu has four finite moments.
        """
        nu = self.triplet.nu
        if nu.kind == "stable":
            return None
        if nu.kind == "none":
            m = [0.0] * 5
            inner1 = 0.0
        elif nu.kind == "atoms":
            x = np.asarray(nu.locations)
            lam = np.asarray(nu.rates)
            m = [float(np.sum(lam * x ** k)) for k in range(5)]
            inner1 = float(np.sum(lam * x * (np.abs(x) <= 1.0)))
        else:
            g = np.asarray(nu.grid)
            v = np.asarray(nu.values)
            fine = np.linspace(g[0], g[-1], 20001)
            vf = np.interp(fine, g, v)
            m = [float(integrate.simpson(vf * fine ** k, x=fine)) for k in range(5)]
            inner1 = float(integrate.simpson(vf * fine * (np.abs(fine) <= 1), x=fine))
        t = self.triplet
        c1 = 1j * (t.gamma + m[1] - inner1)
        c2 = -0.5 * (t.alpha2 + m[2])
        c3 = -1j * m[3] / 6.0
        c4 = m[4] / 24.0
        return (c1, c2, c3, c4)


# ---------------------------------------------------------------------------
# classification


@dataclass(frozen=True)
class ProcessClass:
    """Type tag S, Zero or D with the numerical evidence behind it."""

    tag: str
    evidence: dict
    low_confidence: bool = False

    def to_dict(self):
        return {"tag": self.tag, "low_confidence": self.low_confidence,
                "evidence": self.evidence}


def _log_simpson(fun, a, b, n=64):
    """∫_a^b fun(u) du by Simpson's rule in log u (a > 0)."""
    s = np.linspace(math.log(a), math.log(b), n + 1)
    u = np.exp(s)
    return float(integrate.simpson(fun(u) * u, x=s))


def _doubling_integral(fun, start, u_max=1e8, tol=1e-8, plateau=1e-4, head=None):
    """Improper integral ∫_start^∞ fun by doubling the upper limit.

    Returns (value, converged, low_confidence, last_increment, upper).
    """
    total = head if head is not None else 0.0
    U = start
    prev = None
    inc = math.inf
    while True:
        inc = _log_simpson(fun, U, 2 * U)
        if not math.isfinite(inc):
            return math.inf, False, False, inc, 2 * U
        total += inc
        U *= 2
        if inc < tol:
            return total, True, False, inc, U
        if U > u_max:
            ratio = inc / prev if prev else 1.0
            if ratio < 0.9:
                rem = inc * ratio / (1 - ratio)
                return total + rem, True, inc > plateau, inc, U
            if inc > plateau:
                return math.inf, False, False, inc, U
            return math.inf, False, True, inc, U
        prev = inc


def _liminf_abs_eta(triplet, u_max=1e6, windows=13, width=100.0, npts=10001):
    """Estimate liminf |eta(u)| from dense windows placed log-uniformly up to u_max."""
    eta = CharExponent(triplet)
    starts = np.logspace(0, math.log10(u_max), windows)
    if triplet.nu.kind == "tabulated":
        npts = 1001
    mins = []
    for s in starts:
        uu = np.linspace(s, s + width, npts)
        a = np.abs(eta(uu))
        best = float(a.min())
        # refine the few lowest local minima
        loc = np.where((a[1:-1] <= a[:-2]) & (a[1:-1] <= a[2:]))[0] + 1
        if loc.size:
            loc = loc[np.argsort(a[loc])[:5]]
            du = uu[1] - uu[0]
            for i in loc:
                # shifted variable: Brent's tolerance is relative to |x|
                r = optimize.minimize_scalar(lambda z, c=uu[i]: abs(eta(c + z)), bounds=(-du, du),
                                             method="bounded", options={"xatol": 1e-13})
                best = min(best, float(r.fun))
        mins.append(best)
    running = np.minimum.accumulate(np.asarray(mins)[::-1])[::-1]
    top = [m for s, m in zip(starts, mins) if s >= u_max / 10]
    return float(min(top)), starts.tolist(), running.tolist()


def classify(triplet: LevyTriplet, *, u_max=1e8, liminf_threshold=1e-6) -> ProcessClass:
    """Assign type S, Zero or D from numerical surrogates of the definitions.

    S: symmetric and ∫_1^∞ 1/|eta| < ∞. Zero: liminf |eta| > 0. D: otherwise.
    """
    eta = CharExponent(triplet)
    probe = np.logspace(-2, 4, 200)
    ev = eta(probe)
    sym_res = float(np.max(np.abs(ev.imag) / np.maximum(np.abs(ev), 1e-300)))
    symmetric = triplet.is_symmetric
    evidence = {"symmetric": symmetric, "symmetry_residual": sym_res}

    def inv_abs(u):
        a = np.abs(eta(u))
        with np.errstate(divide="ignore"):
            return np.where(a > 0, 1.0 / a, np.inf)

    val, conv, low_t, inc, U = _doubling_integral(inv_abs, 1.0, u_max=u_max)
    evidence.update(tail_integral=val, tail_converged=conv, tail_last_increment=inc,
                    tail_upper=U)
    liminf, starts, running = _liminf_abs_eta(triplet)
    evidence.update(liminf_estimate=liminf, liminf_window_starts=starts,
                    liminf_running_min=running)
    if symmetric and conv:
        return ProcessClass("S", evidence, low_t)
    low = low_t if symmetric else False
    if liminf > liminf_threshold:
        # near-threshold values are flagged rather than trusted
        return ProcessClass("Zero", evidence, low or liminf < 1e3 * liminf_threshold)
    return ProcessClass("D", evidence, low or liminf > 1e-3 * liminf_threshold)


def type0_sufficient_check(triplet: LevyTriplet, *, condition_ii: bool | None = None,
                           u_max=1e8):
    """Diagnostic for the sufficient type-0 criterion ∫ Re(1/(1-eta)) < ∞.

    Condition (ii) of the criterion is not numerically decidable and is
    carried as user-asserted metadata. The returned record never raises.
    """
    eta = CharExponent(triplet)

    def integrand(u):
        return np.real(1.0 / (1.0 - eta(u)))

    head = float(integrate.quad(lambda u: float(integrand(np.array([u]))[0]), 0.0, 1.0)[0])
    val, conv, low, inc, U = _doubling_integral(integrand, 1.0, u_max=u_max, head=head)
    holds = bool(conv)
    if holds and condition_ii:
        conclusion = "type0"
    else:
        conclusion = "inconclusive"
    return {
        "condition_i_holds": holds,
        "integral": 2.0 * val if math.isfinite(val) else math.inf,
        "truncation": U,
        "last_increment": inc,
        "low_confidence": bool(low),
        "condition_ii_asserted": condition_ii,
        "conclusion": conclusion,
    }


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class SmoothFunction:
    """A twice-differentiable function with its derivatives.

    ``support`` optionally gives an interval outside of which f vanishes;
    quadratures use it to avoid integrating zeros.
    """

    f: Callable
    df: Callable
    d2f: Callable
    support: tuple | None = None

    def __call__(self, x):
        return self.f(x)

    @classmethod
    def gaussian(cls, a=1.0, center=0.0):
        def f(x):
            z = np.asarray(x, float) - center
            return np.exp(-a * z * z)

        def df(x):
            z = np.asarray(x, float) - center
            return -2 * a * z * np.exp(-a * z * z)

        def d2f(x):
            z = np.asarray(x, float) - center
            return (4 * a * a * z * z - 2 * a) * np.exp(-a * z * z)

        return cls(f, df, d2f)

    @classmethod
    def bump(cls, center=0.0, radius=1.0, height=1.0):
        """exp(-1/(1-z^2)) on |z|<1, z=(x-center)/radius."""

        def parts(x):
            z = (np.asarray(x, float) - center) / radius
            inside = np.abs(z) < 1
            q = np.where(inside, 1 - z * z, 1.0)
            b = np.where(inside, height * np.exp(-1.0 / q), 0.0)
            return z, q, b

        def f(x):
            return parts(x)[2]

        def df(x):
            z, q, b = parts(x)
            return b * (-2 * z / q ** 2) / radius

        def d2f(x):
            z, q, b = parts(x)
            return b * (4 * z * z / q ** 4 - 2 / q ** 2 - 8 * z * z / q ** 3) / radius ** 2

        return cls(f, df, d2f, (center - radius, center + radius))

    @classmethod
    def from_interpolant(cls, interp):
        """Wrap a callable supporting ``interp(x, nu)`` for nu = 0, 1, 2."""
        return cls(lambda x: interp(x, 0), lambda x: interp(x, 1), lambda x: interp(x, 2))


def _quad(fun, a, b, what, **kw):
    kw.setdefault("limit", 200)
    kw.setdefault("epsabs", 1e-12)
    kw.setdefault("epsrel", 1e-10)
    val, err, *rest = integrate.quad(fun, a, b, full_output=1, **kw)
    tol = 1e-7 * max(1.0, abs(val))
    if err > tol:
        raise QuadratureError(f"{what}: error estimate {err:.3g} exceeds {tol:.3g}",
                              achieved=err, interval=(a, b))
    return val


def _stable_jump_term(nu, f: SmoothFunction, x):
    a = nu.index
    kp, km = nu.stable_coefficients()
    out = 0.0
    for sgn, k in ((1.0, kp), (-1.0, km)):
        if k == 0.0:
            continue

        # (f(x+sy) - f(x) - sy f'(x)) / y^2 = ∫_0^1 (1-t) f''(x + s t y) dt
        def rem(y):
            return float(np.dot(_GL01_W * (1 - _GL01_T), f.d2f(x + sgn * _GL01_T * y)))

        try:
            inner = _quad(rem, 0.0, 1.0, "inner stable piece", weight="alg", wvar=(1.0 - a, 0.0))
        except QuadratureError as e:
            raise QuadratureError(f"unresolved near y=0 at x={x}: {e}", e.achieved, (0.0, 1.0))

        def tail(y):
            return float(f.f(x + sgn * y)) * y ** (-1.0 - a)

        if f.support is not None:
            lo, hi = f.support
            # y >= 1 with x + sgn*y in [lo, hi]
            ys = sorted(((lo - x) * sgn, (hi - x) * sgn))
            y0, y1 = max(1.0, ys[0]), ys[1]
            outer = _quad(tail, y0, y1, "outer stable piece") if y1 > y0 else 0.0
        else:
            R = 1.0 + 50.0 + abs(x)
            outer = _quad(tail, 1.0, R, "outer stable piece") + _quad(tail, R, np.inf, "outer stable tail")
        outer -= float(f.f(x)) / a
        out += k * (inner + outer)
    return out


def _tabulated_jump_term(nu, f: SmoothFunction, x):
    g = np.asarray(nu.grid)
    v = np.asarray(nu.values)
    fx, dfx = float(f.f(x)), float(f.df(x))

    def rule(tn, wn):
        p, q = g[:-1], g[1:]
        y = 0.5 * (p + q)[:, None] + 0.5 * (q - p)[:, None] * tn[None, :]
        w = 0.5 * (q - p)[:, None] * wn[None, :]
        vals = np.interp(y, g, v)
        inner = np.abs(0.5 * (p + q)) <= 1.0
        k = f.f(x + y) - fx - np.where(inner[:, None], y * dfx, 0.0)
        return float(np.sum(k * vals * w))

    t8, w8 = np.polynomial.legendre.leggauss(8)
    r1 = rule(t8, w8)
    r2 = rule(_GL_T, _GL_W)
    if abs(r1 - r2) > 1e-7 * max(1.0, abs(r2)):
        raise QuadratureError("tabulated jump integral unresolved", achieved=abs(r1 - r2),
                              interval=(g[0], g[-1]))
    return r2


def generator_apply(triplet: LevyTriplet, f: SmoothFunction, x):
    """(A f)(x) = alpha2 f''/2 + gamma f' + ∫ [f(x+y) - f(x) - y f'(x) 1{|y|<=1}] nu(dy)."""
    xx = np.asarray(x, float)
    scalar = xx.ndim == 0
    xx = np.atleast_1d(xx)
    out = 0.5 * triplet.alpha2 * f.d2f(xx) + triplet.gamma * f.df(xx)
    out = np.array(out, dtype=float, copy=True)
    nu = triplet.nu
    if nu.kind == "atoms":
        fx, dfx = f.f(xx), f.df(xx)
        for y, lam in zip(nu.locations, nu.rates):
            comp = y * dfx if abs(y) <= 1.0 else 0.0
            out += lam * (f.f(xx + y) - fx - comp)
    elif nu.kind == "stable":
        for i, xi in enumerate(xx):
            out[i] += _stable_jump_term(nu, f, float(xi))
    elif nu.kind == "tabulated":
        for i, xi in enumerate(xx):
            out[i] += _tabulated_jump_term(nu, f, float(xi))
    return float(out[0]) if scalar else out


def adjoint_apply(triplet: LevyTriplet, f: SmoothFunction, x):
    """(A* f)(x): the generator of the dual triplet (alpha2, -gamma, nu(-dy))."""
    return generator_apply(triplet.reflected(), f, x)
