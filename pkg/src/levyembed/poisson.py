"""The ratio psi = g^/eta, its inversion H = A*^{-1} g, and the feasibility verdict.

H(x) = (1/2π) ∫ psi(xi) e^{-i x xi} dxi solves A* H = h1 - h0. A finite-mean
embedding exists exactly when psi is integrable and H is nonnegative and
integrable.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from ._interp import UniformCubic, fit_tail
from .density import DensityPair
from .errors import FeasibilityBreached, QuadratureError, TailMassError
from .levy_core import CharExponent, LevyTriplet, SmoothFunction, _doubling_integral, adjoint_apply

SERIES_AGREEMENT = 1e-9


def _poly(coefs, xi):
    """Σ coefs[k] xi^k, lowest order first."""
    out = np.zeros_like(xi, dtype=complex)
    for c in reversed(coefs):
        out = out * xi + c
    return out


class RatioFunction:
    """psi(xi) = (h1^ - h0^)(xi) / eta(xi) with removable zeros of eta handled.

    The zero set always contains 0. Near 0 a fourth-order Taylor quotient is
    used when both numerator and denominator have four finite moments;
    otherwise the accurate direct quotient is used and the value at 0 is
    its limit. Non-removable singularities are detected on construction
    and reported by :meth:`__call__` as :class:`FeasibilityBreached`.
    """

    def __init__(self, pair: DensityPair, triplet: LevyTriplet, *, lattice_scan=None,
                 zero_tol=1e-10):
        self.pair = pair
        self.triplet = triplet
        self.eta = CharExponent(triplet)
        self.zero_tol = zero_tol
        s = min(pair.h0.scale, pair.h1.scale)
        self.length_scale = s
        self.identical = pair.identical
        self.breaches = []
        # Taylor data
        et = self.eta.taylor()
        dm = pair.moment_differences()
        self.eta_series = None if et is None else [0.0j] + list(et)
        if all(math.isfinite(d) for d in dm):
            self.g_series = [0.0j] + [(1j) ** k * dm[k - 1] / math.factorial(k) for k in range(1, 5)]
        else:
            self.g_series = None
        self.r0 = 0.0
        self.order0 = None
        self.lattice_zeros = []
        self.lattice_values = {}
        if self.identical:
            self.psi0 = 0.0 + 0.0j
            self.zero_set = [0.0]
            return
        self._analyze_origin()
        scan = lattice_scan if lattice_scan is not None else 200.0 / s
        self._find_lattice_zeros(scan)
        self.zero_set = [0.0] + self.lattice_zeros

    # -- analysis --------------------------------------------------------------
    def _direct(self, xi):
        xi = np.asarray(xi, float)
        return self.pair.g_hat(xi) / self.eta(xi)

    def _series(self, xi):
        p = self.order0
        num = self.g_series[p:]
        den = self.eta_series[p:]
        return _poly(num, xi) / _poly(den, xi)

    def _analyze_origin(self):
        have = self.g_series is not None and self.eta_series is not None
        if have:
            den = self.eta_series
            scale = max(abs(c) for c in den[1:])
            p = next((k for k in range(1, 5) if abs(den[k]) > 1e-14 * scale), None)
            if p is None:
                have = False
            else:
                lower = [abs(self.g_series[k]) for k in range(1, p)]
                if any(v > 1e-8 for v in lower):
                    self.breaches.append({"u0": 0.0, "reason": "numerator vanishes to lower order than eta",
                                          "coefficient": max(lower)})
                self.order0 = p
        if have and not self.breaches:
            s = self.length_scale
            r_best = 0.0
            for r in (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5):
                x = np.array([r, -r]) / s
                d, sr = self._direct(x), self._series(x)
                if np.all(np.abs(d - sr) <= SERIES_AGREEMENT * np.maximum(np.abs(sr), 1e-300)):
                    r_best = r / s
                    break
            self.r0 = r_best
            if r_best == 0.0:
                # no agreement window: trust the series only very close to 0
                self.r0 = 1e-5 / s
            self.psi0 = complex(self._series(np.array([0.0]))[0])
            return
        if not have:
            self.order0 = None
            s = self.length_scale
            probes = np.array([1e-1, 1e-2, 1e-3, 1e-4]) / s
            vals = np.abs(self._direct(probes))
            if not np.all(np.isfinite(vals)) or vals[-1] > 100 * max(vals[0], 1e-300):
                self.breaches.append({"u0": 0.0, "reason": "ratio grows without bound toward 0",
                                      "probe_ratio": float(vals[-1] / max(vals[0], 1e-300))})
                return
            eps = 1e-9 / s
            self.psi0 = complex(0.5 * (self._direct(np.array([eps]))[0] + self._direct(np.array([-eps]))[0]))

    def _find_lattice_zeros(self, scan):
        s = self.length_scale
        du = min(0.01, 0.05 / max(1.0, scan / 1e3))
        u = np.arange(du, scan, du)
        a = np.abs(self.eta(u))
        ref = np.max(a) if a.size else 1.0
        loc = np.where((a[1:-1] <= a[:-2]) & (a[1:-1] <= a[2:]) & (a[1:-1] < 1e-3 * max(ref, 1.0)))[0] + 1
        zeros = []
        for i in loc:
            r = optimize.minimize_scalar(lambda z, c=u[i]: abs(self.eta(c + z)), bounds=(-du, du),
                                         method="bounded", options={"xatol": 1e-14})
            if r.fun < 1e-10:
                zeros.append(float(u[i] + r.x))
        for z0 in zeros:
            gv = abs(complex(self.pair.g_hat(np.array([z0]))[0]))
            if gv > self.zero_tol:
                self.breaches.append({"u0": z0, "reason": "g^ does not vanish at a zero of eta",
                                      "g_hat": gv})
            for zz in (z0, -z0):
                h = 1e-6
                num = self.pair.g_hat(np.array([zz + h]))[0] - self.pair.g_hat(np.array([zz - h]))[0]
                den = self.eta(np.array([zz + h]))[0] - self.eta(np.array([zz - h]))[0]
                self.lattice_values[zz] = complex(num / den) if abs(den) > 0 else 0.0j
        self.lattice_zeros = sorted(zeros + [-z for z in zeros])

    # -- evaluation -------------------------------------------------------------
    def raise_if_breached(self):
        if self.breaches:
            b = self.breaches[0]
            raise FeasibilityBreached(f"non-removable singularity at u0={b['u0']:g}: {b['reason']}",
                                      u0=b["u0"])

    def __call__(self, xi):
        self.raise_if_breached()
        xi = np.asarray(xi, float)
        scalar = xi.ndim == 0
        xi = np.atleast_1d(xi)
        if self.identical:
            out = np.zeros(xi.shape, complex)
            return complex(out[0]) if scalar else out
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._direct(xi)
        near0 = np.abs(xi) <= self.r0
        if self.order0 is not None and near0.any():
            out[near0] = self._series(xi[near0])
        out[xi == 0.0] = self.psi0
        for z0, val in self.lattice_values.items():
            m = np.abs(xi - z0) < 1e-7
            out[m] = val
        return complex(out[0]) if scalar else out


def ratio_eval(r: RatioFunction, xi):
    return r(xi)


# ---------------------------------------------------------------------------


@dataclass
class PoissonSolution:
    """Grid solution of A* H = h1 - h0 with inversion diagnostics."""

    x: np.ndarray
    H: np.ndarray
    dx: float
    extent: float
    Xi: float
    l1_ratio: float
    min_H: float
    max_H: float
    max_abs_H: float
    integral_H: float
    psi0: float
    imag_residue: float
    tail_beyond_nyquist: float
    n_fft: int
    period: float
    tails: tuple
    interp: UniformCubic = field(repr=False)
    residual_sup: float = math.nan
    residual_points: int = 0
    notes: list = field(default_factory=list)

    def __call__(self, x, nu=0):
        return self.interp(x, nu)

    def as_function(self) -> SmoothFunction:
        return SmoothFunction.from_interpolant(self.interp)

    @property
    def table_limit(self):
        return self.interp.x1

    def fourier(self, xi):
        """H^(xi) by trapezoid over the interpolation table plus its tails."""
        xi = np.atleast_1d(np.asarray(xi, float))
        it = self.interp
        xs = it.x0 + it.dx * np.arange(it.n)
        w = np.full(it.n, it.dx)
        w[0] = w[-1] = 0.5 * it.dx
        out = np.empty(xi.shape, complex)
        for i, k in enumerate(xi):
            out[i] = np.sum(w * it.values * np.exp(1j * k * xs))
        # tails beyond the table
        for side, xe in ((1, it.x1), (-1, it.x0)):
            f = it.right if side > 0 else it.left
            if f is None:
                continue
            if float(f(np.array([xe * 2]))[0]) == 0.0:
                continue
            for i, k in enumerate(xi):
                re = integrate.quad(lambda t: float(f(np.array([xe + side * t]))[0]), 0, np.inf,
                                    weight="cos", wvar=k)[0] if k != 0 else \
                    integrate.quad(lambda t: float(f(np.array([xe + side * t]))[0]), 0, np.inf)[0]
                im = integrate.quad(lambda t: float(f(np.array([xe + side * t]))[0]), 0, np.inf,
                                    weight="sin", wvar=k)[0] if k != 0 else 0.0
                # e^{i k (xe + side t)} = e^{i k xe} (cos kt + i side sin kt)
                out[i] += np.exp(1j * k * xe) * (re + 1j * side * im)
        return out

    def diagnostics(self):
        keys = ("dx", "extent", "Xi", "l1_ratio", "min_H", "max_H", "integral_H", "psi0",
                "imag_residue", "tail_beyond_nyquist", "n_fft", "period", "residual_sup",
                "residual_points")
        d = {k: _jsonable(getattr(self, k)) for k in keys}
        d["tails"] = list(self.tails)
        d["H_at_0"] = float(self.interp(np.array([0.0]))[0])
        d["notes"] = list(self.notes)
        return d

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "H"])
            for a, b in zip(self.x, self.H):
                w.writerow([repr(float(a)), repr(float(b))])


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _next_pow2(n):
    return 1 << int(math.ceil(math.log2(max(n, 2))))


def solve_H(r: RatioFunction, *, extent=None, dx=None, period_factor=None,
            tail_tol=1e-8, residual_points=41, max_refine=3) -> PoissonSolution:
    """Invert psi on a uniform grid by FFT (trapezoid rule in xi).

    The FFT grid is much wider than the reporting grid [-extent, extent] so
    the periodic images of H are negligible; the spacing dx sets the
    frequency cut-off pi/dx, which must leave < ``tail_tol`` of ∫|psi|.
    """
    r.raise_if_breached()
    pair = r.pair
    X = pair.default_extent() if extent is None else float(extent)
    h = pair.default_spacing(X) if dx is None else float(dx)
    heavy = pair.h0.heavy_tailed or pair.h1.heavy_tailed
    pf = period_factor if period_factor is not None else (16 if heavy else 8)
    notes = []
    for attempt in range(max_refine + 1):
        N = _next_pow2(pf * X / h)
        P = N * h
        xi = 2 * np.pi * np.fft.fftfreq(N, d=h)
        dxi = 2 * np.pi / P
        psi = r(xi)
        nyq = np.pi / h
        if r.identical:
            beyond, conv = 0.0, True
        else:
            f = lambda u: np.abs(r(u)) + np.abs(r(-u))
            beyond, conv, _, _, _ = _doubling_integral(f, nyq, u_max=1e9, tol=tail_tol * 1e-2)
        if not conv:
            raise TailMassError(f"∫|psi| does not converge beyond xi={nyq:g}", tail=beyond)
        if beyond <= tail_tol or attempt == max_refine:
            break
        notes.append(f"refined dx from {h:g}: tail beyond Nyquist {beyond:.3g}")
        h /= 2
    if beyond > tail_tol:
        raise TailMassError(f"tail of ∫|psi| beyond xi={nyq:g} is {beyond:.3g} after refinement",
                            tail=beyond)
    absps = np.abs(psi)
    l1 = float(np.sum(absps) * dxi + beyond)
    # Xi: smallest cut-off leaving less than tail_tol outside
    order = np.argsort(np.abs(xi))
    cum_out = l1 - np.cumsum(absps[order]) * dxi
    idx = np.nonzero(cum_out < tail_tol)[0]
    Xi = float(np.abs(xi[order[idx[0]]])) if idx.size else float(nyq)

    sign = np.where(np.arange(N) % 2 == 0, 1.0, -1.0)
    Hc = np.fft.fft(psi * sign) / P
    Hw = Hc.real
    imag = float(np.max(np.abs(Hc.imag))) if N else 0.0
    xw = (np.arange(N) - N // 2) * h

    lim = P / (16 if heavy else 4)
    keep = np.abs(xw) <= lim + 1e-9 * h
    xt, Ht = xw[keep], Hw[keep]
    # tails from the outer part of the table
    tails = []
    tail_fns = []
    for side in (-1, 1):
        pts = side * np.linspace(0.5 * lim, lim, 6)
        vals = np.interp(pts, xt, Ht)
        f, kind = fit_tail(pts if side > 0 else pts, vals, side)
        tails.append(kind)
        tail_fns.append(f)
    interp = UniformCubic(xt[0], h, Ht, left=tail_fns[0], right=tail_fns[1])

    inner = np.abs(xt) <= X + 1e-9 * h
    x_in, H_in = xt[inner], Ht[inner]
    c = interp._c
    seg = c[0] * h ** 4 / 4 + c[1] * h ** 3 / 3 + c[2] * h ** 2 / 2 + c[3] * h
    total = float(math.fsum(seg))
    for side, kind, f in zip((-1, 1), tails, tail_fns):
        if kind == "zero":
            continue
        xe = interp.x1 if side > 0 else interp.x0
        total += integrate.quad(lambda t: float(f(np.array([xe + side * t]))[0]), 0, np.inf,
                                limit=200)[0]
    maxabs = float(np.max(np.abs(H_in))) if H_in.size else 0.0
    sol = PoissonSolution(
        x=x_in, H=H_in, dx=h, extent=X, Xi=Xi, l1_ratio=l1,
        min_H=float(np.min(H_in)), max_H=float(np.max(H_in)), max_abs_H=maxabs,
        integral_H=total, psi0=float(np.real(r.psi0)), imag_residue=imag,
        tail_beyond_nyquist=float(beyond), n_fft=N, period=P, tails=tuple(tails),
        interp=interp, notes=notes)
    if residual_points:
        sol.residual_sup = residual(sol, r.triplet, pair, n_points=residual_points)
        sol.residual_points = residual_points
    return sol


# ---------------------------------------------------------------------------


@dataclass
class Feasibility:
    ratio_integrable: bool
    l1_ratio: float
    H_nonnegative: bool | None
    min_H: float
    H_integrable: bool | None
    integral_H: float
    mean_check: float
    mean_gate: bool
    verdict: str
    reason: str = ""
    regularity_pass: bool | None = None
    residual: float | None = None

    @property
    def accepted(self):
        return self.verdict == "accepted"

    def to_dict(self):
        return {k: _jsonable(v) for k, v in self.__dict__.items()}


def _mean_gate(triplet: LevyTriplet):
    """Whether zero-mean increments force equal means of h0 and h1."""
    t = CharExponent(triplet).taylor()
    if t is None:
        nu = triplet.nu
        # symmetric stable with index > 1 has zero-mean increments
        return nu.kind == "stable" and nu.index > 1 and triplet.gamma == 0.0 and nu.left == nu.right
    return abs(t[0]) < 1e-14


def check_feasibility(sol, pair: DensityPair, triplet: LevyTriplet | None = None, *,
                      regularity=None, residual_tol=None, neg_tol=1e-6) -> Feasibility:
    """Verdict from a solution (or the FeasibilityBreached raised while building it)."""
    dm = pair.moment_differences()[0]
    mean_check = abs(dm) if math.isfinite(dm) else math.nan
    gate = True if triplet is None else _mean_gate(triplet)
    if isinstance(sol, Exception):
        return Feasibility(False, math.inf, None, math.nan, None, math.nan, mean_check, gate,
                           "rejected", f"ratio_integrable=false ({sol})")
    fz = Feasibility(
        ratio_integrable=math.isfinite(sol.l1_ratio),
        l1_ratio=sol.l1_ratio,
        H_nonnegative=bool(sol.min_H >= -neg_tol * sol.max_abs_H),
        min_H=sol.min_H,
        H_integrable=bool(math.isfinite(sol.integral_H)),
        integral_H=sol.integral_H,
        mean_check=mean_check,
        mean_gate=gate,
        verdict="accepted",
    )
    if not fz.ratio_integrable:
        fz.verdict, fz.reason = "rejected", "ratio_integrable=false"
    elif gate and math.isfinite(mean_check) and mean_check >= 1e-6:
        fz.verdict, fz.reason = "rejected", f"mean_check={mean_check:.3g}"
    elif not fz.H_nonnegative:
        fz.verdict, fz.reason = "rejected", "H_nonnegative=false"
    elif not fz.H_integrable:
        fz.verdict, fz.reason = "rejected", "H_integrable=false"
    if fz.verdict == "accepted":
        if regularity is not None:
            fz.regularity_pass = bool(regularity.get("pass"))
            if not fz.regularity_pass:
                fz.verdict, fz.reason = "unverified", "regularity surrogates failed"
        if residual_tol is not None and math.isfinite(sol.residual_sup):
            fz.residual = sol.residual_sup
            if sol.residual_sup > residual_tol and fz.verdict == "accepted":
                fz.verdict, fz.reason = "unverified", f"residual {sol.residual_sup:.3g} > {residual_tol:g}"
    return fz


def check_moments(pair: DensityPair) -> dict:
    """∫g and ∫x g by quadrature."""
    out = {}
    for j in (0, 1):
        f = lambda x, j=j: float(pair.g(np.array([x]))[0]) * x ** j
        pts = sorted({pair.h0.center, pair.h1.center})
        val = 0.0
        err = 0.0
        edges = [-np.inf] + pts + [np.inf]
        for a, b in zip(edges[:-1], edges[1:]):
            if a == b:
                continue
            v, e = integrate.quad(f, a, b, limit=400)
            val += v
            err += e
        out[f"int_x{j}_g"] = val
        out[f"int_x{j}_g_err"] = err
    out["zero_mass"] = abs(out["int_x0_g"]) < 1e-8
    out["equal_means"] = abs(out["int_x1_g"]) < 1e-6
    return out


def residual(sol: PoissonSolution, triplet: LevyTriplet, pair: DensityPair, *, n_points=41,
             inner_fraction=0.8, points=None) -> float:
    """sup |A* H - (h1 - h0)| over points of the inner part of the grid."""
    if points is None:
        L = inner_fraction * sol.extent
        points = np.linspace(-L, L, n_points)
    f = sol.as_function()
    lhs = adjoint_apply(triplet, f, np.asarray(points, float))
    return float(np.max(np.abs(lhs - pair.g(points))))


def fourier_identity(sol: PoissonSolution, r: RatioFunction, xi=None, eta_floor=1e-8) -> float:
    """max |H^ eta - g^| over probe frequencies with |eta| > eta_floor."""
    if xi is None:
        xi = np.linspace(-min(sol.Xi, 50.0 / r.length_scale), min(sol.Xi, 50.0 / r.length_scale), 41)
        xi = xi + 0.1234 * (xi[1] - xi[0])  # off the FFT lattice
    xi = np.asarray(xi, float)
    e = r.eta(xi)
    m = np.abs(e) > eta_floor
    Hh = sol.fourier(xi[m])
    return float(np.max(np.abs(Hh * e[m] - r.pair.g_hat(xi[m])))) if m.any() else 0.0


def resolvent_oracle(pair: DensityPair, triplet: LevyTriplet, q, x) -> float:
    """(U^q)* g(x) = (1/2π) ∫ g^(xi) e^{-i x xi} / (q - eta(xi)) dxi by adaptive quadrature."""
    eta = CharExponent(triplet)
    if pair.identical:
        return 0.0 * np.asarray(x, float)

    def integrand(xi, x0, part):
        v = pair.g_hat(np.array([xi]))[0] * np.exp(-1j * x0 * xi) / (q - eta(np.array([xi]))[0])
        return v.real if part == 0 else v.imag

    s = min(pair.h0.scale, pair.h1.scale)
    xs = np.atleast_1d(np.asarray(x, float))
    out = np.empty(xs.shape)
    # breakpoints resolve the sqrt(q)-wide feature at the origin
    knee = max(math.sqrt(q), 1e-8)
    brk = sorted({0.0, knee, 10 * knee, 100 * knee, 1.0 / s, 10.0 / s, 40.0 / s})
    for i, x0 in enumerate(xs):
        tot = 0.0
        for a, b in zip(brk[:-1], brk[1:]):
            if b <= a:
                continue
            # integrand(-xi) is the conjugate of integrand(xi): integrate 2 Re on (0, ∞)
            v, e = integrate.quad(integrand, a, b, args=(x0, 0), limit=400, epsabs=1e-13, epsrel=1e-11)
            tot += v
        v, e = integrate.quad(integrand, brk[-1], np.inf, args=(x0, 0), limit=400, epsabs=1e-13)
        tot += v
        out[i] = tot / math.pi
    return float(out[0]) if np.ndim(x) == 0 else out


def lipschitz_diag(r: RatioFunction, *, u_max=1e8) -> dict:
    """∫ |xi| |psi(xi)| dxi: finite means H is Lipschitz. Informational."""
    if r.identical:
        return {"value": 0.0, "converged": True, "status": "established"}
    head = integrate.quad(lambda u: u * (abs(r(u)) + abs(r(-u))), 0.0, 1.0 / r.length_scale,
                          limit=200)[0]
    f = lambda u: u * (np.abs(r(u)) + np.abs(r(-u)))
    val, conv, low, inc, U = _doubling_integral(f, 1.0 / r.length_scale, u_max=u_max, head=head)
    status = "established" if conv and not low else "not established"
    return {"value": val, "converged": bool(conv), "low_confidence": bool(low),
            "last_increment": inc, "upper": U, "status": status}
