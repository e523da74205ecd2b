"""Pathwise clock for the explicit stopping time.

Along a path L the clock accumulates

    G(t) = ∫_0^t (h1 - h0)/H (L_r) dr,
    I(t) = ∫_0^t e^{-G(r)} h1/H (L_r) dr,
    J(t) = ∫_0^t e^{-G(r)} dr,

and a level (eps, s) fires at the first t with
I + kappa J - 1 + (1 - s) e^{-G} >= 0, kappa = eps / ((1 - eps) C), C = ∫H.
Level (0, 1) is the stopping time tau; (0, s) is the schedule delta(s);
(eps, s) is the same schedule for the eps-regularized densities, whose G is
unchanged. Every level is capped by rho, the first time H(L) <= eps_H.

Within a sampler step the path is the linear bridge of the continuous part
followed by the jump at the right end. Sub-steps treat G and b = h1/H as
linear in time, and integrate e^{-G} exactly against them.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .density import DensityPair
from .errors import ConfigError, DegenerateField
from .pathsim import BlockStream, PathConfig, SamplePath

SUBSTEP_CAP = 0.01
MAX_SUBSTEPS = 4096
BISECT_ITERS = 36


_C1 = [(-1.0) ** k / math.factorial(k + 1) for k in range(12)]
_C2 = [(-1.0) ** k / (math.factorial(k) * (k + 2)) for k in range(12)]


def _series(coef, w):
    acc = np.full_like(w, coef[-1])
    for c in coef[-2::-1]:
        acc = acc * w + c
    return acc


def _phi1(w):
    """(1 - e^{-w}) / w."""
    w = np.asarray(w, float)
    out = _series(_C1, w)
    big = np.abs(w) >= 0.1
    if big.any():
        wl = w[big]
        out[big] = -np.expm1(-wl) / wl
    return out


def _phi2(w):
    """(1 - e^{-w}(1 + w)) / w^2 = ∫_0^1 s e^{-w s} ds."""
    w = np.asarray(w, float)
    out = _series(_C2, w)
    big = np.abs(w) >= 0.1
    if big.any():
        wl = w[big]
        out[big] = (-np.expm1(-wl) - wl * np.exp(-wl)) / (wl * wl)
    return out


def _evolve(w):
    """(e^w - 1)/w for complex w."""
    w = np.asarray(w, complex)
    out = np.ones_like(w)
    nz = np.abs(w) > 1e-8
    out[nz] = np.expm1(w[nz]) / w[nz]
    out[~nz] = 1 + w[~nz] / 2
    return out


# ---------------------------------------------------------------------------


class SpeedField:
    """Densities, the Poisson solution H and the local speed sigma = H / phi.

    ``epsilon`` > 0 gives the regularized field with
    h_i -> (1-eps) h_i + eps H/C and H -> (1-eps) H.
    """

    def __init__(self, sol, pair: DensityPair, epsilon=0.0, integral_H=None):
        self.sol = sol
        self.pair = pair
        self.epsilon = float(epsilon)
        self.C = float(sol.integral_H if integral_H is None else integral_H)
        self.max_H = float(sol.max_H)
        self.eps_H = 1e-9 * self.max_H
        lo, hi = sol.interp.x0, sol.interp.x1
        self.table = (lo, hi)

    def H(self, x):
        return (1 - self.epsilon) * self.sol.interp(x)

    def _p(self, x):
        return self.sol.interp(x) / self.C

    def h0(self, x):
        v = self.pair.h0.pdf(x)
        return v if self.epsilon == 0 else (1 - self.epsilon) * v + self.epsilon * self._p(x)

    def h1(self, x):
        v = self.pair.h1.pdf(x)
        return v if self.epsilon == 0 else (1 - self.epsilon) * v + self.epsilon * self._p(x)

    def phi(self, t, x):
        return (1 - t) * self.h0(x) + t * self.h1(x)

    def sigma(self, t, x):
        return self.H(x) / self.phi(t, x)

    def rates(self, x):
        """(dG/dt, h1/H, H) at states x; rates are 0 where H <= eps_H."""
        x = np.asarray(x, float)
        Hx = self.H(x)
        h0, h1 = self.h0(x), self.h1(x)
        ok = Hx > (1 - self.epsilon) * self.eps_H
        safe = np.where(ok, Hx, 1.0)
        r = np.where(ok, (h1 - h0) / safe, 0.0)
        b = np.where(ok, h1 / safe, 0.0)
        return r, b, Hx, ok

    def off_grid(self, x):
        return (x < self.table[0]) | (x > self.table[1])


def regularize(fld: SpeedField, epsilon) -> SpeedField:
    if not (0 < epsilon < 1):
        raise ConfigError("epsilon must lie in (0, 1)")
    if not fld.C > 0:
        raise DegenerateField("regularization needs ∫H > 0")
    return SpeedField(fld.sol, fld.pair, epsilon=epsilon, integral_H=fld.C)


# ---------------------------------------------------------------------------


@dataclass
class ClockState:
    t: float = 0.0
    G: float = 0.0
    I: float = 0.0
    J: float = 0.0
    exhausted: bool = False


def step_clock(state: ClockState, segment, fld: SpeedField) -> ClockState:
    """Advance the clock over a constant state L on [t0, t1]."""
    t0, t1, L = segment
    if state.exhausted:
        return state
    r, b, Hx, ok = fld.rates(np.array([float(L)]))
    if not ok[0]:
        return ClockState(t0, state.G, state.I, state.J, True)
    h = t1 - t0
    r, b = float(r[0]), float(b[0])
    n = max(1, int(math.ceil(max(abs(r) * h, b * h * math.exp(-state.G)) / SUBSTEP_CAP)))
    G, I, J = state.G, state.I, state.J
    hs = h / n
    for _ in range(n):
        z = hs * r
        e = math.exp(-G)
        I += hs * e * b * float(_phi1(np.array([z]))[0])
        J += hs * e * float(_phi1(np.array([z]))[0])
        G += z
    return ClockState(t1, G, I, J, False)


# ---------------------------------------------------------------------------


@dataclass
class EmbeddingOutcome:
    tau: float
    L_tau: float
    hit_rho: bool
    censored: bool
    steps: int
    max_integrand: float
    off_grid: int = 0

    def to_dict(self):
        return asdict(self)


@dataclass
class BlockResult:
    """Per-path arrays for one run of the clock; level columns follow ``levels``."""

    levels: tuple
    times: np.ndarray          # (n, nlev)
    states: np.ndarray         # (n, nlev)
    censored: np.ndarray       # (n, nlev)
    hit_rho: np.ndarray        # (n, nlev)
    x0: np.ndarray
    steps: np.ndarray
    max_integrand: np.ndarray
    off_grid: np.ndarray
    dynkin: np.ndarray | None = None   # (n, len(u)) ∫_0^tau e^{iuL}
    audit_max: np.ndarray | None = None
    eps_audit_max: np.ndarray | None = None
    trace: list = field(default_factory=list)

    def outcome(self, i, level=0):
        return EmbeddingOutcome(float(self.times[i, level]), float(self.states[i, level]),
                                bool(self.hit_rho[i, level]), bool(self.censored[i, level]),
                                int(self.steps[i]), float(self.max_integrand[i]),
                                int(self.off_grid[i]))


class _SampleStream:
    """Adapter feeding a stored SamplePath to the engine."""

    def __init__(self, path: SamplePath):
        self.path = path
        self.x0 = np.array([path.states[0]])
        self.k = 0
        cont = path.cont if path.cont is not None else np.zeros_like(path.states)
        self.cont = cont
        dts = np.diff(path.times)
        self.dt = float(dts[0]) if dts.size else 1.0
        self.n_steps = dts.size

    def step(self):
        self.k += 1
        k = self.k
        c = self.cont[k]
        dl = self.path.states[k] - self.path.states[k - 1]
        return np.array([c]), np.array([dl - c]), np.array([bool(self.path.jump_flags[k])])


class ClockEngine:
    """Vectorized clock over a block of paths with several crossing levels.

    ``levels`` is a sequence of (eps, s); the first one drives the Dynkin
    integrals and the step count. ``audit`` keeps the independent
    accumulation of Δ(t) and, for eps > 0 levels, of Δ^eps(t), and records
    the worst discrepancy per path. ``trace`` stores (t, G, I, J) of the
    first ``trace`` paths at every sampler step.
    """

    def __init__(self, fld: SpeedField, levels=((0.0, 1.0),), dynkin_u=(), audit=False,
                 trace=0):
        self.fld = fld
        self.levels = tuple((float(e), float(s)) for e, s in levels)
        for e, s in self.levels:
            if not (0 <= e < 1 and 0 <= s <= 1):
                raise ConfigError(f"bad level (eps={e}, s={s})")
        C = fld.C
        if any(e > 0 for e, _ in self.levels) and not C > 0:
            raise DegenerateField("regularized levels need ∫H > 0")
        self.kappa = np.array([0.0 if e == 0 else e / ((1 - e) * C) for e, _ in self.levels])
        self.one_minus_s = np.array([1.0 - s for _, s in self.levels])
        self.u = np.asarray(dynkin_u, float)
        self.audit = audit
        self.trace_n = int(trace)

    # -- public ---------------------------------------------------------------
    def run(self, stream, n, dt, n_steps) -> BlockResult:
        fld = self.fld
        nl = len(self.levels)
        x = np.array(stream.x0[:n], float)
        res = BlockResult(
            levels=self.levels,
            times=np.full((n, nl), np.nan), states=np.full((n, nl), np.nan),
            censored=np.zeros((n, nl), bool), hit_rho=np.zeros((n, nl), bool),
            x0=x.copy(), steps=np.zeros(n, np.int64), max_integrand=np.zeros(n),
            off_grid=np.zeros(n, np.int64),
            dynkin=np.zeros((n, self.u.size), complex) if self.u.size else None,
            audit_max=np.zeros(n) if self.audit else None,
            eps_audit_max=np.zeros(n) if self.audit else None)
        self.res = res
        G = np.zeros(n)
        I = np.zeros(n)
        J = np.zeros(n)
        K = np.zeros(n)
        r, b, Hx, ok = fld.rates(x)
        res.max_integrand = b.copy()
        res.off_grid += fld.off_grid(x)
        pending = np.ones((n, nl), bool)
        # levels already satisfied at t = 0 (s = 0)
        F0 = -1.0 + self.one_minus_s
        for l in range(nl):
            if F0[l] >= 0:
                res.times[:, l] = 0.0
                res.states[:, l] = x
                pending[:, l] = False
        self._exhaust(np.nonzero(~ok)[0], np.zeros(n), x, pending)
        st = dict(x=x, G=G, I=I, J=J, K=K, r=r, b=b, H=Hx)
        if self.trace_n:
            res.trace = [[(0.0, 0.0, 0.0, 0.0)] for _ in range(min(self.trace_n, n))]
        alive = np.nonzero(pending.any(axis=1))[0]
        for k in range(n_steps):
            if alive.size == 0:
                # keep the stream in step with the block layout is unnecessary once done
                break
            c, j, _ = stream.step()
            c, j = c[:n][alive], j[:n][alive]
            ta = k * dt
            self._advance(alive, c, ta, dt, st, pending)
            # jump at the right end
            moved = np.nonzero(j != 0.0)[0]
            still = pending[alive].any(axis=1)
            ids = alive[moved[still[moved]]]
            if ids.size:
                xn = st["x"][ids] + j[moved[still[moved]]]
                rn, bn, Hn, okn = fld.rates(xn)
                st["x"][ids], st["r"][ids], st["b"][ids], st["H"][ids] = xn, rn, bn, Hn
                res.max_integrand[ids] = np.maximum(res.max_integrand[ids], bn)
                res.off_grid[ids] += fld.off_grid(xn)
                bad = ids[~okn]
                self._exhaust(bad, np.full(bad.size, ta + dt), xn[~okn], pending)
            p0 = pending[alive, 0]
            res.steps[alive[p0]] += 1
            if self.trace_n:
                for i in range(len(res.trace)):
                    if pending[i].any():
                        res.trace[i].append((ta + dt, st["G"][i], st["I"][i], st["J"][i]))
            alive = alive[pending[alive].any(axis=1)]
        t_end = n_steps * dt
        cen = pending.copy()
        res.censored |= cen
        rows, cols = np.nonzero(cen)
        res.times[rows, cols] = t_end
        res.states[rows, cols] = st["x"][rows]
        return res

    # -- internals ---------------------------------------------------------------
    def _exhaust(self, ids, t, xs, pending):
        if ids.size == 0:
            return
        res = self.res
        for l in range(len(self.levels)):
            m = pending[ids, l]
            res.times[ids[m], l] = t[m]
            res.states[ids[m], l] = xs[m]
            res.hit_rho[ids[m], l] = True
        pending[ids] = False

    def _advance(self, ids, c, ta, h, st, pending):
        """Sub-stepped clock over one sampler step for paths ``ids``."""
        fld = self.fld
        xa = st["x"][ids]
        x_end = xa + c
        r_end, b_end, H_end, ok_end = fld.rates(x_end)
        r0, b0 = st["r"][ids], st["b"][ids]
        eG = np.exp(-st["G"][ids])
        need = np.maximum(h * np.maximum(np.abs(r0), np.abs(r_end)),
                          h * np.maximum(b0, b_end) * eG * np.exp(h * np.maximum(0, -np.minimum(r0, r_end))))
        nsub = np.clip(np.ceil(need / SUBSTEP_CAP), 1, MAX_SUBSTEPS).astype(np.int64)
        nsub[~ok_end] = np.maximum(nsub[~ok_end], 8)
        # paths processed in this sub-step round, with their local data
        loc = np.arange(ids.size)
        H0 = st["H"][ids]
        L0 = xa.copy()
        k = 0
        while loc.size:
            gid = ids[loc]
            n = nsub[loc]
            frac1 = (k + 1) / n
            L1 = xa[loc] + c[loc] * frac1
            last = (k + 1) == n
            r1 = np.empty(loc.size)
            b1 = np.empty(loc.size)
            H1 = np.empty(loc.size)
            ok1 = np.empty(loc.size, bool)
            if last.any():
                li = loc[last]
                r1[last], b1[last], H1[last], ok1[last] = r_end[li], b_end[li], H_end[li], ok_end[li]
            if (~last).any():
                r1[~last], b1[~last], H1[~last], ok1[~last] = fld.rates(L1[~last])
            hs = h / n
            ts = ta + k * hs
            theta_rho = np.ones(loc.size)
            bad = ~ok1
            if bad.any():
                # H falls below eps_H inside this sub-step: stop at the linear crossing
                eps = (1 - fld.epsilon) * fld.eps_H
                h0v = H0[loc][bad]
                theta_rho[bad] = np.clip((h0v - eps) / np.maximum(h0v - H1[bad], 1e-300), 0.0, 1.0)
                r1[bad] = st["r"][gid[bad]]
                b1[bad] = st["b"][gid[bad]]
                L1 = np.where(bad, L0[loc] + (L1 - L0[loc]) * theta_rho, L1)
                hs = np.where(bad, hs * theta_rho, hs)
            self._substep(gid, L0[loc], L1, st["r"][gid], st["b"][gid], r1, b1, ts, hs, st, pending)
            st["x"][gid], st["r"][gid], st["b"][gid], st["H"][gid] = L1, r1, b1, H1
            self.res.max_integrand[gid] = np.maximum(self.res.max_integrand[gid], b1)
            self.res.off_grid[gid] += fld.off_grid(L1)
            if bad.any():
                gb = gid[bad]
                self._exhaust(gb, ts[bad] + hs[bad], L1[bad], pending)
            L0[loc] = L1
            H0[loc] = H1
            keep = (~last) & ~bad & pending[gid].any(axis=1)
            loc = loc[keep]
            k += 1

    def _substep(self, gid, La, Lb, ra, ba, rb, bb, ts, hs, st, pending):
        G, I, J = st["G"][gid], st["I"][gid], st["J"][gid]
        z = hs * 0.5 * (ra + rb)
        p1, p2 = _phi1(z), _phi2(z)
        eG = np.exp(-G)
        dI = hs * eG * (ba * p1 + (bb - ba) * p2)
        dJ = hs * eG * p1
        Gn, In, Jn = G + z, I + dI, J + dJ
        res = self.res
        # crossings
        for l in range(len(self.levels)):
            pl = pending[gid, l]
            if not pl.any():
                continue
            kap, oms = self.kappa[l], self.one_minus_s[l]
            Fend = In + kap * Jn - 1.0 + oms * np.exp(-Gn)
            hit = pl & (Fend >= 0)
            if not hit.any():
                continue
            th = self._bisect(G[hit], I[hit], J[hit], z[hit], ba[hit], bb[hit], hs[hit], kap, oms)
            gh = gid[hit]
            res.times[gh, l] = ts[hit] + th * hs[hit]
            res.states[gh, l] = La[hit] + (Lb[hit] - La[hit]) * th
            pending[gh, l] = False
            if l == 0 and res.dynkin is not None:
                self._dynkin(gh, La[hit], Lb[hit], hs[hit], th)
        if res.dynkin is not None:
            # full sub-step contribution for paths whose first level was still pending at its start
            full = pending[gid, 0]
            if full.any():
                self._dynkin(gid[full], La[full], Lb[full], hs[full], np.ones(full.sum()))
        if self.audit:
            K = st["K"][gid]
            Kn = np.exp(z) * K + hs * (bb * _phi1(-z) - (bb - ba) * _phi2(-z))
            eGn = np.exp(Gn)
            d1 = 1.0 - eGn + Kn
            d2 = 1.0 - eGn * (1.0 - In)
            res.audit_max[gid] = np.maximum(res.audit_max[gid], np.abs(d1 - d2))
            st["K"][gid] = Kn
            if "Je" not in st:
                st["Je"] = np.zeros_like(st["G"])
            Je = np.exp(z) * st["Je"][gid] + hs * _phi1(-z)  # e^{G} J, accumulated forward
            st["Je"][gid] = Je
            kap = self.kappa.max() if self.kappa.size else 0.0
            if kap > 0:
                lhs = d2 + kap * Je
                rhs = 1.0 - eGn * (1.0 - In - kap * Jn)
                res.eps_audit_max[gid] = np.maximum(res.eps_audit_max[gid], np.abs(lhs - rhs))
        st["G"][gid], st["I"][gid], st["J"][gid] = Gn, In, Jn

    @staticmethod
    def _bisect(G, I, J, z, ba, bb, hs, kap, oms):
        eG = np.exp(-G)

        def F(th):
            w = z * th
            p1 = th * _phi1(w)
            p2 = th * th * _phi2(w)
            return (I + hs * eG * (ba * p1 + (bb - ba) * p2) + kap * (J + hs * eG * p1)
                    - 1.0 + oms * np.exp(-G - w))

        lo = np.zeros_like(G)
        hi = np.ones_like(G)
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            up = F(mid) >= 0
            hi = np.where(up, mid, hi)
            lo = np.where(up, lo, mid)
        return hi

    def _dynkin(self, gid, La, Lb, hs, th):
        u = self.u
        w = 1j * np.outer(Lb - La, u) * th[:, None]
        val = (hs * th)[:, None] * np.exp(1j * np.outer(La, u)) * _evolve(w)
        self.res.dynkin[gid] += val


# ---------------------------------------------------------------------------


def run_block(fld: SpeedField, triplet, cfg: PathConfig, block, count, levels=((0.0, 1.0),),
              dynkin_u=(), audit=False) -> BlockResult:
    """Clock over ``count`` paths of one block of the block layout."""
    stream = BlockStream(triplet, fld.pair.h0, cfg, block, cfg.block_size)
    eng = ClockEngine(fld, levels, dynkin_u, audit)
    return eng.run(stream, count, cfg.dt_base, cfg.n_steps)


def run_path(fld: SpeedField, path: SamplePath, levels=((0.0, 1.0),), dynkin_u=(), audit=False,
             trace=0) -> BlockResult:
    s = _SampleStream(path)
    eng = ClockEngine(fld, levels, dynkin_u, audit, trace)
    return eng.run(s, 1, s.dt, s.n_steps)


def stop_time(fld: SpeedField, path: SamplePath) -> EmbeddingOutcome:
    return run_path(fld, path).outcome(0)


def delta_schedule(fld: SpeedField, path: SamplePath, s, epsilon=0.0) -> float:
    return float(run_path(fld, path, levels=((epsilon, s),)).times[0, 0])


def outcomes_to_csv(res: BlockResult, path, first_id=0, level=0, mode="w"):
    with open(path, mode, newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if mode == "w":
            w.writerow(["path_id", "tau", "L_tau", "hit_rho", "censored"])
        for i in range(res.times.shape[0]):
            w.writerow([first_id + i, repr(float(res.times[i, level])), repr(float(res.states[i, level])),
                        int(res.hit_rho[i, level]), int(res.censored[i, level])])
