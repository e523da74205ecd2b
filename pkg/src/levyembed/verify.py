"""Monte Carlo evidence for the embedding, and the pipeline that builds a speed field."""
from __future__ import annotations

import json
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import integrate, stats

from .density import DensityPair, check_regularity
from .embed import BlockResult, SpeedField, run_block
from .errors import ConfigError, FeasibilityBreached, RejectedPair
from .levy_core import CharExponent, LevyTriplet, SmoothFunction, classify, generator_apply
from .pathsim import PathConfig, block_layout
from .poisson import RatioFunction, check_feasibility, check_moments, solve_H


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class Prepared:
    triplet: LevyTriplet
    pair: DensityPair
    process_class: object
    regularity: dict
    moments: dict
    solution: object  # PoissonSolution, or the FeasibilityBreached raised while solving
    feasibility: object
    field: SpeedField | None

    def report(self):
        sol = self.solution
        return {
            "process_class": self.process_class.to_dict(),
            "regularity": self.regularity,
            "moments": self.moments,
            "solution": sol.diagnostics() if hasattr(sol, "diagnostics") else {"error": str(sol)},
            "feasibility": self.feasibility.to_dict(),
        }


def prepare(triplet: LevyTriplet, pair: DensityPair, *, extent=None, dx=None,
            residual_tol=1e-3, neg_tol=1e-6, classify_kw=None) -> Prepared:
    """Classify, screen, solve and decide; builds the speed field when accepted."""
    cls = classify(triplet, **(classify_kw or {}))
    reg = check_regularity(pair, cls)
    mom = check_moments(pair)
    try:
        r = RatioFunction(pair, triplet)
        sol = solve_H(r, extent=extent, dx=dx)
    except FeasibilityBreached as exc:
        sol = exc
    fz = check_feasibility(sol, pair, triplet, regularity=reg, residual_tol=residual_tol,
                           neg_tol=neg_tol)
    fld = SpeedField(sol, pair) if fz.verdict != "rejected" else None
    return Prepared(triplet, pair, cls, reg, mom, sol, fz, fld)


# ---------------------------------------------------------------------------


@dataclass
class MCConfig:
    n_paths: int = 10_000
    path: PathConfig = field(default_factory=PathConfig)
    u_probe: tuple = (0.5, 1.0, 2.0)
    s_probe: tuple = (0.5,)
    workers: int = 1
    t_max_factor: float = 50.0
    max_censoring: float = 0.01

    def __post_init__(self):
        if self.n_paths < 100:
            raise ConfigError("n_paths must be at least 100")
        if not all(math.isfinite(u) for u in self.u_probe):
            raise ConfigError("u_probe must be finite")
        if not all(0 <= s <= 1 for s in self.s_probe):
            raise ConfigError("s_probe must lie in [0, 1]")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    def to_dict(self):
        d = asdict(self)
        d["u_probe"] = list(self.u_probe)
        d["s_probe"] = list(self.s_probe)
        return d


@dataclass
class MCReport:
    n_paths: int
    mean_tau: float
    se_tau: float
    integral_H: float
    ks_stat: float
    ks_critical: float
    wasserstein1: float
    dynkin: list
    marginals: list
    censoring_rate: float
    rho_rate: float
    valid: bool
    seed: int
    fp_residual: list = field(default_factory=list)

    def to_dict(self):
        return _clean(asdict(self))

    def to_json(self, **extra):
        d = dict(extra)
        d["report"] = self.to_dict()
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _clean(o):
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if math.isfinite(v) else str(v)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


# -- parallel block runner -------------------------------------------------------

_JOB = {}


def _init(fld, triplet, path_cfg, levels, u):
    _JOB.update(fld=fld, triplet=triplet, cfg=path_cfg, levels=levels, u=u)


def _run_one(spec):
    b, count = spec
    j = _JOB
    return run_block(j["fld"], j["triplet"], j["cfg"], b, count, levels=j["levels"], dynkin_u=j["u"])


def simulate_outcomes(fld: SpeedField, triplet: LevyTriplet, cfg: MCConfig, levels=None):
    """Run all blocks; returns (layout, [BlockResult]) in block order."""
    pc = cfg.path
    if fld.C > 0:
        pc = PathConfig(**{**pc.to_dict(), "t_max": max(cfg.t_max_factor * fld.C, pc.dt_base)})
    if levels is None:
        levels = ((0.0, 1.0),) + tuple((0.0, float(s)) for s in cfg.s_probe)
    layout = block_layout(cfg.n_paths, pc.block_size)
    specs = [(b, count) for b, _, count in layout]
    args = (fld, triplet, pc, levels, tuple(cfg.u_probe))
    if cfg.workers == 1 or len(specs) == 1:
        _init(*args)
        results = [_run_one(s) for s in specs]
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(cfg.workers, mp_context=ctx, initializer=_init, initargs=args) as ex:
            results = list(ex.map(_run_one, specs))
    return layout, results, pc


def _cat(results, name):
    return np.concatenate([getattr(r, name) for r in results])


def _mean_se(x):
    n = x.size
    if n == 0:
        return math.nan, math.nan
    m = math.fsum(x) / n
    if n < 2:
        return m, math.nan
    v = math.fsum((x - m) ** 2) / (n - 1)
    return m, math.sqrt(v / n)


def ks_statistic(samples, cdf):
    return float(stats.kstest(np.asarray(samples, float), cdf).statistic)


def wasserstein1(samples, ppf):
    """W1 between the empirical law and a law with quantile function ``ppf``."""
    x = np.sort(np.asarray(samples, float))
    n = x.size
    q = (np.arange(n) + 0.5) / n
    return float(math.fsum(np.abs(x - ppf(q))) / n)


def mixture_cdf(pair: DensityPair, s):
    return lambda x: (1 - s) * pair.h0.cdf(x) + s * pair.h1.cdf(x)


def dynkin_residuals(fld: SpeedField, triplet: LevyTriplet, u, D):
    """eta(u) MC-mean(∫_0^tau e^{iuL}) - g^(u) with componentwise standard errors."""
    eta = CharExponent(triplet)
    out = []
    for k, uk in enumerate(u):
        e = complex(eta(np.array([float(uk)]))[0])
        vals = e * D[:, k]
        mr, sr = _mean_se(vals.real)
        mi, si = _mean_se(vals.imag)
        gh = complex(fld.pair.g_hat(np.array([float(uk)]))[0])
        out.append({"u": float(uk), "residual_re": mr - gh.real, "residual_im": mi - gh.imag,
                    "se_re": sr, "se_im": si})
    return out


def run_embedding_mc(fld: SpeedField, triplet: LevyTriplet, cfg: MCConfig, *,
                     feasibility=None, return_outcomes=False):
    """Embed n_paths paths and summarize. Refuses pairs that were not accepted."""
    if fld is None or (feasibility is not None and feasibility.verdict == "rejected"):
        raise RejectedPair("pair rejected by the feasibility check; not running", feasibility)
    layout, results, pc = simulate_outcomes(fld, triplet, cfg)
    times = _cat(results, "times")
    states = _cat(results, "states")
    cens = _cat(results, "censored")
    rho = _cat(results, "hit_rho")
    n = times.shape[0]
    ok = ~cens[:, 0]
    mean, se = _mean_se(times[ok, 0])
    h1 = fld.pair.h1
    xs = states[ok, 0]
    ks = ks_statistic(xs, h1.cdf) if xs.size else math.nan
    w1 = wasserstein1(xs, h1.ppf) if xs.size else math.nan
    dyn = []
    if cfg.u_probe:
        D = _cat(results, "dynkin")[ok]
        dyn = dynkin_residuals(fld, triplet, cfg.u_probe, D)
    margs = []
    for j, s in enumerate(cfg.s_probe, start=1):
        okj = ~cens[:, j]
        margs.append({"s": float(s), "ks_stat": ks_statistic(states[okj, j], mixture_cdf(fld.pair, s)),
                      "mean_delta": _mean_se(times[okj, j])[0], "censored": int((~okj).sum())})
    crate = float((~ok).sum() / n)
    rep = MCReport(
        n_paths=n, mean_tau=mean, se_tau=se, integral_H=fld.C, ks_stat=ks,
        ks_critical=1.36 / math.sqrt(max(xs.size, 1)), wasserstein1=w1, dynkin=dyn, marginals=margs,
        censoring_rate=crate, rho_rate=float(rho[:, 0].mean()), valid=crate <= cfg.max_censoring,
        seed=pc.seed)
    if return_outcomes:
        return rep, (layout, results)
    return rep


def dynkin_check(fld: SpeedField, triplet: LevyTriplet, cfg: MCConfig):
    layout, results, _ = simulate_outcomes(fld, triplet, cfg, levels=((0.0, 1.0),))
    cens = _cat(results, "censored")[:, 0]
    D = _cat(results, "dynkin")[~cens]
    return dynkin_residuals(fld, triplet, cfg.u_probe, D)


def marginal_check(fld: SpeedField, triplet: LevyTriplet, cfg: MCConfig, s) -> float:
    """KS distance between L_{delta(s)} and phi(s, .)."""
    _, results, _ = simulate_outcomes(fld, triplet, cfg, levels=((0.0, float(s)),))
    states = _cat(results, "states")[:, 0]
    cens = _cat(results, "censored")[:, 0]
    return ks_statistic(states[~cens], mixture_cdf(fld.pair, s))


def fokker_planck_residual(fld: SpeedField, triplet: LevyTriplet, f: SmoothFunction, t,
                           n_x=2001, n_s=4, extent=None) -> float:
    """|∫ f phi(t) - ∫ f h0 - ∫_0^t ∫ sigma(s,x) Af(x) phi(s,x) dx ds| by quadrature."""
    X = fld.sol.extent if extent is None else extent
    lo, hi = -X, X
    if f.support is not None and triplet.nu.kind == "none":
        lo, hi = f.support
    x = np.linspace(lo, hi, n_x)
    Af = generator_apply(triplet, f, x)
    fx = f(x)
    lhs = integrate.simpson(fx * (fld.phi(t, x) - fld.h0(x)), x=x)
    gs, gw = np.polynomial.legendre.leggauss(n_s)
    s = 0.5 * t * (gs + 1)
    w = 0.5 * t * gw
    rhs = 0.0
    for sk, wk in zip(s, w):
        rhs += wk * integrate.simpson(fld.sigma(sk, x) * Af * fld.phi(sk, x), x=x)
    return float(abs(lhs - rhs))


def snapshot_csv(samples, path, cdf=None):
    """Empirical CDF (and the reference CDF when given) for external plotting."""
    import csv
    x = np.sort(np.asarray(samples, float))
    n = x.size
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "ecdf"] + (["cdf"] if cdf is not None else []))
        ref = cdf(x) if cdf is not None else None
        for i, xi in enumerate(x):
            row = [repr(float(xi)), repr((i + 1) / n)]
            if ref is not None:
                row.append(repr(float(ref[i])))
            w.writerow(row)
