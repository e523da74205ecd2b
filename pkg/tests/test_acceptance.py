"""Acceptance criteria 1-11, each at its stated tolerance.

Every criterion records one PASS/FAIL line, printed in the terminal summary.
Criterion 4's final bound is not attainable (the resolvent bias at q = 1e-4
is sqrt(q/2) = 7.1e-3); it is recorded as FAIL and its test is a strict xfail.
"""
import json
import math

import numpy as np
import pytest

from levyembed.cli import main
from levyembed.density import DensityPair, DensitySpec
from levyembed.embed import delta_schedule, regularize, run_block, run_path, stop_time
from levyembed.errors import FeasibilityBreached
from levyembed.levy_core import CharExponent, JumpMeasure, LevyTriplet
from levyembed.pathsim import IncrementSampler, PathConfig, SamplePath, block_rng, simulate_path
from levyembed.poisson import RatioFunction, fourier_identity, ratio_eval, resolvent_oracle
from levyembed.verify import MCConfig, ks_statistic, prepare, run_embedding_mc

from _support import StableCDFOracle, record

N = 100_000
SEED = 20240611
pytestmark = pytest.mark.slow


def _mc(n=N, seed=SEED, workers=1, **kw):
    return MCConfig(n_paths=n, path=PathConfig(dt_base=1e-3, seed=seed), workers=workers, **kw)


@pytest.fixture(scope="module")
def bm_prepared(bm, bm_pair):
    return prepare(bm, bm_pair)


@pytest.fixture(scope="module")
def stable_prepared(stable15, stable_pair):
    return prepare(stable15, stable_pair)


@pytest.fixture(scope="module")
def bm_mc(bm, bm_prepared):
    return run_embedding_mc(bm_prepared.field, bm, _mc(), feasibility=bm_prepared.feasibility,
                            return_outcomes=True)


def test_c1_brownian_embedding(bm_mc):
    r, _ = bm_mc
    crit = 1.36 / math.sqrt(r.n_paths) + 0.005
    ok_mean = abs(r.mean_tau - 1) <= 3 * r.se_tau
    ok_ks = r.ks_stat <= crit
    record(1, ok_mean and ok_ks and r.valid,
           f"mean_tau={r.mean_tau:.5f} SE={r.se_tau:.5f} KS={r.ks_stat:.5f} (<= {crit:.5f}) "
           f"censored={r.censoring_rate:.2g} intH={r.integral_H:.8f}")
    assert r.valid and ok_mean and ok_ks


def test_c2_stable_embedding(stable15, stable_prepared):
    P = stable_prepared
    rep, (_, results) = run_embedding_mc(P.field, stable15, _mc(u_probe=(), s_probe=()),
                                         feasibility=P.feasibility, return_outcomes=True)
    cens = np.concatenate([b.censored[:, 0] for b in results])
    L = np.concatenate([b.states[:, 0] for b in results])[~cens]
    ks = ks_statistic(L, StableCDFOracle(2.0))
    crit = 1.36 / math.sqrt(L.size) + 0.01
    ok_mean = abs(rep.mean_tau - 1) <= 3 * rep.se_tau
    record(2, ok_mean and ks <= crit and rep.valid,
           f"mean_tau={rep.mean_tau:.5f} SE={rep.se_tau:.5f} KS={ks:.5f} (<= {crit:.5f}) "
           f"censored={rep.censoring_rate:.2g}")
    assert rep.valid and ok_mean and ks <= crit


def test_c3_poisson_residual(bm, bm_pair, stable15, stable_pair, bm_prepared, stable_prepared):
    out = {}
    for name, tr, pair, P, tol in (("BM", bm, bm_pair, bm_prepared, 1e-4),
                                   ("stable", stable15, stable_pair, stable_prepared, 1e-3)):
        sol = P.solution
        fi = fourier_identity(sol, RatioFunction(pair, tr))
        out[name] = (sol.residual_sup, fi, tol)
    ok = all(res <= tol and fi <= tol for res, fi, tol in out.values())
    record(3, ok, " ".join(f"{k}: residual={v[0]:.2e} fourier={v[1]:.2e} (<= {v[2]:g})"
                           for k, v in out.items()))
    assert ok


@pytest.fixture(scope="module")
def resolvent_errors(bm, bm_pair, bm_prepared):
    x = np.linspace(-4, 4, 17)
    H = bm_prepared.solution(x)
    return [float(np.max(np.abs(-resolvent_oracle(bm_pair, bm, q, x) - H))) for q in (1e-2, 1e-3, 1e-4)]


def test_c4_resolvent_convergence(resolvent_errors):
    e = resolvent_errors
    decreasing = e[0] > e[1] > e[2]
    # the bias is -(m2(h1) - m2(h0)) sqrt(q/2) to leading order; here m2 differs by 1
    rate_ok = all(abs(err / math.sqrt(q / 2) - 1) < 0.05 for err, q in zip(e[1:], (1e-3, 1e-4)))
    record(4, decreasing and e[2] <= 1e-3,
           f"sup errors {e[0]:.3e} > {e[1]:.3e} > {e[2]:.3e}; final bound 1e-3 unattainable, "
           f"bias sqrt(q/2)={math.sqrt(5e-5):.3e} at q=1e-4")
    assert decreasing and rate_ok


@pytest.mark.xfail(strict=True, reason="resolvent bias at q=1e-4 is sqrt(q/2)=7.1e-3 > 1e-3")
def test_c4_final_bound(resolvent_errors):
    assert resolvent_errors[2] <= 1e-3


def test_c5_necessity_gate(bm):
    rev = DensityPair(DensitySpec.gaussian(0, 2), DensitySpec.gaussian(0, 1))
    P = prepare(bm, rev)
    ok_rev = P.feasibility.verdict == "rejected" and P.feasibility.min_H < -0.01 * P.solution.max_abs_H
    r = RatioFunction(DensityPair(DensitySpec.gaussian(0, 1), DensitySpec.gaussian(1, 1)), bm)
    try:
        ratio_eval(r, 0.0)
        u0 = None
    except FeasibilityBreached as exc:
        u0 = exc.u0
    record(5, ok_rev and u0 == 0.0,
           f"reversed: {P.feasibility.reason} min_H={P.feasibility.min_H:.4f} "
           f"max|H|={P.solution.max_abs_H:.4f}; unequal means: breach at u0={u0}")
    assert ok_rev and u0 == 0.0


def test_c6_dynkin(bm_mc):
    r, _ = bm_mc
    rows = []
    ok = True
    for d in r.dynkin:
        good = abs(d["residual_re"]) <= 3 * d["se_re"] and abs(d["residual_im"]) <= 3 * d["se_im"]
        ok &= good
        rows.append(f"u={d['u']:g}: re {d['residual_re']:+.1e}±{d['se_re']:.1e} "
                    f"im {d['residual_im']:+.1e}±{d['se_im']:.1e}")
    record(6, ok, "; ".join(rows))
    assert ok


def test_c7_intermediate_marginal(bm_mc):
    r, _ = bm_mc
    m = r.marginals[0]
    crit = 1.36 / math.sqrt(r.n_paths - m["censored"]) + 0.005
    record(7, m["s"] == 0.5 and m["ks_stat"] <= crit, f"s=0.5 KS={m['ks_stat']:.5f} (<= {crit:.5f})")
    assert m["ks_stat"] <= crit


def _frozen(seed, n=3000, dt=1e-3):
    x = np.r_[0.0, np.cumsum(0.15 * np.random.default_rng(seed).standard_normal(n))]
    return SamplePath(dt * np.arange(n + 1), x, np.r_[False, np.diff(x) != 0], np.zeros(n + 1))


def test_c8_pathwise_algebra(bm, bm_prepared):
    fld = bm_prepared.field
    cfg = PathConfig(dt_base=1e-3, t_max=50.0, seed=SEED, block_size=100)
    res = run_block(fld, bm, cfg, 0, 100, levels=((0.0, 1.0), (0.0, 1.0)), audit=True)
    audit = float(res.audit_max.max())
    same = bool(np.array_equal(res.times[:, 0], res.times[:, 1]))
    for i in range(5):
        p = simulate_path(bm, fld.pair.h0, cfg, index=i, t_end=10.0)
        same &= delta_schedule(fld, p, 1.0) == stop_time(fld, p).tau
    eps = 0.1
    kap = eps / ((1 - eps) * fld.C)
    worst = 0.0
    for seed in range(5):
        p = _frozen(seed)
        a = run_path(fld, p, trace=1).trace[0]
        b = run_path(regularize(fld, eps), p, trace=1).trace[0]
        for (t, G, I, J), (_, Ge, Ie, _) in zip(a, b):
            lhs = 1 - math.exp(Ge) * (1 - Ie)
            rhs = 1 - math.exp(G) * (1 - I) + kap * math.exp(G) * J
            worst = max(worst, abs(lhs - rhs))
    ok = audit <= 1e-10 and same and worst <= 1e-8
    record(8, ok, f"Delta audit {audit:.1e} (<= 1e-10); delta(1)==tau: {same}; "
                  f"eps-decomposition {worst:.1e} (<= 1e-8)")
    assert ok


def test_c9_regularization_monotone(bm, bm_prepared):
    fld = bm_prepared.field
    cfg = PathConfig(dt_base=1e-3, t_max=50.0, seed=SEED, block_size=1000)
    res = run_block(fld, bm, cfg, 0, 1000, levels=((0.2, 1.0), (0.1, 1.0), (0.0, 1.0)))
    T = res.times
    order = bool(np.all(T[:, 0] <= T[:, 1]) and np.all(T[:, 1] <= T[:, 2]))
    parts = []
    ok = order and not res.censored.any()
    for col, eps in ((0, 0.2), (1, 0.1)):
        m = T[:, col].mean()
        se = T[:, col].std(ddof=1) / math.sqrt(T.shape[0])
        target = (1 - eps) * fld.C
        ok &= abs(m - target) <= 3 * se
        parts.append(f"eps={eps}: mean {m:.4f} vs {target:.4f} (SE {se:.4f})")
    record(9, ok, f"pathwise order: {order}; " + "; ".join(parts))
    assert ok


def test_c10_simulator_calibration():
    cases = {
        "BM": LevyTriplet.brownian(1.0),
        "CP delta_2": LevyTriplet(0.0, 0.0, JumpMeasure.atoms([2.0], [1.0])),
        "stable 1.5": LevyTriplet.symmetric_stable(1.5, 1.0),
    }
    dt = 0.1
    worst = {}
    for k, (name, tr) in enumerate(cases.items()):
        c, j, _ = IncrementSampler(tr, dt).draw(block_rng(SEED, k), N)
        x = (c + j)[0]
        e = CharExponent(tr)
        worst[name] = max(abs(np.mean(np.exp(1j * u * x)) - np.exp(dt * complex(e(np.array([u]))[0])))
                          for u in (0.5, 1.0, 2.0))
    bound = 3 / math.sqrt(N)
    ok = all(v <= bound for v in worst.values())
    record(10, ok, " ".join(f"{k}: {v:.1e}" for k, v in worst.items()) + f" (<= {bound:.1e})")
    assert ok


def test_c11_determinism(tmp_path, bm, bm_prepared):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mc": {"n_paths": 10000}, "path": {"seed": SEED}}))
    out = tmp_path / "out"
    reports = []
    for _ in range(2):
        assert main(["embed", str(cfg), "-o", str(out)]) == 0
        reports.append((out / "embed.json").read_bytes())
    identical = reports[0] == reports[1]
    P = bm_prepared
    means = {}
    for w in (1, 4, 8):
        r = run_embedding_mc(P.field, bm, _mc(n=20000, workers=w, u_probe=(), s_probe=()),
                             feasibility=P.feasibility)
        means[w] = (r.mean_tau, r.se_tau)
    se = means[1][1]
    spread = max(m for m, _ in means.values()) - min(m for m, _ in means.values())
    ok = identical and spread <= se
    record(11, ok, f"byte-identical reports: {identical}; mean_tau over workers "
                   + ", ".join(f"{w}: {m:.6f}" for w, (m, _) in means.items()) + f" (1 SE = {se:.5f})")
    assert ok
