import math

import numpy as np
import pytest

from levyembed.density import DensityPair, DensitySpec
from levyembed.embed import (
    ClockEngine, ClockState, SpeedField, delta_schedule, outcomes_to_csv, regularize, run_block,
    run_path, step_clock, stop_time,
)
from levyembed.errors import ConfigError, DegenerateField
from levyembed.pathsim import PathConfig, SamplePath
from levyembed.poisson import RatioFunction, solve_H


def frozen_path(states, dt):
    """Piecewise-constant synthetic path with jumps at the grid nodes."""
    states = np.asarray(states, float)
    t = dt * np.arange(states.size)
    flags = np.r_[False, np.diff(states) != 0]
    return SamplePath(t, states, flags, np.zeros_like(states))


@pytest.fixture(scope="module")
def zigzag():
    rng = np.random.default_rng(9)
    return frozen_path(np.r_[0.0, np.cumsum(0.15 * rng.standard_normal(4000))], 1e-3)


@pytest.fixture(scope="module")
def identical_field(bm):
    h = DensitySpec.gaussian(0.0, 1.0)
    pair = DensityPair(h, h)
    return SpeedField(solve_H(RatioFunction(pair, bm)), pair)


def _ode(fld, x, t):
    """Closed-form G, I for a state frozen at x."""
    r, b, _, _ = fld.rates(np.array([x]))
    r, b = float(r[0]), float(b[0])
    return r * t, b * (-math.expm1(-r * t)) / r


class TestStepClock:
    def test_constant_state_G(self, bm_field):
        st = step_clock(ClockState(), (0.0, 0.3, 0.7), bm_field)
        r = float(bm_field.rates(np.array([0.7]))[0][0])
        assert st.G == pytest.approx(0.3 * r, rel=1e-14)

    def test_frozen_ode(self, bm_field):
        st = step_clock(ClockState(), (0.0, 0.1, 0.0), bm_field)
        G, I = _ode(bm_field, 0.0, 0.1)
        assert abs(st.G - G) < 1e-8 and abs(st.I - I) < 1e-8

    def test_exhaustion_latches(self, identical_field):
        st = step_clock(ClockState(), (0.0, 0.1, 0.0), identical_field)
        assert st.exhausted and st.t == 0.0
        again = step_clock(st, (0.1, 0.2, 0.0), identical_field)
        assert again is st

    def test_I_nondecreasing(self, bm_field):
        st = ClockState()
        last = 0.0
        for k, x in enumerate(np.linspace(-3, 3, 30)):
            st = step_clock(st, (k * 0.01, (k + 1) * 0.01, x), bm_field)
            assert st.I >= last
            last = st.I


class TestStopTime:
    def test_frozen_path_matches_ode(self, bm_field):
        p = frozen_path(np.zeros(2001), 1e-3)
        res = run_path(bm_field, p, trace=1)
        t, G, I, _ = res.trace[0][100]
        assert t == pytest.approx(0.1)
        G0, I0 = _ode(bm_field, 0.0, t)
        assert abs(G - G0) < 1e-8 and abs(I - I0) < 1e-8
        # tau solves I(tau) = 1 in closed form
        r, b, _, _ = bm_field.rates(np.array([0.0]))
        tau = -math.log1p(-float(r[0]) / float(b[0])) / float(r[0])
        assert stop_time(bm_field, p).tau == pytest.approx(tau, abs=1e-9)

    def test_identical_pair_stops_at_zero(self, identical_field):
        p = frozen_path([0.4, 0.4, 0.4], 0.1)
        out = stop_time(identical_field, p)
        assert out.tau == 0.0 and out.L_tau == 0.4 and out.hit_rho

    def test_censored(self, bm_field):
        p = frozen_path(np.zeros(11), 1e-3)
        out = stop_time(bm_field, p)
        assert out.censored and out.tau == pytest.approx(0.01)

    def test_delta_zero_and_one(self, bm_field, zigzag):
        assert delta_schedule(bm_field, zigzag, 0.0) == 0.0
        assert delta_schedule(bm_field, zigzag, 1.0) == stop_time(bm_field, zigzag).tau

    def test_block_identities(self, bm, bm_field):
        cfg = PathConfig(dt_base=1e-3, t_max=50.0, seed=21, block_size=100)
        res = run_block(bm_field, bm, cfg, 0, 100, levels=((0, 1), (0, 0.25), (0, 0.5), (0, 1)),
                        audit=True)
        T = res.times
        assert np.array_equal(T[:, 0], T[:, 3])
        assert np.all(T[:, 1] <= T[:, 2]) and np.all(T[:, 2] <= T[:, 0])
        assert res.audit_max.max() < 1e-10
        assert not res.censored.any()

    def test_csv(self, bm, bm_field, tmp_path):
        cfg = PathConfig(dt_base=1e-3, t_max=50.0, seed=1, block_size=8)
        res = run_block(bm_field, bm, cfg, 0, 8)
        f = tmp_path / "out.csv"
        outcomes_to_csv(res, f)
        lines = f.read_text().splitlines()
        assert lines[0] == "path_id,tau,L_tau,hit_rho,censored" and len(lines) == 9

    def test_bad_level(self, bm_field):
        with pytest.raises(ConfigError):
            ClockEngine(bm_field, levels=((0.0, 1.5),))


class TestRegularize:
    def test_bounds(self, bm_field):
        eps = 0.1
        f = regularize(bm_field, eps)
        x = np.linspace(-8, 8, 1601)
        bound = (1 - eps) * bm_field.C / eps
        for t in (0.0, 0.3, 1.0):
            assert np.all(f.sigma(t, x) <= bound * (1 + 1e-12))

    def test_small_eps_recovers(self, bm_field):
        eps = 1e-6
        f = regularize(bm_field, eps)
        x = np.linspace(-6, 6, 241)
        p_sup = np.max(bm_field.H(x)) / bm_field.C
        h_sup = max(np.max(bm_field.h0(x)), np.max(bm_field.h1(x)))
        for a, b in ((f.h0, bm_field.h0), (f.h1, bm_field.h1)):
            assert np.max(np.abs(a(x) - b(x))) <= eps * (p_sup + h_sup)

    def test_G_unchanged(self, bm_field):
        x = np.linspace(-6, 6, 241)
        r = bm_field.rates(x)[0]
        r_eps = regularize(bm_field, 0.3).rates(x)[0]
        assert np.max(np.abs(r - r_eps)) < 1e-12 * np.max(np.abs(r))

    def test_degenerate(self, identical_field):
        with pytest.raises(DegenerateField):
            regularize(identical_field, 0.1)
        with pytest.raises(ConfigError):
            regularize(identical_field, 1.0)

    def test_eps_decomposition(self, bm_field, zigzag):
        # Delta^eps(t) = Delta(t) + kappa e^{G(t)} J(t), with Delta^eps from its own clock
        eps = 0.1
        kap = eps / ((1 - eps) * bm_field.C)
        a = run_path(bm_field, zigzag, trace=1).trace[0]
        b = run_path(regularize(bm_field, eps), zigzag, trace=1).trace[0]
        n = min(len(a), len(b))
        assert n > 50
        worst = 0.0
        for (t, G, I, J), (t2, Ge, Ie, _) in zip(a[:n], b[:n]):
            assert t == t2
            d = 1 - math.exp(G) * (1 - I)
            de = 1 - math.exp(Ge) * (1 - Ie)
            worst = max(worst, abs(de - (d + kap * math.exp(G) * J)))
        assert worst < 1e-8

    def test_eps_audit(self, bm_field, zigzag):
        res = run_path(bm_field, zigzag, levels=((0.0, 1.0), (0.1, 1.0)), audit=True)
        assert res.eps_audit_max[0] < 1e-8 and res.audit_max[0] < 1e-10

    def test_pathwise_order(self, bm, bm_field):
        cfg = PathConfig(dt_base=1e-3, t_max=50.0, seed=5, block_size=1000)
        res = run_block(bm_field, bm, cfg, 0, 1000, levels=((0.2, 1), (0.1, 1), (0, 1)))
        T = res.times
        assert np.all(T[:, 0] <= T[:, 1]) and np.all(T[:, 1] <= T[:, 2])


def test_dt_halving(bm, bm_field):
    # coupled runs: the coarse run sums pairs of the fine run's draws
    n = 4096
    out = []
    for dt, refine in ((2e-3, 2), (1e-3, 1)):
        cfg = PathConfig(dt_base=dt, t_max=50.0, seed=13, refine=refine, block_size=n)
        out.append(run_block(bm_field, bm, cfg, 0, n).times[:, 0])
    se = out[1].std(ddof=1) / math.sqrt(n)
    assert abs(out[0].mean() - out[1].mean()) < se
