import json

import numpy as np
from hypothesis import HealthCheck, given, settings, strategies as st

from levyembed.cli import RunConfig
from levyembed.density import DensitySpec
from levyembed.levy_core import CharExponent, JumpMeasure, LevyTriplet

finite = st.floats(-3, 3, allow_nan=False)
positive = st.floats(0.05, 3, allow_nan=False)
nonzero_loc = st.floats(-3, 3).filter(lambda x: abs(x) > 1e-3)


@st.composite
def triplets(draw):
    kind = draw(st.sampled_from(["none", "atoms", "stable"]))
    a2 = draw(st.floats(0, 2))
    gamma = draw(finite)
    if kind == "atoms":
        k = draw(st.integers(1, 3))
        nu = JumpMeasure.atoms(draw(st.lists(nonzero_loc, min_size=k, max_size=k)),
                               draw(st.lists(positive, min_size=k, max_size=k)))
    elif kind == "stable":
        nu = JumpMeasure.stable(draw(st.floats(0.3, 1.9)), draw(positive),
                                left=draw(st.floats(0, 1)), right=draw(st.floats(0.05, 1)))
    else:
        nu = JumpMeasure.none()
        a2 = max(a2, 0.1)
    return LevyTriplet(a2, gamma, nu)


us = st.lists(st.floats(-20, 20, allow_nan=False), min_size=1, max_size=5).map(np.array)
fast = settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@fast
@given(triplets())
def test_eta_vanishes_at_zero(tr):
    assert CharExponent(tr)(np.array([0.0]))[0] == 0


@fast
@given(triplets(), us)
def test_real_part_nonpositive(tr, u):
    assert np.all(CharExponent(tr)(u).real <= 1e-12)


@fast
@given(triplets(), us)
def test_conjugate_symmetry(tr, u):
    e = CharExponent(tr)
    assert np.allclose(e(-u), np.conj(e(u)), rtol=1e-12, atol=1e-12)


@fast
@given(triplets(), us)
def test_duality(tr, u):
    # the reflected process has exponent eta(-u)
    assert np.allclose(CharExponent(tr.reflected())(u), CharExponent(tr)(-u), rtol=1e-10, atol=1e-12)


@fast
@given(triplets())
def test_triplet_json_round_trip(tr):
    assert LevyTriplet.from_json(tr.to_json()) == tr


@st.composite
def gaussian_specs(draw):
    return DensitySpec.gaussian(draw(finite), draw(positive)).to_dict()


@fast
@given(triplets(), gaussian_specs(), gaussian_specs(), st.integers(0, 2 ** 63 - 1),
       st.integers(100, 10 ** 6), st.one_of(st.none(), st.floats(0.01, 0.99)))
def test_config_round_trip(tr, h0, h1, seed, n, eps):
    cfg = RunConfig.from_dict({"triplet": tr.to_dict(), "pair": {"h0": h0, "h1": h1},
                               "path": {"seed": seed}, "mc": {"n_paths": n}, "epsilon": eps})
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    assert again.triplet() == cfg.triplet()
