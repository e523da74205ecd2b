import json
import math

import numpy as np
import pytest
from scipy import integrate

from levyembed.errors import QuadratureError
from levyembed.levy_core import (CharExponent, JumpMeasure, LevyTriplet, SmoothFunction,
                                 adjoint_apply, classify, eta_eval, generator_apply,
                                 type0_sufficient_check)


def fourier_generator(triplet, a, x):
    """(1/2π) ∫ f^(ξ) η(-ξ) e^{-ixξ} dξ for f = exp(-a x^2), f^ = sqrt(π/a) exp(-ξ²/4a)."""
    eta = CharExponent(triplet)

    def part(xi, k):
        v = math.sqrt(math.pi / a) * math.exp(-xi * xi / (4 * a)) * eta(np.array([-xi]))[0] \
            * np.exp(-1j * x * xi)
        return v.real if k == 0 else v.imag

    re = integrate.quad(part, -60, 60, args=(0,), limit=400, points=[0.0], epsabs=1e-13)[0]
    return re / (2 * math.pi)


class TestTriplet:
    def test_constant_process_rejected(self):
        with pytest.raises(ValueError):
            LevyTriplet(0.0, 0.0, JumpMeasure.none())

    def test_atom_at_zero_rejected(self):
        with pytest.raises(ValueError):
            JumpMeasure.atoms([0.0], [1.0])

    def test_json_round_trip(self):
        t = LevyTriplet(0.3, -0.2, JumpMeasure.stable(1.2, 0.7, left=0.25, right=0.75))
        s = t.to_json()
        assert json.loads(s)["nu"]["kind"] == "stable"
        assert LevyTriplet.from_json(s) == t

    def test_reflection_flips_drift_and_atoms(self):
        t = LevyTriplet(0.0, 0.5, JumpMeasure.atoms([2.0, -0.5], [1.0, 3.0]))
        r = t.reflected()
        assert r.gamma == -0.5
        assert r.nu.locations == (-2.0, 0.5)


class TestEta:
    def test_brownian(self, bm):
        assert eta_eval(bm, 2.0) == pytest.approx(-2.0 + 0j, abs=1e-15)

    def test_stable(self, stable15):
        assert eta_eval(stable15, -3.0) == pytest.approx(-3 ** 1.5, abs=1e-12)

    def test_atom_without_compensation(self):
        t = LevyTriplet(0.0, 0.0, JumpMeasure.atoms([2.0], [1.0]))
        assert eta_eval(t, 1.0) == pytest.approx(np.exp(2j) - 1, abs=1e-14)

    def test_compensated_atom(self):
        t = LevyTriplet(0.0, 0.0, JumpMeasure.atoms([0.5], [2.0]))
        u = 1.7
        assert eta_eval(t, u) == pytest.approx(2 * (np.exp(0.5j * u) - 1 - 0.5j * u), abs=1e-14)

    def test_asymmetric_stable_matches_quadrature(self):
        nu = JumpMeasure.stable(1.3, 0.8, left=0.2, right=0.8)
        t = LevyTriplet(0.0, 0.0, nu)
        kp, km = nu.stable_coefficients()
        u, p = 1.9, 2.3
        d = lambda y: y ** (-p)
        # one side of the Lévy integral, split at 1 with Fourier weights on the tail
        re = integrate.quad(lambda y: (math.cos(u * y) - 1) * d(y), 0, 1)[0] \
            + integrate.quad(d, 1, np.inf, weight="cos", wvar=u)[0] - 1 / (p - 1)
        im = integrate.quad(lambda y: (math.sin(u * y) - u * y) * d(y), 0, 1)[0] \
            + integrate.quad(d, 1, np.inf, weight="sin", wvar=u)[0]
        val = (kp + km) * re + 1j * (kp - km) * im
        assert eta_eval(t, u) == pytest.approx(val, abs=1e-7)

    def test_tabulated_matches_quadrature(self):
        g = np.linspace(-3, 3, 61)
        nu = JumpMeasure.tabulated(g, np.exp(-g ** 2))
        t = LevyTriplet(0.0, 0.0, nu)
        for u in (0.3, 4.0, 25.0):
            def comp(y, k):
                z = np.exp(1j * u * y) - 1 - (1j * u * y if abs(y) <= 1 else 0)
                v = z * float(nu.density(np.array([y]))[0])
                return v.real if k == 0 else v.imag
            pts = list(np.asarray(nu.grid))
            val = integrate.quad(comp, -3, 3, args=(0,), points=pts, limit=800)[0] \
                + 1j * integrate.quad(comp, -3, 3, args=(1,), points=pts, limit=800)[0]
            assert eta_eval(t, u) == pytest.approx(val, abs=1e-8)

    def test_duality(self):
        t = LevyTriplet(0.4, 0.3, JumpMeasure.atoms([1.5, -0.3], [0.7, 1.1]))
        u = np.linspace(-5, 5, 11)
        assert np.allclose(eta_eval(t.reflected(), u), eta_eval(t, -u), atol=1e-14)

    def test_taylor_matches_small_u(self):
        t = LevyTriplet(0.4, 0.3, JumpMeasure.atoms([1.5, -0.3], [0.7, 1.1]))
        c = CharExponent(t).taylor()
        u = 1e-2
        series = sum(ck * u ** (k + 1) for k, ck in enumerate(c))
        assert abs(series - eta_eval(t, u)) < 1e-10


class TestClassify:
    def test_brownian_is_S(self, bm):
        assert classify(bm).tag == "S"

    def test_stable_small_index_is_zero(self):
        assert classify(LevyTriplet.symmetric_stable(0.8)).tag == "Zero"

    def test_stable_large_index_is_S(self, stable15):
        assert classify(stable15).tag == "S"

    def test_lattice_compound_poisson_is_D(self):
        # drift 1 cancels the compensator so eta(u) = e^{iu} - 1 vanishes at 2πk
        t = LevyTriplet(0.0, 1.0, JumpMeasure.atoms([1.0], [1.0]))
        cls = classify(t)
        assert cls.tag == "D"
        assert cls.evidence["liminf_estimate"] < 1e-6

    def test_evidence_recorded(self, bm):
        ev = classify(bm).evidence
        for k in ("symmetry_residual", "tail_integral", "liminf_estimate"):
            assert k in ev


class TestType0Check:
    def test_brownian_condition_holds(self, bm):
        rep = type0_sufficient_check(bm)
        assert rep["condition_i_holds"]
        # ∫ dξ / (1 + ξ²/2) = π √2
        assert rep["integral"] == pytest.approx(math.pi * math.sqrt(2), rel=1e-6)
        assert rep["conclusion"] == "inconclusive"
        assert type0_sufficient_check(bm, condition_ii=True)["conclusion"] == "type0"

    def test_pure_drift_condition_holds(self):
        rep = type0_sufficient_check(LevyTriplet(0.0, 1.0, JumpMeasure.none()))
        assert rep["condition_i_holds"]
        assert rep["integral"] == pytest.approx(math.pi, rel=1e-6)

    def test_bounded_exponent_inconclusive(self):
        # eta(u) = e^{iu} - 1 is bounded, so Re 1/(1 - eta) does not decay
        rep = type0_sufficient_check(LevyTriplet(0.0, 1.0, JumpMeasure.atoms([1.0], [1.0])))
        assert not rep["condition_i_holds"]
        assert rep["conclusion"] == "inconclusive"

    def test_compensated_atom_grows(self):
        # without drift the compensator term -iu keeps |eta| growing, so (i) holds
        rep = type0_sufficient_check(LevyTriplet(0.0, 0.0, JumpMeasure.atoms([1.0], [1.0])))
        assert rep["condition_i_holds"]


class TestGenerator:
    def test_brownian_gaussian(self, bm):
        assert generator_apply(bm, SmoothFunction.gaussian(1.0), 0.0) == pytest.approx(-1.0)

    def test_single_atom(self):
        t = LevyTriplet(0.0, 0.0, JumpMeasure.atoms([2.0], [1.0]))
        f = SmoothFunction(np.sin, np.cos, lambda x: -np.sin(x))
        assert generator_apply(t, f, 0.0) == pytest.approx(math.sin(2.0), abs=1e-15)
        assert adjoint_apply(t, f, 0.0) == pytest.approx(-math.sin(2.0), abs=1e-15)

    @pytest.mark.parametrize("x", [0.0, 0.7, -2.5])
    def test_stable_matches_fourier(self, stable15, x):
        f = SmoothFunction.gaussian(1.0)
        assert generator_apply(stable15, f, x) == pytest.approx(fourier_generator(stable15, 1.0, x),
                                                                abs=1e-6)

    def test_asymmetric_mixed_matches_fourier(self):
        t = LevyTriplet(0.3, 0.2, JumpMeasure.stable(1.5, 1.0, left=0.3, right=0.7))
        f = SmoothFunction.gaussian(0.8)
        for x in (-1.0, 0.4):
            assert generator_apply(t, f, x) == pytest.approx(fourier_generator(t, 0.8, x), abs=1e-6)

    def test_symmetric_adjoint_equals_generator(self, stable15):
        f = SmoothFunction.gaussian(0.5, center=0.3)
        x = np.array([-1.0, 0.0, 2.0])
        assert np.allclose(adjoint_apply(stable15, f, x), generator_apply(stable15, f, x), atol=1e-12)

    @pytest.mark.parametrize("triplet, n", [
        (LevyTriplet(0.5, 0.7, JumpMeasure.atoms([1.3, -0.4], [0.6, 2.0])), 8001),
        (LevyTriplet(0.0, 0.3, JumpMeasure.stable(1.4, 1.0, left=0.1, right=0.9)), 801),
    ])
    def test_adjoint_integral_identity(self, triplet, n):
        f = SmoothFunction.bump(0.2, 1.0)
        g = SmoothFunction.bump(-0.3, 1.2)
        x = np.linspace(-4, 4, n)
        lhs = integrate.simpson(generator_apply(triplet, f, x) * g(x), x=x)
        rhs = integrate.simpson(f(x) * adjoint_apply(triplet, g, x), x=x)
        assert abs(lhs - rhs) < 1e-6

    def test_quadrature_failure_is_reported(self):
        t = LevyTriplet.symmetric_stable(1.5)
        wild = SmoothFunction(lambda x: np.sin(1e4 * np.asarray(x)),
                              lambda x: 1e4 * np.cos(1e4 * np.asarray(x)),
                              lambda x: -1e8 * np.sin(1e4 * np.asarray(x)))
        with pytest.raises(QuadratureError) as exc:
            generator_apply(t, wild, 0.1)
        assert exc.value.achieved is not None
