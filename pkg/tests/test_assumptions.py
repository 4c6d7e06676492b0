import json
import math

import pytest

from intrsm.assumptions import (Condition, Regime, Verdict, a2_by_citation, analytic_omega,
                                check_A1, check_A3, check_condition_c, check_decay_to_zero,
                                check_sigma, check_witness, classify_regime,
                                classify_with_reports, estimate_omega)
from intrsm.catalog import NAMES, borderline_example, example
from intrsm.profiles import Direction, Profile
from intrsm.rates import WitnessSpec


def test_a1_fractional_d1():
    rep = check_A1(example("Ex61").spec)
    assert rep.verdict == Verdict.PASS
    # both ends of the convolution carry mass 2∫_1^∞ r^-2 dr = 2, so sup → 4
    assert 3.99 < rep.empirical_constant <= 4.0


def test_a1_relativistic_d1():
    rep = check_A1(example("Ex63").spec)
    assert rep.verdict == Verdict.PASS
    assert math.isfinite(rep.empirical_constant)


def test_a1_detects_divergence():
    slow = Profile.custom(func=lambda r: r ** -0.5, direction=Direction.DECREASING)
    rep = check_A1(example("Ex61").spec, f=slow)
    assert rep.verdict == Verdict.FAIL
    assert rep.empirical_constant == math.inf


def test_a1_monte_carlo_fallback():
    rep = check_A1(example("Ex61", d=4).spec, [1.0, 10.0])
    assert rep.evidence["method"] == "montecarlo"
    assert rep.verdict == Verdict.PASS


@pytest.mark.slow
def test_a1_d3_bipolar():
    rep = check_A1(example("Ex61", d=3).spec, [10.0, 100.0])
    assert rep.verdict == Verdict.PASS
    assert math.isfinite(rep.empirical_constant)


@pytest.mark.parametrize("name,theta,regime", [
    ("Ex61", 0.5, Regime.L1_ORLICZ), ("Ex61", 1.0, Regime.ULTRACONTRACTIVE),
    ("Ex61", 1.5, Regime.ULTRACONTRACTIVE), ("Ex62", 0.5, Regime.L1_ORLICZ),
    ("Ex62", 1.5, Regime.L1_ORLICZ), ("Ex63", 0.5, Regime.L1_ORLICZ),
    ("Ex63", 1.0, Regime.ULTRACONTRACTIVE), ("Ex64", 1.5, Regime.L1_ORLICZ),
])
def test_classify_examples(name, theta, regime):
    assert classify_regime(example(name, theta=theta).spec) == regime


def test_decay_reports_consistent():
    for name in NAMES:
        spec = example(name, theta=0.5).spec
        assert check_decay_to_zero(spec).passed
        assert check_condition_c(spec).verdict == Verdict.FAIL


def test_positive_limit_is_condition_c():
    # g = log r against |log f| = 2 log r: ratio is exactly 1/2
    spec = example("Ex61", theta=1.0).spec
    rep = check_condition_c(spec)
    assert rep.passed and rep.empirical_constant == pytest.approx(0.5)
    assert check_decay_to_zero(spec).verdict == Verdict.FAIL


def test_borderline_staircase():
    regime, reports = classify_with_reports(borderline_example())
    assert regime == Regime.BORDERLINE
    assert all(r.verdict == Verdict.FAIL for r in reports)


@pytest.mark.parametrize("name", NAMES)
def test_witness_hypotheses(name):
    ex = example(name)
    rep = check_witness(ex.spec, ex.witness)
    assert rep.passed
    b = {"Ex61": 0.5, "Ex62": 0.5, "Ex63": 0.0, "Ex64": 0.0}[name]
    assert rep.empirical_constant == b
    assert rep.evidence["b_numeric"] == pytest.approx(b, abs=1e-9)
    json.dumps(rep.to_dict())


def test_sigma_half_fails_for_relativistic():
    ex = example("Ex63")
    rep = check_sigma(ex.spec, WitnessSpec(ex.witness.eta, Profile.sigma_half()))
    assert rep.verdict == Verdict.FAIL
    # r − 1 branch: sup f(σ)/f is e·2^{3/2}, attained at r = 2
    ok = check_sigma(ex.spec, ex.witness)
    assert ok.passed and ok.empirical_constant == pytest.approx(math.e * 2 ** 1.5, rel=1e-3)


def test_witness_fails_for_large_b():
    ex = example("Ex61")
    rep = check_witness(ex.spec, WitnessSpec(Profile.eta_power(5.0), Profile.sigma_half()))
    assert rep.verdict == Verdict.FAIL
    assert rep.empirical_constant == pytest.approx(2.5)


@pytest.mark.parametrize("name", NAMES)
def test_omega_numeric_matches_analytic(name):
    ex = example(name)
    rep = estimate_omega(ex.spec)
    assert rep.passed
    assert rep.evidence["omega_analytic"] == ex.omega
    assert rep.evidence["omega_numeric"] == pytest.approx(ex.omega, abs=1e-6)


def test_omega_infinite_for_power_fractional():
    from intrsm.profiles import OperatorSpec, PotentialSpec
    from intrsm.rates import ModelSpec
    spec = ModelSpec(OperatorSpec("FractionalLaplacian", 1, 0.5), PotentialSpec("Power", 0.5))
    assert analytic_omega(spec) == math.inf


def test_a3_and_citation():
    spec = example("Ex63").spec
    rep = check_A3(spec)
    assert rep.passed and rep.empirical_constant == pytest.approx(2 ** 0.5, rel=1e-12)
    assert a2_by_citation(spec).condition == Condition.A2_PROFILE
