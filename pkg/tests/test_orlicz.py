import json
import math

import numpy as np
import pytest

from intrsm.catalog import example
from intrsm.errors import NoMatchError, NonIntegrable, RegimeError
from intrsm.orlicz import (OrliczOutcome, YoungFunction, analytic_thresholds, classify_orlicz,
                           criterion_a, criterion_b, luxemburg_norm, witness_log_h)

# θ = 1.5 for the iterated-log pairings keeps the success threshold K t positive
PAIRINGS = [("Ex61", 0.5), ("Ex62", 1.5), ("Ex63", 0.5), ("Ex64", 1.5)]


@pytest.mark.parametrize("phi", [YoungFunction("Power", q=1), YoungFunction("Power", q=2.5),
                                 YoungFunction("ExpLog", c=0.3, theta=0.5),
                                 YoungFunction("ExpLog", c=2.0, theta=1.5),
                                 YoungFunction("ExpLogLog", c=1.0, theta=0.5),
                                 YoungFunction("ExpLogLog", c=3.0, theta=2.0)])
def test_young_convex_even(phi):
    u = np.concatenate([[0.0], np.geomspace(1e-6, 1e8, 400)])
    assert phi.midpoint_convex(u)
    assert phi(0.0) == 0.0


def test_young_derivative_matches_finite_difference():
    phi = YoungFunction("ExpLog", c=0.7, theta=0.5)
    for u in (0.5, 3.0, 40.0, 1e4):
        h = 1e-6 * u
        fd = (phi(u + h) - phi(u - h)) / (2 * h)
        assert math.exp(phi.log_phi_prime(math.log(u))) == pytest.approx(fd, rel=1e-6)
    phi = YoungFunction("ExpLogLog", c=2.0, theta=1.5)
    for u in (0.5, 3.0, 40.0, 1e4):
        h = 1e-6 * u
        fd = (phi(u + h) - phi(u - h)) / (2 * h)
        assert math.exp(phi.log_phi_prime(math.log(u))) == pytest.approx(fd, rel=1e-6)


def test_parse():
    phi = YoungFunction.parse("ExpLog,0.25,0.5")
    assert (phi.family.value, phi.c, phi.theta) == ("ExpLog", 0.25, 0.5)
    assert YoungFunction.parse("Power,2").q == 2.0


def test_thresholds_examples():
    ex = example("Ex61")
    rec = analytic_thresholds(ex.spec, "ExpLog")
    assert rec.success_below == pytest.approx(ex.spec.Kt / 4 ** 0.5)
    assert rec.failure_above == pytest.approx(ex.spec.Ktt / 3 ** 0.5)
    ex = example("Ex62", theta=1.0)
    rec = analytic_thresholds(ex.spec, "ExpLogLog")
    assert rec.success_below == pytest.approx(ex.spec.Kt - 1)
    assert rec.failure_above == pytest.approx(ex.spec.Ktt + 1)
    ex = example("Ex63")
    rec = analytic_thresholds(ex.spec, "ExpLog")
    assert rec.success_below == pytest.approx(ex.spec.Kt / 2 ** 0.5)
    assert analytic_thresholds(example("Ex64", theta=0.5).spec, "ExpLogLog").note
    with pytest.raises(NoMatchError):
        analytic_thresholds(example("Ex61").spec, "ExpLogLog")


@pytest.mark.parametrize("name,theta", PAIRINGS)
def test_thresholds_reproduced(name, theta):
    ex = example(name, theta=theta)
    rec = analytic_thresholds(ex.spec, ex.young_family)
    lo = YoungFunction(ex.young_family, c=0.5 * rec.success_below, theta=theta)
    hi = YoungFunction(ex.young_family, c=2.0 * rec.failure_above, theta=theta)
    a = criterion_a(ex.spec, lo)
    assert a.verdict == OrliczOutcome.MAPS_INTO and a.threshold_comparison["consistent"]
    b = criterion_b(ex.spec, ex.witness, hi)
    assert b.verdict == OrliczOutcome.NOT_SUBSET and b.threshold_comparison["consistent"]
    # the other criterion stays silent on each side
    assert criterion_b(ex.spec, ex.witness, lo).verdict == OrliczOutcome.INCONCLUSIVE
    assert criterion_a(ex.spec, hi).verdict == OrliczOutcome.INCONCLUSIVE


def test_no_contradiction_in_gap():
    ex = example("Ex61")
    rec = analytic_thresholds(ex.spec, "ExpLog")
    for c in np.geomspace(rec.success_below * 1.01, rec.failure_above * 0.99, 4):
        v = classify_orlicz(ex.spec, ex.witness, YoungFunction("ExpLog", c=c, theta=0.5))
        assert v.verdict == OrliczOutcome.INCONCLUSIVE


def test_monotone_in_c():
    ex = example("Ex63")
    rec = analytic_thresholds(ex.spec, "ExpLog")
    verdicts = [criterion_a(ex.spec, YoungFunction("ExpLog", c=c, theta=0.5)).verdict
                for c in np.geomspace(0.05, 2, 6) * rec.success_below]
    first_fail = next((i for i, v in enumerate(verdicts) if v != OrliczOutcome.MAPS_INTO), len(verdicts))
    assert all(v != OrliczOutcome.MAPS_INTO for v in verdicts[first_fail:])
    assert verdicts[0] == OrliczOutcome.MAPS_INTO


def test_power_young_functions():
    ex = example("Ex61")
    assert criterion_a(ex.spec, YoungFunction("Power", q=1)).verdict == OrliczOutcome.MAPS_INTO
    for q in (1.01, 2.0):
        phi = YoungFunction("Power", q=q)
        assert criterion_a(ex.spec, phi).verdict != OrliczOutcome.MAPS_INTO
        assert criterion_b(ex.spec, ex.witness, phi).verdict == OrliczOutcome.NOT_SUBSET


def test_iterated_log_small_theta():
    ex = example("Ex62", theta=0.5)
    a = criterion_a(ex.spec, YoungFunction("ExpLogLog", c=1.0, theta=0.5))
    assert a.verdict == OrliczOutcome.INCONCLUSIVE
    assert a.note == "upper bound not integrable"
    # the witness side still diverges once c exceeds K̃ t
    b = criterion_b(ex.spec, ex.witness, YoungFunction("ExpLogLog", c=10.0, theta=0.5))
    assert b.verdict == OrliczOutcome.NOT_SUBSET
    b = criterion_b(ex.spec, ex.witness, YoungFunction("ExpLogLog", c=1.0, theta=0.5))
    assert b.verdict == OrliczOutcome.INCONCLUSIVE


def test_regime_error():
    with pytest.raises(RegimeError):
        criterion_a(example("Ex61", theta=1.0).spec, YoungFunction("ExpLog", c=0.1, theta=1.0))


def test_verdict_json():
    ex = example("Ex61")
    v = criterion_a(ex.spec, YoungFunction("ExpLog", c=0.01, theta=0.5))
    out = json.loads(json.dumps(v.to_dict()))
    assert out["verdict"] == "MapsInto"
    assert out["threshold_comparison"]["predicted"] == "MapsInto"


def test_luxemburg_trivial():
    spec = example("Ex61").spec
    one = YoungFunction("Power", q=1)
    assert luxemburg_norm(one, lambda x: np.full(np.shape(x), -np.inf), spec) == (0.0, 0.0)
    lo, hi = luxemburg_norm(one, lambda x: np.zeros(np.shape(x)), spec, normalize=True)
    assert lo == pytest.approx(1.0, rel=1e-9) and hi == pytest.approx(1.0, rel=1e-9)
    lo, hi = luxemburg_norm(one, lambda x: np.zeros(np.shape(x)), spec.with_(C10=2.0), normalize=True)
    assert lo <= 1.0 <= hi and hi / lo == pytest.approx(16.0)


def test_luxemburg_witness():
    ex = example("Ex61")
    one = YoungFunction("Power", q=1)
    # L¹(μ) norm of the witness is 2∫ dr/η = 2(1 + 1 + 1) with η = r log² r
    lo, hi = luxemburg_norm(one, witness_log_h(ex.spec, ex.witness), ex.spec)
    assert lo == pytest.approx(6.0, rel=1e-9)
    with pytest.raises(NonIntegrable):
        luxemburg_norm(YoungFunction("Power", q=2), witness_log_h(ex.spec, ex.witness), ex.spec)
    ex = example("Ex63")
    lo, _ = luxemburg_norm(one, witness_log_h(ex.spec, ex.witness), ex.spec)
    assert lo == pytest.approx(4.0, rel=1e-9)
