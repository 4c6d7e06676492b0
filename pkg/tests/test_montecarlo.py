import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from intrsm.catalog import example
from intrsm.errors import DimensionError, InsufficientSamples, RejectionStall
from intrsm.montecarlo import (MCConfig, acceptance_rate, feynman_kac_groundstate,
                               positive_stable, sample_relativistic_increment,
                               sample_stable_increment, stable_scaling, tail_probe,
                               tilted_stable, verify_A2_profile)
from intrsm.profiles import OperatorFamily, OperatorSpec, PotentialFamily, PotentialSpec, Profile
from intrsm.rates import ModelSpec


def _constant_potential(c):
    g = Profile.custom(log_func=lambda x: np.full(np.shape(x), math.log(c)))
    pot = PotentialSpec(PotentialFamily.CUSTOM, 1.0, R0=1.0, profile_override=g)
    return ModelSpec(OperatorSpec(OperatorFamily.FRACTIONAL, 1, 0.5), pot, K=1.0, K_tilde=1.0, C6=1.0)


@pytest.mark.parametrize("a", [0.25, 0.5, 0.75])
def test_self_similarity(a):
    res = stable_scaling(a, dts=(0.1, 1.0, 10.0), n_paths=100_000, seed=1)
    assert res.passed and res.estimate <= 0.05


def test_cauchy_symmetry_and_quantiles():
    rng = np.random.default_rng(2)
    n = 200_000
    x = sample_stable_increment(0.5, 1, 1.0, rng, n)[:, 0]
    assert abs(np.mean(x <= 0) - 0.5) <= 3 * 0.5 / math.sqrt(n)
    # |X₁| for the standard Cauchy has quantile tan(πp/2)
    for p in (0.1, 0.5, 0.9):
        q = math.tan(math.pi * p / 2)
        se = math.sqrt(p * (1 - p) / n) / (2 / (math.pi * (1 + q * q)))
        assert abs(np.quantile(np.abs(x), p) - q) <= 4 * se


@pytest.mark.parametrize("a", [0.25, 0.5, 0.75])
def test_stable_tail_slope(a):
    rng = np.random.default_rng(3)
    r = np.abs(sample_stable_increment(a, 1, 1.0, rng, 400_000)[:, 0])
    radii = np.geomspace(10, 1e3, 5)
    slope = np.polyfit(np.log(radii), np.log([np.mean(r > s) for s in radii]), 1)[0]
    assert slope == pytest.approx(-2 * a, rel=0.1)


def test_subordinator_laplace_transform():
    rng = np.random.default_rng(4)
    for a in (0.3, 0.5, 0.8):
        s = positive_stable(a, 1.0, rng, 400_000)
        for lam in (0.5, 1.0, 2.0):
            w = np.exp(-lam * s)
            assert abs(w.mean() - math.exp(-lam ** a)) <= 4 * w.std() / math.sqrt(s.size)


def test_isotropic_d2_symbol():
    # E cos(ξ·X) = exp(-|ξ|^{2a}) for the subordinated sampler
    rng = np.random.default_rng(5)
    x = sample_stable_increment(0.5, 2, 1.0, rng, 200_000)
    for xi in ([1.0, 0.0], [0.0, 2.0], [0.6, 0.8]):
        c = np.cos(x @ np.array(xi))
        assert abs(c.mean() - math.exp(-np.linalg.norm(xi))) <= 4 * c.std() / math.sqrt(c.size)


@pytest.mark.parametrize("dt", [0.1, 1.0, 3.0])
def test_tilt_identity(dt):
    acc, se = acceptance_rate(0.5, 1.0, dt, 200_000, seed=6)
    assert abs(acc - math.exp(-dt)) <= 3 * se


def test_relativistic_small_mass_is_cauchy():
    rng = np.random.default_rng(7)
    n = 100_000
    x = np.abs(sample_relativistic_increment(0.5, 1e-4, 1, 1.0, rng, n)[:, 0])
    for p in (0.1, 0.3, 0.5, 0.7, 0.9):
        q = math.tan(math.pi * p / 2)
        se = math.sqrt(p * (1 - p) / n) / (2 / (math.pi * (1 + q * q)))
        assert abs(np.quantile(x, p) - q) <= 4 * se


def test_relativistic_tail_lighter_than_power():
    rng = np.random.default_rng(8)
    x = np.abs(sample_relativistic_increment(0.5, 1.0, 1, 1.0, rng, 400_000)[:, 0])
    r = np.array([1.0, 2.0, 4.0, 8.0])
    p = np.array([np.mean(x > s) for s in r])
    slopes = np.diff(np.log(p)) / np.diff(np.log(r))
    assert np.all(np.diff(slopes) < 0)


def test_rejection_stall_and_split():
    rng = np.random.default_rng(9)
    with pytest.raises(RejectionStall):
        tilted_stable(0.5, 1.0, 20.0, rng, 10, split=False)
    s, acc, prop = tilted_stable(0.5, 1.0, 20.0, rng, 1000)
    assert s.shape == (1000,) and acc / prop > 0.2


def test_a2_profile_fractional():
    for a in (0.25, 0.5, 0.75):
        res = verify_A2_profile(MCConfig(example("Ex61", a=a).spec, n_paths=50_000, seed=10))
        assert res.passed
        assert res.diagnostics["spread"] < 1e3
        assert min(res.curves["r"]) >= 0.1


def test_a2_profile_relativistic():
    res = verify_A2_profile(MCConfig(example("Ex63").spec, n_paths=50_000, seed=10))
    assert res.passed and math.isfinite(res.estimate)


def test_a2_errors():
    with pytest.raises(InsufficientSamples):
        verify_A2_profile(MCConfig(example("Ex61").spec, n_paths=500))
    with pytest.raises(DimensionError):
        verify_A2_profile(MCConfig(example("Ex61", d=2).spec, n_paths=5000))


def test_constant_potential_factorizes():
    c, t = 0.7, 2.0
    res = feynman_kac_groundstate(MCConfig(_constant_potential(c), n_paths=2000, t=t, n_steps=4),
                                  target="one")
    assert np.allclose(res.curves["u_t"], math.exp(-c * t), rtol=1e-12)
    assert res.estimate == pytest.approx(c, rel=1e-12)


def test_groundstate_envelope_spread():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = feynman_kac_groundstate(MCConfig(example("Ex61").spec, n_paths=20_000, t=2.0))
    assert res.passed
    assert res.diagnostics["envelope_spread"] <= 100
    assert res.estimate >= -res.ci_halfwidth


@pytest.mark.parametrize("choice", ["IndicatorFar", "WitnessH"])
def test_tail_markov(choice):
    ex = example("Ex61")
    res = tail_probe(MCConfig(ex.spec, n_paths=20_000, seed=12), choice, witness=ex.witness)
    assert res.diagnostics["markov_ok"]
    tail, ci, markov = (np.array(res.curves[k]) for k in ("tail", "ci", "markov"))
    assert np.all(tail - ci <= markov)
    assert np.all(np.diff(tail) <= 0)


def test_tail_one_is_a_step():
    ex = example("Ex61")
    res = tail_probe(MCConfig(ex.spec, n_paths=2000, n_steps=4), "One", u_grid=[0.5, 0.99, 1.0, 2.0])
    tail = res.curves["tail"]
    assert tail[0] == tail[1] == pytest.approx(res.diagnostics["grid_mass"])
    assert tail[2] == tail[3] == 0.0


def test_thread_independence_and_json():
    cfg = dict(spec=example("Ex61").spec, n_paths=4000, seed=13, n_steps=4)
    one = feynman_kac_groundstate(MCConfig(threads=1, **cfg))
    four = feynman_kac_groundstate(MCConfig(threads=4, **cfg))
    assert json.dumps(one.to_dict()) == json.dumps(four.to_dict())
    assert one.to_csv() == four.to_csv()
    a = verify_A2_profile(MCConfig(example("Ex61").spec, n_paths=5000, seed=13, threads=3))
    b = verify_A2_profile(MCConfig(example("Ex61").spec, n_paths=5000, seed=13))
    assert a.to_dict() == b.to_dict()


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.1, 0.9), dt=st.floats(0.01, 100.0), seed=st.integers(0, 2 ** 32))
def test_scaling_in_law_exact(a, dt, seed):
    # same stream at different dt differs only by the factor dt^{1/(2a)}
    x1 = sample_stable_increment(a, 1, 1.0, np.random.default_rng(seed), 64)
    xd = sample_stable_increment(a, 1, dt, np.random.default_rng(seed), 64)
    assert np.allclose(xd, dt ** (1 / (2 * a)) * x1, rtol=1e-9, atol=0)
