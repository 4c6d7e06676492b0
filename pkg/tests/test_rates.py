import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intrsm.catalog import NAMES, example
from intrsm.errors import HypothesisError, NotEventuallyMonotone, RangeError
from intrsm.profiles import OperatorSpec, PotentialSpec, Profile
from intrsm.rates import (COLUMNS, LN10, ModelSpec, WitnessSpec, alpha_t, beta_t,
                          certify_r0, decade_grid, derive_constants, find_r0, gamma_t,
                          limit_parameter_b, log_alpha_t, log_beta_t, log_G, log_gamma_t,
                          log_H, log_rate_v, log_rate_w, log_rate_w_tilde, log_u0,
                          numeric_b, rate_table, rate_v, rate_w, rate_w_tilde,
                          tail_upper_bound)

FRAC = OperatorSpec("FractionalLaplacian", 1, 0.5)
REL = OperatorSpec("RelativisticLaplacian", 1, 0.5, 1.0)


def unit_spec(**kw):
    """Fractional d=1, a=1/2, g = log^{1/2}, with K = K̃ = 1."""
    base = dict(t=1.0, K=1.0, K_tilde=1.0)
    base.update(kw)
    return ModelSpec(FRAC, PotentialSpec("PowerLog", 0.5), **base)


@pytest.mark.parametrize("theta", [0.25, 0.5, 0.9])
def test_derive_constants_closed_forms(theta):
    k, kt, c6 = derive_constants(ModelSpec(FRAC, PotentialSpec("PowerLog", theta)))
    assert kt == pytest.approx(4 * math.log(1 + math.e) ** (2 * theta), rel=1e-12)
    assert k * kt == pytest.approx(1.0, rel=1e-14)
    _, kt, c6 = derive_constants(ModelSpec(REL, PotentialSpec("Power", theta)))
    assert c6 == pytest.approx(2 ** theta, rel=1e-14)
    assert kt == pytest.approx(4 ** (1 + theta), rel=1e-12)
    _, kt, _ = derive_constants(ModelSpec(FRAC, PotentialSpec("PowerIterLog", theta)))
    assert kt == pytest.approx(4 * math.log(math.log(1 + math.exp(math.e))) ** (2 * theta), rel=1e-12)


def test_doubling_constant_grid_agrees_with_closed_form():
    from intrsm.rates import doubling_constant
    for fam in ("Power", "PowerLog", "PowerIterLog"):
        pot = PotentialSpec(fam, 0.5)
        k, kt, c6 = derive_constants(ModelSpec(FRAC, pot))
        assert doubling_constant(pot) == pytest.approx(c6, rel=1e-12)


def test_alpha_examples():
    spec = unit_spec()
    assert alpha_t(spec, math.exp(8)) == pytest.approx(math.exp(2), rel=1e-13)
    assert alpha_t(spec, 1.0) == pytest.approx(1.0)
    with pytest.raises(RangeError):
        alpha_t(spec, 0.5)


def test_alpha_relativistic_border_rate():
    spec = ModelSpec(REL, PotentialSpec("Power", 0.5))
    # oracle: root of r + 1.5 log r = (log u)/2 via mpmath
    r = alpha_t(spec, 1e12)
    assert r == pytest.approx(10.31509763956954828856, rel=1e-12)
    # the border rate (log u)/2 is approached only slowly: 0.75 at u = 1e12
    assert r / (6 * LN10) == pytest.approx(0.7466316641930521, rel=1e-10)
    far = math.exp(log_alpha_t(spec, 1e4 * LN10)) / (1e4 * LN10 / 2)
    assert far == pytest.approx(0.9987818031056988, rel=1e-10)


def test_find_r0_examples():
    assert find_r0(unit_spec(), "G") <= math.e
    hot = ModelSpec(FRAC, PotentialSpec("PowerLog", 1.0), t=1.0)   # K̃ t ≈ 6.9 > 2(d+2a)
    with pytest.raises(NotEventuallyMonotone):
        find_r0(hot, "G")
    ex = example("Ex61")
    assert math.isfinite(find_r0(ex.spec, "H", ex.witness))
    assert limit_parameter_b(FRAC, ex.witness) == 0.5


def test_find_r0_decreasing_beyond():
    for name in NAMES:
        ex = example(name, t=5.0)
        for sel, w in (("G", None), ("H", ex.witness), ("f_exp", None)):
            cert = certify_r0(ex.spec, sel, w)
            x = np.linspace(cert.log_r0, 30, 3000)
            F = {"G": lambda z: log_G(ex.spec, z), "H": lambda z: log_H(ex.spec, ex.witness, z),
                 "f_exp": lambda z: ex.spec.f.log_at(z) + ex.spec.Kt * ex.spec.g_at(z)}[sel]
            assert np.all(np.diff(F(x)) < 0), (name, sel)


def test_r0_extended_window():
    # θ = 0.9, t = 5: G_t keeps increasing up to log r ~ 4e8
    ex = example("Ex61", theta=0.9, t=5.0)
    cert = certify_r0(ex.spec, "G")
    assert cert.extended and cert.log_r0 > 1e8


def test_beta_examples():
    spec = unit_spec()
    lu0 = log_u0(spec, "G")
    assert log_beta_t(spec, lu0) == pytest.approx(certify_r0(spec, "G").log_r0, abs=1e-9)
    # oracle: root of 4x − √x = 20 log 10 via mpmath
    assert math.log(beta_t(spec, 1e20)) == pytest.approx(12.3930184445964012583903, rel=1e-12)
    ratio = spec.g_at(log_beta_t(spec, 30 * LN10)) / spec.g_at(log_alpha_t(spec, 30 * LN10))
    assert abs(ratio - 1) < 0.05
    with pytest.raises(RangeError):
        log_beta_t(spec, lu0 - 1.0)


def test_gamma_examples():
    ex = example("Ex61")
    spec, w = ex.spec, ex.witness
    lu0 = log_u0(spec, "H", w)
    assert log_gamma_t(spec, w, lu0) == pytest.approx(certify_r0(spec, "H", w).log_r0, abs=1e-9)
    bracket = (2 / (2 - 0.5)) ** 0.5
    for lu in (1e6, 1e9, 1e12):
        r = spec.g_at(log_gamma_t(spec, w, lu)) / spec.g_at(log_alpha_t(spec, lu))
        assert 1.0 <= r <= bracket + 0.05
    ex = example("Ex63")
    assert limit_parameter_b(REL, ex.witness) == 0.0
    r = ex.spec.g_at(log_gamma_t(ex.spec, ex.witness, 1e12)) / ex.spec.g_at(log_alpha_t(ex.spec, 1e12))
    assert abs(r - 1) < 1e-5


def test_gamma_hypothesis_error():
    w = WitnessSpec(Profile.eta_power(5.0), Profile.sigma_half())
    assert limit_parameter_b(FRAC, w) == pytest.approx(2.5)
    with pytest.raises(HypothesisError):
        gamma_t(unit_spec(), w, 1e10)


def test_numeric_b_matches_analytic():
    for name in NAMES:
        ex = example(name)
        assert numeric_b(ex.spec.operator, ex.witness) == pytest.approx(
            limit_parameter_b(ex.spec.operator, ex.witness), abs=1e-3)


def test_rate_examples():
    spec = unit_spec()
    assert rate_w(spec, math.exp(4)) == pytest.approx(4 * math.e ** 2, rel=1e-13)
    w = WitnessSpec(Profile.eta_r_log2(), Profile.sigma_shift(1.0))
    r = 50.0
    assert rate_v(spec, w, r) == pytest.approx(rate_w_tilde(spec, r) * r * math.log(r) ** 2, rel=1e-12)


def test_w_over_u_delta_decreasing():
    spec = unit_spec()
    lus = np.array(decade_grid(1, 40, 1))
    vals = log_rate_w(spec, log_alpha_t(spec, lus)) - 0.1 * lus
    dv = np.diff(vals)
    cross = np.nonzero(dv >= 0)[0]
    start = cross[-1] + 1 if cross.size else 0
    assert start < len(dv) - 5
    assert np.all(dv[start:] < 0)


def test_tail_bound_chain():
    spec = unit_spec()
    val = tail_upper_bound(spec, math.exp(16))
    assert val == pytest.approx(math.exp(-16) / (4 * math.e ** 2), rel=1e-12)
    assert val <= math.exp(-16)


@settings(max_examples=40, deadline=None)
@given(st.floats(2.0, 5000.0), st.sampled_from(NAMES))
def test_inversion_fidelity_property(lu, name):
    ex = example(name)
    spec, w = ex.spec, ex.witness
    lu = max(lu, log_u0(spec, "G"), log_u0(spec, "H", w))
    assert abs(math.expm1(2 * spec.f.log_at(log_alpha_t(spec, lu)) + lu)) <= 1e-9
    assert abs(math.expm1(log_G(spec, log_beta_t(spec, lu)) + lu)) <= 1e-9
    assert abs(math.expm1(log_H(spec, w, log_gamma_t(spec, w, lu)) + lu)) <= 1e-9


@pytest.mark.parametrize("name", NAMES)
def test_radii_increasing(name):
    ex = example(name)
    lus = np.linspace(5, 400, 200)
    for arr in (log_alpha_t(ex.spec, lus), log_beta_t(ex.spec, lus),
                log_gamma_t(ex.spec, ex.witness, lus)):
        assert np.all(np.diff(arr) > 0)


def test_kappa_insensitive_far_out():
    ex = example("Ex61")
    lu = 1e6
    base = ex.spec.g_at(log_alpha_t(ex.spec, lu)) / ex.spec.g_at(log_beta_t(ex.spec, lu))
    moved = ex.spec.with_(kappa=100.0, kappa_tilde=100.0)
    new = moved.g_at(log_alpha_t(moved, lu)) / moved.g_at(log_beta_t(moved, lu))
    assert abs(new / base - 1) < 1e-4


def test_rate_table_rows_and_flags():
    ex = example("Ex61")
    tab = rate_table(ex.spec, ex.witness, [1e10, 1e20, 1e30])
    assert len(tab) == 3
    la = [r.log_alpha for r in tab.rows]
    assert la == sorted(la)
    assert len(rate_table(ex.spec, ex.witness, [])) == 0
    hi_u0 = ex.spec.with_(kappa_tilde=1e12)
    tab = rate_table(hi_u0, ex.witness, [0.5, 1e5, 1e30])
    assert "below_kappa" in tab.rows[0].flags
    assert "below_u0_beta" in tab.rows[1].flags
    assert not tab.rows[2].flags


def test_rate_table_serialization():
    ex = example("Ex63")
    tab = rate_table(ex.spec, ex.witness, log_u_grid=decade_grid(10, 60, 10))
    rows = list(csv.DictReader(io.StringIO(tab.to_csv())))
    assert list(rows[0].keys()) == COLUMNS
    assert len(rows) == 6
    assert float(rows[-1]["log_u"]) == pytest.approx(60 * LN10)
    # bound columns are log10 values
    assert float(rows[-1]["upper"]) < -60
    lin = list(csv.DictReader(io.StringIO(tab.to_csv(linear=True))))
    assert float(lin[0]["alpha"]) == pytest.approx(10 ** float(rows[0]["alpha"]), rel=1e-12)
    assert '"scale": "log10"' in tab.to_json()
