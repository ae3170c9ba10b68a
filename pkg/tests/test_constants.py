from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diagbsde.constants import (A, DeskScaleOverflow, bound_report, c_delta_lambda_n,
                                exp_moment_constants, floor_int, global_bound_lemma41,
                                gronwall_bound, lemma41_constants, local_radii, stitch_step,
                                uniqueness_step, young_split)
from diagbsde.generator import StructuralConstants as SC


def test_c_delta_lambda_n_examples():
    assert c_delta_lambda_n(0.0, 1.0, 2) == pytest.approx(2.0)
    assert c_delta_lambda_n(0.0, 0.0, 5) == 0.0
    assert c_delta_lambda_n(0.5, 1.0, 1) == pytest.approx(27 / 32)
    with pytest.raises(ValueError):
        c_delta_lambda_n(1.0, 1.0, 1)


def test_local_radii_examples():
    K1, _, _ = local_radii(SC(n=2, C1=1.0, C2=1.0))
    assert K1 == pytest.approx(2 * math.log(2) + 4)
    assert K1 == pytest.approx(5.38629, abs=1e-5)
    K1, K2, eps0 = local_radii(SC(n=1))
    assert K1 == pytest.approx(math.log(2))
    assert K2 == pytest.approx(17.0)
    assert eps0 == math.inf


def test_local_radii_positive_eps0():
    _, _, eps0 = local_radii(SC(n=1, C1=0.5, phi="r"))
    assert 0 < eps0 < math.inf


def test_local_radii_overflow():
    with pytest.raises(DeskScaleOverflow):
        local_radii(SC(n=5, gamma=3.0, C1=20.0, C2=5.0))


def test_stitch_step_examples():
    s = stitch_step(SC(n=2, beta=0.25, T=3.0))
    assert s.eps == pytest.approx(1.0) and s.m0 == 3
    s = stitch_step(SC(beta=0.0))
    assert s.single_interval and s.eps == math.inf
    s = stitch_step(SC(n=1, beta=1.0, T=0.4))
    assert s.eps == pytest.approx(0.5) and s.m0 == 1


@given(st.integers(1, 4), st.floats(0.01, 3.0), st.floats(0.05, 5.0))
def test_m0_brackets(n, beta, T):
    s = stitch_step(SC(n=n, beta=beta, T=T))
    x = T / s.eps
    assert x - 1e-9 <= s.m0 < x + 1 + 1e-9 and s.m0 >= 1


def test_lemma41_examples():
    assert global_bound_lemma41(SC(n=2, C1=1.0, C2=0.5), "i") == pytest.approx(3.0)
    assert global_bound_lemma41(SC(n=1, beta=1.0, C1=1.0), "i") == pytest.approx(16.0)
    c = SC(n=2, beta=0.3, lam=0.0, C2=0.7)
    k = lemma41_constants(c)
    assert k["c3"] == 0.0 and k["c4"] == 0.0
    assert k["c5"] == pytest.approx(c.C2 * (1 + 6 * k["eps0_prime"] / (c.n * c.gamma)))


def test_lemma41_variant_ii_matches_formula():
    c = SC(n=1, beta=0.5, gamma=2.0, gamma_bar=1.0, lam=0.5, delta=0.25, C1=1.0, C2=0.5)
    k = lemma41_constants(c)
    top = math.floor(4 * 0.5) + 2
    want = 4 ** top * 1.0 + sum(4 ** j for j in range(1, top + 1)) * k["c5"]
    assert global_bound_lemma41(c, "ii") == pytest.approx(want, rel=1e-12)
    e0 = min(1.0 / 9, 2.0 / (12 * (0.5 + 2)))
    assert k["eps0_prime"] == pytest.approx(e0)


def test_gronwall_examples():
    assert gronwall_bound(SC(n=1, beta=1.0, C1=1.0), "i") == pytest.approx(math.e)
    assert gronwall_bound(SC(n=3, C1=1.0, C2=2.0), "i") == pytest.approx(9.0)


constants = st.builds(
    lambda n, beta, T, c1, c2, lam, dl: SC(n=n, beta=beta, T=T, C1=c1, C2=c2, lam=lam, delta=dl,
                                           gamma=1.0, gamma_bar=0.5),
    st.integers(1, 3), st.floats(0.0, 2.0), st.floats(0.1, 3.0), st.floats(0.0, 3.0),
    st.floats(0.0, 3.0), st.floats(0.0, 2.0), st.floats(0.0, 0.9))


@given(constants)
def test_gronwall_below_lemma41(c):
    for v in ("i", "ii"):
        try:
            lemma = global_bound_lemma41(c, v)
        except DeskScaleOverflow:
            continue
        assert gronwall_bound(c, v) <= lemma * (1 + 1e-12)


def test_gronwall_below_lemma41_sweep():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        c = SC(n=int(rng.integers(1, 4)), beta=rng.uniform(0, 2), T=rng.uniform(0.1, 3),
               C1=rng.uniform(0, 3), C2=rng.uniform(0, 3))
        assert gronwall_bound(c) <= global_bound_lemma41(c) * (1 + 1e-12)


def test_A_and_exp_moment_constants():
    assert A(2.0) == pytest.approx(16.0)
    assert abs(A(100.0) / math.e ** 2 - 1) < 0.02
    with pytest.raises(ValueError):
        A(1.0)
    em = exp_moment_constants(SC(n=1, beta=0.0, T=7.0), 2.0)
    assert em.weight_xi == pytest.approx(64.0)
    assert em.weight_alpha == pytest.approx(4 * 16 * 2)
    assert em.coefficient == pytest.approx(A(4.0) * A(16.0))
    assert em.log_K(1.0, 2.0) == pytest.approx(em.log_coefficient + 3.0)
    with pytest.raises(ValueError):
        exp_moment_constants(SC(), 0.5)


def test_young_examples():
    bound, lhs = young_split(1.0, 1.0, 0.0)
    assert bound == pytest.approx(1.25) and lhs == 1.0
    bound, lhs = young_split(1e-9, 2.0, 0.3)
    assert bound == pytest.approx(4.0) and lhs < 1e-8


@given(st.floats(1e-6, 10.0), st.floats(1e-6, 10.0), st.floats(0.0, 0.9))
def test_young_inequality(a, b, delta):
    bound, lhs = young_split(a, b, delta)
    assert lhs <= bound * (1 + 1e-12)


def test_young_sweep():
    rng = np.random.default_rng(1)
    a, b, d = rng.uniform(1e-9, 10, 100_000), rng.uniform(1e-9, 10, 100_000), rng.uniform(0, 0.9, 100_000)
    e = (1 + d) / (1 - d)
    bound = b * b + (1 - d) / 2 * ((1 + d) / 2) ** e * a ** (2 / (1 - d))
    assert np.all(a * b ** (1 + d) <= bound * (1 + 1e-12))
    for i in range(0, 100_000, 9973):
        assert young_split(a[i], b[i], d[i])[0] == pytest.approx(bound[i], rel=1e-12)


def test_uniqueness_step():
    assert uniqueness_step(SC(n=1, beta=1.0)) == pytest.approx(0.125)
    assert uniqueness_step(SC(n=2, beta=0.5)) == pytest.approx(0.125)
    assert uniqueness_step(SC()) == math.inf
    c = SC(n=3, beta=0.7)
    assert uniqueness_step(c) == pytest.approx(stitch_step(c).eps / 4)


def test_floor_int_snaps():
    assert floor_int(2 * 2 * 0.25 * 1.0) == 1
    assert floor_int(0.1 * 3 / 0.1) == 3
    assert floor_int(2.9999) == 2 and floor_int(-0.5) == -1


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0), st.integers(1, 4), st.floats(0.2, 4.0),
       st.floats(0.0, 2.0))
def test_K1_monotone(c1, c2, n, gamma, bump):
    def k1(**kw):
        base = dict(n=n, gamma=gamma, gamma_bar=min(gamma, 1.0), C1=c1, C2=c2)
        base.update(kw)
        return (base["n"] / base["gamma"] * math.log(2) + base["n"] * (base["C1"] + base["C2"]))

    assert k1(C1=c1 + bump) >= k1() and k1(C2=c2 + bump) >= k1() and k1(n=n + 1) >= k1()
    assert k1(gamma=gamma + bump) <= k1()
    try:
        got = local_radii(SC(n=n, gamma=gamma, gamma_bar=min(gamma, 1.0), C1=c1, C2=c2))[0]
    except DeskScaleOverflow:
        return
    assert got == pytest.approx(k1())


def test_bound_report_keys_and_purity():
    c = SC(n=2, beta=0.5, gamma=1.0, C1=1.0, C2=0.5, lam=0.2, delta=0.25, phi="r")
    a, b = bound_report(c).as_dict(), bound_report(c).as_dict()
    assert a == b
    assert set(a["values"]) >= {"k1", "k2", "eps0", "c_dln", "eps_stitch", "m0", "lemma41_i",
                                "lemma41_ii", "c3", "c4", "c5", "gronwall_i", "gronwall_ii", "a_q",
                                "k_q", "eps_bar"}
    for k, v in a["values"].items():
        if isinstance(v, float):
            assert v >= 0 and math.isfinite(v), k
    assert "k1" in bound_report(c).as_table()


def test_bound_report_overflow_is_diagnostic():
    rep = bound_report(SC(n=5, gamma=3.0, C1=20.0, C2=5.0))
    assert rep.values["k2"] is None and "k1" in rep.diagnostics
    assert rep.values["lemma41_i"] is not None
