import math

import numpy as np
import pytest
import sympy as sp

from midpole.errors import InvalidSystemError
from midpole.mid_design import (
    TwoDelayDesign,
    design_one_delay,
    design_two_delay,
    maximal_multiplicity_coefficients,
    normalize,
    normalized_Q,
    normalized_quasipolynomial,
    solve_multiplicity_system,
    verify_multiplicity,
)
from midpole.quasipoly import evaluate, from_feedback
from midpole.rootfinding import Rectangle, count_roots, find_roots

FOUR_DELAYS = (0.917686, 1.0, 1.067836)


def test_one_delay_optimum_design():
    d = design_one_delay(0.0, math.exp(-1))
    assert d.s_star == pytest.approx(-math.e, abs=1e-14)
    assert d.a1 == pytest.approx(-1.0, abs=1e-14)


@pytest.mark.parametrize("a0, tau, s_star, a1", [(0.0, 1.0, -1.0, -math.exp(-1)), (-1.0, 1.0, 0.0, -1.0)])
def test_one_delay_design_values(a0, tau, s_star, a1):
    d = design_one_delay(a0, tau)
    assert d.s_star == pytest.approx(s_star, abs=1e-14)
    assert d.a1 == pytest.approx(a1, abs=1e-14)


def test_one_delay_rejects_bad_delay():
    with pytest.raises(InvalidSystemError):
        design_one_delay(0.0, 0.0)


def test_two_delay_closed_form():
    d = design_two_delay(0.0, 1.0, 2.0)
    assert d.s0 == -1.5
    assert d.a1 == pytest.approx(-2 * math.exp(-1.5), rel=1e-15)
    assert d.a2 == pytest.approx(math.exp(-3) / 2, rel=1e-15)


def test_two_delay_printed_optimum():
    d = design_two_delay(0.0, 0.4063, 1.122)
    assert d.s0 == pytest.approx(-3.3525, abs=5e-4)
    assert d.a1 == pytest.approx(-0.9882, abs=5e-4)
    assert d.a2 == pytest.approx(0.01176, abs=5e-5)


def test_two_delay_platelet_abscissa():
    assert design_two_delay(3.0, 9.0, 19.0).s0 == pytest.approx(-3.1637, abs=1e-4)


def test_two_delay_swaps_and_validates():
    assert design_two_delay(0.0, 2.0, 1.0) == design_two_delay(0.0, 1.0, 2.0)
    for bad in ((0, 1, 1), (0, -1, 2), (0, 0, 2)):
        with pytest.raises(InvalidSystemError):
            design_two_delay(*bad)


def test_design_json_round_trip():
    d = design_two_delay(0.3, 0.5, 1.7)
    assert TwoDelayDesign.from_dict(d.to_dict()) == d
    assert set(d.to_dict()) == {"a0", "tau1", "tau2", "s0", "a1", "a2"}
    with pytest.raises(InvalidSystemError):
        TwoDelayDesign.from_dict({"a0": 0})


def test_normalize_half():
    n = normalize(design_two_delay(0.0, 1.0, 2.0))
    assert n.lam == 0.5
    assert (n.a0_t, n.a1_t, n.a2_t) == pytest.approx((-3.0, 4.0, -1.0), abs=1e-13)


@pytest.mark.parametrize("a0, tau1, tau2", [(0.0, 0.3, 1.0), (1.0, 2.0, 2.5), (-1.0, 0.1, 3.0)])
def test_normalize_closed_forms(a0, tau1, tau2):
    n = normalize(design_two_delay(a0, tau1, tau2))
    lam = tau1 / tau2
    assert n.a0_t == pytest.approx(-(lam + 1) / lam, rel=1e-12)
    assert n.a1_t == pytest.approx(-1 / (lam * (lam - 1)), rel=1e-12)
    assert n.a2_t == pytest.approx(lam / (lam - 1), rel=1e-12)
    assert n.a0_t + n.a1_t + n.a2_t == pytest.approx(0.0, abs=1e-12)
    assert -lam * n.a1_t - n.a2_t == pytest.approx(-1.0, abs=1e-12)


@pytest.mark.parametrize("lam", [0.05, 0.2, 0.5, 0.8, 0.95])
def test_normalized_q_triple_root_symbolic(lam):
    s = sp.symbols("s")
    L = sp.Rational(lam).limit_denominator(1000)
    Q = s - (L + 1) / L - L / (1 - L) * sp.exp(-s) + sp.exp(-L * s) / (L * (1 - L))
    for k in range(3):
        assert sp.simplify(sp.diff(Q, s, k).subs(s, 0)) == 0
    third = float(sp.diff(Q, s, 3).subs(s, 0))
    assert abs(third) > 1e-3
    assert abs(normalized_Q(0.0, float(L))) < 1e-13


def test_normalized_q_matches_quasipolynomial():
    rng = np.random.default_rng(3)
    qp = normalized_quasipolynomial(0.5)
    s = rng.uniform(-5, 5, 20) + 1j * rng.uniform(-20, 20, 20)
    np.testing.assert_allclose(normalized_Q(s, 0.5), evaluate(qp, s), rtol=1e-12, atol=1e-12)


def test_normalized_q_rejects_lambda():
    for lam in (0.0, 1.0, 1.5):
        with pytest.raises(InvalidSystemError):
            normalized_Q(0.0, lam)


def test_multiplicity_system_two_delays():
    d = design_two_delay(0.4, 0.7, 1.9)
    gains = solve_multiplicity_system(0.4, [0.7, 1.9], d.s0)
    np.testing.assert_allclose(gains, [d.a1, d.a2], rtol=1e-10)


def test_multiplicity_system_one_delay():
    d = design_one_delay(0.25, 0.8)
    gains = solve_multiplicity_system(0.25, [0.8], d.s_star)
    assert gains[0] == pytest.approx(d.a1, rel=1e-12)


def test_multiplicity_system_rejects_inconsistent_target():
    with pytest.raises(InvalidSystemError):
        solve_multiplicity_system(0.0, [1.0, 2.0], -1.0)
    with pytest.raises(InvalidSystemError):
        solve_multiplicity_system(0.0, [1.0, 1.0], -1.0)


def test_four_delay_coefficients_give_quadruple_root():
    a0, gains = maximal_multiplicity_coefficients(FOUR_DELAYS, 0.0)
    qp = from_feedback(a0, list(gains), list(FOUR_DELAYS))
    report = verify_multiplicity(qp, 0.0, 4)
    assert report.passed
    # the free-a0 solve is consistent with the fixed-a0 least-squares solve
    np.testing.assert_allclose(solve_multiplicity_system(a0, FOUR_DELAYS, 0.0), gains, rtol=1e-9)


def test_verify_multiplicity_cases():
    d = design_two_delay(0.0, 1.0, 2.0)
    assert verify_multiplicity(d.quasipolynomial(), d.s0, 3).passed
    assert not verify_multiplicity(d.quasipolynomial(), d.s0, 2).passed
    with pytest.raises(InvalidSystemError):
        verify_multiplicity(d.quasipolynomial(), d.s0, 4)
    one = design_one_delay(0.0, 1.0)
    assert verify_multiplicity(one.quasipolynomial(), one.s_star, 2).passed


def test_triple_root_alone_in_exclusion_strip():
    for a0, tau1, tau2 in [(0.0, 1.0, 2.0), (1.0, 0.3, 0.9), (-1.0, 0.5, 2.0)]:
        d = design_two_delay(a0, tau1, tau2)
        h = 2 * math.pi / tau2 - 1e-3
        res = find_roots(d.quasipolynomial(), Rectangle(d.s0 - 5, d.s0 + 1, -h, h))
        assert len(res.roots) == 1 and res.roots[0].multiplicity == 3
        assert abs(res.roots[0].value - d.s0) < 1e-6


@pytest.mark.slow
def test_strict_dominance_grid():
    for a0 in (-1.0, 0.0, 1.0):
        for lam in (0.1, 0.25, 0.5, 0.75, 0.9):
            for tau2 in (0.5, 1.0, 2.0):
                d = design_two_delay(a0, lam * tau2, tau2)
                window = Rectangle(d.s0 + 1e-6, d.s0 + 10, -200, 200)
                assert count_roots(d.quasipolynomial(), window) == 0, (a0, lam, tau2)


def test_two_delay_beats_one_delay():
    for a0 in (-1.0, 0.0, 2.0):
        for tau1 in (0.1, 1.0):
            for tau2 in (0.2, 5.0):
                if tau2 > tau1:
                    assert design_two_delay(a0, tau1, tau2).s0 < design_one_delay(a0, tau1).s_star


def test_normalization_maps_roots():
    rng = np.random.default_rng(11)
    for _ in range(4):
        tau1 = rng.uniform(0.2, 1.0)
        d = design_two_delay(rng.uniform(-1, 1), tau1, tau1 + rng.uniform(0.2, 1.5))
        n = normalize(d)
        roots = find_roots(n.quasipolynomial(), Rectangle(-15, 1, -40, 40)).roots
        qp = d.quasipolynomial()
        for r in roots:
            s = d.s0 + r.value / d.tau2
            assert abs(evaluate(qp, s)) <= 1e-9 * max(1.0, qp.term_magnitude(s))
