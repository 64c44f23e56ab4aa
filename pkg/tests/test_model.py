import numpy as np
import pytest
from hypothesis import given, strategies as st

from frem.fixtures import FIXTURES, get_fixture
from frem.model import (PropensityFactor as PF, ReactionChannel, SRNModel, as_theta,
                        correction_c, eval_propensity, monomials, propensities,
                        reverse_model, total_propensity, validate_model)

ALL = sorted(FIXTURES)


def test_mass_action_values(decay_fx):
    m = decay_fx.model
    x = (10,)
    assert m.channels[0].monomial(x) == 10
    assert m.channels[1].monomial(x) == 10
    assert eval_propensity(m, (2.0, 0.5), x, 1) == 5.0
    assert total_propensity(m, (2.0, 0.5), x) == 25.0
    assert eval_propensity(m, (3.78, 7.20), (3,), 1) == 0.0


def test_guard_blocks_low_counts(decay_fx):
    m = decay_fx.model
    # the 4X -> 0 monomial is X gated at X >= 4
    assert m.channels[1].monomial((3,)) == 0.0
    assert m.channels[1].monomial((4,)) == 4.0


def test_lattice_guard_without_factors():
    m = SRNModel(("X",), (ReactionChannel((-2,), (), "const removal"),))
    assert m.channels[0].monomial((1,)) == 0.0
    assert m.channels[0].monomial((2,)) == 1.0


def test_sir_scale(sir_fx):
    m = sir_fx.model
    assert m.channels[0].monomial((300, 5, 0)) == pytest.approx(300 * 5 / 305)
    unscaled = get_fixture("sir-unscaled").model
    assert unscaled.channels[0].monomial((300, 5, 0)) == 1500


@pytest.mark.parametrize("name", ALL)
def test_vectorised_monomials_match_scalar(name, gen):
    m = get_fixture(name).model
    X = gen.integers(0, 12, size=(40, m.d))
    G = monomials(m, X)
    for i, x in enumerate(X):
        for j, ch in enumerate(m.channels):
            assert G[i, j] == ch.monomial(x)


@pytest.mark.parametrize("name", ALL)
def test_reverse_twice_is_forward(name, gen):
    m = get_fixture(name).model
    rr = reverse_model(reverse_model(m))
    assert np.array_equal(rr.stoich, m.stoich)
    X = gen.integers(0, 15, size=(60, m.d))
    assert np.array_equal(monomials(rr, X), monomials(m, X))


@pytest.mark.parametrize("name", ALL)
def test_reverse_propensity_definition(name, gen):
    m = get_fixture(name).model
    theta = gen.uniform(0.1, 2.0, size=m.J)
    rev = m.reverse
    assert np.array_equal(rev.stoich, -m.stoich)
    for y in gen.integers(0, 10, size=(30, m.d)):
        for j in range(m.J):
            back = y - m.stoich[j]
            want = eval_propensity(m, theta, back, j) if back.min() >= 0 else 0.0
            assert eval_propensity(rev, theta, y, j) == pytest.approx(want, rel=1e-15)


@given(st.integers(0, 60), st.floats(0.01, 10), st.floats(0.01, 10))
def test_birth_death_correction_is_death_rate(y, c1, c2):
    m = get_fixture("birth-death").model
    # sum_j a_j(y - nu_j) - a_j(y): birth cancels for y >= 1 and death gives c2 (y+1) - c2 y
    want = c2 if y >= 1 else c2 - c1
    assert correction_c(m, (c1, c2), (y,)) == pytest.approx(want, rel=1e-12, abs=1e-12)


@given(st.integers(0, 40), st.floats(0.01, 5))
def test_correction_matches_reverse_total_rate(y, c):
    m = get_fixture("pure-death").model
    assert correction_c(m, (c,), (y,)) == pytest.approx(
        total_propensity(m.reverse, (c,), (y,)) - total_propensity(m, (c,), (y,)), abs=1e-12)


def test_as_theta_rejects_bad_input(decay_fx):
    m = decay_fx.model
    with pytest.raises(ValueError, match="expected 2"):
        as_theta([1.0], m)
    with pytest.raises(ValueError, match="non-negative"):
        as_theta([1.0, -1.0], m)
    with pytest.raises(ValueError):
        as_theta([1.0, np.nan], m)


def test_propensities_scale_by_theta(decay_fx):
    X = np.array([[10], [3]])
    P = propensities(decay_fx.model, (2.0, 3.0), X)
    assert np.array_equal(P, monomials(decay_fx.model, X) * [2.0, 3.0])


@pytest.mark.parametrize("name", ALL)
def test_fixtures_are_valid(name):
    assert validate_model(get_fixture(name).model) == []


def test_validate_reports_every_problem():
    bad = SRNModel(("A", "A"), (
        ReactionChannel((1,), (PF(3),), "short"),
        ReactionChannel((0, 1), (PF(0, -1), PF(1, 1, -2)), scale=-1.0),
    ))
    problems = validate_model(bad)
    text = "\n".join(problems)
    assert "duplicate species" in text
    assert "stoich dimension mismatch" in text
    assert "species index 3 out of range" in text
    assert "negative order" in text
    assert "negative guard_min" in text
    assert "scale must be" in text
    assert validate_model(SRNModel((), ())) == ["model has no species", "model has no reaction channels"]


def test_gene_network_definition():
    fx = get_fixture("gene-network")
    m = fx.model
    assert m.d == 5 and m.J == 8
    x = fx.x0
    g = [ch.monomial(x) for ch in m.channels]
    # DNA*P2, DNA-P2, DNA, mRNA, P(P-1), P2, mRNA, P
    assert g == [70, 3, 7, 10, 90, 10, 10, 10]
