import numpy as np
import pytest

from rstools.csvio import ObservedPath
from rstools.errors import ParameterError, DataError
from rstools.functionals import (TestFunction, Term, parse_function, format_function, evaluate, eval_f, v_functional,
                                 v_prime_functional, v_prime_partial_sums, window_values, b_variation,
                                 power_function, normalized_increments)


@pytest.fixture
def hand_path():
    return ObservedPath(times=np.array([0.0, 0.25, 0.75, 1.0]), x=np.array([0.0, 0.1, -0.2, 0.1]),
                        sigma2=np.full(4, np.nan))


def test_hand_path_values(hand_path):
    assert v_functional(parse_function("x^2"), hand_path).value == pytest.approx(0.19, abs=1e-12)
    assert v_prime_functional(parse_function("x^2"), hand_path).value == pytest.approx(0.58, abs=1e-12)
    assert v_prime_functional(parse_function("x1^2*x2^2"), hand_path).value == pytest.approx(0.072, abs=1e-12)
    assert b_variation(3, hand_path).value == pytest.approx(0.055, abs=1e-12)


def test_terms_used(hand_path):
    assert v_prime_functional(parse_function("x^2"), hand_path).terms_used == 3
    assert v_prime_functional(parse_function("x1^2*x2^2"), hand_path).terms_used == 2
    assert v_prime_functional(parse_function("x1*x2*x3"), hand_path).terms_used == 1


def test_window_values(hand_path):
    np.testing.assert_allclose(window_values(parse_function("x1^2*x2^2"), hand_path), [0.0072, 0.0648])


def test_too_few_increments_gives_zero(hand_path):
    result = v_prime_functional(parse_function("x1*x2*x3*x4"), hand_path)
    assert result.value == 0.0
    assert result.terms_used == 0


def test_single_observation():
    obs = ObservedPath(times=np.array([0.0]), x=np.array([1.0]), sigma2=np.array([1.0]))
    assert v_functional(parse_function("x^2"), obs).value == 0.0
    assert v_prime_functional(parse_function("x^2"), obs).value == 0.0
    assert b_variation(2, obs).value == 0.0


def test_constant_prices_give_zero():
    obs = ObservedPath(times=np.linspace(0, 1, 11), x=np.full(11, 4.6), sigma2=np.full(11, 0.0))
    assert v_prime_functional(parse_function("x^2"), obs).value == 0.0


def test_partial_sums(hand_path):
    partial = v_prime_partial_sums(parse_function("x^2"), hand_path, np.array([0.1, 0.25, 0.5, 1.0]))
    np.testing.assert_allclose(partial, [0.0, 0.04, 0.04, 0.58])


def test_partial_sums_reach_the_full_sum(hand_path):
    f = parse_function("x1^2*x2^2")
    partial = v_prime_partial_sums(f, hand_path, np.array([1.0]))
    assert partial[-1] == pytest.approx(v_prime_functional(f, hand_path).value)


def test_v_needs_one_dimensional_f(hand_path):
    with pytest.raises(ParameterError):
        v_functional(parse_function("x1*x2"), hand_path)


def test_nonincreasing_times_are_rejected():
    obs = ObservedPath(times=np.array([0.0, 0.5, 0.5]), x=np.array([0.0, 0.1, 0.2]), sigma2=np.zeros(3))
    with pytest.raises(DataError):
        normalized_increments(obs)


@pytest.mark.parametrize("p", [0.0, -1.0])
def test_b_variation_rejects_bad_power(hand_path, p):
    with pytest.raises(ParameterError):
        b_variation(p, hand_path)


@pytest.mark.parametrize("text, point, expected", [
    ("x^2", [3.0], 9.0),
    ("|x|^3", [-2.0], 8.0),
    ("x^4 + 2*x^2", [1.0], 3.0),
    ("-x^2", [2.0], -4.0),
    ("x^2 - 1", [3.0], 8.0),
    ("x1^2*x2^2", [2.0, 3.0], 36.0),
    ("0.5*|x1|*|x2|", [-2.0, 3.0], 3.0),
    ("x1*x1", [3.0], 9.0),
    ("|x|^1.5", [4.0], 8.0),
    ("1e-3*x^2", [10.0], 0.1),
    ("x^2 - 2.5E+1", [1.0], -24.0),
    ("x^2 + 1e2*|x|", [-0.5], 50.25),
])
def test_parse_and_evaluate(text, point, expected):
    assert eval_f(parse_function(text), point) == pytest.approx(expected)


def test_parse_infers_and_checks_k():
    assert parse_function("x2^2").k == 2
    assert parse_function("x^2", k=3).k == 3
    with pytest.raises(ParameterError):
        parse_function("x1*x3", k=2)


@pytest.mark.parametrize("text", ["", "y^2", "x^", "x^1.5", "x + ", "|x1|*x1"])
def test_parse_rejects(text):
    with pytest.raises(ParameterError):
        parse_function(text)


@pytest.mark.parametrize("text, globally_even, even_each, globally_odd", [
    ("x^2", True, True, False),
    ("|x|^3", True, True, False),
    ("x1^2*x2^2", True, True, False),
    ("x1*x2", True, False, False),
    ("x^3", False, False, True),
    ("x^3 + x", False, False, True),
    ("x^2 + x", False, False, False),
])
def test_evenness(text, globally_even, even_each, globally_odd):
    f = parse_function(text)
    assert f.is_globally_even == globally_even
    assert f.is_even_each == even_each
    assert f.is_globally_odd == globally_odd


def test_growth_bound():
    f = parse_function("x1^2*x2^2")
    assert f.growth_p == 2.0
    x = np.random.default_rng(0).normal(scale=10.0, size=(1000, 2))
    assert f.growth_bound_holds(x)


def test_growth_bound_below_exponent_is_rejected():
    with pytest.raises(ParameterError):
        TestFunction(k=1, terms=(Term(1.0, (4.0,), (False,)),), growth_p=2.0)


def test_general_function():
    f = TestFunction.general(lambda x: np.cos(x[:, 0]) * x[:, 1] ** 2, k=2, growth_p=2.0, label="cos*sq")
    assert not f.is_monomial_sum
    assert str(f) == "cos*sq"
    np.testing.assert_allclose(evaluate(f, [[0.0, 2.0], [np.pi, 1.0]]), [4.0, -1.0])


def test_general_function_needs_growth():
    with pytest.raises(ParameterError):
        TestFunction.general(np.sum, k=1, growth_p=0.0)


def test_evaluate_checks_shape():
    with pytest.raises(ParameterError):
        evaluate(parse_function("x1*x2"), np.ones((3, 3)))


def test_monomial_and_format():
    f = TestFunction.monomial((2, 0, 1), abs_flags=(False, False, True), coefficient=3.0)
    assert f.k == 3
    assert format_function(f) == "3*x1^2*|x3|"
    assert str(power_function(3)) == "|x|^3"


def test_b_variation_matches_power_function(hand_path):
    dx = np.diff(hand_path.x).reshape(-1, 1)
    expected = float(np.sum(evaluate(power_function(2.5), dx)))
    assert b_variation(2.5, hand_path).value == pytest.approx(expected)


@pytest.fixture
def random_walk():
    rng = np.random.default_rng(11)
    times = np.concatenate([[0.0], np.cumsum(rng.exponential(0.01, size=200))])
    x = np.concatenate([[0.0], np.cumsum(rng.normal(scale=0.1, size=200))])
    return ObservedPath(times=times, x=x, sigma2=np.full(201, np.nan))


def test_v_prime_is_linear_in_f(random_walk):
    f = parse_function("x1^2*x2^2")
    g = parse_function("|x1|^3", k=2)
    combined = parse_function("2*x1^2*x2^2 - 0.5*|x1|^3")
    expected = 2.0 * v_prime_functional(f, random_walk).value - 0.5 * v_prime_functional(g, random_walk).value
    assert v_prime_functional(combined, random_walk).value == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("text", ["x^2", "x1^2*x2^2 + |x1|*|x3|", "|x|^1.5 - x^4"])
def test_v_prime_ignores_sign_flip_for_functions_even_in_each_argument(random_walk, text):
    f = parse_function(text)
    assert f.is_even_each
    flipped = ObservedPath(times=random_walk.times, x=-random_walk.x, sigma2=random_walk.sigma2)
    assert v_prime_functional(f, flipped).value == pytest.approx(v_prime_functional(f, random_walk).value,
                                                                 rel=1e-14)
