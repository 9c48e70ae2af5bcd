import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qles_lab.amplitude import (AeConfig, AmplitudeEstimator, CoinOracle,
                                QueryModelRangeWarning, chebae_estimate, chebyshev_coin,
                                chebyshev_t, model_query_complexity, oracle_gate_cost,
                                queries_per_shot, run_trials, signed_estimate)
from qles_lab.resources import BlockEncodingSpec


def eq10(eps):
    eps = mpmath.mpf(eps)
    return 1.71 / eps * mpmath.log(2.18 * mpmath.log(1 / eps))


def eq12(eps):
    eps = mpmath.mpf(eps)
    return 1.71 / (2 * eps) * mpmath.log(2.08 * mpmath.log(1 / (2 * eps)))


@pytest.mark.parametrize("k", [1, 3, 5, 11])
def test_chebyshev_matches_polynomial(k):
    a = np.linspace(-1, 1, 21)
    poly = np.polynomial.chebyshev.Chebyshev.basis(k)(a)
    np.testing.assert_allclose(chebyshev_t(k, a), poly, atol=1e-12)


def test_coin_extremes():
    assert chebyshev_coin(1.0, 7, 50, 0) == 50
    assert chebyshev_coin(0.0, 3, 50, 0) == 0


def test_coin_rejects_bad_input():
    with pytest.raises(ValueError):
        chebyshev_coin(1.5, 1, 10)
    with pytest.raises(ValueError):
        chebyshev_coin(0.5, 0, 10)


def test_shifted_probabilities_hadamard_and_raw():
    had = CoinOracle(0.3, "shifted", "hadamard").shifted_probabilities(0.5)
    raw = CoinOracle(0.3, "shifted", "raw").shifted_probabilities(0.5)
    assert had == pytest.approx((0.16, 0.01))
    assert raw == pytest.approx((0.64, 0.04))


@pytest.mark.parametrize("a", [-0.9, -0.3, 0.0, 0.25, 0.77])
@pytest.mark.parametrize("convention", ["hadamard", "raw"])
def test_exact_signed_estimate(a, convention):
    b0 = 0.5 if convention == "hadamard" else 0.05
    res = signed_estimate(CoinOracle(a, convention=convention), AeConfig(exact=True, b0=b0))
    assert res.a_hat == pytest.approx(a, abs=1e-12)


def test_exact_unsigned_estimate():
    assert chebae_estimate(CoinOracle(-0.4), AeConfig(exact=True)).a_hat == pytest.approx(0.4)


def test_query_accounting_and_intervals():
    a = 0.37
    res = chebae_estimate(CoinOracle(a), AeConfig(eps=1e-3), np.random.default_rng(3))
    assert res.queries == sum(n * (k + 1) // 2 for k, n in res.rounds)
    assert res.queries >= res.coin_flips == sum(n for _, n in res.rounds)
    assert all(k % 2 == 1 for k, _ in res.rounds)
    lo, hi = res.intervals[-1]
    assert hi - lo <= 2e-3 and res.converged


def test_signed_shift_rule():
    res = signed_estimate(CoinOracle(-0.4), AeConfig(eps=1e-2), np.random.default_rng(0))
    a_min = res.intervals[0][0]
    assert res.shifts[0] == 0.5 and res.shifts[1] == pytest.approx(-a_min)


def test_degree_cap_flags_unconverged():
    res = chebae_estimate(CoinOracle(0.5), AeConfig(eps=1e-4, max_degree=9), np.random.default_rng(0))
    assert not res.converged
    assert max(k for k, _ in res.rounds) <= 9


def test_raw_convention_clamps_large_shift():
    res = signed_estimate(CoinOracle(0.8, convention="raw"), AeConfig(eps=1e-2, b0=0.5),
                          np.random.default_rng(0))
    assert res.clamped


def test_unsigned_coverage_at_zero():
    s = run_trials(0.0, AeConfig(eps=1e-2), 100, signed=False, seed=9)
    assert s.coverage >= 0.95


def test_queries_per_shot():
    assert [queries_per_shot(k) for k in (1, 3, 5, 7)] == [1, 2, 3, 4]


def test_model_matches_high_precision_evaluation():
    for eps in (1e-3, 1e-4, 1e-5, 1e-6):
        assert model_query_complexity(eps) == pytest.approx(float(eq10(eps)), rel=1e-12)
        assert model_query_complexity(eps, signed=True) == pytest.approx(float(eq12(eps)), rel=1e-12)


def test_model_warns_outside_fitted_range():
    with pytest.warns(QueryModelRangeWarning):
        model_query_complexity(1e-2)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        model_query_complexity(1e-4)


def test_model_domain():
    with pytest.raises(ValueError):
        model_query_complexity(1.0)
    with pytest.raises(ValueError):
        model_query_complexity(0.5, signed=True)


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e-4), st.floats(1.01, 10))
def test_model_decreases_with_eps(eps, factor):
    assert model_query_complexity(eps) > model_query_complexity(eps * factor)


def test_oracle_gate_cost():
    be = BlockEncodingSpec("toy", n=4, n_logical=10, toffoli_per_phase=3, t_per_phase=2, kappa=1.0)
    cost = oracle_gate_cost(100, be, be.n)
    assert (cost.non_clifford, cost.toffoli_extra, cost.rotations, cost.qubits) == (1000, 8, 402, 12)


def test_config_validation():
    for kwargs in ({"eps": 0}, {"delta": 1}, {"b0": 0}, {"b0": 1}, {"shots": 0},
                   {"confint": "wald"}, {"margin": 1}):
        with pytest.raises(ValueError):
            AeConfig(**kwargs)


def test_chernoff_interval_also_covers():
    s = run_trials(0.6, AeConfig(eps=1e-2, confint="chernoff"), 50, signed=False, seed=4)
    assert s.coverage >= 0.95


def test_sklearn_estimator():
    est = AmplitudeEstimator(eps=1e-2, random_state=0).fit()
    pred = est.predict([-0.5, 0.2, 0.8])
    np.testing.assert_allclose(pred, [-0.5, 0.2, 0.8], atol=3e-2)
    assert est.get_params()["eps"] == 1e-2
    assert 0.0 <= est.score(np.array([0.1, 0.3])) <= 1.0
