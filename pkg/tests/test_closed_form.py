"""Closed forms: income floor b, exponential/log value coefficients, stationary case."""

import math

import numpy as np
import pytest
from scipy.integrate import quad, solve_ivp

from tcpolicy import (
    AffineHazard,
    ConstantHazard,
    ConstantPayout,
    ConstantWeight,
    Exponential,
    Hyperbolic,
    InsuranceIncomeSpec,
    ModelSpec,
    PreferenceParams,
    ValidationError,
    constant_K,
    kernel_Q,
    kernel_q,
)
from tcpolicy.closed_form import (
    StationaryParams,
    a_exponential,
    a_log,
    b_function,
    solve_b,
    solve_stationary,
)
from tcpolicy.closed_form import StationaryInfeasibleError
from tcpolicy.model import legacy_hazard_weight, weight_M


def _with_income(spec, income, payout=None):
    ins = InsuranceIncomeSpec(
        payout=spec.insurance.payout if payout is None else payout,
        eta=spec.insurance.eta,
        income=income,
    )
    return ModelSpec(
        market=spec.market,
        mortality=spec.mortality,
        discount=spec.discount,
        prefs=spec.prefs,
        insurance=ins,
        horizon=spec.horizon,
    )


# ---------------------------------------------------------------------------
# b(t)
# ---------------------------------------------------------------------------


def test_b_zero_income(exp1_spec):
    assert np.all(solve_b(exp1_spec, 16) == 0.0)
    assert b_function(exp1_spec)(0.3) == 0.0


def test_b_constant_rate_closed_form(exp1_spec):
    # i = 1, r + eta/l = 0.05 + 1/50 = 0.07, one year to go
    spec = _with_income(exp1_spec, income=1.0)
    b = solve_b(spec, 10)
    expected = (1.0 - math.exp(-0.07)) / 0.07
    assert b[-1] == pytest.approx(expected, rel=1e-12)  # t = 0
    assert b[0] == 0.0  # boundary b(T) = 0
    assert b_function(spec)(0.0) == pytest.approx(expected, rel=1e-12)


def test_b_ode_residual_constant_rate(exp1_spec):
    # i + b' - (r + eta/l) b = 0 at interior nodes, b' by central difference
    spec = _with_income(exp1_spec, income=2.5)
    N = 200
    b = solve_b(spec, N)[::-1]  # ascending time
    t = np.linspace(0.0, spec.horizon, N + 1)
    h = t[1] - t[0]
    bp = (b[2:] - b[:-2]) / (2 * h)
    rate = spec.market.r + spec.insurance.eta / 50.0
    residual = spec.insurance.income + bp - rate * b[1:-1]
    assert np.max(np.abs(residual)) < 1e-6


def test_b_time_varying_rate_simpson(experiment_spec):
    # actuarial payout makes eta/l = lambda(t); Simpson path vs quad oracle
    spec = _with_income(experiment_spec, income=1.0)
    N = 64
    b = solve_b(spec, N)
    times = np.linspace(spec.horizon, 0.0, N + 1)

    def oracle(s):
        def integrand(u):
            big_r, _ = quad(lambda z: spec.market.r + spec.mortality.rate(z), s, u)
            return spec.insurance.income * math.exp(-big_r)

        val, _ = quad(integrand, s, spec.horizon, limit=200)
        return val

    for idx in (0, N // 2, N):
        assert b[idx] == pytest.approx(oracle(times[idx]), rel=1e-8, abs=1e-12)
    # residual through the defining equation, central differences
    b_asc = b[::-1]
    t = times[::-1]
    h = t[1] - t[0]
    bp = (b_asc[2:] - b_asc[:-2]) / (2 * h)
    rate = spec.market.r + spec.insurance.eta * spec.mortality.rate(t[1:-1])
    residual = spec.insurance.income + bp - rate * b_asc[1:-1]
    assert np.max(np.abs(residual)) < 1e-3  # O(h^2) difference error dominates


def test_b_requires_two_steps(exp1_spec):
    with pytest.raises(ValidationError):
        solve_b(exp1_spec, 1)


# ---------------------------------------------------------------------------
# a under exponential discounting
# ---------------------------------------------------------------------------


def test_a_exponential_terminal(exp1_spec):
    assert a_exponential(exp1_spec, exp1_spec.horizon) == pytest.approx(1.0, rel=1e-12)


def test_a_exponential_constant_coefficient_oracle(exp1_spec):
    # all coefficients constant: bracket = n^(1/2) e^(nu tau) + c (e^(nu tau)-1)/nu
    K = constant_K(exp1_spec.market, -1.0)
    nu = (K + (-1.0) * 1.0 / 50.0 - 0.1 - 0.02) / 2.0
    c = (1.0 + 0.02 + 1.02) / 2.0
    for t in (0.0, 0.25, 0.8):
        tau = exp1_spec.horizon - t
        bracket = math.exp(nu * tau) + c * (math.exp(nu * tau) - 1.0) / nu
        assert a_exponential(exp1_spec, t) == pytest.approx(bracket**2, rel=1e-10)


def test_a_exponential_value_at_zero(exp1_spec):
    assert a_exponential(exp1_spec, 0.0) == pytest.approx(3.4645, abs=2e-4)


def test_a_exponential_vs_ode_oracle(experiment_spec):
    # time-varying hazard/payout (constant m): integrate the defining ODE
    # backwards with an independent stiff solver and compare
    spec = ModelSpec(
        market=experiment_spec.market,
        mortality=experiment_spec.mortality,
        discount=experiment_spec.discount,
        prefs=PreferenceParams(
            gamma=-1.0,
            n=1.0,
            m_weight=ConstantWeight(2.0),
            bequest_discount=experiment_spec.discount,
        ),
        insurance=experiment_spec.insurance,
        horizon=experiment_spec.horizon,
    )
    gamma = spec.prefs.gamma
    K = constant_K(spec.market, gamma)
    rho = spec.discount.rho
    w = legacy_hazard_weight(spec.prefs)

    def rhs(t, y):
        lam = spec.mortality.rate(t)
        Mv = weight_M(spec.prefs, spec.insurance, t)
        inv_l = spec.insurance.payout.inverse(t)
        local = (gamma * Mv - w * lam - 1.0) * y[0] ** (gamma / (gamma - 1.0))
        drift = (lam + rho - K - gamma * spec.insurance.eta * inv_l) * y[0]
        return [local + drift]

    sol = solve_ivp(rhs, [spec.horizon, 0.0], [spec.prefs.n], rtol=1e-11, atol=1e-13, dense_output=True)
    for t in (0.0, 1.7, 3.2):
        assert a_exponential(spec, t) == pytest.approx(float(sol.sol(t)[0]), rel=1e-8)


def test_a_exponential_refusals(exp1_spec, market):
    with pytest.raises(ValidationError):
        a_exponential(exp1_spec, -0.1)
    hyp = Hyperbolic(k1=5.0, k2=3.0)
    spec = ModelSpec(
        market=market,
        mortality=ConstantHazard(0.0),
        discount=hyp,
        prefs=PreferenceParams(gamma=-1.0, n=1.0, m_weight=ConstantWeight(1.0), bequest_discount=hyp),
        insurance=InsuranceIncomeSpec(payout=ConstantPayout(math.inf)),
        horizon=1.0,
    )
    with pytest.raises(ValidationError):
        a_exponential(spec, 0.0)
    mixed = ModelSpec(
        market=market,
        mortality=ConstantHazard(0.0),
        discount=Exponential(0.1),
        prefs=PreferenceParams(
            gamma=-1.0, n=1.0, m_weight=ConstantWeight(1.0), bequest_discount=Exponential(0.2)
        ),
        insurance=InsuranceIncomeSpec(payout=ConstantPayout(math.inf)),
        horizon=1.0,
    )
    with pytest.raises(ValidationError):
        a_exponential(mixed, 0.0)


# ---------------------------------------------------------------------------
# a under log utility
# ---------------------------------------------------------------------------


def test_a_log_terminal(log_spec):
    assert a_log(log_spec, log_spec.horizon) == pytest.approx(1.0, rel=1e-12)


def test_a_log_exponential_no_mortality(log_spec):
    # (1 - e^(-rho tau))/rho + n e^(-rho tau)
    expected = (1.0 - math.exp(-0.1)) / 0.1 + math.exp(-0.1)
    assert a_log(log_spec, 0.0) == pytest.approx(expected, abs=1e-10)


def test_a_log_zero_rate(market):
    spec = ModelSpec(
        market=market,
        mortality=ConstantHazard(0.0),
        discount=Exponential(0.0),
        prefs=PreferenceParams(
            gamma=0.0, n=1.0, m_weight=ConstantWeight(1.0), bequest_discount=Exponential(0.0)
        ),
        insurance=InsuranceIncomeSpec(payout=ConstantPayout(math.inf)),
        horizon=1.0,
    )
    assert a_log(spec, 0.25) == pytest.approx(0.75 + 1.0, rel=1e-12)


def test_a_log_with_mortality_vs_quad(market):
    spec = ModelSpec(
        market=market,
        mortality=AffineHazard(0.01, 0.003),
        discount=Exponential(0.15),
        prefs=PreferenceParams(
            gamma=0.0, n=2.0, m_weight=ConstantWeight(3.0), bequest_discount=Exponential(0.05)
        ),
        insurance=InsuranceIncomeSpec(payout=ConstantPayout(25.0)),
        horizon=2.0,
    )
    t0 = 0.4
    integral, _ = quad(
        lambda s: kernel_Q(spec, s, t0) + kernel_q(spec, s, t0), t0, spec.horizon, limit=200
    )
    expected = integral + spec.prefs.n * kernel_Q(spec, spec.horizon, t0)
    assert a_log(spec, t0) == pytest.approx(expected, rel=1e-9)


def test_a_log_requires_log_branch(exp1_spec):
    with pytest.raises(ValidationError):
        a_log(exp1_spec, 0.0)


# ---------------------------------------------------------------------------
# Stationary case
# ---------------------------------------------------------------------------


def test_stationary_equal_rates_closed_form(stationary_fixture):
    # alpha = lambda + r - K - gamma eta/l = 0.220625; the equation turns
    # linear: x = alpha/(1 + lambda - gamma beta); a = x^(1-gamma)
    sol = solve_stationary(stationary_fixture)
    alpha = 0.02 + 0.1 + 0.080625 + 0.02
    assert sol.alpha1 == pytest.approx(alpha, abs=1e-15)
    assert sol.alpha2 == pytest.approx(alpha, abs=1e-15)
    assert sol.beta == pytest.approx(1.02, abs=1e-15)
    x_expected = alpha / (1.0 + 0.02 + 1.02)
    assert sol.x == pytest.approx(x_expected, rel=1e-12)
    assert sol.a == pytest.approx(x_expected**2, rel=1e-12)
    assert sol.a == pytest.approx(0.0116963, abs=1e-6)
    assert sol.tc1 == pytest.approx(alpha - 1.02 * x_expected, rel=1e-10)
    assert sol.tc1 > 0.0 and sol.tc2 > 0.0 and sol.tc_holds
    assert sol.residual < 1e-10
    assert sol.b == 0.0


def test_stationary_residual_recomputed(stationary_fixture):
    sol = solve_stationary(stationary_fixture)
    gb = stationary_fixture.gamma * sol.beta
    lw = stationary_fixture.hazard_rate * stationary_fixture.m ** (1.0 / (1.0 - stationary_fixture.gamma))
    res = abs(1.0 / sol.x - 1.0 / (sol.alpha1 + gb * sol.x) - lw / (sol.alpha2 + gb * sol.x))
    assert res < 1e-10


def test_stationary_income_floor(market):
    p = StationaryParams(
        hazard_rate=0.02, r1=0.1, r2=0.1, m=1.0, payout=50.0, eta=1.0, income=1.0,
        gamma=-1.0, market=market,
    )
    sol = solve_stationary(p)
    assert sol.b == pytest.approx(1.0 / 0.07, rel=1e-12)


def test_stationary_quadratic_matches_bisection(stationary_fixture):
    q = solve_stationary(stationary_fixture, method="quadratic")
    b = solve_stationary(stationary_fixture, method="bisect")
    assert abs(q.x - b.x) < 1e-10
    assert abs(q.a - b.a) < 1e-10


def test_stationary_distinct_rates_and_weight(market):
    p = StationaryParams(
        hazard_rate=0.03, r1=0.08, r2=0.12, m=4.0, payout=20.0, eta=1.0, income=0.5,
        gamma=-1.0, market=market,
    )
    sol = solve_stationary(p)
    assert sol.residual < 1e-10
    assert sol.tc_holds
    # defining function strictly monotone on the feasible interval
    gb = p.gamma * sol.beta
    upper = min(sol.alpha1, sol.alpha2) / (-gb)
    xs = np.linspace(upper * 1e-6, upper * (1 - 1e-6), 1000)
    lw = p.hazard_rate * p.m ** 0.5
    g = 1.0 / xs - 1.0 / (sol.alpha1 + gb * xs) - lw / (sol.alpha2 + gb * xs)
    assert np.all(np.diff(g) < 0.0)


def test_stationary_log_branch(market):
    p = StationaryParams(
        hazard_rate=0.02, r1=0.1, r2=0.1, m=1.0, payout=50.0, eta=1.0, income=0.0,
        gamma=0.0, market=market,
    )
    sol = solve_stationary(p)
    assert sol.residual < 1e-12
    assert sol.tc_holds
    # gamma beta = 0: 1/x = 1/alpha1 + lambda m/alpha2
    assert sol.x == pytest.approx(1.0 / (1.0 / sol.alpha1 + 0.02 / sol.alpha2), rel=1e-12)
    assert sol.a == pytest.approx(sol.x, rel=1e-14)  # a = x^(1-0)


def test_stationary_infeasible(market):
    # gamma in (0,1) pushes K above lambda + r_j: alpha_j < 0 with
    # gamma*beta > 0 leaves g(x) < 0 on the whole feasible ray
    p = StationaryParams(
        hazard_rate=0.005, r1=0.005, r2=0.005, m=1.0, payout=1e12, eta=1.0, income=0.0,
        gamma=0.5, market=market,
    )
    with pytest.raises(StationaryInfeasibleError):
        solve_stationary(p, method="bisect")


def test_stationary_parameter_validation(market):
    with pytest.raises(ValidationError):
        StationaryParams(
            hazard_rate=0.0, r1=0.1, r2=0.1, m=1.0, payout=50.0, eta=1.0, income=0.0,
            gamma=-1.0, market=market,
        )
