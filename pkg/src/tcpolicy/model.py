"""Problem primitives for the lifetime investment/consumption/insurance model.

A single decision maker trades a riskless bond and one stock, consumes,
receives deterministic income and buys instantaneous term life insurance.
Preferences are CRRA with weight ``n`` on terminal wealth, a Pareto weight
``m(t)`` on the heirs' utility and two discount functions: ``h`` for own
consumption/terminal wealth and ``h_hat`` for the legacy.  Non-exponential
discounting (or a time varying ``m``) makes the problem time inconsistent;
the solver modules compute the subgame-perfect policies instead of the
pre-commitment optimum.

This module houses the parameter containers, the mortality-adjusted
discount kernels ``Q(s, t)`` and ``q(s, t)``, and the derived constants
``K`` and ``M(z)`` used throughout the solvers.  Everything here is a pure
function of its inputs and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ValidationError",
    "MarketParams",
    "DiscountKernel",
    "Exponential",
    "Hyperbolic",
    "SumOfExponentials",
    "AffineExponential",
    "ConstantHazard",
    "AffineHazard",
    "MortalityModel",
    "ParetoWeight",
    "ConstantWeight",
    "LogTaperWeight",
    "PayoutRatio",
    "ConstantPayout",
    "InverseHazardPayout",
    "InsuranceIncomeSpec",
    "PreferenceParams",
    "ModelSpec",
    "A1Check",
    "discount_value",
    "discount_log_derivative",
    "survival",
    "kernel_Q",
    "kernel_q",
    "constant_K",
    "weight_M",
    "check_assumption_a1",
    "legacy_hazard_weight",
    "crra_utility",
]


class ValidationError(ValueError):
    """Raised when a model invariant or an operation precondition fails."""


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValidationError(msg)


def _check_nonnegative_time(t) -> np.ndarray | float:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValidationError("time must be nonnegative")
    return t if t.ndim else float(t)


# ---------------------------------------------------------------------------
# Discount kernels
# ---------------------------------------------------------------------------


class DiscountKernel:
    """Discount function ``h`` with ``h(0) = 1``, positive and non-increasing.

    Subclasses implement ``value`` and ``log_derivative`` (that is ``h'/h``),
    both accepting scalars or arrays of nonnegative times.
    """

    def value(self, t):
        raise NotImplementedError

    def log_derivative(self, t):
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(DiscountKernel):
    """Classical exponential discounting, ``h(t) = exp(-rho t)``."""

    rho: float

    def __post_init__(self):
        _require(self.rho >= 0, "Exponential: rho must be >= 0")

    def value(self, t):
        t = _check_nonnegative_time(t)
        return np.exp(-self.rho * np.asarray(t, dtype=float)) if np.ndim(t) else math.exp(-self.rho * t)

    def log_derivative(self, t):
        t = _check_nonnegative_time(t)
        return np.full_like(np.asarray(t, dtype=float), -self.rho) if np.ndim(t) else -self.rho


@dataclass(frozen=True)
class Hyperbolic(DiscountKernel):
    """Hyperbolic discounting, ``h(t) = (1 + k1 t)^(-k2/k1)``.

    The instantaneous discount rate ``k2 / (1 + k1 t)`` starts at ``k2`` and
    decays to zero, which is what produces time inconsistency.
    """

    k1: float
    k2: float

    def __post_init__(self):
        _require(self.k1 > 0 and self.k2 > 0, "Hyperbolic: k1 and k2 must be > 0")

    @classmethod
    def from_unit_value(cls, k1: float, h1: float) -> "Hyperbolic":
        """Construct with ``k2`` chosen so that ``h(1) = h1``."""
        _require(0 < h1 < 1, "Hyperbolic.from_unit_value: need 0 < h1 < 1")
        k2 = -k1 * math.log(h1) / math.log1p(k1)
        return cls(k1, k2)

    def value(self, t):
        t = _check_nonnegative_time(t)
        return np.power(1.0 + self.k1 * np.asarray(t, dtype=float), -self.k2 / self.k1)

    def log_derivative(self, t):
        t = _check_nonnegative_time(t)
        return -self.k2 / (1.0 + self.k1 * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class SumOfExponentials(DiscountKernel):
    """Quasi-exponential mixture ``h(t) = w e^(-r1 t) + (1-w) e^(-r2 t)``."""

    weight: float
    r1: float
    r2: float

    def __post_init__(self):
        _require(0.0 <= self.weight <= 1.0, "SumOfExponentials: weight must lie in [0, 1]")
        _require(self.r1 >= 0 and self.r2 >= 0, "SumOfExponentials: rates must be >= 0")

    def value(self, t):
        t = np.asarray(_check_nonnegative_time(t), dtype=float)
        return self.weight * np.exp(-self.r1 * t) + (1.0 - self.weight) * np.exp(-self.r2 * t)

    def log_derivative(self, t):
        t = np.asarray(_check_nonnegative_time(t), dtype=float)
        num = -self.weight * self.r1 * np.exp(-self.r1 * t) - (1.0 - self.weight) * self.r2 * np.exp(-self.r2 * t)
        return num / self.value(t)


@dataclass(frozen=True)
class AffineExponential(DiscountKernel):
    """Quasi-exponential family ``h(t) = (1 + a t) e^(-r t)``.

    Requires ``0 <= a <= r`` so that ``h`` is non-increasing for all t >= 0.
    """

    a_coef: float
    r_rate: float

    def __post_init__(self):
        _require(0.0 <= self.a_coef <= self.r_rate, "AffineExponential: need 0 <= a_coef <= r_rate")

    def value(self, t):
        t = np.asarray(_check_nonnegative_time(t), dtype=float)
        return (1.0 + self.a_coef * t) * np.exp(-self.r_rate * t)

    def log_derivative(self, t):
        t = np.asarray(_check_nonnegative_time(t), dtype=float)
        return self.a_coef / (1.0 + self.a_coef * t) - self.r_rate


def discount_value(kernel: DiscountKernel, t):
    """Evaluate ``h(t)``; ``h(0) = 1`` for every family."""
    return kernel.value(t)


def discount_log_derivative(kernel: DiscountKernel, t):
    """Evaluate ``h'(t)/h(t)``; nonpositive for every valid kernel."""
    return kernel.log_derivative(t)


# ---------------------------------------------------------------------------
# Mortality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantHazard:
    """Constant force of mortality ``lambda(t) = lambda0``."""

    lambda0: float

    def __post_init__(self):
        _require(self.lambda0 >= 0, "ConstantHazard: lambda0 must be >= 0")

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        return np.full_like(t, self.lambda0) if t.ndim else self.lambda0

    def cumulative(self, t):
        """Integrated hazard on [0, t]."""
        t = np.asarray(t, dtype=float)
        out = self.lambda0 * t
        return out if t.ndim else float(out)


@dataclass(frozen=True)
class AffineHazard:
    """Linearly increasing force of mortality ``lambda(t) = lambda0 + lambda1 t``."""

    lambda0: float
    lambda1: float

    def __post_init__(self):
        _require(self.lambda0 >= 0, "AffineHazard: lambda0 must be >= 0")

    def rate(self, t):
        t = np.asarray(t, dtype=float)
        out = self.lambda0 + self.lambda1 * t
        return out if t.ndim else float(out)

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        out = self.lambda0 * t + 0.5 * self.lambda1 * t * t
        return out if t.ndim else float(out)


MortalityModel = ConstantHazard | AffineHazard


def survival(mortality: MortalityModel, t, s):
    """Probability of surviving from t to s, ``exp(-int_t^s lambda)``.

    Uses the closed-form integrated hazard; requires ``t <= s``.
    """
    t_arr = np.asarray(t, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < t_arr):
        raise ValidationError("survival: need t <= s")
    out = np.exp(mortality.cumulative(t_arr) - mortality.cumulative(s_arr))
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Pareto weight on the heirs' utility
# ---------------------------------------------------------------------------


class ParetoWeight:
    """Aggregation weight ``m(t) > 0`` applied to the legacy utility."""

    def value(self, t):
        raise NotImplementedError

    def log_derivative(self, t):
        """``m'(t)/m(t)``; zero for a constant weight."""
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantWeight(ParetoWeight):
    m0: float

    def __post_init__(self):
        _require(self.m0 > 0, "ConstantWeight: m0 must be > 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return np.full_like(t, self.m0) if t.ndim else self.m0

    def log_derivative(self, t):
        t = np.asarray(t, dtype=float)
        return np.zeros_like(t) if t.ndim else 0.0


@dataclass(frozen=True)
class LogTaperWeight(ParetoWeight):
    """Decreasing weight ``m(t) = log((T + eps - t)/eps)``.

    Large at t = 0 and tapering to zero only at t = T exactly; with the
    default ``eps = 1e-15`` the drop happens in a boundary layer invisible
    at solver resolution.  Solvers therefore evaluate m-dependent terms on
    [0, T) only and let t = T enter through boundary conditions.
    """

    horizon: float
    eps: float = 1e-15

    def __post_init__(self):
        _require(self.horizon > 0, "LogTaperWeight: horizon must be > 0")
        _require(self.eps > 0, "LogTaperWeight: eps must be > 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t > self.horizon):
            raise ValidationError("LogTaperWeight: t beyond horizon")
        # grouping (T - t) + eps keeps the boundary exact: m(T) = log(1) = 0
        out = np.log(((self.horizon - t) + self.eps) / self.eps)
        return out if t.ndim else float(out)

    def log_derivative(self, t):
        t = np.asarray(t, dtype=float)
        rem = (self.horizon - t) + self.eps
        out = -1.0 / (rem * np.log(rem / self.eps))
        return out if t.ndim else float(out)


# ---------------------------------------------------------------------------
# Insurance payout, bequest fraction and income
# ---------------------------------------------------------------------------


class PayoutRatio:
    """Insurance payout ``l(t)`` per unit of premium.

    ``inverse`` returns ``1/l(t)``, which is what every formula actually
    consumes; a constant payout of ``inf`` encodes "no insurance offered"
    (the premium term then vanishes identically).
    """

    def value(self, t):
        raise NotImplementedError

    def inverse(self, t):
        raise NotImplementedError

    def integrated_inverse(self, t):
        """Closed-form ``int_0^t 1/l(u) du``."""
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantPayout(PayoutRatio):
    payout: float

    def __post_init__(self):
        _require(self.payout > 0, "ConstantPayout: payout must be > 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return np.full_like(t, self.payout) if t.ndim else self.payout

    def inverse(self, t):
        t = np.asarray(t, dtype=float)
        inv = 0.0 if math.isinf(self.payout) else 1.0 / self.payout
        return np.full_like(t, inv) if t.ndim else inv

    def integrated_inverse(self, t):
        t = np.asarray(t, dtype=float)
        inv = 0.0 if math.isinf(self.payout) else 1.0 / self.payout
        out = inv * t
        return out if t.ndim else float(out)


@dataclass(frozen=True)
class InverseHazardPayout(PayoutRatio):
    """Actuarially linked payout ``l(t) = 1/lambda(t)``."""

    hazard: MortalityModel

    def value(self, t):
        lam = self.hazard.rate(t)
        with np.errstate(divide="ignore"):
            out = np.where(np.asarray(lam) > 0, 1.0 / np.asarray(lam, dtype=float), np.inf)
        return out if np.ndim(lam) else float(out)

    def inverse(self, t):
        return self.hazard.rate(t)

    def integrated_inverse(self, t):
        return self.hazard.cumulative(t)


@dataclass(frozen=True)
class InsuranceIncomeSpec:
    """Payout ratio l(t), bequest fraction eta and deterministic income rate."""

    payout: PayoutRatio
    eta: float = 1.0
    income: float = 0.0

    def __post_init__(self):
        _require(self.eta > 0, "InsuranceIncomeSpec: eta must be > 0")
        _require(self.income >= 0, "InsuranceIncomeSpec: income must be >= 0")


# ---------------------------------------------------------------------------
# Market and preferences
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarketParams:
    """Riskless rate, stock drift and volatility; mu = alpha - r > 0."""

    r: float
    alpha: float
    sigma: float

    def __post_init__(self):
        _require(self.sigma > 0, "MarketParams: sigma must be > 0")
        _require(self.alpha - self.r > 0, "MarketParams: excess return alpha - r must be > 0")

    @property
    def mu(self) -> float:
        return self.alpha - self.r


@dataclass(frozen=True)
class PreferenceParams:
    """CRRA exponent, terminal-wealth weight, Pareto weight and legacy discount.

    ``gamma = 0`` selects the logarithmic branch.
    """

    gamma: float
    n: float
    m_weight: ParetoWeight
    bequest_discount: DiscountKernel

    def __post_init__(self):
        _require(self.gamma < 1, "PreferenceParams: gamma must be < 1")
        _require(self.n > 0, "PreferenceParams: n must be > 0")

    @property
    def is_log(self) -> bool:
        return self.gamma == 0.0

    @property
    def m0(self) -> float:
        """The constant m = m(0) entering the policy maps and M(z)."""
        return float(self.m_weight.value(0.0))


@dataclass(frozen=True)
class ModelSpec:
    """A complete problem instance on the horizon [0, T]."""

    market: MarketParams
    mortality: MortalityModel
    discount: DiscountKernel
    prefs: PreferenceParams
    insurance: InsuranceIncomeSpec
    horizon: float

    def __post_init__(self):
        _require(self.horizon > 0, "ModelSpec: horizon must be > 0")
        lam_T = self.mortality.rate(self.horizon)
        _require(lam_T >= 0, "ModelSpec: hazard rate must stay >= 0 on [0, T]")
        if isinstance(self.prefs.m_weight, LogTaperWeight):
            _require(
                self.prefs.m_weight.horizon == self.horizon,
                "ModelSpec: LogTaperWeight horizon must equal the model horizon",
            )

    # -- convenience wrappers used by the solvers -------------------------

    def assumption_a1(self) -> "A1Check":
        """Positivity check on the consumption coefficient; solvers refuse
        instances where it fails."""
        return check_assumption_a1(self)

    def hbar_value(self, t):
        """Legacy kernel weight ``m(t) h_hat(t)``."""
        return self.prefs.m_weight.value(t) * self.prefs.bequest_discount.value(t)

    def hbar_log_derivative(self, t):
        """``(m h_hat)'/(m h_hat) = m'/m + h_hat'/h_hat``."""
        return self.prefs.m_weight.log_derivative(t) + self.prefs.bequest_discount.log_derivative(t)


# ---------------------------------------------------------------------------
# Kernels and derived constants
# ---------------------------------------------------------------------------


def kernel_Q(spec: ModelSpec, s, t):
    """Survival-adjusted own discount kernel ``Q(s,t) = h(s-t) exp(-int_t^s lambda)``."""
    s_arr = np.asarray(s, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(s_arr > spec.horizon + 1e-12):
        raise ValidationError("kernel_Q: need s <= horizon")
    return spec.discount.value(s_arr - t_arr) * survival(spec.mortality, t_arr, s_arr)


def kernel_q(spec: ModelSpec, s, t):
    """Legacy kernel ``q(s,t) = m(s-t) h_hat(s-t) lambda(s) exp(-int_t^s lambda)``."""
    s_arr = np.asarray(s, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(s_arr > spec.horizon + 1e-12):
        raise ValidationError("kernel_q: need s <= horizon")
    return (
        spec.hbar_value(s_arr - t_arr)
        * spec.mortality.rate(s_arr)
        * survival(spec.mortality, t_arr, s_arr)
    )


def constant_K(market: MarketParams, gamma: float) -> float:
    """Growth constant ``K = gamma (r + mu^2 / (2 (1-gamma) sigma^2))``."""
    if gamma >= 1:
        raise ValidationError("constant_K: gamma must be < 1")
    mu = market.mu
    return gamma * (market.r + mu * mu / (2.0 * (1.0 - gamma) * market.sigma**2))


def weight_M(prefs: PreferenceParams, insurance: InsuranceIncomeSpec, z):
    """Outflow multiplier ``M(z) = 1 + 1/(m^(1/(gamma-1)) l(z))`` with m = m(0)."""
    inv_l = insurance.payout.inverse(z)
    m_factor = prefs.m0 ** (1.0 / (prefs.gamma - 1.0))
    out = 1.0 + np.asarray(inv_l, dtype=float) / m_factor
    return out if np.ndim(inv_l) else float(out)


@dataclass(frozen=True)
class A1Check:
    """Result of the positivity check on ``1 - gamma M(t) + lambda(t)``."""

    holds: bool
    min_value: float


def legacy_hazard_weight(prefs: PreferenceParams) -> float:
    """Constant ``m(0)^(1/(1-gamma))`` multiplying the hazard in the
    consumption coefficient.

    It comes from the legacy utility evaluated at the equilibrium bequest
    ``(a/m)^(1/(gamma-1)) (x + b)`` together with the ``m(0) lambda`` mass
    of the legacy kernel at zero delay; it equals 1 whenever m(0) = 1.
    """
    return prefs.m0 ** (1.0 / (1.0 - prefs.gamma))


def check_assumption_a1(spec: ModelSpec, grid_n: int = 2001) -> A1Check:
    """Grid-evaluate ``1 - gamma M(t) + m(0)^(1/(1-gamma)) lambda(t)``.

    A negative minimum means the consumption coefficient can drive a(t) to
    zero, in which case the backward solver refuses to run.  With the unit
    Pareto weight this is exactly ``1 - gamma M + lambda``; it holds for
    any gamma <= 0.
    """
    if grid_n < 2:
        raise ValidationError("check_assumption_a1: grid_n must be >= 2")
    t = np.linspace(0.0, spec.horizon, grid_n)
    vals = (
        1.0
        - spec.prefs.gamma * weight_M(spec.prefs, spec.insurance, t)
        + legacy_hazard_weight(spec.prefs) * spec.mortality.rate(t)
    )
    m = float(np.min(vals))
    return A1Check(holds=m >= 0.0, min_value=m)


def crra_utility(x, gamma: float):
    """CRRA utility ``x^gamma / gamma``, or ``log x`` when gamma = 0."""
    x = np.asarray(x, dtype=float)
    if gamma == 0.0:
        out = np.log(x)
    else:
        out = np.power(x, gamma) / gamma
    return out if x.ndim else float(out)
