"""Equilibrium feedback maps and the value function.

Given a solved value coefficient curve a(t) and income floor b(t), the
policy at state (t, x) is linear in the shifted wealth ``y = x + b(t)``:
a constant Merton fraction of y in the stock, consumption
``a^(1/(gamma-1)) y`` and an insurance premium that tops the bequeathed
wealth up to ``(a/m)^(1/(gamma-1)) y``.  The log branch (gamma = 0) uses
exponent -1 throughout and the classical Merton stock fraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import isinf

import numpy as np

from .model import ModelSpec, ValidationError

__all__ = [
    "PolicyTriple",
    "policy_at",
    "consumption_rate",
    "legacy",
    "value_function",
    "find_satiation",
]


@dataclass(frozen=True)
class PolicyTriple:
    """Stock position, consumption rate and insurance premium at one state.

    The premium may be negative (selling insurance); consumption is
    strictly positive whenever x + b(t) > 0.
    """

    stock_amount: float
    consumption: float
    insurance_premium: float


def _shifted_wealth(b_curve, t: float, x: float) -> float:
    y = x + float(b_curve(t))
    if y <= 0.0:
        raise ValidationError("wealth below human-capital floor: x + b(t) <= 0")
    return y


def _rate_exponent(gamma: float) -> float:
    return -1.0 if gamma == 0.0 else 1.0 / (gamma - 1.0)


def policy_at(a_curve, b_curve, spec: ModelSpec, t: float, x: float) -> PolicyTriple:
    """Evaluate the equilibrium feedback triple at (t, x)."""
    y = _shifted_wealth(b_curve, t, x)
    a = float(a_curve(t))
    if a <= 0.0:
        raise ValidationError("policy_at: a(t) must be positive")
    gamma = spec.prefs.gamma
    market = spec.market
    expo = _rate_exponent(gamma)
    one_mg = 1.0 if gamma == 0.0 else 1.0 - gamma

    stock = market.mu * y / (market.sigma**2 * one_mg)
    consumption = a**expo * y
    z_rate = (a / spec.prefs.m0) ** expo
    inv_l = float(spec.insurance.payout.inverse(t))
    premium = inv_l * ((z_rate - spec.insurance.eta) * x + z_rate * float(b_curve(t)))
    return PolicyTriple(stock_amount=stock, consumption=consumption, insurance_premium=premium)


def consumption_rate(a_curve, gamma: float, t):
    """Consumption per unit of shifted wealth, ``a(t)^(1/(gamma-1))``."""
    a = np.asarray(a_curve(t), dtype=float)
    if np.any(a <= 0.0):
        raise ValidationError("consumption_rate: a(t) must be positive")
    out = a ** _rate_exponent(gamma)
    return out if np.ndim(t) else float(out)


def legacy(spec: ModelSpec, t: float, x: float, premium: float) -> float:
    """Amount accruing to heirs at death: ``eta(t) x + l(t) premium``."""
    payout = float(spec.insurance.payout.value(t))
    insured = 0.0 if premium == 0.0 else payout * premium
    if isinf(payout) and premium != 0.0:
        insured = float("inf") if premium > 0 else float("-inf")
    return spec.insurance.eta * x + insured


def value_function(a_curve, b_curve, gamma: float, t: float, x: float) -> float:
    """Equilibrium value ``a(t) U_gamma(x + b(t))``.

    For gamma = 0 this returns ``a(t) log(x + b(t))`` which omits a purely
    time-dependent additive term; treat the log branch as policies-only.
    """
    y = _shifted_wealth(b_curve, t, x)
    a = float(a_curve(t))
    if gamma == 0.0:
        return a * np.log(y)
    return a * y**gamma / gamma


def find_satiation(rate_samples) -> float | None:
    """Interior argmax time of a sampled rate curve, if one exists.

    Expects >= 3 samples of (time, rate) with strictly increasing times.
    Returns the time of the maximum when it is interior and exceeds both
    endpoint rates by more than 1e-9; otherwise None.
    """
    samples = np.asarray(rate_samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] < 3:
        raise ValidationError("find_satiation: need >= 3 (time, rate) samples")
    times, rates = samples[:, 0], samples[:, 1]
    if np.any(np.diff(times) <= 0.0):
        raise ValidationError("find_satiation: times must be strictly increasing")
    k = int(np.argmax(rates))
    if k == 0 or k == len(rates) - 1:
        return None
    if rates[k] > rates[0] + 1e-9 and rates[k] > rates[-1] + 1e-9:
        return float(times[k])
    return None
