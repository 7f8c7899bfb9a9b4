"""Closed-form and semi-closed-form solutions.

These serve both as first-class outputs (the human-capital floor ``b``, the
exponential-discounting and log-utility value coefficients, the stationary
infinite-horizon constants) and as independent oracles for the backward
integral-equation solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .model import (
    ConstantPayout,
    ConstantWeight,
    Exponential,
    MarketParams,
    ModelSpec,
    ValidationError,
    constant_K,
    kernel_Q,
    kernel_q,
    legacy_hazard_weight,
    weight_M,
)

__all__ = [
    "solve_b",
    "b_function",
    "a_exponential",
    "a_log",
    "StationaryParams",
    "StationarySolution",
    "solve_stationary",
]

_SIMPSON_PANELS = 10_000


def _composite_simpson(f, lo: float, hi: float, panels: int = _SIMPSON_PANELS) -> float:
    if hi <= lo:
        return 0.0
    x = np.linspace(lo, hi, 2 * panels + 1)
    y = np.asarray(f(x), dtype=float)
    return (hi - lo) / (6.0 * panels) * (y[0] + y[-1] + 4.0 * y[1::2].sum() + 2.0 * y[2:-1:2].sum())


# ---------------------------------------------------------------------------
# Human-capital floor b(t)
# ---------------------------------------------------------------------------


def _has_constant_payout_rate(spec: ModelSpec) -> bool:
    return isinstance(spec.insurance.payout, ConstantPayout)


def solve_b(spec: ModelSpec, N: int) -> np.ndarray:
    """b at the backward grid nodes ``t_n = T - n T/N`` (decreasing in t).

    b discounts future income at the augmented rate ``r + eta/l``:
    it solves ``i + b' - (r + eta/l) b = 0`` with ``b(T) = 0``, i.e.
    ``b(s) = int_s^T i exp(-int_s^u (r + eta/l)) du``.  Constant ``i`` and
    ``eta/l`` give the exact exponential form; an actuarial payout makes
    ``eta/l`` time varying and the integral is done by composite Simpson
    on the solver grid.
    """
    if N < 2:
        raise ValidationError("solve_b: N must be >= 2")
    times = np.linspace(spec.horizon, 0.0, N + 1)
    income = spec.insurance.income
    if income == 0.0:
        return np.zeros(N + 1)
    eta = spec.insurance.eta
    if _has_constant_payout_rate(spec):
        rate = spec.market.r + eta * spec.insurance.payout.inverse(0.0)
        tau = spec.horizon - times
        if rate == 0.0:
            return income * tau
        return income * (-np.expm1(-rate * tau)) / rate

    # R(t) = int_0^t (r + eta/l); b(t) = e^{R(t)} int_t^T i e^{-R(u)} du
    def big_r(t):
        return spec.market.r * t + eta * spec.insurance.payout.integrated_inverse(t)

    mids = 0.5 * (times[:-1] + times[1:])
    g_nodes = income * np.exp(-big_r(times))
    g_mids = income * np.exp(-big_r(mids))
    widths = times[:-1] - times[1:]
    panels = widths / 6.0 * (g_nodes[1:] + 4.0 * g_mids + g_nodes[:-1])
    integral = np.concatenate([[0.0], np.cumsum(panels)])
    return np.exp(big_r(times)) * integral


def b_function(spec: ModelSpec, N: int = 4096):
    """Return ``b`` as a vectorized callable of time.

    Exact when the discount rate ``r + eta/l`` is constant; otherwise a
    linear interpolant of the Simpson grid values.
    """
    income = spec.insurance.income
    if income == 0.0:
        return lambda t: np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0
    if _has_constant_payout_rate(spec):
        rate = spec.market.r + spec.insurance.eta * spec.insurance.payout.inverse(0.0)

        def exact(t):
            tau = spec.horizon - np.asarray(t, dtype=float)
            if rate == 0.0:
                out = income * tau
            else:
                out = income * (-np.expm1(-rate * tau)) / rate
            return out if np.ndim(t) else float(out)

        return exact

    values = solve_b(spec, N)
    times = np.linspace(spec.horizon, 0.0, N + 1)

    def interp(t):
        out = np.interp(np.asarray(t, dtype=float), times[::-1], values[::-1])
        return out if np.ndim(t) else float(out)

    return interp


# ---------------------------------------------------------------------------
# Exponential-discounting value coefficient
# ---------------------------------------------------------------------------


def a_exponential(spec: ModelSpec, t: float) -> float:
    """Value coefficient under exponential discounting, by quadrature.

    Requires ``h`` and ``h_hat`` exponential with the same rate and a
    constant Pareto weight; in that regime the equilibrium coincides with
    the pre-commitment optimum and a(t) has the explicit form

        a(t) = [ n^(1/(1-g)) e^(k(T)) + int_t^T (1+w lam-g M)/(1-g) e^(k(u)) du ]^(1-g)

    with ``k(u) = int_t^u (K + g eta/l - rho - lam) / (1-g)`` and the
    legacy-kernel weight ``w = m^(1/(1-g))`` (= 1 for the unit weight).
    """
    h, hhat = spec.discount, spec.prefs.bequest_discount
    if not (isinstance(h, Exponential) and isinstance(hhat, Exponential) and h.rho == hhat.rho):
        raise ValidationError("a_exponential: requires h = h_hat exponential with one rate")
    if not isinstance(spec.prefs.m_weight, ConstantWeight):
        raise ValidationError("a_exponential: requires a constant Pareto weight")
    if not 0.0 <= t <= spec.horizon:
        raise ValidationError("a_exponential: t outside [0, T]")

    gamma = spec.prefs.gamma
    rho = h.rho
    eta = spec.insurance.eta
    K = constant_K(spec.market, gamma)
    one_mg = 1.0 - gamma
    il_t = spec.insurance.payout.integrated_inverse(t)
    lam_int_t = spec.mortality.cumulative(t)

    def exponent(u):
        il = spec.insurance.payout.integrated_inverse(u) - il_t
        lam_int = spec.mortality.cumulative(u) - lam_int_t
        return ((K - rho) * (u - t) + gamma * eta * il - lam_int) / one_mg

    lam_weight = legacy_hazard_weight(spec.prefs)

    def integrand(u):
        lam = spec.mortality.rate(u)
        Mv = weight_M(spec.prefs, spec.insurance, u)
        return (1.0 + lam_weight * lam - gamma * Mv) / one_mg * np.exp(exponent(u))

    bracket = spec.prefs.n ** (1.0 / one_mg) * math.exp(exponent(spec.horizon))
    bracket += _composite_simpson(integrand, t, spec.horizon)
    return bracket**one_mg


# ---------------------------------------------------------------------------
# Log-utility value coefficient
# ---------------------------------------------------------------------------


def a_log(spec: ModelSpec, t: float) -> float:
    """Value coefficient for log utility: ``int_t^T (Q + q) ds + n Q(T, t)``."""
    if not spec.prefs.is_log:
        raise ValidationError("a_log: requires gamma = 0")
    if not 0.0 <= t <= spec.horizon:
        raise ValidationError("a_log: t outside [0, T]")

    def integrand(s):
        return kernel_Q(spec, s, t) + kernel_q(spec, s, t)

    boundary = spec.prefs.n * kernel_Q(spec, spec.horizon, t)
    return _composite_simpson(integrand, t, spec.horizon) + boundary


# ---------------------------------------------------------------------------
# Stationary (infinite-horizon) case
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StationaryParams:
    """Constant-coefficient infinite-horizon instance.

    The two kernels are pure exponentials: the consumption kernel decays at
    ``lambda + r1`` and the legacy kernel carries weight ``m lambda`` and
    decays at ``lambda + r2``.
    """

    hazard_rate: float
    r1: float
    r2: float
    m: float
    payout: float
    eta: float
    income: float
    gamma: float
    market: MarketParams

    def __post_init__(self):
        if not self.hazard_rate > 0:
            raise ValidationError("StationaryParams: hazard_rate must be > 0")
        if not self.payout > 0:
            raise ValidationError("StationaryParams: payout must be > 0")
        if not self.m > 0:
            raise ValidationError("StationaryParams: m must be > 0")
        if not self.gamma < 1:
            raise ValidationError("StationaryParams: gamma must be < 1")
        if self.eta <= 0 or self.income < 0:
            raise ValidationError("StationaryParams: eta must be > 0 and income >= 0")


@dataclass(frozen=True)
class StationarySolution:
    """Constant value coefficient and derived quantities.

    ``x = a^(1/(1-gamma))`` solves the rational fixed-point equation

        1/x = 1/(alpha1 + gamma beta x) + lambda m^(1/(1-gamma)) / (alpha2 + gamma beta x)

    and the transversality values ``alpha_j + gamma beta x`` must both be
    strictly positive for the infinite-horizon integrals to converge.
    """

    a: float
    b: float
    x: float
    alpha1: float
    alpha2: float
    beta: float
    tc1: float
    tc2: float
    residual: float
    tc_holds: bool


class StationaryInfeasibleError(ValidationError):
    """No root satisfies both transversality conditions."""


def _stationary_pieces(p: StationaryParams):
    inv_l = 0.0 if math.isinf(p.payout) else 1.0 / p.payout
    K = constant_K(p.market, p.gamma)
    alpha1 = p.hazard_rate + p.r1 - K - p.gamma * p.eta * inv_l
    alpha2 = p.hazard_rate + p.r2 - K - p.gamma * p.eta * inv_l
    m_pow = p.m ** (1.0 / (1.0 - p.gamma))
    beta = 1.0 + m_pow * inv_l
    legacy_weight = p.hazard_rate * m_pow
    return inv_l, alpha1, alpha2, beta, legacy_weight


def _tc_ok(alpha1, alpha2, gb, x) -> bool:
    return alpha1 + gb * x > 0.0 and alpha2 + gb * x > 0.0


def _residual(alpha1, alpha2, gb, legacy_weight, x) -> float:
    return 1.0 / x - 1.0 / (alpha1 + gb * x) - legacy_weight / (alpha2 + gb * x)


def _quadratic_root(p: StationaryParams, alpha1, alpha2, beta, lam):
    # m = 1 clears denominators into A x^2 + B x + C = 0
    gb = p.gamma * beta
    A = gb * (1.0 - gb + lam)
    B = alpha2 * (1.0 - gb) + alpha1 * (lam - gb)
    C = -alpha1 * alpha2
    if A == 0.0:
        if B == 0.0:
            raise StationaryInfeasibleError("stationary equation degenerate (A = B = 0)")
        roots = [-C / B]
    else:
        disc = B * B - 4.0 * A * C
        if disc < 0.0:
            raise StationaryInfeasibleError("stationary quadratic has no real root")
        sq = math.sqrt(disc)
        # numerically stable pair
        q = -0.5 * (B + math.copysign(sq, B)) if B != 0.0 else 0.5 * sq
        roots = [q / A] if q != 0.0 else [0.0]
        if q != 0.0:
            roots.append(C / q)
        else:
            roots.append(-B / A)
    feasible = [x for x in roots if x > 0.0 and _tc_ok(alpha1, alpha2, gb, x)]
    if not feasible:
        raise StationaryInfeasibleError(
            "no transversality-feasible root; model misconfiguration (roots: %s)" % roots
        )
    if len(feasible) > 1:
        raise StationaryInfeasibleError("multiple transversality-feasible roots: %s" % feasible)
    return feasible[0]


def _bisection_root(p: StationaryParams, alpha1, alpha2, beta, legacy_weight):
    gb = p.gamma * beta

    def g(x):
        return _residual(alpha1, alpha2, gb, legacy_weight, x)

    if gb < 0.0:
        upper = min(alpha1, alpha2) / (-gb)
        if upper <= 0.0:
            raise StationaryInfeasibleError("transversality region empty (alpha_j <= 0)")
        lo, hi = upper * 1e-12, upper * (1.0 - 1e-12)
    else:
        lo = max(0.0, max(-alpha1, -alpha2) / gb) if gb > 0.0 else 0.0
        lo = lo * (1.0 + 1e-12) + 1e-300
        hi = max(1.0, lo) * 1e9
    grid = np.geomspace(lo, hi, 4000)
    vals = np.array([g(x) for x in grid])
    sign_flip = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if len(sign_flip) == 0:
        raise StationaryInfeasibleError("no sign change on the transversality-feasible interval")
    i = sign_flip[0]
    root = brentq(g, grid[i], grid[i + 1], xtol=1e-300, rtol=8.9e-16)
    if not _tc_ok(alpha1, alpha2, gb, root):
        raise StationaryInfeasibleError("bisection root violates transversality")
    return root


def solve_stationary(p: StationaryParams, method: str = "auto") -> StationarySolution:
    """Solve the stationary fixed-point equation and transversality check.

    ``method`` is "auto" (quadratic fast path when m = 1, bisection
    otherwise), "quadratic" or "bisect".  ``b = i / (r + eta/l)``.
    """
    inv_l, alpha1, alpha2, beta, legacy_weight = _stationary_pieces(p)
    gb = p.gamma * beta

    if p.gamma == 0.0:
        if alpha1 <= 0.0 or alpha2 <= 0.0:
            raise StationaryInfeasibleError("gamma = 0 requires alpha1, alpha2 > 0")
        x = 1.0 / (1.0 / alpha1 + legacy_weight / alpha2)
    elif method == "quadratic" or (method == "auto" and p.m == 1.0):
        x = _quadratic_root(p, alpha1, alpha2, beta, p.hazard_rate)
    elif method in ("auto", "bisect"):
        x = _bisection_root(p, alpha1, alpha2, beta, legacy_weight)
    else:
        raise ValidationError(f"solve_stationary: unknown method {method!r}")

    b_rate = p.market.r + p.eta * inv_l
    if b_rate <= 0.0 and p.income > 0.0:
        raise StationaryInfeasibleError("b = i/(r + eta/l) requires r + eta/l > 0")
    b = p.income / b_rate if p.income > 0.0 else 0.0

    res = abs(_residual(alpha1, alpha2, gb, legacy_weight, x))
    tc1 = alpha1 + gb * x
    tc2 = alpha2 + gb * x
    return StationarySolution(
        a=x ** (1.0 - p.gamma),
        b=b,
        x=x,
        alpha1=alpha1,
        alpha2=alpha2,
        beta=beta,
        tc1=tc1,
        tc2=tc2,
        residual=res,
        tc_holds=tc1 > 0.0 and tc2 > 0.0,
    )
