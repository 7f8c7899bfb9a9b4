"""Backward explicit scheme for the equilibrium value coefficient a(t).

The subgame-perfect value function has the separated form
``v(t, x) = a(t) U_gamma(x + b(t))`` where a solves a nonlinear
Volterra-type fixed-point equation with terminal value ``a(T) = n``.  In
differential form, with ``w = m(0)^(1/(1-gamma))``,

    a'(t) = (gamma M(t) - w lambda(t) - 1) a(t)^(gamma/(gamma-1))
          + (lambda(t) - h'/h(T-t) - K - gamma eta(t)/l(t)) a(t)
          + int_t^T L(s, t) a(s)^(gamma/(gamma-1)) (A(s)/A(t)) ds

with ``A(s) = exp(int_s^T gamma a^(1/(gamma-1)) M)`` and a memory kernel L
(the legacy kernel q enters it scaled by ``w/m(0)``) that vanishes
identically under exponential discounting with a constant Pareto weight.
The weight w is forced by the fixed-point property: the legacy utility is
evaluated at ``(a/m(0))^(1/(gamma-1)) (x+b)``, so the q-term of the
criterion carries ``(a/m(0))^(gamma/(gamma-1))`` rather than the bare
power of a; w = 1 whenever m(0) = 1.  The scheme marches from T down to 0
with step ``epsilon = -T/N``, discretizing the memory integral by a
Riemann sum over the already-computed nodes; it is first-order accurate
in 1/N.

Also here: a-priori comparison bounds sandwiching a(t) between two
Bernoulli-ODE envelopes, and an empirical convergence report.  The march
is inherently sequential and single-threaded with a fixed summation
order, so results are bit-reproducible; solved grids are immutable and
freely shareable across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import closed_form
from .model import (
    ConstantWeight,
    Exponential,
    ModelSpec,
    ValidationError,
    check_assumption_a1,
    constant_K,
    legacy_hazard_weight,
    weight_M,
)

__all__ = [
    "SolutionGrid",
    "BoundsReport",
    "ConvergenceReport",
    "AssumptionViolatedError",
    "SchemeBreakdownError",
    "solve_a",
    "rhs_derivative",
    "interpolate_a",
    "convergence_report",
    "a_priori_bounds",
]


class AssumptionViolatedError(ValidationError):
    """The positivity assumption on 1 - gamma M + lambda fails; refusing."""


class SchemeBreakdownError(RuntimeError):
    """A scheme iterate left the positive cone; increase N."""


@dataclass(frozen=True)
class SolutionGrid:
    """Backward grid ``t_n = T - n T/N`` with the a- and A-iterates.

    ``times`` decreases from T to 0; ``a_values[0] = n`` and
    ``A_values[0] = 1`` hold bit-exactly.
    """

    times: np.ndarray
    a_values: np.ndarray
    A_values: np.ndarray
    N: int
    epsilon: float

    def interpolate(self, t):
        """Piecewise-linear interpolation of a; exact at the nodes."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0.0) or np.any(t_arr > self.times[0]):
            raise ValidationError("interpolate: t outside [0, T]")
        out = np.interp(t_arr, self.times[::-1], self.a_values[::-1])
        return out if t_arr.ndim else float(out)

    @property
    def a_curve(self):
        return self.interpolate


def interpolate_a(grid: SolutionGrid, t):
    """Module-level alias for :meth:`SolutionGrid.interpolate`."""
    return grid.interpolate(t)


# ---------------------------------------------------------------------------
# Precomputed node tables
# ---------------------------------------------------------------------------


class _SchemeTables:
    """Node-indexed arrays shared by every step of the backward march.

    Lag-indexed arrays exploit the uniform grid: ``s - t`` between nodes is
    always a whole number of steps, so h'/h and the kernel weights are
    tabulated once.  The separable exponential ``exp(int_t^s (K + gamma
    eta/l))`` is stored as a ratio of prefix factors.  The legacy-weight
    tables stop one lag short of T: a lag of exactly T never occurs inside
    the Riemann sums, and a tapering Pareto weight may be singular there.
    """

    def __init__(self, spec: ModelSpec, N: int):
        T = spec.horizon
        prefs, ins = spec.prefs, spec.insurance
        self.gamma = prefs.gamma
        self.pow_ratio = self.gamma / (self.gamma - 1.0)
        self.pow_inv = 1.0 / (self.gamma - 1.0)
        self.K = constant_K(spec.market, self.gamma)
        self.eta = ins.eta
        self.epsilon = -T / N
        self.N = N
        # legacy-kernel scaling from U((a/m)^(1/(g-1)) Y); both equal 1 at m(0) = 1
        self.lam_weight = legacy_hazard_weight(prefs)
        self.q_weight = self.lam_weight / prefs.m0

        self.times = np.linspace(T, 0.0, N + 1)
        lags = np.linspace(0.0, T, N + 1)  # k * T/N

        self.h_log = np.asarray(spec.discount.log_derivative(lags), dtype=float)
        self.h_val = np.asarray(spec.discount.value(lags), dtype=float)
        self.hbar_log = np.asarray(spec.hbar_log_derivative(lags[:N]), dtype=float)
        self.hbar_val = np.asarray(spec.hbar_value(lags[:N]), dtype=float)

        self.lam = np.asarray(spec.mortality.rate(self.times), dtype=float)
        self.M = np.asarray(weight_M(prefs, ins, self.times), dtype=float)
        self.inv_l = np.asarray(ins.payout.inverse(self.times), dtype=float)
        # e^{-Lambda(t_n)} and e^{Psi(t_n)} with Psi = int_0^t (K + gamma eta/l)
        self.exp_neg_cumhaz = np.exp(-np.asarray(spec.mortality.cumulative(self.times), dtype=float))
        psi = self.K * self.times + self.gamma * self.eta * np.asarray(
            ins.payout.integrated_inverse(self.times), dtype=float
        )
        self.exp_psi = np.exp(psi)

    def local_terms(self, n: int, a_n: float, a_pow_n: float) -> float:
        drift = self.lam[n] - self.h_log[n] - self.K - self.gamma * self.eta * self.inv_l[n]
        return (self.gamma * self.M[n] - self.lam_weight * self.lam[n] - 1.0) * a_pow_n + drift * a_n

    def memory_sum(self, n: int, a_pow: np.ndarray, A: np.ndarray) -> float:
        """``sum_j L(t_j, t_n) a_j^(g/(g-1)) A_j/A_n`` over j = 0..n-1."""
        if n == 0:
            return 0.0
        surv = self.exp_neg_cumhaz[:n] / self.exp_neg_cumhaz[n]
        Q = self.h_val[n:0:-1] * surv
        q = self.q_weight * self.hbar_val[n:0:-1] * self.lam[:n] * surv
        bracket = (self.h_log[n] - self.h_log[n:0:-1]) * Q + (self.h_log[n] - self.hbar_log[n:0:-1]) * q
        L = bracket * (self.exp_psi[:n] / self.exp_psi[n])
        return float(np.sum(L * a_pow[:n] * (A[:n] / A[n])))

    def rhs(self, n: int, a: np.ndarray, A: np.ndarray, a_pow: np.ndarray) -> float:
        integral = -self.epsilon * self.memory_sum(n, a_pow, A)
        return self.local_terms(n, a[n], a_pow[n]) + integral


def _check_preconditions(spec: ModelSpec, N: int) -> None:
    if N < 2:
        raise ValidationError("solve_a: N must be >= 2")
    if spec.prefs.is_log:
        raise ValidationError("solve_a: gamma = 0 is served by the log-utility closed form")
    a1 = check_assumption_a1(spec)
    if not a1.holds:
        raise AssumptionViolatedError(
            f"positivity assumption fails: min(1 - gamma M + lambda) = {a1.min_value:.6g} < 0"
        )


def solve_a(spec: ModelSpec, N: int) -> SolutionGrid:
    """March the explicit scheme backward from a(T) = n, A(T) = 1.

    Refuses to run when the positivity assumption fails; raises
    :class:`SchemeBreakdownError` if an iterate leaves the positive cone.
    Cost is O(N^2) from the memory sums.
    """
    _check_preconditions(spec, N)
    tab = _SchemeTables(spec, N)
    eps = tab.epsilon

    a = np.empty(N + 1)
    A = np.empty(N + 1)
    a_pow = np.empty(N + 1)
    a[0] = spec.prefs.n
    A[0] = 1.0
    for n in range(N):
        a_pow[n] = a[n] ** tab.pow_ratio
        a[n + 1] = a[n] + eps * tab.rhs(n, a, A, a_pow)
        A[n + 1] = A[n] - tab.gamma * eps * a[n] ** tab.pow_inv * tab.M[n] * A[n]
        if not (a[n + 1] > 0.0 and A[n + 1] > 0.0):
            raise SchemeBreakdownError(
                f"scheme breakdown at step {n + 1} (t = {tab.times[n + 1]:.6g}): "
                f"a = {a[n + 1]:.6g}, A = {A[n + 1]:.6g}; increase N"
            )
    a_pow[N] = a[N] ** tab.pow_ratio
    return SolutionGrid(times=tab.times, a_values=a, A_values=A, N=N, epsilon=eps)


def rhs_derivative(spec: ModelSpec, grid: SolutionGrid, n: int) -> float:
    """Discretized right-hand side a'(t_n) given the populated grid.

    The memory integral is the Riemann sum ``-eps sum_j L(t_j, t_n) ...``
    over the nodes already computed (t_j > t_n).
    """
    if not 0 <= n <= grid.N:
        raise ValidationError(f"rhs_derivative: index {n} outside 0..{grid.N}")
    if np.any(grid.a_values[: n + 1] <= 0.0) or np.any(grid.A_values[: n + 1] <= 0.0):
        raise SchemeBreakdownError("rhs_derivative: non-positive grid values")
    _check_preconditions(spec, grid.N)
    tab = _SchemeTables(spec, grid.N)
    a_pow = grid.a_values ** tab.pow_ratio
    return tab.rhs(n, grid.a_values, grid.A_values, a_pow)


# ---------------------------------------------------------------------------
# Convergence report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceReport:
    """Max-node errors at N and 2N against a reference, and their ratio.

    A first-order scheme gives ``ratio`` near 2.  ``reference`` records
    whether the closed form or a refined self-solve served as truth.
    """

    err_coarse: float
    err_fine: float
    ratio: float
    reference: str


def _closed_form_applies(spec: ModelSpec) -> bool:
    h, hh = spec.discount, spec.prefs.bequest_discount
    return (
        isinstance(h, Exponential)
        and isinstance(hh, Exponential)
        and h.rho == hh.rho
        and isinstance(spec.prefs.m_weight, ConstantWeight)
    )


def _max_err_vs_closed_form(spec: ModelSpec, N: int) -> float:
    grid = solve_a(spec, N)
    ref = np.array([closed_form.a_exponential(spec, t) for t in grid.times])
    return float(np.max(np.abs(grid.a_values - ref)))


def _max_err_vs_refined(spec: ModelSpec, N: int, refine: int = 4) -> float:
    grid = solve_a(spec, N)
    fine = solve_a(spec, refine * N)
    # the coarse nodes are every `refine`-th fine node
    return float(np.max(np.abs(grid.a_values - fine.a_values[::refine])))


def convergence_report(spec: ModelSpec, N: int) -> ConvergenceReport:
    """Empirical order check: error at N over error at 2N.

    Exponential instances are compared against the closed form; otherwise
    each resolution is compared against its own 4x refinement.
    """
    if N < 4:
        raise ValidationError("convergence_report: N must be >= 4")
    if _closed_form_applies(spec):
        err_coarse = _max_err_vs_closed_form(spec, N)
        err_fine = _max_err_vs_closed_form(spec, 2 * N)
        reference = "closed_form"
    else:
        err_coarse = _max_err_vs_refined(spec, N)
        err_fine = _max_err_vs_refined(spec, 2 * N)
        reference = "self_4x"
    ratio = err_coarse / err_fine if err_fine > 0.0 else float("inf")
    return ConvergenceReport(err_coarse=err_coarse, err_fine=err_fine, ratio=ratio, reference=reference)


# ---------------------------------------------------------------------------
# A-priori comparison bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundsReport:
    """Comparison constants and the two Bernoulli envelope curves.

    a(t) satisfies ``a' <= -C1 a^(g/(g-1)) + C0 a`` and
    ``a' >= -D1 a^(g/(g-1)) - D0 a``; integrating the equalities backward
    from a(T) = n yields curves with lower(t) <= a(t) <= upper(t).  The
    substitution ``w = a^(1/(1-g))`` makes both ODEs linear, so the curves
    are evaluated in closed form.  ``rho`` bounds |h'/h| and |hbar'/hbar|
    and ``rho_prime`` bounds |gamma eta / l| over the horizon.
    """

    c0: float
    c1: float
    d0: float
    d1: float
    rho: float
    rho_prime: float
    terminal: float
    gamma: float
    horizon: float

    def _w_backward(self, c_lin: float, c_const: float, t):
        # w' = (c_lin w + c_const)/(1-g) integrated backward from w(T)
        tau = self.horizon - np.asarray(t, dtype=float)
        one_mg = 1.0 - self.gamma
        w_T = self.terminal ** (1.0 / one_mg)
        if c_lin == 0.0:
            return w_T - c_const * tau / one_mg
        with np.errstate(over="ignore"):
            return (w_T + c_const / c_lin) * np.exp(-c_lin * tau / one_mg) - c_const / c_lin

    def lower_curve(self, t):
        w = np.maximum(self._w_backward(self.c0, -self.c1, t), 0.0)
        out = w ** (1.0 - self.gamma)
        return out if np.ndim(t) else float(out)

    def upper_curve(self, t):
        w = self._w_backward(-self.d0, -self.d1, t)
        with np.errstate(over="ignore"):
            out = w ** (1.0 - self.gamma)
        return out if np.ndim(t) else float(out)


def a_priori_bounds(spec: ModelSpec, grid_points: int = 10_000) -> BoundsReport:
    """Grid-search the comparison constants and build the envelope curves.

    Refuses when C1 < 0 (the positivity assumption fails and a(t) may hit
    zero).  The legacy-weight log-derivative is scanned on [0, T) since a
    tapering Pareto weight is singular at T itself.
    """
    t_closed = np.linspace(0.0, spec.horizon, grid_points)
    t_open = np.linspace(0.0, spec.horizon, grid_points, endpoint=False)
    gamma = spec.prefs.gamma
    K = constant_K(spec.market, gamma)

    lam = np.asarray(spec.mortality.rate(t_closed), dtype=float)
    lam_w = legacy_hazard_weight(spec.prefs) * lam
    Mv = np.asarray(weight_M(spec.prefs, spec.insurance, t_closed), dtype=float)
    rho = max(
        float(np.max(np.abs(spec.discount.log_derivative(t_closed)))),
        float(np.max(np.abs(spec.hbar_log_derivative(t_open)))),
    )
    rho_prime = float(
        np.max(np.abs(gamma * spec.insurance.eta * np.asarray(spec.insurance.payout.inverse(t_closed))))
    )

    c1 = float(np.min(1.0 - gamma * Mv + lam_w))
    if c1 < 0.0:
        raise AssumptionViolatedError(f"a_priori_bounds: C1 = {c1:.6g} < 0; a(t) may reach zero")
    c0 = float(np.max(lam)) + 3.0 * rho - K + rho_prime
    d0 = float(np.max(lam)) + K + 3.0 * rho + rho_prime
    d1 = float(np.max(1.0 + lam_w - gamma * Mv))
    return BoundsReport(
        c0=c0,
        c1=c1,
        d0=d0,
        d1=d1,
        rho=rho,
        rho_prime=rho_prime,
        terminal=spec.prefs.n,
        gamma=gamma,
        horizon=spec.horizon,
    )
