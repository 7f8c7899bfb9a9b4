"""Command-line driver: config ingestion, experiments, CSV/SVG artifacts.

Usage::

    tcpolicy <command> --config <path> [--out <dir>] [--no-svg]

with command one of ``solve``, ``policies``, ``simulate``, ``stationary``,
``converge``, ``hump``.  Configs are flat ``key = value`` text with dotted
sections (``market.r = 0.05``); unknown keys are rejected with their line
number.  Exit status 0 on success, 2 on a validation refusal (bad config
or violated model assumption), 1 on a runtime failure.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import closed_form, ie_solver, policy, simulate
from .model import (
    AffineExponential,
    AffineHazard,
    ConstantHazard,
    ConstantPayout,
    ConstantWeight,
    DiscountKernel,
    Exponential,
    Hyperbolic,
    InsuranceIncomeSpec,
    InverseHazardPayout,
    LogTaperWeight,
    MarketParams,
    ModelSpec,
    PreferenceParams,
    SumOfExponentials,
    ValidationError,
)

__all__ = ["main", "run", "parse_config", "serialize_config", "emit_csv", "emit_svg_plot", "ConfigError", "RunConfig"]

COMMANDS = ("solve", "policies", "simulate", "stationary", "converge", "hump")


class ConfigError(ValidationError):
    """Malformed or inconsistent run configuration."""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

_REQUIRED = object()


class _Config:
    """Key/value store with line tracking and strict key consumption."""

    def __init__(self, pairs: dict[str, tuple[str, int]], source: str):
        self._pairs = dict(pairs)
        self._source = source

    def take(self, key: str, convert, default=_REQUIRED):
        if key in self._pairs:
            raw, line = self._pairs.pop(key)
            try:
                return convert(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{self._source}:{line}: bad value for '{key}': {exc}") from exc
        if default is _REQUIRED:
            raise ConfigError(f"{self._source}: missing required key '{key}'")
        return default

    def has(self, key: str) -> bool:
        return key in self._pairs

    def finish(self) -> None:
        if self._pairs:
            key, (_, line) = min(self._pairs.items(), key=lambda kv: kv[1][1])
            raise ConfigError(f"{self._source}:{line}: unknown key '{key}'")


def _to_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    raise ValueError("expected 'true' or 'false'")


def _read_pairs(text: str, source: str) -> dict[str, tuple[str, int]]:
    pairs: dict[str, tuple[str, int]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value'")
        if key in pairs:
            raise ConfigError(f"{source}:{line_no}: duplicate key '{key}'")
        pairs[key] = (value, line_no)
    return pairs


def _build_kernel(cfg: _Config, prefix: str, default: DiscountKernel | None = None) -> DiscountKernel:
    family = cfg.take(f"{prefix}.family", str, default=None)
    if family is None:
        if default is None:
            raise ConfigError(f"missing required key '{prefix}.family'")
        return default
    if family == "exponential":
        return Exponential(rho=cfg.take(f"{prefix}.rho", float))
    if family == "hyperbolic":
        k1 = cfg.take(f"{prefix}.k1", float)
        if cfg.has(f"{prefix}.h1_target"):
            return Hyperbolic.from_unit_value(k1, cfg.take(f"{prefix}.h1_target", float))
        return Hyperbolic(k1=k1, k2=cfg.take(f"{prefix}.k2", float))
    if family == "sum_of_exponentials":
        return SumOfExponentials(
            weight=cfg.take(f"{prefix}.weight", float),
            r1=cfg.take(f"{prefix}.r1", float),
            r2=cfg.take(f"{prefix}.r2", float),
        )
    if family == "affine_exponential":
        return AffineExponential(
            a_coef=cfg.take(f"{prefix}.a_coef", float),
            r_rate=cfg.take(f"{prefix}.r_rate", float),
        )
    raise ConfigError(f"unknown discount family '{family}' for '{prefix}'")


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration: the model plus command-specific blocks."""

    spec: ModelSpec
    grid_n: int
    mc: simulate.SimConfig
    t0: float
    x0: float
    output_dir: str
    emit_svg: bool


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse flat key = value text into a validated RunConfig."""
    cfg = _Config(_read_pairs(text, source), source)

    horizon = cfg.take("horizon", float)
    market = MarketParams(
        r=cfg.take("market.r", float),
        alpha=cfg.take("market.alpha", float),
        sigma=cfg.take("market.sigma", float),
    )

    mort_family = cfg.take("mortality.family", str, default="constant")
    if mort_family == "constant":
        mortality = ConstantHazard(lambda0=cfg.take("mortality.lambda0", float, default=0.0))
    elif mort_family == "affine":
        mortality = AffineHazard(
            lambda0=cfg.take("mortality.lambda0", float),
            lambda1=cfg.take("mortality.lambda1", float),
        )
    else:
        raise ConfigError(f"unknown mortality family '{mort_family}'")

    discount = _build_kernel(cfg, "discount")
    bequest = _build_kernel(cfg, "bequest_discount", default=discount)

    payout_family = cfg.take("insurance.payout.family", str, default="constant")
    if payout_family == "constant":
        payout = ConstantPayout(payout=cfg.take("insurance.payout.value", float, default=math.inf))
    elif payout_family == "inverse_hazard":
        payout = InverseHazardPayout(hazard=mortality)
    else:
        raise ConfigError(f"unknown payout family '{payout_family}'")
    insurance = InsuranceIncomeSpec(
        payout=payout,
        eta=cfg.take("insurance.eta", float, default=1.0),
        income=cfg.take("income.rate", float, default=0.0),
    )

    gamma = cfg.take("preferences.gamma", float)
    n_weight = cfg.take("preferences.n", float)
    m_family = cfg.take("preferences.m.family", str, default="constant")
    if m_family == "constant":
        m_weight = ConstantWeight(m0=cfg.take("preferences.m.value", float, default=1.0))
    elif m_family == "log_taper":
        m_weight = LogTaperWeight(horizon=horizon, eps=cfg.take("preferences.m.eps", float, default=1e-15))
    else:
        raise ConfigError(f"unknown Pareto weight family '{m_family}'")
    prefs = PreferenceParams(gamma=gamma, n=n_weight, m_weight=m_weight, bequest_discount=bequest)

    spec = ModelSpec(
        market=market,
        mortality=mortality,
        discount=discount,
        prefs=prefs,
        insurance=insurance,
        horizon=horizon,
    )

    grid_n = cfg.take("grid.N", int, default=1000)
    mc = simulate.SimConfig(
        paths=cfg.take("mc.paths", int, default=100_000),
        seed=cfg.take("mc.seed", int, default=20240901),
        dt=cfg.take("mc.dt", float, default=1e-3),
        scheme=cfg.take("mc.scheme", str, default=simulate.EXACT_Y),
    )
    t0 = cfg.take("mc.t0", float, default=0.0)
    x0 = cfg.take("mc.x0", float, default=1.0)
    output_dir = cfg.take("output.directory", str, default="out")
    emit_svg = cfg.take("output.emit_svg", _to_bool, default=True)
    cfg.finish()
    return RunConfig(
        spec=spec, grid_n=grid_n, mc=mc, t0=t0, x0=x0, output_dir=output_dir, emit_svg=emit_svg
    )


def _kernel_lines(prefix: str, kernel: DiscountKernel) -> list[str]:
    if isinstance(kernel, Exponential):
        return [f"{prefix}.family = exponential", f"{prefix}.rho = {kernel.rho!r}"]
    if isinstance(kernel, Hyperbolic):
        return [f"{prefix}.family = hyperbolic", f"{prefix}.k1 = {kernel.k1!r}", f"{prefix}.k2 = {kernel.k2!r}"]
    if isinstance(kernel, SumOfExponentials):
        return [
            f"{prefix}.family = sum_of_exponentials",
            f"{prefix}.weight = {kernel.weight!r}",
            f"{prefix}.r1 = {kernel.r1!r}",
            f"{prefix}.r2 = {kernel.r2!r}",
        ]
    if isinstance(kernel, AffineExponential):
        return [
            f"{prefix}.family = affine_exponential",
            f"{prefix}.a_coef = {kernel.a_coef!r}",
            f"{prefix}.r_rate = {kernel.r_rate!r}",
        ]
    raise ConfigError(f"cannot serialize kernel {kernel!r}")


def serialize_config(rc: RunConfig) -> str:
    """Render a RunConfig back to config text; parsing it again reproduces
    the same ModelSpec."""
    spec = rc.spec
    lines = [f"horizon = {spec.horizon!r}"]
    lines += [
        f"market.r = {spec.market.r!r}",
        f"market.alpha = {spec.market.alpha!r}",
        f"market.sigma = {spec.market.sigma!r}",
    ]
    if isinstance(spec.mortality, ConstantHazard):
        lines += ["mortality.family = constant", f"mortality.lambda0 = {spec.mortality.lambda0!r}"]
    else:
        lines += [
            "mortality.family = affine",
            f"mortality.lambda0 = {spec.mortality.lambda0!r}",
            f"mortality.lambda1 = {spec.mortality.lambda1!r}",
        ]
    lines += _kernel_lines("discount", spec.discount)
    lines += _kernel_lines("bequest_discount", spec.prefs.bequest_discount)
    payout = spec.insurance.payout
    if isinstance(payout, ConstantPayout):
        lines += ["insurance.payout.family = constant", f"insurance.payout.value = {payout.payout!r}"]
    else:
        lines += ["insurance.payout.family = inverse_hazard"]
    lines += [
        f"insurance.eta = {spec.insurance.eta!r}",
        f"income.rate = {spec.insurance.income!r}",
        f"preferences.gamma = {spec.prefs.gamma!r}",
        f"preferences.n = {spec.prefs.n!r}",
    ]
    m_weight = spec.prefs.m_weight
    if isinstance(m_weight, ConstantWeight):
        lines += ["preferences.m.family = constant", f"preferences.m.value = {m_weight.m0!r}"]
    else:
        lines += ["preferences.m.family = log_taper", f"preferences.m.eps = {m_weight.eps!r}"]
    lines += [
        f"grid.N = {rc.grid_n}",
        f"mc.paths = {rc.mc.paths}",
        f"mc.seed = {rc.mc.seed}",
        f"mc.dt = {rc.mc.dt!r}",
        f"mc.scheme = {rc.mc.scheme}",
        f"mc.t0 = {rc.t0!r}",
        f"mc.x0 = {rc.x0!r}",
        f"output.directory = {rc.output_dir}",
        f"output.emit_svg = {str(rc.emit_svg).lower()}",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Artifact emission
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, str):
        if any(c in value for c in ",\"\n"):
            return '"' + value.replace('"', '""') + '"'
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def emit_csv(rows, header, path) -> None:
    """Write an RFC-4180-style CSV with 17-significant-digit floats."""
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValidationError("emit_csv: ragged row")
        lines.append(",".join(_format_cell(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def emit_svg_plot(series, labels, path, title: str = "") -> None:
    """Render one or more (t, value) series as a standalone SVG line chart.

    Fixed 800x600 viewport, linear scales, one polyline per series with a
    distinct stroke.  Non-finite values are rejected.
    """
    if len(series) != len(labels):
        raise ValidationError("emit_svg_plot: one label per series required")
    cleaned = []
    for t, v in series:
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        if t.size < 2 or t.size != v.size:
            raise ValidationError("emit_svg_plot: each series needs >= 2 points")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValidationError("emit_svg_plot: non-finite values rejected")
        cleaned.append((t, v))

    width, height = 800, 600
    left, right, top, bottom = 70, 20, 30, 50
    t_min = min(float(t.min()) for t, _ in cleaned)
    t_max = max(float(t.max()) for t, _ in cleaned)
    v_min = min(float(v.min()) for _, v in cleaned)
    v_max = max(float(v.max()) for _, v in cleaned)
    t_span = t_max - t_min or 1.0
    v_span = v_max - v_min or 1.0

    def sx(t):
        return left + (t - t_min) / t_span * (width - left - right)

    def sy(v):
        return height - bottom - (v - v_min) / v_span * (height - top - bottom)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" '
        'stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="20" text-anchor="middle">{title}</text>')
    for i in range(5):
        tv = t_min + t_span * i / 4
        vv = v_min + v_span * i / 4
        parts.append(
            f'<text x="{sx(tv):.1f}" y="{height - bottom + 18}" text-anchor="middle" '
            f'font-size="11">{tv:.4g}</text>'
        )
        parts.append(
            f'<text x="{left - 6}" y="{sy(vv) + 4:.1f}" text-anchor="end" font-size="11">{vv:.4g}</text>'
        )
    for idx, ((t, v), label) in enumerate(zip(cleaned, labels)):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = " ".join(f"{sx(ti):.2f},{sy(vi):.2f}" for ti, vi in zip(t, v))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(
            f'<text x="{width - right - 6}" y="{top + 16 * (idx + 1)}" text-anchor="end" '
            f'font-size="12" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", newline="\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _solved_curves(rc: RunConfig):
    grid = ie_solver.solve_a(rc.spec, rc.grid_n)
    b_vals = closed_form.solve_b(rc.spec, rc.grid_n)
    return grid, b_vals


def _cmd_solve(rc: RunConfig, out: Path, svg: bool) -> None:
    grid, b_vals = _solved_curves(rc)
    order = np.argsort(grid.times)
    rows = zip(grid.times[order], grid.a_values[order], grid.A_values[order], b_vals[order])
    emit_csv(rows, ["t", "a", "A", "b"], out / "solution.csv")
    if svg:
        emit_svg_plot(
            [(grid.times[order], grid.a_values[order]), (grid.times[order], b_vals[order])],
            ["a", "b"],
            out / "solution.svg",
            title="value coefficient and income floor",
        )


def _cmd_policies(rc: RunConfig, out: Path, svg: bool) -> None:
    spec = rc.spec
    grid, b_vals = _solved_curves(rc)
    order = np.argsort(grid.times)
    t = grid.times[order]
    rate = policy.consumption_rate(grid.a_curve, spec.prefs.gamma, t)
    one_mg = 1.0 if spec.prefs.gamma == 0.0 else 1.0 - spec.prefs.gamma
    merton = np.full_like(t, spec.market.mu / (spec.market.sigma**2 * one_mg))
    expo = -1.0 if spec.prefs.gamma == 0.0 else 1.0 / (spec.prefs.gamma - 1.0)
    z_rate = (grid.a_values[order] / spec.prefs.m0) ** expo
    inv_l = np.asarray(spec.insurance.payout.inverse(t), dtype=float)
    x_coef = inv_l * (z_rate - spec.insurance.eta)
    b_coef = inv_l * z_rate * b_vals[order]
    rows = zip(t, rate, merton, x_coef, b_coef)
    emit_csv(
        rows,
        ["t", "consumption_rate", "merton_fraction", "insurance_x_coef", "insurance_b_coef"],
        out / "policies.csv",
    )
    if svg:
        emit_svg_plot(
            [(t, rate), (t, x_coef)],
            ["consumption_rate", "insurance_x_coef"],
            out / "policies.svg",
            title="equilibrium policy maps",
        )


def _cmd_simulate(rc: RunConfig, out: Path, svg: bool) -> None:
    spec = rc.spec
    grid, _ = _solved_curves(rc)
    b_curve = closed_form.b_function(spec, rc.grid_n)
    report = simulate.verify_fixed_point(spec, grid.a_curve, b_curve, rc.t0, rc.x0, rc.mc)
    emit_csv(
        [
            (
                rc.t0,
                rc.x0,
                report.v_value,
                report.j_estimate.mean,
                report.j_estimate.std_error,
                report.z_score,
            )
        ],
        ["t0", "x0", "v", "j_mean", "j_stderr", "z"],
        out / "fixedpoint.csv",
    )
    print(
        f"fixed point at (t0={rc.t0}, x0={rc.x0}): v={report.v_value:.8g} "
        f"j={report.j_estimate.mean:.8g} +- {report.j_estimate.std_error:.3g} "
        f"z={report.z_score:.3f} ({'pass' if report.passed else 'FAIL'})"
    )


def _cmd_stationary(rc: RunConfig, out: Path, svg: bool) -> None:
    spec = rc.spec
    if not isinstance(spec.mortality, ConstantHazard):
        raise ConfigError("stationary: requires constant mortality")
    if not isinstance(spec.prefs.m_weight, ConstantWeight):
        raise ConfigError("stationary: requires a constant Pareto weight")
    if not isinstance(spec.insurance.payout, ConstantPayout):
        raise ConfigError("stationary: requires a constant payout ratio")
    if not isinstance(spec.discount, Exponential) or not isinstance(
        spec.prefs.bequest_discount, Exponential
    ):
        raise ConfigError("stationary: requires exponential discount kernels")
    params = closed_form.StationaryParams(
        hazard_rate=spec.mortality.lambda0,
        r1=spec.prefs.bequest_discount.rho,
        r2=spec.discount.rho,
        m=spec.prefs.m0,
        payout=spec.insurance.payout.payout,
        eta=spec.insurance.eta,
        income=spec.insurance.income,
        gamma=spec.prefs.gamma,
        market=spec.market,
    )
    sol = closed_form.solve_stationary(params)
    emit_csv(
        [(sol.a, sol.b, sol.x, sol.alpha1, sol.alpha2, sol.beta, sol.tc1, sol.tc2)],
        ["a", "b", "x", "alpha1", "alpha2", "beta", "tc1", "tc2"],
        out / "stationary.csv",
    )
    print(
        f"stationary: a={sol.a:.10g} b={sol.b:.10g} residual={sol.residual:.3g} "
        f"tc_holds={str(sol.tc_holds).lower()}"
    )


def _cmd_converge(rc: RunConfig, out: Path, svg: bool) -> None:
    report = ie_solver.convergence_report(rc.spec, rc.grid_n)
    rows = [
        (rc.grid_n, report.err_coarse, report.ratio),
        (2 * rc.grid_n, report.err_fine, float("nan")),
    ]
    emit_csv(rows, ["N", "err", "ratio"], out / "convergence.csv")
    print(
        f"convergence vs {report.reference}: err({rc.grid_n})={report.err_coarse:.3e} "
        f"err({2 * rc.grid_n})={report.err_fine:.3e} ratio={report.ratio:.3f}"
    )


def _cmd_hump(rc: RunConfig, out: Path, svg: bool) -> None:
    spec = rc.spec
    grid, _ = _solved_curves(rc)
    order = np.argsort(grid.times)
    t = grid.times[order]
    rate = policy.consumption_rate(grid.a_curve, spec.prefs.gamma, t)
    emit_csv(zip(t, rate), ["t", "rate"], out / "hump.csv")
    satiation = policy.find_satiation(np.column_stack([t, rate]))
    print(f"satiation_time = {'none' if satiation is None else f'{satiation:.10g}'}")
    if svg:
        emit_svg_plot([(t, rate)], ["consumption_rate"], out / "hump.svg", title="consumption rate")


_DISPATCH = {
    "solve": _cmd_solve,
    "policies": _cmd_policies,
    "simulate": _cmd_simulate,
    "stationary": _cmd_stationary,
    "converge": _cmd_converge,
    "hump": _cmd_hump,
}


def run(command: str, config_path: str, out_dir: str | None = None, emit_svg: bool | None = None) -> None:
    """Execute one command against a config file; raises on any failure."""
    path = Path(config_path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {config_path}")
    rc = parse_config(path.read_text(), source=str(config_path))
    out = Path(out_dir) if out_dir is not None else Path(rc.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    svg = rc.emit_svg if emit_svg is None else emit_svg
    _DISPATCH[command](rc, out, svg)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tcpolicy",
        description="Time-consistent investment, consumption and life-insurance policies",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to a key = value config file")
    parser.add_argument("--out", default=None, help="output directory (overrides output.directory)")
    parser.add_argument("--no-svg", action="store_true", help="suppress SVG artifacts")
    args = parser.parse_args(argv)
    try:
        run(args.command, args.config, args.out, emit_svg=False if args.no_svg else None)
    except ValidationError as exc:  # includes ConfigError and assumption refusals
        print(f"refused: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
