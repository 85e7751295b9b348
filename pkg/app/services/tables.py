"""
SABR Series Lab - Table Service
Builds the result tables shared by the command line and the HTTP API, and writes them as CSV or JSON.
"""
import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from app.config import get_settings
from app.models.schemas import Cell, Command, ModelParams, OutputFormat, RootTestMode, RunConfig, Table
from app.services.errors import SabrLabError
from app.services.payoff_kernel import eval_G_complex, eval_g, eval_g0, eval_g_inf, mckean_tail
from app.services.pricer import implied_vol, price_strike, value_function
from app.services.scaling_limit import (
    contour_samples,
    convergence_radius,
    critical_points,
    scaling_limit_check,
    scaling_state,
    series_radius_estimates,
    sigma_hat_series_value,
)
from app.services.series_core import PolyInW, RationalScalar
from app.services.series_engine import (
    derive_payoff_series,
    extrapolate_radius,
    implied_variance_series,
    optimal_truncation,
    ratio_test,
    relative_tail_error,
    root_test,
    tail_contribution,
    v0_quadrature,
    v0_series,
    value_series_from_payoff,
)

logger = logging.getLogger(__name__)

V0_CASE = "V0"
CONTOUR_X = np.linspace(0.0, 4.0, 41)

COEFFICIENT_COLUMNS = ["numerator", "denominator", "pi_power", "sqrt2_power", "float"]

Rows = Dict[str, List[List[Cell]]]


# ============ Grids ============

def parse_range(text: str) -> List[float]:
    """Comma-separated values and ``start:step:stop`` ranges, inclusive of stop within half a step."""
    values: List[float] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            raise ValueError(f"empty entry in {text!r}")
        if ":" not in part:
            values.append(float(part))
            continue
        pieces = part.split(":")
        if len(pieces) != 3:
            raise ValueError(f"range {part!r} must read start:step:stop")
        start, step, stop = (float(p) for p in pieces)
        if step <= 0:
            raise ValueError(f"range step must be positive, got {step}")
        if stop < start:
            raise ValueError(f"range stop {stop} lies below start {start}")
        count = int(math.floor((stop - start) / step + 0.5))
        values.extend(round(start + i * step, 12) for i in range(count + 1))
    return values


# ============ Row workers ============

def _guarded(fn: Callable[[Any], Rows], item: Any) -> Tuple[Optional[Rows], Optional[str]]:
    try:
        return fn(item), None
    except SabrLabError as exc:
        return None, f"{item!r}: {type(exc).__name__}: {exc}"
    except Exception as exc:
        logger.exception(f"unexpected failure for {item!r}")
        return None, f"{item!r}: unexpected {type(exc).__name__}: {exc}"


def _map_items(fn: Callable[[Any], Rows], items: Sequence[Any], workers: int) -> List[Tuple[Optional[Rows], Optional[str]]]:
    """Results in input order, from a process pool when more than one worker is requested."""
    if workers <= 1 or len(items) < 2:
        return [_guarded(fn, item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(partial(_guarded, fn), items))


def _price_item(item) -> Rows:
    T, sigma0, omega, K, S0, quad = item
    params = ModelParams(sigma0=sigma0, omega=omega, S0=S0, K=None if K == S0 else K)
    result = price_strike(T, params, quad)
    sigma_bs = None
    if params.is_atm and 0.0 < result.value / S0 < 1.0:
        sigma_bs = implied_vol(result.value / S0, T).sigma_bs
    return {"price": [[T, params.strike, sigma0, omega, result.value, result.abs_err_est, sigma_bs, result.method]]}


def _diverge_item(item) -> Rows:
    sigma0, T, N, quad = item
    case = V0_CASE if sigma0 is None else f"sigma0={sigma0:g}"
    if sigma0 is None:
        ps = v0_series(N)
        reference = v0_quadrature(T, quad)
    else:
        ps = derive_payoff_series(sigma0, N, exact=False)
        reference, _ = value_function(T, ModelParams(sigma0=sigma0), quad)
    report = optimal_truncation(T, ps, reference)
    terms, sums = report.terms, report.partial_sums
    partial_rows = [
        [case, T, n, terms[n], sums[n], terms[n + 1] if n + 1 < len(terms) else None, reference]
        for n in range(len(terms))
    ]
    best = sums[report.N_star]
    truncation = [[
        case, T, report.N_star, report.eps_star, report.bound, report.N_star_estimate,
        report.N_star_turning, best, reference, abs(best - reference),
    ]]
    tail = tail_contribution(T, sigma0, quad)
    errors = [[case, T, report.bound, tail, relative_tail_error(T, sigma0, quad)]]
    return {"partial_sums": partial_rows, "truncation": truncation, "error_bound": errors}


def _scaling_check_item(item) -> Rows:
    tau, sigma0, quad = item
    row = scaling_limit_check(tau, [sigma0], quad)[0]
    return {"check": [[
        tau, row.sigma0, row.T, row.covered_call, row.exponent, row.corrected_exponent,
        row.target, row.rel_err, row.rel_err_corrected,
    ]]}


def _payoff_item(item) -> Rows:
    sigma0, u, imag, quad = item
    params = ModelParams(sigma0=sigma0)
    g = eval_g(u, params, quad) if u > 0 else 0.0
    g0 = eval_g0(u) if u > 0 else 0.0
    G = eval_G_complex(complex(u, imag), params, quad)
    return {"payoff": [[sigma0, u, imag, g, g0, float(eval_g_inf(u)), G.real, G.imag]]}


def _kernel_item(item) -> Rows:
    T, s, quad = item
    return {"kernel": [[T, s, mckean_tail(T, s, quad)]]}


# ============ Exact coefficient cells ============

def _power_cell(p) -> Cell:
    p = Fraction(p)
    return p.numerator if p.denominator == 1 else str(p)


def exact_cells(c) -> List[Cell]:
    """numerator, denominator, pi_power, sqrt2_power, float of an exact coefficient."""
    if isinstance(c, RationalScalar):
        return [c.value.numerator, c.value.denominator, _power_cell(c.pi_power), c.sqrt2_power, float(c)]
    value = Fraction(c)
    return [value.numerator, value.denominator, 0, 0, float(value)]


def _symbolic_rows(coeffs: Sequence) -> List[List[Cell]]:
    rows = []
    for k, poly in enumerate(coeffs):
        terms = poly.coeffs if isinstance(poly, PolyInW) else (poly,)
        for m, c in enumerate(terms):
            if c != 0:
                rows.append([k, m, *exact_cells(c)])
    return rows


def _evaluated_rows(coeffs: Sequence, sigma0_values: Sequence[float]) -> List[List[Cell]]:
    rows = []
    for sigma0 in sigma0_values:
        exact_sigma = Fraction(str(sigma0))
        for k, poly in enumerate(coeffs):
            value = poly.evaluate(exact_sigma) if isinstance(poly, PolyInW) else poly
            rows.append([sigma0, k, *exact_cells(value)])
    return rows


# ============ Service ============

class TableService:
    """Table builders for every command."""

    def build(self, config: RunConfig) -> Dict[str, Table]:
        builders = {
            Command.PRICE: self.price_tables,
            Command.SERIES: self.series_tables,
            Command.DIVERGE: self.diverge_tables,
            Command.SCALING: self.scaling_tables,
            Command.PAYOFF: self.payoff_tables,
            Command.KERNEL: self.kernel_tables,
        }
        tables = builders[config.command](config)
        for name, table in tables.items():
            logger.info(f"{config.command.value}: table {name} with {len(table.rows)} rows, {len(table.failures)} failures")
        return tables

    def _assemble(
        self,
        config: RunConfig,
        columns: Dict[str, List[str]],
        results: List[Tuple[Optional[Rows], Optional[str]]],
    ) -> Dict[str, Table]:
        first = next(iter(columns))
        tables = {name: Table(columns=cols, rows=[], comment=config.echo()) for name, cols in columns.items()}
        for rows, failure in results:
            if failure is not None:
                logger.error(f"{config.command.value}: {failure}")
                tables[first].failures.append(failure)
                continue
            for name, new_rows in rows.items():
                tables[name].rows.extend(new_rows)
        return tables

    def price_tables(self, config: RunConfig) -> Dict[str, Table]:
        quad = config.quad_spec()
        strikes = [config.S0] if config.atm or config.K is None else config.K
        items = [
            (T, sigma0, omega, K, config.S0, quad)
            for T in config.T for sigma0 in config.sigma0 for omega in config.omega for K in strikes
        ]
        columns = {"price": ["T", "K", "sigma0", "omega", "value", "err_est", "implied_vol", "method"]}
        return self._assemble(config, columns, _map_items(_price_item, items, config.workers))

    def series_tables(self, config: RunConfig) -> Dict[str, Table]:
        N = config.order
        ps = derive_payoff_series(None, N, exact=True)
        families = {
            "payoff": ps.a,
            "value": value_series_from_payoff(ps.a),
            "implied_variance": implied_variance_series(ps, N).coeffs,
        }
        tables = {}
        for name, coeffs in families.items():
            tables[name] = Table(
                columns=["k", "m", *COEFFICIENT_COLUMNS], rows=_symbolic_rows(coeffs), comment=config.echo()
            )
            tables[f"{name}_at_sigma0"] = Table(
                columns=["sigma0", "k", *COEFFICIENT_COLUMNS],
                rows=_evaluated_rows(coeffs, config.sigma0),
                comment=config.echo(),
            )
        return tables

    def diverge_tables(self, config: RunConfig) -> Dict[str, Table]:
        quad = config.quad_spec()
        N = config.order
        cases: List[Optional[float]] = [None, *config.sigma0]
        items = [(sigma0, T, N, quad) for sigma0 in cases for T in config.T]
        columns = {
            "truncation": ["case", "T", "N_star", "eps_star", "bound", "N_star_estimate", "N_star_turning",
                           "best_partial_sum", "reference", "abs_err"],
            "partial_sums": ["case", "T", "n", "term", "partial_sum", "neglected_term", "reference"],
            "error_bound": ["case", "T", "bound", "measured_tail", "relative_tail"],
        }
        tables = self._assemble(config, columns, _map_items(_diverge_item, items, config.workers))

        root_rows, radius_rows = [], []
        for sigma0 in cases:
            case = V0_CASE if sigma0 is None else f"sigma0={sigma0:g}"
            ps = v0_series(N) if sigma0 is None else derive_payoff_series(sigma0, N, exact=False)
            points = root_test(ps.a, RootTestMode.PAYOFF)
            root_rows += [[case, round(1.0 / inv_n), inv_n, r] for inv_n, r in points]
            stripped = root_test(ps.a, RootTestMode.PAYOFF, strip_prefactor=True)
            # |a_(k-1)/a_k| estimates the radius in u^2
            ratios = [(inv_n, math.sqrt(r)) for inv_n, r in ratio_test(ps.a, strip_prefactor=True)]
            for method, pts in (("root", stripped), ("ratio", ratios)):
                try:
                    radius_rows.append([case, method, extrapolate_radius(pts, method="tail")])
                except SabrLabError as exc:
                    tables["truncation"].failures.append(f"{case} {method}: {exc}")
        tables["root_test"] = Table(columns=["case", "n", "inv_n", "reduced_coeff"], rows=root_rows, comment=config.echo())
        tables["radius"] = Table(columns=["case", "method", "radius_u"], rows=radius_rows, comment=config.echo())
        return tables

    def scaling_tables(self, config: RunConfig) -> Dict[str, Table]:
        quad = config.quad_spec()
        N = max(config.order, 1)
        sigma_rows = []
        for tau in config.tau:
            state = scaling_state(tau)
            series = sigma_hat_series_value(tau, N)
            sigma_rows.append([
                tau, state.lam, state.sigma_hat_sq, series, abs(series - state.sigma_hat_sq),
                state.phi_saddle, state.C_saddle,
            ])
        radius = convergence_radius()
        estimates = series_radius_estimates(N)
        positive = [tau for tau in config.tau if tau > 0]
        items = [(tau, sigma0, quad) for tau in positive for sigma0 in config.sigma0]
        columns = {"check": ["tau", "sigma0", "T", "covered_call", "exponent", "corrected_exponent",
                             "target", "rel_err", "rel_err_corrected"]}
        tables = self._assemble(config, columns, _map_items(_scaling_check_item, items, config.workers))

        contour_rows = []
        for tau in positive:
            contour_rows += [[tau, float(x), float(y)] for x, y in zip(CONTOUR_X, contour_samples(tau, CONTOUR_X))]
        critical_rows = [[p.z.real, p.z.imag, p.value.real, p.value.imag, p.modulus] for p in critical_points()]

        echo = config.echo()
        tables["sigma_hat"] = Table(
            columns=["tau", "lambda", "sigma_hat_sq", "series_value", "series_abs_diff", "phi_saddle", "C_saddle"],
            rows=sigma_rows, comment=echo,
        )
        tables["radius"] = Table(
            columns=["y0", "tau0", "T_c_times_omega_sigma0", "ratio_estimate", "root_estimate"],
            rows=[[radius.y0, radius.tau0, radius.T_c_times_omega_sigma0, estimates["ratio"], estimates["root"]]],
            comment=echo,
        )
        tables["contour"] = Table(columns=["tau", "x", "y"], rows=contour_rows, comment=echo)
        tables["critical_points"] = Table(
            columns=["z_re", "z_im", "value_re", "value_im", "modulus"], rows=critical_rows, comment=echo
        )
        return tables

    def payoff_tables(self, config: RunConfig) -> Dict[str, Table]:
        quad = config.quad_spec()
        items = [(sigma0, u, imag, quad) for sigma0 in config.sigma0 for u in config.u for imag in config.imag]
        columns = {"payoff": ["sigma0", "u", "imag", "g", "g0", "g_inf", "G_re", "G_im"]}
        return self._assemble(config, columns, _map_items(_payoff_item, items, config.workers))

    def kernel_tables(self, config: RunConfig) -> Dict[str, Table]:
        quad = config.quad_spec()
        items = [(T, s, quad) for T in config.T for s in config.s]
        columns = {"kernel": ["T", "s", "G"]}
        return self._assemble(config, columns, _map_items(_kernel_item, items, config.workers))


# ============ Writers ============

def format_cell(value: Cell, digits: int) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.{digits}g}"
    return str(value)


def write_csv(tables: Dict[str, Table], stream: TextIO, digits: Optional[int] = None) -> None:
    """'#' comment line with the config echo, a header row, then the rows; tables separated by a blank line."""
    digits = digits or get_settings().csv_digits
    writer = csv.writer(stream, lineterminator="\n")
    for i, (name, table) in enumerate(tables.items()):
        if i:
            stream.write("\n")
        stream.write(f"# table={name} {table.comment}\n")
        for failure in table.failures:
            stream.write(f"# failed: {failure}\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([format_cell(c, digits) for c in row])


def write_json(tables: Dict[str, Table], stream: TextIO) -> None:
    json.dump({name: table.model_dump() for name, table in tables.items()}, stream, indent=2)
    stream.write("\n")


def write_tables(tables: Dict[str, Table], fmt: OutputFormat, out: Optional[str], stream: TextIO) -> List[Path]:
    """Write to ``stream`` when ``out`` is None; otherwise to ``out`` (one file per table for multi-table CSV)."""
    fmt = OutputFormat(fmt)
    if out is None:
        (write_csv if fmt is OutputFormat.CSV else write_json)(tables, stream)
        return []
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt is OutputFormat.JSON or len(tables) == 1:
        with path.open("w", encoding="utf-8", newline="") as handle:
            (write_csv if fmt is OutputFormat.CSV else write_json)(tables, handle)
        return [path]
    written = []
    for name, table in tables.items():
        target = path.with_name(f"{path.stem}_{name}{path.suffix or '.csv'}")
        with target.open("w", encoding="utf-8", newline="") as handle:
            write_csv({name: table}, handle)
        written.append(target)
    return written


# Singleton instance
_table_service: Optional[TableService] = None


def get_table_service() -> TableService:
    """Get or create table service instance."""
    global _table_service
    if _table_service is None:
        _table_service = TableService()
    return _table_service
