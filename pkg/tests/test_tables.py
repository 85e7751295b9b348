import io
import json
import math
from fractions import Fraction

import pytest

from app.models.schemas import Command, OutputFormat, RunConfig, Table
from app.services.errors import DomainError
from app.services.series_core import RationalScalar
from app.services.series_engine import PAYOFF_PREFACTOR
from app.services.tables import (
    _map_items,
    exact_cells,
    format_cell,
    get_table_service,
    parse_range,
    write_csv,
    write_json,
    write_tables,
)


@pytest.fixture
def service():
    return get_table_service()


# ============ Grids ============

@pytest.mark.parametrize(
    "text, expected",
    [
        ("0.5", [0.5]),
        ("1,2,3", [1.0, 2.0, 3.0]),
        ("0.1:0.1:0.5", [0.1, 0.2, 0.3, 0.4, 0.5]),
        ("1:0.5:2,4", [1.0, 1.5, 2.0, 4.0]),
    ],
)
def test_parse_range(text, expected):
    assert parse_range(text) == pytest.approx(expected)


@pytest.mark.parametrize("text", ["", "1,,2", "1:2", "1:0:2", "2:1:1", "a"])
def test_parse_range_rejects(text):
    with pytest.raises(ValueError):
        parse_range(text)


def test_run_config_grids():
    with pytest.raises(ValueError):
        RunConfig(command=Command.KERNEL, T=[0.5, 0.2])
    with pytest.raises(ValueError):
        RunConfig(command=Command.KERNEL, T=[0.0, 0.5])
    with pytest.raises(ValueError):
        RunConfig(command=Command.SERIES, order=99)


# ============ Cells and writers ============

def test_exact_cells():
    assert exact_cells(PAYOFF_PREFACTOR)[:4] == [1, 4, 1, 1]
    assert exact_cells(RationalScalar(2, pi_power=Fraction(-1, 2)))[:4] == [2, 1, "-1/2", 0]
    assert exact_cells(0)[:4] == [0, 1, 0, 0]


def test_format_cell():
    assert format_cell(None, 17) == ""
    assert format_cell(0.5, 17) == "0.5"
    assert format_cell(1.0 / 3.0, 4) == "0.3333"
    assert format_cell("series(4)", 17) == "series(4)"


def _table(**kwargs):
    return Table(columns=["a", "b"], rows=[[1, 0.5], [2, None]], comment="x=1", **kwargs)


def test_write_csv():
    stream = io.StringIO()
    write_csv({"t": _table(failures=["boom"]), "u": _table()}, stream, digits=17)
    assert stream.getvalue() == (
        "# table=t x=1\n# failed: boom\na,b\n1,0.5\n2,\n"
        "\n# table=u x=1\na,b\n1,0.5\n2,\n"
    )


def test_write_json():
    stream = io.StringIO()
    write_json({"t": _table()}, stream)
    payload = json.loads(stream.getvalue())
    assert payload["t"]["rows"] == [[1, 0.5], [2, None]]
    assert payload["t"]["failures"] == []


def test_write_tables_to_files(tmp_path):
    tables = {"t": _table(), "u": _table()}
    written = write_tables(tables, OutputFormat.CSV, str(tmp_path / "run.csv"), io.StringIO())
    assert [p.name for p in written] == ["run_t.csv", "run_u.csv"]
    assert written[0].read_text().startswith("# table=t")

    single = write_tables({"t": _table()}, OutputFormat.JSON, str(tmp_path / "out" / "run.json"), io.StringIO())
    assert json.loads(single[0].read_text())["t"]["columns"] == ["a", "b"]


def test_write_tables_to_stream():
    stream = io.StringIO()
    assert write_tables({"t": _table()}, OutputFormat.CSV, None, stream) == []
    assert stream.getvalue().startswith("# table=t x=1\n")


# ============ Builders ============

def test_series_tables(service):
    tables = service.build(RunConfig(command=Command.SERIES, order=4, sigma0=[1.0]))
    assert set(tables) == {
        "payoff", "payoff_at_sigma0", "value", "value_at_sigma0", "implied_variance", "implied_variance_at_sigma0",
    }
    rows = {row[1]: row for row in tables["implied_variance_at_sigma0"].rows}
    assert rows[2][2:6] == [-4, 45, 0, 0]
    assert tables["payoff"].rows[0][:6] == [0, 0, 1, 4, 1, 1]


def test_price_tables(service):
    tables = service.build(RunConfig(command=Command.PRICE, T=[0.1], sigma0=[0.3], atm=True))
    (row,) = tables["price"].rows
    T, K, sigma0, omega, value, err, sigma_bs, method = row
    assert (T, K, method) == (0.1, 1.0, "quadrature")
    assert value > 0 and err >= 0
    w = sigma0 ** 2
    variance = 1 + T / 6 - (1 + 15 * w) * T ** 2 / 180 + (4 - 161 * w) * T ** 3 / 1680
    assert sigma_bs == pytest.approx(sigma0 * math.sqrt(variance), rel=1e-4)


def test_kernel_failures_are_reported_per_row(service):
    tables = service.build(RunConfig(command=Command.KERNEL, T=[0.5], s=[-1.0, 0.0]))
    table = tables["kernel"]
    assert len(table.failures) == 1
    assert "DomainError" in table.failures[0]
    (row,) = table.rows
    assert row[:2] == [0.5, 0.0]
    assert row[2] == pytest.approx(1.0, rel=1e-10)


def _reciprocal_rows(x):
    if x < 0:
        raise DomainError("negative input")
    return {"t": [[x, 1.0 / x]]}


def test_unexpected_failures_are_reported_per_row():
    results = _map_items(_reciprocal_rows, [2.0, 0.0, -1.0, 4.0], workers=1)
    assert [rows for rows, _ in results] == [{"t": [[2.0, 0.5]]}, None, None, {"t": [[4.0, 0.25]]}]
    assert "unexpected ZeroDivisionError" in results[1][1]
    assert "DomainError: negative input" in results[2][1]
    assert results[0][1] is None


def test_workers_preserve_row_order(service):
    config = RunConfig(command=Command.KERNEL, T=[0.2, 0.5], s=[0.0, 0.5, 1.0])
    serial = service.build(config)["kernel"].rows
    parallel = service.build(config.model_copy(update={"workers": 2}))["kernel"].rows
    assert parallel == serial
    assert [row[:2] for row in serial] == [[T, s] for T in (0.2, 0.5) for s in (0.0, 0.5, 1.0)]


def test_payoff_tables(service):
    tables = service.build(RunConfig(command=Command.PAYOFF, sigma0=[0.5], u=[0.0, 1.0], imag=[0.0, 0.5]))
    rows = tables["payoff"].rows
    assert len(rows) == 4
    assert rows[0][3:5] == [0.0, 0.0]
    real_row = rows[2]
    assert real_row[6] == pytest.approx(real_row[3])
    assert real_row[7] == 0.0


def test_diverge_tables(service):
    tables = service.build(RunConfig(command=Command.DIVERGE, T=[0.5], sigma0=[0.5], order=12))
    assert set(tables) == {"truncation", "partial_sums", "error_bound", "root_test", "radius"}
    cases = [row[0] for row in tables["truncation"].rows]
    assert cases == ["V0", "sigma0=0.5"]
    assert len(tables["partial_sums"].rows) == 2 * 13
    for row in tables["truncation"].rows:
        assert row[-1] < 1e-3 * row[-2]


def test_diverge_radius_rows(service):
    tables = service.build(RunConfig(command=Command.DIVERGE, T=[0.5], sigma0=[0.5], order=20))
    radius = {(case, method): value for case, method, value in tables["radius"].rows}
    assert set(radius) == {(case, method) for case in ("V0", "sigma0=0.5") for method in ("root", "ratio")}
    for value in radius.values():
        assert value == pytest.approx(math.pi, rel=0.02)


def test_scaling_tables(service):
    config = RunConfig(command=Command.SCALING, tau=[0.0, 0.5], sigma0=[25.0], order=20)
    tables = service.build(config)
    sigma_rows = tables["sigma_hat"].rows
    assert sigma_rows[0][2] == 1.0 and sigma_rows[0][-1] is None
    assert len(tables["check"].rows) == 1
    assert len(tables["contour"].rows) == 41
    assert len(tables["critical_points"].rows) == 8
    (radius,) = tables["radius"].rows
    assert radius[1] == pytest.approx(0.662743, rel=1e-5)
