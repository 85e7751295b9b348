import json

import pytest

from app.cli import EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, build_parser, config_from_args, main
from app.models.schemas import Command


def _data_lines(text):
    return [line for line in text.splitlines() if line and not line.startswith("#")]


def test_kernel_table_on_stdout(capsys):
    assert main(["kernel", "--T", "0.5", "--s", "0,1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("# table=kernel command=kernel")
    header, first, second = _data_lines(out)
    assert header == "T,s,G"
    T, s, G = first.split(",")
    assert (T, s) == ("0.5", "0")
    assert float(G) == pytest.approx(1.0, rel=1e-10)
    assert float(second.split(",")[2]) < 1.0


def test_numerical_failure_exits_one(capsys):
    assert main(["kernel", "--T", "0.5", "--s=-1,0"]) == EXIT_NUMERICAL
    out = capsys.readouterr().out
    assert "# failed:" in out
    assert len(_data_lines(out)) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["kernel", "--T", "0,0.5"],
        ["kernel", "--T", "1:0:2"],
        ["kernel", "--T", "0.5,0.2"],
        ["series", "--order", "99"],
        ["bogus"],
        [],
    ],
)
def test_usage_errors_exit_two(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK
    assert "price" in capsys.readouterr().out


def test_order_defaults():
    parser = build_parser()
    assert config_from_args(parser.parse_args(["series"])).order == 12
    assert config_from_args(parser.parse_args(["scaling"])).order == 20
    assert config_from_args(parser.parse_args(["diverge"])).order == 24
    config = config_from_args(parser.parse_args(["price", "--atm", "--T", "0.1:0.1:0.3"]))
    assert config.command is Command.PRICE and config.atm
    assert config.T == pytest.approx([0.1, 0.2, 0.3])


def test_json_output(capsys):
    assert main(["series", "--order", "2", "--sigma0", "1", "--format", "json"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    rows = {row[1]: row for row in payload["implied_variance_at_sigma0"]["rows"]}
    assert rows[1][2:4] == [1, 6]


def test_out_file(tmp_path, capsys):
    target = tmp_path / "kernel.csv"
    assert main(["kernel", "--T", "0.5", "--s", "0", "--out", str(target)]) == EXIT_OK
    assert capsys.readouterr().out == ""
    assert _data_lines(target.read_text())[0] == "T,s,G"


def _price_values(capsys, argv):
    assert main(argv) == EXIT_OK
    header, *rows = _data_lines(capsys.readouterr().out)
    column = header.split(",").index("value")
    return [float(row.split(",")[column]) for row in rows]


def test_price_grid_is_monotone_in_maturity(capsys):
    values = _price_values(capsys, ["price", "--atm", "--sigma0", "0.3", "--T", "0.1:0.1:0.4"])
    assert len(values) == 4
    assert all(b > a for a, b in zip(values, values[1:]))


def test_price_omega_scaling(capsys):
    (scaled,) = _price_values(capsys, ["price", "--omega", "2", "--sigma0", "0.6", "--T", "0.25"])
    (unit,) = _price_values(capsys, ["price", "--omega", "1", "--sigma0", "0.3", "--T", "1.0"])
    assert scaled == pytest.approx(unit, rel=1e-12)
