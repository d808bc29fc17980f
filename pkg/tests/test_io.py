"""Spec parsing, report schemas, plots and the command line."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polymerchain.cli import bundled_spec, main
from polymerchain.config import KINDS, parse_spec, parse_text
from polymerchain.errors import ParseError, SchemaMismatch, ValidationError
from polymerchain.model import MINUS, PLUS
from polymerchain.plot import plot, read_csv, render
from polymerchain.runner import SCHEMAS, VERBS, format_value, output_path, run

GOLDEN = Path(__file__).parent / "golden"

MODEL = """[model]
plus.t = 1 1
plus.v = 0.5 0.5
minus.t = 1, 1
minus.v = -0.5 -0.5
p_plus = {p}
"""


def spec_text(experiment, p=0.5):
    return MODEL.format(p=p) + "\n[experiment]\n" + experiment


def test_parse_bundled_dimer():
    spec = parse_spec(bundled_spec("dimer_0.5.spec"))
    assert spec.kind == "critical_scan"
    assert spec.ensemble.plus.v.tolist() == [0.5, 0.5]
    assert spec.ensemble.minus.v.tolist() == [-0.5, -0.5]


def test_every_bundled_spec_parses():
    names = sorted(p.name for p in bundled_spec("x").parent.iterdir() if p.suffix == ".spec")
    assert len(names) >= 12
    for name in names:
        assert parse_spec(bundled_spec(name)).kind in KINDS


def test_dimer_shorthand_and_defaults():
    spec = parse_text("[model]\ndimer = 0.3\n[experiment]\nkind = lyapunov_sweep\neps = 0.1 0.2\n")
    assert spec.ensemble.plus.v.tolist() == [0.3, 0.3]
    assert spec.seed == 0 and spec.get("n_polymers") == 1000 and spec.get("workers") == 1
    assert spec.get("eps").tolist() == [0.1, 0.2]


def test_probability_out_of_range_names_key_and_line():
    with pytest.raises(ValidationError) as exc:
        parse_text(spec_text("kind = critical_scan\n", p=1.2))
    assert exc.value.key == "p_plus" and exc.value.line == 6
    assert "p_plus" in str(exc.value) and "line 6" in str(exc.value)


def test_misspelled_key_gets_a_suggestion():
    with pytest.raises(ParseError) as exc:
        parse_text("[model]\npolimer = 0.5\n")
    assert exc.value.key == "polimer" and exc.value.line == 2
    assert "did you mean" in str(exc.value)
    with pytest.raises(ParseError) as exc:
        parse_text(spec_text("kind = lyapunov_sweep\neps = 0.1\nn_polymer = 10\n"))
    assert "n_polymers" in str(exc.value)


@pytest.mark.parametrize("text", [
    "[modle]\n",
    "[model]\ndimer 0.5\n",
    "dimer = 0.5\n",
    "[model]\ndimer = 0.5\ndimer = 0.6\n",
    "[model]\ndimer = abc\n",
    "[model]\ndimer =\n",
])
def test_malformed_text(text):
    with pytest.raises(ParseError):
        parse_text(text)


@pytest.mark.parametrize("experiment", [
    "kind = critical_scann\n",
    "kind = lyapunov_sweep\n",
    "kind = lyapunov_sweep\neps = 0 0.1\n",
    "kind = lyapunov_sweep\neps = 0.1\nn_polymers = -3\n",
    "kind = levels\nN = 100\nquantile = 1.5\n",
    "kind = transport\nT = 10\nconfiguration = periodic\n",
    "kind = transport_exponents\nT = 1 2 3\nn_samples = 2\n",
    "kind = critical_scan\nN = 100\n",
    "kind = lyapunov_sweep\neps = 0.1\ncritical = false\n",
    "seed = 1\n",
])
def test_invalid_experiments(experiment):
    with pytest.raises(ValidationError):
        parse_text(spec_text(experiment))


def test_model_needs_all_arrays():
    with pytest.raises(ValidationError):
        parse_text("[model]\nplus.t = 1\nplus.v = 0\n[experiment]\nkind = critical_scan\n")
    with pytest.raises(ValidationError):
        parse_text("[model]\nplus.t = 1 1\nplus.v = 0\nminus.t = 1\nminus.v = 0\n"
                   "[experiment]\nkind = critical_scan\n")


@given(st.floats(0.01, 0.99), st.integers(0, 2**31 - 1),
       st.lists(st.floats(0.001, 0.5), min_size=1, max_size=6))
def test_spec_roundtrip(p, seed, eps):
    text = spec_text(f"kind = lyapunov_sweep\nseed = {seed}\neps = "
                     + " ".join(repr(e) for e in eps) + "\n", p=repr(p))
    spec = parse_text(text)
    assert spec.ensemble.p_plus == p and spec.seed == seed
    assert spec.get("eps").tolist() == eps


def test_format_value_round_trips():
    for x in (0.1, 1 / 3, -2.2204460492503131e-16, 1e300):
        assert float(format_value(x)) == x
    assert format_value(np.int64(3)) == "3" and format_value(True) == "1"


def test_critical_scan_matches_golden():
    report = run(parse_spec(bundled_spec("dimer_0.5.spec")))
    rows = list(csv.reader(report.to_csv().splitlines()))
    gold = list(csv.reader((GOLDEN / "critical_dimer_0.5.csv").read_text().splitlines()))
    assert rows[0] == gold[0] == SCHEMAS["critical_scan"]
    assert len(rows) == len(gold) == 3
    got = np.array(rows[1:], dtype=float)
    want = np.array(gold[1:], dtype=float)
    assert np.allclose(got, want, rtol=1e-12, atol=1e-12)


def test_report_columns_follow_schemas():
    checks = {
        "critical_two_one.spec": 1,
        "critical_dimer_1.5.spec": 0,
    }
    for name, n in checks.items():
        report = run(parse_spec(bundled_spec(name)))
        assert report.columns == SCHEMAS[report.kind]
        assert len(report.rows) == n
        assert all(len(r) == len(report.columns) for r in report.rows)


def test_small_runs_of_every_kind(tmp_path):
    cases = {
        "lyapunov_sweep": "eps = 0.05 0.1\nn_polymers = 50\nn_samples = 4\n",
        "ids_sweep": "eps = -0.01 0.01\nN = 200\nn_samples = 4\n",
        "levels": "N = 400\nn_samples = 4\ncalibration_samples = 4\n",
        "deviations": "N = 64 128\nn_samples = 8\n",
        "transport": "T = 4 8\nradius = 60\n",
        "identities": "n_instances = 10\n",
    }
    for kind, body in cases.items():
        spec = parse_text(spec_text(f"kind = {kind}\n" + body))
        report = run(spec)
        assert report.columns == SCHEMAS[kind]
        assert report.rows and all(len(r) == len(report.columns) for r in report.rows)
        out = output_path(spec, tmp_path)
        assert out.name == f"{kind}.csv"
    ident = run(parse_text(spec_text("kind = identities\nn_instances = 20\n")))
    assert all(r[4] for r in ident.rows)


def test_reports_identical_across_workers():
    body = "kind = lyapunov_sweep\neps = 0.05 0.1\nn_polymers = 100\nn_samples = 150\nseed = 4\n"
    spec = parse_text(spec_text(body))
    assert run(spec, workers=1).to_csv() == run(spec, workers=3).to_csv()


def test_svg_matches_golden(tmp_path):
    out = plot(GOLDEN / "lyapunov_small.csv", "lyapunov", tmp_path / "a.svg")
    assert out.read_text() == (GOLDEN / "lyapunov_small.svg").read_text()


def test_svg_contents():
    T = np.array([10.0, 20.0, 40.0, 80.0])
    svg = render("transport", {"T": T, "M_green": T ** 1.5, "M_oracle": T ** 1.5,
                               "beta_window": np.full(4, 0.75)}, q=2)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert "T^1.5 (random)" in svg and "T^1 (every configuration)" in svg
    assert svg.count("<polyline") == 3
    svg = render("ids", {"eps": np.array([-0.01, 0.01]), "ids_mc": np.array([0.58, 0.585]),
                         "ids_formula": np.array([0.58, 0.585])})
    assert "linear formula" in svg


def test_plot_rejects_bad_csv(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(SchemaMismatch):
        read_csv(empty, "lyapunov")
    header = tmp_path / "header.csv"
    header.write_text("eps,gamma_mc,gamma_stderr,gamma_formula\n")
    with pytest.raises(SchemaMismatch):
        read_csv(header, "lyapunov")
    with pytest.raises(SchemaMismatch):
        read_csv(GOLDEN / "critical_dimer_0.5.csv", "transport")
    with pytest.raises(SchemaMismatch):
        plot(GOLDEN / "lyapunov_small.csv", "histogram")


def test_cli_scan(tmp_path, capsys):
    assert main(["scan-critical", "dimer_0.5", "--out", str(tmp_path)]) == 0
    text = (tmp_path / "critical_dimer_0.5.csv").read_text()
    assert text.splitlines()[0] == ",".join(SCHEMAS["critical_scan"])
    assert "critical energies: -0.5, 0.5" in capsys.readouterr().out


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.spec"
    bad.write_text(spec_text("kind = critical_scan\n", p=1.2))
    assert main(["run", str(bad)]) == 2
    assert "p_plus" in capsys.readouterr().err
    typo = tmp_path / "typo.spec"
    typo.write_text("[model]\npolimer = 0.5\n")
    assert main(["run", str(typo)]) == 2
    assert "did you mean 'dimer'" in capsys.readouterr().err
    assert main(["lyapunov", "dimer_0.5"]) == 2
    assert main(["run", str(tmp_path / "missing.spec")]) == 2
    # a transport window smaller than the packet front is a numerical failure
    small = tmp_path / "small.spec"
    small.write_text(spec_text("kind = transport\nT = 50\nradius = 20\n"))
    assert main(["run", str(small), "--out", str(tmp_path)]) == 3
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["plot", str(empty), "--kind", "ids"]) == 2


def test_cli_seed_and_threads_flags(tmp_path):
    s = tmp_path / "ly.spec"
    s.write_text(spec_text("kind = lyapunov_sweep\neps = 0.1\nn_polymers = 50\nn_samples = 70\n"
                           "seed = 1\n") + "[output]\ncsv = ly.csv\n")
    assert main(["lyapunov", str(s), "--out", str(tmp_path / "a"), "--seed", "9"]) == 0
    assert main(["lyapunov", str(s), "--out", str(tmp_path / "b"), "--seed", "9",
                 "--threads", "2", "--svg"]) == 0
    a = (tmp_path / "a" / "ly.csv").read_bytes()
    assert a == (tmp_path / "b" / "ly.csv").read_bytes()
    assert (tmp_path / "b" / "ly.svg").exists()
    assert main(["lyapunov", str(s), "--out", str(tmp_path / "c")]) == 0
    assert (tmp_path / "c" / "ly.csv").read_bytes() != a


def test_cli_lists_specs(capsys):
    assert main(["list-specs"]) == 0
    assert "dimer_0.5.spec" in capsys.readouterr().out


def test_verbs_cover_kinds():
    assert sorted(VERBS.values()) == sorted(KINDS)
    assert PLUS == 1 and MINUS == -1
