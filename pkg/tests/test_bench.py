import csv
import statistics

import numpy as np
import pytest

from smoothaa.bench import (
    FAILED,
    TRACE_COLUMNS,
    ExperimentSpec,
    SolverSpec,
    SpecError,
    files_identical,
    load_spec,
    parse_seeds,
    parse_spec,
    run_experiment,
    trace_rates,
    write_outputs,
)
from smoothaa.cli import main

BEARING_SPEC = """\
# Table-style bearing comparison
family = bearing
n = 100
eps = 0.4
seeds = 0..9
tol = 1e-12
k_max = 20000
output = out
timing = off

[solver]
variant = anderson
m = 3

[solver]
variant = smoothing_anderson
m = 3
"""


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write(tmp_path, text, name="exp.spec"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# --- parsing ------------------------------------------------------------------


def test_parse_seeds():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("1, 5,7") == [1, 5, 7]
    assert parse_seeds("0..1, 9") == [0, 1, 9]


def test_parse_full_spec(tmp_path):
    spec = load_spec(write(tmp_path, BEARING_SPEC))
    assert spec.family == "bearing" and spec.params == {"n": 100, "eps": 0.4}
    assert spec.seeds == list(range(10))
    assert [s.label for s in spec.solvers] == ["anderson-m3", "smoothing_anderson-m3"]
    assert spec.output == tmp_path / "out"
    assert spec.timing is False


def test_round_trip_text():
    spec = parse_spec(BEARING_SPEC)
    again = parse_spec(spec.to_text())
    assert again.to_text() == spec.to_text()


@pytest.mark.parametrize("text, where, what", [
    ("family = bearing\nseeds =\n[solver]\nvariant = picard\n", "", "seed"),
    ("family = bearing\nseeds = 0\nbogus = 1\n[solver]\nvariant = picard\n", ":3:", "unknown key"),
    ("family = bearing\nseeds = 0\n[solver]\nvariant = picard\ncolour = red\n", ":5:", "unknown solver key"),
    ("family = bearing\nseeds = 0\n[solver]\nvariant = fancy\n", ":4:", "unknown variant"),
    ("family = bearing\nseeds = 0\n", "", "solver"),
    ("family = comet\n", ":1:", "unknown family"),
    ("seeds = 0\n", ":1:", "family"),
    ("family = bearing\nseeds = 0\ntol = abc\n[solver]\nvariant = picard\n", ":3:", "tol"),
    ("family = bearing\nseeds = 0\ntol = 2\n[solver]\nvariant = picard\n", "", "tol"),
    ("family = bearing\nseeds = 0\nthis line is wrong\n", ":3:", "key = value"),
    ("family = bearing\nseeds = 0\n[runner]\n", ":3:", "section"),
    ("family = bearing\nseeds = 0\nseeds = 1\n", ":3:", "duplicate"),
    ("family = enr\nseeds = 0\nsparsity = 2\n[solver]\nvariant = picard\n", "", ""),
])
def test_spec_errors(text, where, what):
    with pytest.raises(SpecError) as exc:
        spec = parse_spec(text, source="s.spec")
        run_experiment(spec)
    msg = str(exc.value)
    assert msg.startswith("s.spec")
    assert where in msg and what in msg


def test_family_specific_keys_rejected_elsewhere():
    with pytest.raises(SpecError, match="unknown key 'eps'"):
        parse_spec("family = enr\neps = 0.1\nseeds = 0\n[solver]\nvariant = picard\n")


# --- running ------------------------------------------------------------------


def small_spec(tmp_path, **kw):
    base = dict(family="enr", params={"M": 20, "n": 30, "sparsity": 0.1, "noise": 0.1, "step_factor": 1.8},
                solvers=[SolverSpec("picard"), SolverSpec("anderson", 2), SolverSpec("smoothing_anderson", 2)],
                seeds=[0, 1, 2], tol=1e-8, k_max=2000, output=tmp_path / "out", timing=False)
    base.update(kw)
    return ExperimentSpec(**base)


def test_outputs_schema(tmp_path):
    res = run_experiment(small_spec(tmp_path))
    out = write_outputs(res)
    for c in res.cells:
        rows = read_csv(out / f"trace_{c.solver.label}_seed{c.seed}.csv")
        assert tuple(rows[0].keys()) == TRACE_COLUMNS
        assert len(rows) == c.report.iterations + 1
        assert [int(r["k"]) for r in rows] == list(range(len(rows)))
        for r, v in zip(rows, c.report.residual_history):
            assert float(r["residual"]) == v  # 17 significant digits round-trip
        if not c.solver.variant.startswith("smoothing"):
            assert all(r["smooth_residual"] == "" and r["mu"] == "" for r in rows)
        else:
            assert all(r["mu"] != "" for r in rows)
    summary = read_csv(out / "summary.csv")
    assert [s["solver"] for s in summary] == ["picard-m0", "anderson-m2", "smoothing_anderson-m2"]
    for s in summary:
        cells = res.by_solver(s["solver"])
        if all(c.report.converged for c in cells):
            assert float(s["mean_iterations"]) == statistics.fmean(c.report.iterations for c in cells)
        else:
            assert s["mean_iterations"] == FAILED
    assert any(s["mean_iterations"] != FAILED for s in summary)


def test_failed_cells_marked(tmp_path):
    res = run_experiment(small_spec(tmp_path, k_max=3))
    out = write_outputs(res)
    summary = read_csv(out / "summary.csv")
    assert all(s["mean_iterations"] == FAILED and s["median_iterations"] == FAILED for s in summary)
    cells = read_csv(out / "cells.csv")
    assert all(c["iterations"] == FAILED and c["termination"] == "k_max_reached" for c in cells)


def test_timing_recorded_when_on(tmp_path):
    res = run_experiment(small_spec(tmp_path, timing=True))
    out = write_outputs(res)
    rows = read_csv(out / "trace_anderson-m2_seed0.csv")
    ns = [int(r["elapsed_ns"]) for r in rows]
    assert ns[0] == 0 and all(b >= a for a, b in zip(ns, ns[1:]))


def test_threads_match_serial(tmp_path):
    a = write_outputs(run_experiment(small_spec(tmp_path, output=tmp_path / "serial"), threads=1))
    b = write_outputs(run_experiment(small_spec(tmp_path, output=tmp_path / "threads"), threads=3))
    assert files_identical(a, b)
    assert (a / "summary.csv").read_bytes() == (b / "summary.csv").read_bytes()


def test_files_identical_detects_difference(tmp_path):
    a = write_outputs(run_experiment(small_spec(tmp_path, output=tmp_path / "a")))
    b = write_outputs(run_experiment(small_spec(tmp_path, output=tmp_path / "b", tol=1e-6)))
    assert not files_identical(a, b)


# --- CLI ----------------------------------------------------------------------


def test_cli_run_bearing_example(tmp_path, capsys):
    spec = write(tmp_path, BEARING_SPEC)
    assert main(["--quiet", "run", str(spec)]) == 0
    out = tmp_path / "out"
    summary = {s["solver"]: s for s in read_csv(out / "summary.csv")}
    assert float(summary["smoothing_anderson-m3"]["mean_iterations"]) < float(summary["anderson-m3"]["mean_iterations"])
    first = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    assert main(["--quiet", "run", str(spec)]) == 0
    assert {p.name: p.read_bytes() for p in out.glob("*.csv")} == first
    # the emitted trace supports the mu audit: last / first mu below 1e-2
    assert main(["--quiet", "rates", str(out / "trace_smoothing_anderson-m3_seed0.csv")]) == 0
    rates = dict(csv.reader(open(out / "trace_smoothing_anderson-m3_seed0_rates_summary.csv")))
    assert float(rates["mu_ratio"]) < 1e-2


def test_cli_bad_spec_exit(tmp_path, capsys):
    spec = write(tmp_path, "family = bearing\nseeds =\n[solver]\nvariant = anderson\n")
    assert main(["run", str(spec)]) != 0
    err = capsys.readouterr().err
    assert "exp.spec" in err and "seed" in err
    assert main(["run", str(tmp_path / "missing.spec")]) != 0


def test_cli_rates_geometric(tmp_path):
    trace = tmp_path / "geo.csv"
    lines = ["k,residual,smooth_residual,mu,elapsed_ns"]
    lines += [f"{k},{0.5 ** k!r},{0.5 ** k!r},{0.5 ** (k / 2)!r},{k}" for k in range(41)]
    trace.write_text("\n".join(lines) + "\n")
    assert main(["--quiet", "rates", str(trace)]) == 0
    summary = dict(csv.reader(open(tmp_path / "geo_rates_summary.csv")))
    assert float(summary["tail_r_estimate"]) == pytest.approx(0.5, rel=1e-12)
    assert float(summary["tail_q_estimate"]) == pytest.approx(0.5, rel=1e-12)
    assert summary["tail_length"] == "10" and summary["iterations"] == "40"
    curves = read_csv(tmp_path / "geo_rates.csv")
    assert len(curves) == 40 and all(float(r["r_factor"]) == pytest.approx(0.5) for r in curves)


def test_cli_rates_schema_error(tmp_path, capsys):
    trace = tmp_path / "bad.csv"
    trace.write_text("k,residual\n0,1.0\n")
    assert main(["rates", str(trace)]) != 0
    assert "missing trace columns" in capsys.readouterr().err


def test_trace_rates_picard_has_no_q():
    cols = {c: [] for c in TRACE_COLUMNS}
    for k in range(10):
        for c, v in zip(TRACE_COLUMNS, (str(k), repr(0.9 ** k), "", "", "")):
            cols[c].append(v)
    rows, summary = trace_rates(cols)
    s = dict(summary)
    assert s["tail_q_estimate"] == "" and s["mu_ratio"] == ""
    assert all(r[2] == "" for r in rows)


def test_nnls_tail_estimate_ordering(tmp_path):
    # tail r-estimates from the rates command, averaged over seeds 0..9
    spec = write(tmp_path, """\
family = nnls
M = 500
n = 200
condition = 2.1e4
seeds = 0..9
tol = 1e-9
k_max = 2500
u0_scale = 8
timing = off
output = nnls

[solver]
variant = anderson
m = 3

[solver]
variant = smoothing_anderson
m = 3
""")
    assert main(["--quiet", "run", str(spec)]) == 0
    tails = {}
    for v in ("anderson", "smoothing_anderson"):
        vals = []
        for s in range(10):
            main(["--quiet", "rates", str(tmp_path / "nnls" / f"trace_{v}-m3_seed{s}.csv")])
            summ = dict(csv.reader(open(tmp_path / "nnls" / f"trace_{v}-m3_seed{s}_rates_summary.csv")))
            vals.append(float(summ["tail_r_estimate"]))
        tails[v] = np.mean(vals)
    assert tails["smoothing_anderson"] < tails["anderson"]


def test_cli_threads_flag_validation(capsys):
    assert main(["--threads", "0", "rates", "x.csv"]) == 2
