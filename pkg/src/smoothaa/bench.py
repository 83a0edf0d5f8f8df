"""
Experiment specs, the solver x seed cell runner and its CSV outputs.

A spec file is UTF-8 ``key = value`` text. Top-level keys describe the
problem family and the stopping rule; each ``[solver]`` stanza adds one
solver. Example::

    family = bearing
    n = 100
    eps = 0.4
    seeds = 0..9
    tol = 1e-12
    k_max = 20000
    output = bearing_n100

    [solver]
    variant = anderson
    m = 3

    [solver]
    variant = smoothing_anderson
    m = 3

Relative ``output`` paths are resolved against the spec file's directory.
"""

from __future__ import annotations

import csv
import io
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .accel import SolverConfig, SolverError, SMOOTHING_VARIANTS, VARIANTS, run_solver
from .diagnostics import mu_audit, rate_report
from .problems import (
    ConfigurationError,
    bearing_fixed_point_map,
    build_bearing,
    build_enr,
    build_nnls_synthetic,
    enr_fixed_point_map,
    initial_point,
    nnls_fixed_point_map,
)

TRACE_COLUMNS = ("k", "residual", "smooth_residual", "mu", "elapsed_ns")
CELL_COLUMNS = ("solver", "seed", "iterations", "termination", "relative_residual", "final_rate", "elapsed_s")
SUMMARY_COLUMNS = (
    "solver", "variant", "m", "reg", "cells", "converged",
    "mean_iterations", "median_iterations", "mean_final_rate", "total_time_s",
)
FAILED = "-"

FAMILY_KEYS = {
    "bearing": {"n": int, "eps": float},
    "enr": {"M": int, "n": int, "sparsity": float, "noise": float, "step_factor": float},
    "nnls": {"M": int, "n": int, "condition": float, "lambda": float, "gram_scale": float},
}
FAMILY_DEFAULTS = {
    "bearing": {"n": 100, "eps": 0.4},
    "enr": {"M": 200, "n": 400, "sparsity": 0.1, "noise": 0.1, "step_factor": 1.8},
    "nnls": {"M": 500, "n": 200, "condition": 2.1e4, "lambda": 0.1, "gram_scale": 15.0},
}
COMMON_KEYS = {"name", "family", "seeds", "tol", "k_max", "output", "u0_scale", "timing"}
SOLVER_KEYS = {"variant", "m", "reg"}


class SpecError(ValueError):
    """A spec file that does not parse or validate; message carries ``file:line``."""


@dataclass(frozen=True)
class SolverSpec:
    variant: str
    m: int = 0
    reg: float = 0.0

    @property
    def label(self):
        s = f"{self.variant}-m{self.m}"
        return s if self.reg == 0 else f"{s}-reg{self.reg:g}"


@dataclass
class ExperimentSpec:
    family: str
    params: dict
    solvers: list
    seeds: list
    tol: float = 1e-10
    k_max: int = 1000
    output: Path = Path("out")
    u0_scale: float | None = None
    timing: bool = True
    name: str = "experiment"
    source: str = "<spec>"

    def validate(self):
        if self.family not in FAMILY_KEYS:
            raise SpecError(f"unknown family {self.family!r}")
        if not self.solvers:
            raise SpecError("spec needs at least one [solver] stanza")
        if not self.seeds:
            raise SpecError("spec needs at least one seed")
        labels = [s.label for s in self.solvers]
        if len(set(labels)) != len(labels):
            raise SpecError(f"duplicate solver stanzas: {labels}")
        for s in self.solvers:
            self.config(s)

    def config(self, solver):
        try:
            return SolverConfig(variant=solver.variant, depth_m=solver.m, tol=self.tol,
                                k_max=self.k_max, ls_regularization=solver.reg)
        except SolverError as exc:
            raise SpecError(str(exc)) from None

    def to_text(self):
        lines = [f"name = {self.name}", f"family = {self.family}"]
        lines += [f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}" for k, v in self.params.items()]
        lines += [
            f"seeds = {', '.join(str(s) for s in self.seeds)}",
            f"tol = {self.tol!r}",
            f"k_max = {self.k_max}",
            f"output = {self.output}",
            f"timing = {'on' if self.timing else 'off'}",
        ]
        if self.u0_scale is not None:
            lines.append(f"u0_scale = {self.u0_scale!r}")
        for s in self.solvers:
            lines += ["", "[solver]", f"variant = {s.variant}", f"m = {s.m}", f"reg = {s.reg!r}"]
        return "\n".join(lines) + "\n"


def parse_seeds(text):
    seeds = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


def _bool(text):
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def parse_spec(text, source="<spec>", base_dir=None):
    """Parse spec text into a validated :class:`ExperimentSpec`."""
    top = {}
    solvers = []
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("["):
            if line != "[solver]":
                raise SpecError(f"{where}: unknown section {line!r}")
            current = {"__line__": lineno}
            solvers.append(current)
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise SpecError(f"{where}: expected 'key = value', got {raw.strip()!r}")
        target = top if current is None else current
        if key in target:
            raise SpecError(f"{where}: duplicate key {key!r}")
        target[key] = (value, lineno)

    def get(d, key, conv, default=None):
        if key not in d:
            return default
        value, lineno = d[key]
        try:
            return conv(value)
        except ValueError as exc:
            raise SpecError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None

    if "family" not in top:
        raise SpecError(f"{source}:1: missing required key 'family'")
    family = top["family"][0]
    if family not in FAMILY_KEYS:
        raise SpecError(f"{source}:{top['family'][1]}: unknown family {family!r}")
    allowed = COMMON_KEYS | set(FAMILY_KEYS[family])
    for key, (_, lineno) in top.items():
        if key not in allowed:
            raise SpecError(f"{source}:{lineno}: unknown key {key!r} for family {family!r}")
    params = dict(FAMILY_DEFAULTS[family])
    for key, conv in FAMILY_KEYS[family].items():
        params[key] = get(top, key, conv, params[key])

    specs = []
    for st in solvers:
        for key, item in st.items():
            if key != "__line__" and key not in SOLVER_KEYS:
                raise SpecError(f"{source}:{item[1]}: unknown solver key {key!r}")
        if "variant" not in st:
            raise SpecError(f"{source}:{st['__line__']}: [solver] stanza without 'variant'")
        variant = st["variant"][0]
        if variant not in VARIANTS:
            raise SpecError(f"{source}:{st['variant'][1]}: unknown variant {variant!r}")
        specs.append(SolverSpec(variant, get(st, "m", int, 0), get(st, "reg", float, 0.0)))

    output = Path(get(top, "output", str, "out"))
    if base_dir is not None and not output.is_absolute():
        output = Path(base_dir) / output
    spec = ExperimentSpec(
        family=family,
        params=params,
        solvers=specs,
        seeds=get(top, "seeds", parse_seeds, []),
        tol=get(top, "tol", float, 1e-10),
        k_max=get(top, "k_max", int, 1000),
        output=output,
        u0_scale=get(top, "u0_scale", float, None),
        timing=get(top, "timing", _bool, True),
        name=get(top, "name", str, "experiment"),
        source=source,
    )
    try:
        spec.validate()
    except SpecError as exc:
        raise SpecError(f"{source}: {exc}") from None
    return spec


def load_spec(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecError(f"{path}: {exc.strerror}") from None
    return parse_spec(text, source=str(path), base_dir=path.parent)


def build_instance(spec, seed):
    p = spec.params
    try:
        if spec.family == "bearing":
            inst = build_bearing(p["n"], p["eps"])
            return inst, bearing_fixed_point_map(inst)
        if spec.family == "enr":
            inst = build_enr(p["M"], p["n"], p["sparsity"], p["noise"], seed=seed, step_factor=p["step_factor"])
            return inst, enr_fixed_point_map(inst)
        inst = build_nnls_synthetic(p["M"], p["n"], p["condition"], seed=seed, lam=p["lambda"],
                                    gram_scale=p["gram_scale"])
        return inst, nnls_fixed_point_map(inst)
    except ConfigurationError as exc:
        raise SpecError(f"{spec.source}: {exc}") from None


@dataclass
class Cell:
    solver: SolverSpec
    seed: int
    report: object
    instance: object = None
    problem: object = None

    @property
    def failed(self):
        return self.report.termination in ("k_max_reached", "numerical_breakdown")


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    cells: list = field(default_factory=list)

    def by_solver(self, label):
        return [c for c in self.cells if c.solver.label == label]

    def mean_iterations(self, label):
        return statistics.fmean(c.report.iterations for c in self.by_solver(label))


def run_experiment(spec, threads=1):
    """Run every (solver, seed) cell; results come back in spec order."""
    instances = {}
    shared = spec.family == "bearing"
    for seed in spec.seeds:
        if shared and instances:
            instances[seed] = next(iter(instances.values()))
        else:
            instances[seed] = build_instance(spec, seed)
    jobs = [(s, seed) for s in spec.solvers for seed in spec.seeds]

    def work(job):
        solver, seed = job
        inst, problem = instances[seed]
        u0 = initial_point(spec.family, problem.dim, seed, spec.u0_scale)
        report = run_solver(problem, u0, spec.config(solver))
        return Cell(solver, seed, report, inst, problem)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(work, jobs))
    else:
        cells = [work(j) for j in jobs]
    return ExperimentResult(spec, cells)


def _num(x):
    return "%.17g" % x


def trace_rows(report, timing=True):
    smoothing = report.variant in SMOOTHING_VARIANTS
    rows = []
    for k, res in enumerate(report.residual_history):
        smooth = mu = ""
        if smoothing:
            if k < len(report.smooth_residual_history):
                smooth = _num(report.smooth_residual_history[k])
            if k < len(report.mu_history):
                mu = _num(report.mu_history[k])
        elapsed = str(report.elapsed_ns_history[k]) if timing else ""
        rows.append((str(k), _num(res), smooth, mu, elapsed))
    return rows


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def trace_filename(cell):
    return f"trace_{cell.solver.label}_seed{cell.seed}.csv"


def write_outputs(result):
    """Write per-cell traces, ``cells.csv`` and ``summary.csv``; return the output dir."""
    spec = result.spec
    out = Path(spec.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "spec.txt").write_text(spec.to_text(), encoding="utf-8")
    for cell in result.cells:
        _write_csv(out / trace_filename(cell), TRACE_COLUMNS, trace_rows(cell.report, spec.timing))

    cell_rows = []
    for c in result.cells:
        r = c.report
        cell_rows.append((
            c.solver.label, str(c.seed), FAILED if c.failed else str(r.iterations), r.termination,
            _num(r.relative_residual), _num(r.final_rate), _num(r.elapsed) if spec.timing else "",
        ))
    _write_csv(out / "cells.csv", CELL_COLUMNS, cell_rows)

    summary = []
    for s in spec.solvers:
        cells = result.by_solver(s.label)
        ok = [c for c in cells if not c.failed]
        its = [c.report.iterations for c in ok]
        any_failed = len(ok) < len(cells)
        summary.append((
            s.label, s.variant, str(s.m), _num(s.reg), str(len(cells)), str(len(ok)),
            FAILED if any_failed or not its else _num(statistics.fmean(its)),
            FAILED if any_failed or not its else _num(statistics.median(its)),
            _num(statistics.fmean(c.report.final_rate for c in cells)),
            _num(sum(c.report.elapsed for c in cells)) if spec.timing else "",
        ))
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    return out


def read_trace(path):
    """Load a trace CSV into column lists; raises ``SpecError`` on schema mismatch."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SpecError(f"{path}: empty trace file") from None
        missing = [c for c in TRACE_COLUMNS if c not in header]
        if missing:
            raise SpecError(f"{path}: missing trace columns {missing}")
        idx = {c: header.index(c) for c in TRACE_COLUMNS}
        cols = {c: [] for c in TRACE_COLUMNS}
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise SpecError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            for c in TRACE_COLUMNS:
                cols[c].append(row[idx[c]])
    return cols


def files_identical(dir_a, dir_b, pattern="trace_*.csv"):
    """True when both directories hold byte-identical files matching ``pattern``."""
    a = sorted(p.name for p in Path(dir_a).glob(pattern))
    b = sorted(p.name for p in Path(dir_b).glob(pattern))
    if a != b or not a:
        return False
    return all((Path(dir_a) / n).read_bytes() == (Path(dir_b) / n).read_bytes() for n in a)


RATE_COLUMNS = ("k", "r_factor", "q_factor")


def trace_rates(cols):
    """Rate curves and tail summary for a trace loaded with :func:`read_trace`.

    Returns ``(rows, summary)``: one row per ``k >= 1`` and an ordered list
    of ``(key, value)`` pairs.
    """
    res = [float(x) for x in cols["residual"]]
    if not res:
        raise SpecError("trace has no rows")
    smooth = [float(x) for x in cols["smooth_residual"] if x != ""]
    mu = [float(x) for x in cols["mu"] if x != ""]
    rep = rate_report(res, smooth)
    rows = []
    for k in range(1, len(res)):
        q = rep.q_factor_curve[k - 1] if k - 1 < len(rep.q_factor_curve) else None
        rows.append((str(k), _num(rep.r_factor_curve[k - 1]), "" if q is None else _num(q)))
    K = len(res) - 1
    final = (res[-1] / res[0]) ** (1.0 / K) if K > 0 and res[0] > 0 else 0.0
    summary = [
        ("iterations", str(K)),
        ("tail_length", str(rep.tail_length)),
        ("tail_r_estimate", _num(rep.tail_r_estimate)),
        ("tail_q_estimate", "" if rep.tail_q_estimate is None else _num(rep.tail_q_estimate)),
        ("final_rate", _num(final)),
        ("mu_ratio", _num(mu_audit(mu)[1]) if len(mu) >= 2 else ""),
        ("mu_monotone", str(mu_audit(mu)[0]).lower() if len(mu) >= 2 else ""),
    ]
    return rows, summary


def write_rates(trace_path, out_dir=None):
    """Write ``<stem>_rates.csv`` and ``<stem>_rates_summary.csv`` next to the trace."""
    trace_path = Path(trace_path)
    out_dir = trace_path.parent if out_dir is None else Path(out_dir)
    rows, summary = trace_rates(read_trace(trace_path))
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = trace_path.stem
    curves = out_dir / f"{stem}_rates.csv"
    summ = out_dir / f"{stem}_rates_summary.csv"
    _write_csv(curves, RATE_COLUMNS, rows)
    _write_csv(summ, ("key", "value"), summary)
    return curves, summ, summary
