"""
Desk-scale reproduction suite with one check per acceptance criterion.

Solver runs go through the same spec files and CSV writers as ``run``;
specs are written to ``<outdir>/specs``, traces to ``<outdir>/runs`` and a
second pass to ``<outdir>/rerun`` for the determinism check. Traces are
written with timing off so that reruns are byte-identical; wall-clock per
criterion is reported instead.
"""

from __future__ import annotations

import csv
import itertools
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import accel
from .bench import ExperimentSpec, SolverSpec, files_identical, load_spec, run_experiment, write_outputs
from .diagnostics import (
    RATE_SLACK,
    enr_optimality_bound,
    enr_optimality_check,
    lcp_complementarity_check,
    mu_audit,
    rate_report,
)
from .problems import bearing_fixed_point_map, bearing_pressure, build_bearing
from .rng import make_rng
from .smoothing import phi, phi_derivative

# Anderson(m) / smoothing Anderson(m) mean iterations, n = 100, eps = 0.4
BEARING_REFERENCE = {2: (8260, 3458), 3: (4551, 2313)}
MAGNITUDE_FACTOR = 3.0


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    measured: str
    expected: str
    seconds: float = 0.0
    budget: float | None = None

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number}. {self.title}: measured {self.measured}; expected {self.expected} ({self.seconds:.1f}s)"


# --------------------------------------------------------------------------
# independent oracles


def _phi_branches(mu):
    """The five printed branches as (value, derivative) callables, left to right."""
    s = math.sqrt(mu)
    return [
        (lambda t: 0.0, lambda t: 0.0),
        (lambda t: t * t / (2 * mu), lambda t: t / mu),
        (lambda t: (t - mu) ** 2 / 4 + t - mu / 2, lambda t: (t - mu) / 2 + 1),
        (lambda t: -((t - mu - 2 * s) ** 2) / 4 + t, lambda t: -(t - mu - 2 * s) / 2 + 1),
        (lambda t: t, lambda t: 1.0),
    ]


def normal_equations_gamma(dF, f):
    return np.linalg.solve(dF.T @ dF, dF.T @ f)


def _simplex_lattice(p, step, center=None, halfwidth=None):
    """Points of the ``step``-lattice on the (p-1)-simplex, optionally within a box."""
    n = int(round(1.0 / step))
    if center is None:
        ranges = [range(0, n + 1)] * (p - 1)
    else:
        c = np.rint(np.asarray(center[:-1]) / step).astype(int)
        h = int(round(halfwidth / step))
        ranges = [range(max(0, ci - h), min(n, ci + h) + 1) for ci in c]
    grid = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, p - 1)
    grid = grid[grid.sum(axis=1) <= n]
    last = n - grid.sum(axis=1, keepdims=True)
    return np.hstack([grid, last]) / n


def grid_search_simplex(F, step=1e-3):
    """Minimize ``|F a|`` over the simplex lattice of spacing ``step``.

    Up to three vertices the full lattice is scanned. Beyond that the scan is
    coarse-to-fine (spacings 0.05, 0.01, then ``step``), each level restricted
    to a box around the previous level's best lattice point.
    """
    F = np.asarray(F, dtype=float)
    p = F.shape[1]
    H = F.T @ F

    def best_of(pts):
        vals = np.einsum("ij,jk,ik->i", pts, H, pts)
        i = int(np.argmin(vals))
        return pts[i], math.sqrt(max(vals[i], 0.0))

    if p == 1:
        return np.ones(1), float(np.linalg.norm(F[:, 0]))
    if p <= 3:
        return best_of(_simplex_lattice(p, step))
    a, _ = best_of(_simplex_lattice(p, 0.05))
    a, _ = best_of(_simplex_lattice(p, 0.01, a, 0.06))
    return best_of(_simplex_lattice(p, step, a, 0.012))


# --------------------------------------------------------------------------
# the suite


class AcceptanceSuite:
    def __init__(self, outdir, threads=1, log=print):
        self.outdir = Path(outdir)
        self.threads = threads
        self.log = log
        self._results = {}

    # experiment specs -----------------------------------------------------

    def specs(self):
        seeds = list(range(10))
        return {
            "bearing": ExperimentSpec(
                family="bearing", params={"n": 100, "eps": 0.4}, seeds=seeds, tol=1e-12, k_max=20000,
                solvers=[SolverSpec(v, m) for m in (2, 3) for v in ("anderson", "smoothing_anderson")],
                name="bearing", timing=False),
            "bearing_m1": ExperimentSpec(
                family="bearing", params={"n": 100, "eps": 0.4}, seeds=seeds, tol=1e-12, k_max=20000,
                solvers=[SolverSpec("smoothing_anderson", 1)], name="bearing_m1", timing=False),
            "enr": ExperimentSpec(
                family="enr", params={"M": 200, "n": 400, "sparsity": 0.1, "noise": 0.1, "step_factor": 1.8},
                seeds=seeds, tol=1e-6, k_max=10000,
                solvers=[SolverSpec("picard", 0), SolverSpec("anderson", 3), SolverSpec("smoothing_anderson", 3)],
                name="enr", timing=False),
            "nnls": ExperimentSpec(
                family="nnls",
                params={"M": 500, "n": 200, "condition": 2.1e4, "lambda": 0.1, "gram_scale": 15.0},
                seeds=seeds, tol=1e-9, k_max=2500, u0_scale=8.0,
                solvers=[SolverSpec(v, m) for m in (1, 2, 3) for v in ("anderson", "smoothing_anderson")],
                name="nnls", timing=False),
        }

    def _spec_path(self, name):
        spec = self.specs()[name]
        spec.output = Path("..") / "runs" / name
        d = self.outdir / "specs"
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{name}.spec"
        path.write_text(spec.to_text(), encoding="utf-8")
        return path

    def result(self, name):
        if name not in self._results:
            spec = load_spec(self._spec_path(name))
            t = time.perf_counter()
            res = run_experiment(spec, threads=self.threads)
            write_outputs(res)
            self.log(f"  ran {name}: {len(res.cells)} cells in {time.perf_counter() - t:.1f}s")
            self._results[name] = res
        return self._results[name]

    # criteria ---------------------------------------------------------------

    def c1_smoothing(self):
        rng = make_rng(1, 7)
        worst_val = worst_der = 0.0
        for mu in 10.0 ** rng.uniform(-8, 0, 100):
            br = _phi_branches(mu)
            s = math.sqrt(mu)
            for i, t in enumerate((0.0, mu, mu + s, mu + 2 * s)):
                lv, ld = br[i]
                rv, rd = br[i + 1]
                worst_val = max(worst_val, abs(lv(t) - rv(t)), abs(phi(t, mu) - rv(t)))
                worst_der = max(worst_der, abs(ld(t) - rd(t)), abs(phi_derivative(t, mu) - rd(t)))
        # 1e5 (t, mu) samples: 1000 mu values with 100 t each, t concentrated near the smoothing band
        err = 0.0
        for mu in 10.0 ** rng.uniform(-8, 0, 1000):
            band = mu + 2 * math.sqrt(mu)
            t = rng.uniform(-0.5, 1.5, 100) * band + rng.uniform(-1.0, 1.0, 100) * (rng.random(100) < 0.2)
            err = max(err, float(np.max(np.abs(phi(t, mu) - np.maximum(t, 0.0)))) / mu)
        ok = worst_val <= 1e-10 and worst_der <= 1e-10 and err <= 1.0
        return ok, (f"value jump {worst_val:.2e}, derivative jump {worst_der:.2e}, "
                    f"max |phi-max(t,0)|/mu {err:.4f}"), "jumps <= 1e-10, error/mu <= 1"

    def c2_subproblems(self):
        rng = make_rng(2, 7)
        gamma_err = 0.0
        for _ in range(100):
            mk = int(rng.integers(1, 6))
            dim = int(rng.integers(mk + 2, 40))
            dF = rng.standard_normal((dim, mk))
            f = rng.standard_normal(dim)
            gamma_err = max(gamma_err, np.max(np.abs(accel.solve_gamma_ls(dF, f) - normal_equations_gamma(dF, f))))
        gap = 0.0
        for i in range(100):
            p = 2 + i % 4
            F = rng.standard_normal((p + 4, p))
            a = accel.solve_alpha_simplex(F)
            _, grid_obj = grid_search_simplex(F)
            gap = max(gap, np.linalg.norm(F @ a) - grid_obj)
        m1 = 0.0
        for _ in range(100):
            fk, fk1 = rng.standard_normal(7), rng.standard_normal(7)
            F = np.column_stack([fk1, fk])
            alpha = accel.gamma_to_alpha(accel.solve_gamma_ls(np.diff(F, axis=1), fk))
            m1 = max(m1, abs(alpha[0] - accel.anderson1_alpha(fk, fk1)))
            m1 = max(m1, abs(accel.solve_alpha_simplex(F)[0] - accel.ediis1_alpha(fk, fk1)))
        ok = gamma_err <= 1e-10 and gap <= 1e-5 and m1 <= 1e-10
        return ok, (f"gamma vs normal equations {gamma_err:.2e}, EDIIS - grid objective {gap:.2e}, "
                    f"m=1 closed forms {m1:.2e}"), "<= 1e-10, <= 1e-5, <= 1e-10"

    def c3_bearing(self):
        res = self.result("bearing")
        parts, ok = [], True
        for m, (ref_aa, ref_saa) in BEARING_REFERENCE.items():
            aa = res.mean_iterations(f"anderson-m{m}")
            saa = res.mean_iterations(f"smoothing_anderson-m{m}")
            within = all(ref / MAGNITUDE_FACTOR <= x <= ref * MAGNITUDE_FACTOR
                         for x, ref in ((aa, ref_aa), (saa, ref_saa)))
            ok &= saa < aa and within
            parts.append(f"m={m}: {aa:.0f}/{saa:.0f}")
        return ok, "; ".join(parts), "s-Anderson < Anderson, within x3 of 8260/3458 and 4551/2313"

    def _bearing_cells(self):
        return self.result("bearing").cells + self.result("bearing_m1").cells

    def c4_lcp(self):
        worst = 0.0
        n_conv = 0
        for c in self.result("bearing").cells:
            if not c.report.converged:
                continue
            n_conv += 1
            p = bearing_pressure(c.report.final_u)
            v = max(lcp_complementarity_check(c.instance, c.report.final_u))
            worst = max(worst, v / (1 + np.linalg.norm(p)))
        inst0 = build_bearing(100, 0.0)
        rep0 = accel.run_solver(bearing_fixed_point_map(inst0), np.zeros(100),
                                accel.SolverConfig("smoothing_anderson", 3, 1e-12, 20000))
        p0 = bearing_pressure(rep0.final_u)
        zero = bool(np.all(inst0.b == 0.0) and np.all(p0 == 0.0))
        ok = n_conv > 0 and worst <= 1e-8 and zero
        return ok, (f"{n_conv} converged runs, max violation/(1+|p|) {worst:.2e}; eps=0 gives p=0: {zero}"), \
            "<= 1e-8, p = 0 exactly"

    def c5_enr(self):
        res = self.result("enr")
        pic = res.mean_iterations("picard-m0")
        aa = res.mean_iterations("anderson-m3")
        saa = res.mean_iterations("smoothing_anderson-m3")
        worst = 0.0
        for c in res.cells:
            if not c.report.converged:
                continue
            u = c.report.final_u
            g = c.problem.G(u)
            ratio = enr_optimality_check(c.instance, g) / max(enr_optimality_bound(c.instance, np.linalg.norm(g - u)), 1e-300)
            worst = max(worst, ratio)
        ok = saa < aa < pic and worst <= 1.0 + 1e-6
        return ok, f"mean iterations {saa:.0f} < {aa:.0f} < {pic:.0f}; worst subgradient/bound {worst:.3f}", \
            "s-Anderson(3) < Anderson(3) < Picard; subgradient within prox-gradient bound"

    def c6_rates(self):
        c = self._bearing_cells()[0].instance.contraction_factor()
        r_worst = q_worst = 0.0
        for cell in self.result("bearing").by_solver("smoothing_anderson-m3"):
            if cell.report.converged:
                r_worst = max(r_worst, rate_report(cell.report.residual_history).tail_r_estimate)
        q_runs = 0
        for cell in self.result("bearing_m1").cells:
            if cell.report.converged:
                q_runs += 1
                rr = rate_report(cell.report.residual_history, cell.report.smooth_residual_history)
                q_worst = max(q_worst, rr.tail_q_estimate)
        ok = q_runs > 0 and r_worst <= c + RATE_SLACK and q_worst <= c + RATE_SLACK
        return ok, f"c={c:.6f}, tail r (m=3) {r_worst:.6f}, tail q (m=1, {q_runs} runs) {q_worst:.6f}", \
            f"both <= c + {RATE_SLACK}"

    def c7_mu(self):
        runs = [c for c in self._bearing_cells() + self.result("enr").cells
                if c.report.converged and c.report.mu_history]
        nonmono = [c for c in runs if not mu_audit(c.report.mu_history)[0]]
        worst_ratio = max(mu_audit(c.report.mu_history)[1] for c in runs)
        ok = bool(runs) and not nonmono and worst_ratio <= 0.01
        return ok, (f"{len(runs)} converged smoothing runs, {len(nonmono)} with an increase in mu for k>=1, "
                    f"max mu_last/mu_1 {worst_ratio:.2e}"), "non-increasing, mu_last <= 0.01 mu_1"

    def c8_nnls(self):
        res = self.result("nnls")
        parts, ok = [], True
        for m in (1, 2, 3):
            aa = statistics.fmean(c.report.final_rate for c in res.by_solver(f"anderson-m{m}"))
            saa = statistics.fmean(c.report.final_rate for c in res.by_solver(f"smoothing_anderson-m{m}"))
            ok &= saa <= aa
            parts.append(f"m={m}: {aa:.5f}/{saa:.5f}")
        A = res.cells[0].instance.A
        s = np.linalg.svd(A, compute_uv=False)
        parts.append(f"cond(A) {s[0] / s[-1]:.3g}")
        return ok, "; ".join(parts), "s-Anderson(m) rate <= Anderson(m) rate for m = 1, 2, 3"

    def c9_determinism(self):
        ok = True
        names = list(self._results) or list(self.specs())
        for name in names:
            spec = load_spec(self._spec_path(name))
            spec.output = self.outdir / "rerun" / name
            write_outputs(run_experiment(spec, threads=self.threads))
            same = files_identical(self.outdir / "runs" / name, spec.output)
            ok &= same
        return ok, f"{len(names)} specs rerun, traces byte-identical: {ok}", "byte-identical trace CSVs"

    CRITERIA = (
        (1, "smoothing-function soundness", "c1_smoothing", 1.0),
        (2, "subproblem oracle equivalence", "c2_subproblems", 30.0),
        (3, "bearing iteration counts", "c3_bearing", 120.0),
        (4, "bearing LCP correctness", "c4_lcp", 10.0),
        (5, "ENR iteration ordering", "c5_enr", 120.0),
        (6, "empirical r- and q-factors", "c6_rates", 60.0),
        (7, "mu schedule monotone", "c7_mu", None),
        (8, "NNLS rate ordering", "c8_nnls", 180.0),
        (9, "determinism", "c9_determinism", None),
    )

    def run_criterion(self, number):
        num, title, meth, budget = self.CRITERIA[number - 1]
        t = time.perf_counter()
        ok, measured, expected = getattr(self, meth)()
        elapsed = time.perf_counter() - t
        if budget is not None:
            expected = f"{expected}; runtime < {budget:g}s"
            ok = ok and elapsed < budget
        return CriterionResult(num, title, bool(ok), measured, expected, elapsed, budget)

    def run_all(self):
        results = []
        for num, *_ in self.CRITERIA:
            r = self.run_criterion(num)
            self.log(r.line())
            results.append(r)
        self.write_report(results)
        return results

    def write_report(self, results):
        self.outdir.mkdir(parents=True, exist_ok=True)
        with open(self.outdir / "report.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("criterion", "title", "status", "measured", "expected", "seconds", "budget_s"))
            for r in results:
                w.writerow((r.number, r.title, "pass" if r.passed else "fail", r.measured, r.expected,
                            f"{r.seconds:.2f}", "" if r.budget is None else r.budget))
        (self.outdir / "report.txt").write_text("\n".join(r.line() for r in results) + "\n", encoding="utf-8")
