"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they are
produced; they are also collected in the terminal summary.
"""
import filecmp
import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from dp_pwa.analysis import (
    audit_detection,
    audit_sensitivity_bruteforce,
    bound_dp_subgradient,
    bound_exponential_mean,
    bound_solution_perturbation,
    detection_lower_bound,
    estimate_C,
    exp_mech_discrete_bounds,
    gamma_bar,
)
from dp_pwa.cli import adjacent_pair_1d, point_sampler
from dp_pwa.core import (
    AdjacencySpec,
    Box,
    Instance,
    PwaObjective,
    ResourceAllocationInstance,
    box_diameter,
    gen_gaussian,
    gen_resource_allocation,
)
from dp_pwa.experiment import ExperimentConfig, run_experiment
from dp_pwa.mechanisms import (
    DP_SUBGRAD,
    PRIVATE_MECHANISMS,
    DpSubgradConfig,
    dp_subgradient_batch,
    mech_exponential_batch,
    mech_solution_laplace_batch,
)
from dp_pwa.samplers import (
    RandomSource,
    exponential_mechanism_probs,
    sample_discrete_exponential,
    sample_vector_laplace,
)
from dp_pwa.solver import brute_force_optimum

from oracles import utility_active_sets, utility_greedy

# mean of the density proportional to exp(-x) on [0, 1]: 1 - 1/(e - 1)
TRUNC_EXP_MEAN_UNIT = 1.0 - 1.0 / (math.e - 1.0)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def test_01_sensitivity_lemma(criterion):
    b_max = 0.5
    with Timer() as t:
        worst = audit_sensitivity_bruteforce(2, 6, 1000, 1000, RandomSource(1), b_max=b_max)
    ok = b_max - 1e-9 <= worst <= b_max + 1e-12 and t.seconds < 10
    criterion.record(1, "sensitivity of f is b_max", ok,
                     f"max |f(x,D)-f(x,D')| = {worst:.15f}, {t.seconds:.1f}s (< 10s)")
    assert ok


def test_02_vector_laplace_moments(criterion):
    rel_errors = []
    with Timer() as t:
        for i, (d, delta2, eps) in enumerate([(1, 1.0, 1.0), (3, 1.0, 0.5), (5, 2.0, 0.1)]):
            w = sample_vector_laplace(d, delta2, eps, RandomSource(100 + i), size=1_000_000)
            rel_errors.append(abs(np.linalg.norm(w, axis=1).mean() / (d * delta2 / eps) - 1))
    ok = max(rel_errors) < 0.02 and t.seconds < 30
    criterion.record(2, "vector Laplace E||w|| = d*D2/eps", ok,
                     "relative errors " + ", ".join(f"{e:.4f}" for e in rel_errors) + f" (< 0.02), {t.seconds:.1f}s (< 30s)")
    assert ok


def test_03_discrete_exponential_tv(criterion):
    g = np.random.default_rng(3)
    tvs = []
    with Timer() as t:
        for case in range(20):
            scores = g.standard_normal(8) * 2
            sens, eps = float(g.uniform(0.2, 2.0)), float(g.uniform(0.2, 2.0))
            idx = sample_discrete_exponential(scores, sens, eps, RandomSource(300 + case), size=1_000_000)
            freq = np.bincount(idx, minlength=8) / idx.size
            tvs.append(0.5 * np.abs(freq - exponential_mechanism_probs(scores, sens, eps)).sum())
    ok = max(tvs) < 0.01 and t.seconds < 60
    criterion.record(3, "discrete exponential mechanism matches softmax", ok,
                     f"max TV {max(tvs):.5f} over 20 cases (< 0.01), {t.seconds:.1f}s (< 60s)")
    assert ok


def test_04_exponential_tail_and_mean(criterion):
    g = np.random.default_rng(4)
    n, m, sens, eps = 100_000, 8, 0.5, 1.0
    bounds = exp_mech_discrete_bounds(sens, eps, m, 1.0)
    worst_mean, worst_tail_slack = 0.0, -np.inf
    with Timer() as t:
        for case in range(20):
            scores = g.standard_normal(m)
            idx = sample_discrete_exponential(scores, sens, eps, RandomSource(400 + case), size=n)
            gap = scores.max() - scores[idx]
            worst_mean = max(worst_mean, gap.mean() / bounds.mean)
            tail = np.mean(gap >= bounds.threshold)
            se = math.sqrt(max(tail * (1 - tail), 1.0 / n) / n)
            worst_tail_slack = max(worst_tail_slack, tail - (bounds.tail + 3 * se))
    ok = worst_mean <= 1.0 and worst_tail_slack <= 0.0 and t.seconds < 60
    criterion.record(4, "exponential mechanism mean and tail bounds", ok,
                     f"max mean/bound {worst_mean:.3f} (<= 1), max tail - (e^-1 + 3SE) {worst_tail_slack:.4f} (<= 0), "
                     f"{t.seconds:.1f}s (< 60s)")
    assert ok


def test_05_solution_perturbation_bound(criterion):
    with Timer() as t:
        inst = Instance(gen_gaussian(2, 5, seed=5), Box.symmetric(2, 1.0), AdjacencySpec(0.1))
        f_opt = brute_force_optimum(inst)[0]
        batch = mech_solution_laplace_batch(inst, 1.0, RandomSource(5).spawn(10_000))
        mean_gap = float((batch.aux["raw_value"] - f_opt).mean())
        d = inst.d
        bound = bound_solution_perturbation(inst.objective.lipschitz, d, box_diameter(inst.box) / math.sqrt(d), 1.0)
    ok = mean_gap <= bound.value and t.seconds < 60
    criterion.record(5, "solution perturbation raw gap <= G d^1.5 D / eps", ok,
                     f"mean gap {mean_gap:.4f} vs bound {bound.value:.4f}, {t.seconds:.1f}s (< 60s)")
    assert ok


def test_06_exponential_mechanism_1d(criterion):
    b_max, eps = 0.5, 1.0  # eps / (2 b_max) = 1
    inst = Instance(PwaObjective([[1.0]], [0.0]), Box([0.0], [1.0]), AdjacencySpec(b_max))
    with Timer() as t:
        batch = mech_exponential_batch(inst, eps, RandomSource(6).spawn(10_000))
        mean_x = float(batch.points.mean())
        C0 = estimate_C(inst, 0.0, eps, 1_000_000, RandomSource(60), 0.0)
        bound = bound_exponential_mean(b_max, eps, C0.value)
        mean_gap = float(batch.values.mean())
    ok = abs(mean_x - TRUNC_EXP_MEAN_UNIT) < 0.05 and mean_gap <= bound.value and t.seconds < 300
    criterion.record(6, "exponential mechanism on f=x over [0,1]", ok,
                     f"mean {mean_x:.4f} vs {TRUNC_EXP_MEAN_UNIT:.4f} (+-0.05), mean gap {mean_gap:.4f} <= "
                     f"C0*2b/eps = {bound.value:.4f}, {t.seconds:.1f}s (< 300s)")
    assert ok


def test_07_dp_subgradient_bound(criterion):
    eps, k = 1.0, 100
    with Timer() as t:
        inst = Instance(gen_gaussian(2, 10, seed=7), Box.symmetric(2, 1.0), AdjacencySpec(0.1))
        f_opt = brute_force_optimum(inst)[0]
        cfg = DpSubgradConfig(k=k)
        batch = dp_subgradient_batch(inst, eps, RandomSource(7).spawn(1000), cfg)
        alphas = cfg.schedule(inst).steps(k)
        bound = bound_dp_subgradient(box_diameter(inst.box), inst.objective.lipschitz, alphas, eps, k, inst.b_max, inst.m)
        best_gap = float((batch.aux["best_value"] - f_opt).mean())
        last_gap = float((batch.values - f_opt).mean())
        mean_gamma = float(batch.aux["gamma_mean"].mean())
        gbar = gamma_bar(eps / k, inst.b_max, inst.m)
    ok = best_gap <= bound.value and mean_gamma <= gbar and t.seconds < 300
    criterion.record(7, "DP subgradient suboptimality and per-step gap", ok,
                     f"min-over-iterates gap {best_gap:.4f} <= bound {bound.value:.3f}; last-iterate gap {last_gap:.4f}; "
                     f"E[gamma] {mean_gamma:.4f} <= {gbar:.3f}, {t.seconds:.1f}s (< 300s)")
    assert ok


def test_08_detection(criterion):
    value = detection_lower_bound(0.1, 0.05)
    with Timer() as t:
        D, D_adj = adjacent_pair_1d(0.5)
        points = audit_detection(point_sampler("M_P"), D, D_adj, 0.5, 100_000, None, RandomSource(8))
    failed = [p for p in points if not p.satisfied]
    ok = abs(value - 0.94) <= 0.005 and not failed and t.seconds < 120
    criterion.record(8, "detection limits", ok,
                     f"lower bound {value:.4f} (0.94 +- 0.005); M_P audit {len(points) - len(failed)}/{len(points)} "
                     f"rules within 3SE, {t.seconds:.1f}s (< 120s)")
    assert ok


def test_09_resource_allocation(criterion):
    g = np.random.default_rng(9)
    worst, oracle_disagreement = 0.0, 0.0
    with Timer() as t:
        for _ in range(20):
            n = int(g.integers(1, 6))
            ra = ResourceAllocationInstance(g.uniform(0.1, 3.0, n), g.uniform(0.1, 2.0, n), float(g.uniform(0, 1)))
            obj = gen_resource_allocation(ra)
            X = g.uniform(0.0, 1.2 * ra.total_cap, 50)
            got = obj.values(X[:, None])
            for x, v in zip(X, got):
                u = utility_greedy(ra.gains, ra.caps, x)
                oracle_disagreement = max(oracle_disagreement, abs(u - utility_active_sets(ra.gains, ra.caps, x)))
                worst = max(worst, abs(v - (ra.price * x - u)))
    ok = worst <= 1e-9 and oracle_disagreement <= 1e-12 and t.seconds < 5
    criterion.record(9, "resource allocation pieces match the LP optimum", ok,
                     f"max error {worst:.2e} (<= 1e-9), oracle cross-check {oracle_disagreement:.1e}, {t.seconds:.2f}s (< 5s)")
    assert ok


def _diff_tol(a, b):
    # 2 sigma of the difference of two independent sample means
    return 2.0 * math.hypot(a.std_error, b.std_error)


def test_10_qualitative_trends(criterion):
    with Timer() as t:
        m_sweep = run_experiment(ExperimentConfig(m=[5, 10, 20, 40]))
        c_sweep = run_experiment(ExperimentConfig(half_width=[0.5, 1.0, 2.0, 4.0]))
    problems = []
    # (a) nondecreasing in m for every mechanism, and for the true optimum
    ms = [5, 10, 20, 40]
    for mech in PRIVATE_MECHANISMS:
        for lo, hi in zip(ms, ms[1:]):
            a, b = m_sweep.cell(mech, lo), m_sweep.cell(mech, hi)
            if b.mean < a.mean - _diff_tol(a, b):
                problems.append(f"{mech} decreases from m={lo} to m={hi}")
    optima_m = [m_sweep.true_optima[float(m)] for m in ms]
    if any(b < a - 1e-9 for a, b in zip(optima_m, optima_m[1:])):
        problems.append("true optimum decreases in m")
    # (b) DP subgradient lowest among private mechanisms at every sweep point
    for result, values in ((m_sweep, ms), (c_sweep, [0.5, 1.0, 2.0, 4.0])):
        for v in values:
            dp = result.cell(DP_SUBGRAD, v)
            for mech in PRIVATE_MECHANISMS:
                other = result.cell(mech, v)
                if mech != DP_SUBGRAD and dp.mean > other.mean + _diff_tol(dp, other):
                    problems.append(f"{mech} beats DP_SUBGRAD at {result.config.sweep[0]}={v}")
    # (c) true optimum nonincreasing in c
    optima_c = [c_sweep.true_optima[c] for c in (0.5, 1.0, 2.0, 4.0)]
    if any(b > a + 1e-9 for a, b in zip(optima_c, optima_c[1:])):
        problems.append("true optimum increases in c")
    ok = not problems and t.seconds < 900
    dp_means = ", ".join(f"{m_sweep.cell(DP_SUBGRAD, m).mean:.3f}" for m in ms)
    criterion.record(10, "objective trends in m and c", ok,
                     ("; ".join(problems) or f"all checks hold at 2 SE; DP_SUBGRAD mean over m {dp_means}")
                     + f", {t.seconds:.0f}s (< 900s)")
    assert ok


def test_11_determinism(criterion, tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"m": [5, 10], "runs": 50, "mcmc_steps": 500}))
    outs = []
    with Timer() as t:
        for i, threads in enumerate(("1", "3")):
            out = tmp_path / f"run{i}"
            env = dict(os.environ, DP_PWA_THREADS=threads)
            proc = subprocess.run(
                [sys.executable, "-m", "dp_pwa.cli", "run", "--config", str(config), "--out", str(out)],
                capture_output=True, text=True, env=env,
            )
            assert proc.returncode == 0, proc.stderr
            outs.append(out / "trials.csv")
    same = filecmp.cmp(outs[0], outs[1], shallow=False)
    criterion.record(11, "identical configs give byte-identical trials.csv", same,
                     f"two CLI runs (1 and 3 threads), {t.seconds:.1f}s")
    assert same
