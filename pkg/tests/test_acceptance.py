"""Acceptance criteria, one test each.

Every test prints a single ``criterion N: PASS|FAIL`` line (collected again in
the terminal summary) with the measured quantities and runtime.
"""

import math
import time

import numpy as np
import pytest
from scipy.stats import beta

from mimonetcal.cache import CapacityCache
from mimonetcal.channel import (
    capacity_table,
    dof_profile,
    ergodic_capacity_mc,
    highsnr_capacity_closed_form,
    pattern_from_substate,
    substate_dofs,
    variance_matrix,
)
from mimonetcal.config import ScenarioConfig, blocks_to_rate
from mimonetcal.experiments import fading_grid, run_experiment
from mimonetcal.markov import aggregated_chain, first_order_capacity, ge_from_kappa
from mimonetcal.netcal import PeriodicSource, arrival_mgf, delay_bound, service_mgf, throughput
from mimonetcal.oracle import (
    brute_force_service_mgf,
    mc_arrival_mgf,
    mc_logdet,
    simulate_replications,
    wishart_logdet_mean,
)
from mimonetcal.scenario import build_scenario

COLS = {"d": 0, "eps": 1, "method": 2, "n": 3, "snr": 4, "lam": 5}


def full(n):
    return pattern_from_substate((1 << (n * n)) - 1, n)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0


def column(curve, name):
    return [row[COLS[name]] for row in curve.rows]


@pytest.fixture(scope="module")
def fig2(capacity_cache):
    return timed(run_experiment, "fig2", {}, None, capacity_cache)


@pytest.fixture(scope="module")
def fig3(capacity_cache):
    return timed(run_experiment, "fig3", {}, None, capacity_cache)


@pytest.fixture(scope="module")
def fig4(capacity_cache):
    return timed(run_experiment, "fig4", {}, None, capacity_cache)


@pytest.fixture(scope="module")
def fig5(capacity_cache):
    return timed(run_experiment, "fig5", {}, None, capacity_cache)


def test_criterion_01_example1_exactness(report):
    t0 = time.perf_counter()
    worst, sizes = 0.0, set()
    for kappa in (0.05, 1 / 11, 0.3):
        ch = aggregated_chain(2, ge_from_kappa(kappa, 0.1), np.ones(16))
        k = kappa
        expected = np.array([
            k**4,
            4 * k**2 * (1 - k) ** 2 + 4 * k**3 * (1 - k),
            (1 - k) ** 4 + 4 * k * (1 - k) ** 3 + 2 * k**2 * (1 - k) ** 2,
        ])
        worst = max(worst, float(np.abs(ch.pi - expected).max()))
        sizes.add(tuple(ch.provenance["class_sizes"]))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and sizes == {(1, 8, 7)} and elapsed < 1.0
    report(1, ok, f"max |pi - closed form| = {worst:.2e}, class sizes {sorted(sizes)}, {elapsed:.2f} s")


def test_criterion_02_table1(report):
    t0 = time.perf_counter()
    cache = CapacityCache()  # cold cache: runtime includes every MC estimate
    values = {}
    for n in (2, 3):
        cfg = ScenarioConfig(n=n, snr_db=25.0, kappa=0.1, mc_samples=100_000)
        values[n] = blocks_to_rate(first_order_capacity(build_scenario(cfg, cache)[0]))
    elapsed = time.perf_counter() - t0
    rel = {n: abs(values[n] - ref) / ref for n, ref in ((2, 14.1), (3, 20.82))}
    ok = max(rel.values()) <= 0.05 and elapsed < 300
    report(2, ok, f"C1(N=2) = {values[2]:.3f} ({rel[2]:.2%}), C1(N=3) = {values[3]:.3f} ({rel[3]:.2%}), "
                  f"{elapsed:.1f} s")


def test_criterion_03_lemma2_vs_brute_force(scenario, report):
    chains = {"3-state": scenario(n=2, method=2), "16-state": scenario(n=2, method=1)}
    t0 = time.perf_counter()
    worst = 0.0
    for ch in chains.values():
        for theta in (0.1, 0.5, 2.0):
            for t in range(1, 7):
                worst = max(worst, abs(service_mgf(ch, theta, t) - brute_force_service_mgf(ch, theta, t)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 60
    report(3, ok, f"max |analytic - brute force| = {worst:.2e} over 36 points, {elapsed:.1f} s")


def test_criterion_04_arrival_mgf_vs_mc(report):
    src = PeriodicSource(2.0, 10.0)
    t0 = time.perf_counter()
    worst = 0.0
    for i, (theta, t) in enumerate((th, t) for th in (0.05, 0.3, 1.0) for t in (4.0, 15.0, 33.0)):
        est = mc_arrival_mgf(src, theta, t, 1_000_000, seed=i)
        worst = max(worst, abs(est.mean - arrival_mgf(src, theta, t)) / est.std_error)
    elapsed = time.perf_counter() - t0
    ok = worst <= 3.0 and elapsed < 60
    report(4, ok, f"max deviation {worst:.2f} standard errors over 9 (theta, t), {elapsed:.1f} s")


def test_criterion_05_method1_vs_method2(fig2, report):
    (res, elapsed) = fig2
    lam = {}
    for curve in res.curves:
        for row in curve.rows:
            lam[(row[COLS["method"]], row[COLS["eps"]], row[COLS["d"]])] = row[COLS["lam"]]
    misses = []
    worst = 0.0
    for (method, eps, d), l1 in lam.items():
        if method != 1:
            continue
        l2 = lam[(2, eps, d)]
        rel = 0.0 if l1 == l2 == 0.0 else abs(l1 - l2) / max(l1, l2)
        worst = max(worst, rel)
        if rel > 0.05:
            misses.append(f"eps={eps:g} d={d}: {rel:.2%}")
    ok = not misses and elapsed < 900
    detail = f"max relative gap {worst:.2%} over 18 points, {elapsed:.0f} s"
    if misses:
        detail += "; above 5%: " + ", ".join(misses)
    report(5, ok, detail)


def test_criterion_06_bound_validity(scenario, report):
    ch = scenario(n=2)
    t0 = time.perf_counter()
    eps = 1e-3
    lam = throughput(ch, 30, eps)
    src = PeriodicSource.from_rate(lam, 10)
    d_eps = delay_bound(ch, src, eps).d
    trace = simulate_replications(ch, src, 1_000_000, seed=2024, reps=10)
    n, k = len(trace.delays), trace.violations(d_eps)
    upper = float(beta.ppf(0.99, k + 1, n - k))  # one-sided Clopper-Pearson
    elapsed = time.perf_counter() - t0
    ok = trace.horizon >= 10_000_000 and upper <= eps and elapsed < 600
    report(6, ok, f"lambda_d = {lam:.4f}, d_eps = {d_eps}, {k}/{n} violations over {trace.horizon:.0e} slots, "
                  f"99% upper bound {upper:.2e} <= {eps:g}, {elapsed:.1f} s")


def test_criterion_07_high_snr_asymptotics(report):
    t0 = time.perf_counter()
    slope_err = {}
    for n in (2, 3, 4):
        v = variance_matrix(full(n))
        c30 = ergodic_capacity_mc(v, 30.0, 100_000, seed=0).mean
        c40 = ergodic_capacity_mc(v, 40.0, 100_000, seed=0).mean
        slope_err[n] = abs((c40 - c30) - n * math.log2(10)) / (n * math.log2(10))
    caps, _ = capacity_table(3, 30.0, samples=100_000, seed=0)
    dofs = substate_dofs(3)
    lo = [caps[dofs == r].min() for r in range(4)]
    hi = [caps[dofs == r].max() for r in range(4)]
    spread = max(h - low for low, h in zip(lo, hi))
    gap = min(lo[r + 1] - hi[r] for r in range(3))
    elapsed = time.perf_counter() - t0
    ok = max(slope_err.values()) <= 0.10 and spread < gap and elapsed < 600
    errs = ", ".join(f"N={n}: {e:.2%}" for n, e in slope_err.items())
    report(7, ok, f"slope errors {errs}; N=3 within-DOF spread {spread:.2f} < between-DOF gap {gap:.2f} bits, "
                  f"{elapsed:.1f} s")


def test_criterion_08_closed_form(report):
    t0 = time.perf_counter()
    rel = {}
    for n in (2, 3, 4):
        mc = ergodic_capacity_mc(variance_matrix(full(n)), 40.0, 100_000, seed=0).mean
        rel[n] = abs(highsnr_capacity_closed_form(dof_profile(full(n)), 40.0, n) - mc) / mc
    wishart = {}
    for r in (1, 2, 3):
        est = mc_logdet(r, 1_000_000, seed=r)
        wishart[r] = abs(est.mean - wishart_logdet_mean(r)) / est.std_error
    elapsed = time.perf_counter() - t0
    ok = max(rel.values()) <= 0.05 and max(wishart.values()) <= 3 and elapsed < 300
    cf = ", ".join(f"N={n}: {e:.2%}" for n, e in rel.items())
    wd = ", ".join(f"r={r}: {e:.2f} se" for r, e in wishart.items())
    report(8, ok, f"closed form vs MC at 40 dB {cf}; Wishart log-det {wd}; {elapsed:.1f} s")


def test_criterion_09_monotonicity(fig2, fig3, fig5, fig4, report):
    elapsed = fig2[1] + fig3[1] + fig5[1] + fig4[1]
    problems = []

    def nondecreasing(values, what):
        values = list(values)
        for a, b in zip(values, values[1:]):
            if b < a:
                problems.append(f"{what}: {a:.4f} -> {b:.4f}")

    for res in (fig2[0], fig5[0]):
        for curve in res.curves:
            nondecreasing(column(curve, "lam"), f"{curve.name} in d")
    fig3_curves = [c for c in fig3[0].curves if c.name.startswith("fig3_d")]
    for curve in fig3_curves:
        nondecreasing(column(curve, "lam"), f"{curve.name} in SNR")
    for i in range(len(fig3_curves[0].rows)):
        nondecreasing([c.rows[i][COLS["lam"]] for c in fig3_curves], f"fig3 snr index {i} in d")

    by_name = {c.name: column(c, "lam") for c in fig2[0].curves}
    for method in (1, 2):
        series = [by_name[f"fig2_method{method}_eps{tag}"] for tag in ("1e-6", "1e-4", "1e-2")]
        for i in range(len(series[0])):
            nondecreasing([s[i] for s in series], f"method {method} d index {i} as eps loosens")

    f5 = {c.name: column(c, "lam") for c in fig5[0].curves}
    for lo_n, hi_n in ((2, 3), (3, 4)):
        for i, (a, b) in enumerate(zip(f5[f"fig5_n{lo_n}"], f5[f"fig5_n{hi_n}"])):
            if b < a:
                problems.append(f"fig5 N={hi_n} below N={lo_n} at index {i}")
    f4 = {c.name: [row[-1] for row in c.rows] for c in fig4[0].curves}
    for i, (a, b) in enumerate(zip(f4["fig4_n2"], f4["fig4_n3"])):
        if b < a:
            problems.append(f"fig4 N=3 below N=2 at p_bg index {i}")

    d_grid = column(fig5[0].curves[0], "d")
    i500, i1000 = d_grid.index(500), d_grid.index(1000)
    sat = {}
    for name, lams in f5.items():
        sat[name] = abs(lams[i1000] - lams[i500]) / lams[i1000]
        if sat[name] > 0.02:
            problems.append(f"{name} not saturated: {sat[name]:.2%}")
    ok = not problems and elapsed < 1200
    detail = f"orderings in d, eps, SNR and N hold exactly; " \
             f"d=500 vs 1000 max gap {max(sat.values()):.2%}; {elapsed:.0f} s"
    if problems:
        detail += "; violations: " + "; ".join(problems[:5])
    report(9, ok, detail)


def test_criterion_10_fading_speed(fig4, scenario, report):
    res, elapsed = fig4
    t0 = time.perf_counter()
    c1_spread = {}
    for n in (2, 3):
        c1 = [first_order_capacity(scenario(n=n, kappa=0.1, p_bg=float(p))) for p in fading_grid(10)]
        c1_spread[n] = float(np.ptp(c1))
    elapsed += time.perf_counter() - t0
    lam = {c.name: np.array([row[-1] for row in c.rows]) for c in res.curves}
    l2, l3 = lam["fig4_n2"], lam["fig4_n3"]
    # advantage on the plotted (logarithmic) throughput axis, i.e. the ratio
    with np.errstate(divide="ignore"):
        ratio = np.where(l2 > 0, l3 / np.where(l2 > 0, l2, 1), np.inf)
    slowest_positive = int(np.flatnonzero(l2 > 0)[0])
    ok = (max(c1_spread.values()) <= 1e-12 and ratio[0] > ratio[-1]
          and ratio[slowest_positive] > ratio[-1] and elapsed < 900)
    report(10, ok, f"C1 spread across sweep {max(c1_spread.values()):.1e}; N=3/N=2 throughput ratio "
                   f"{ratio[0]:.3g} at p_bg=1e-3 (lambda {l3[0]:.4f} vs {l2[0]:.4f}), "
                   f"{ratio[slowest_positive]:.3g} at p_bg={res.curves[0].rows[slowest_positive][0]:.3g}, "
                   f"{ratio[-1]:.3g} at p_bg=0.5 (absolute gaps {l3[0] - l2[0]:.4f} vs {l3[-1] - l2[-1]:.4f}); "
                   f"{elapsed:.0f} s")
