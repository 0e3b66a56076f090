"""Experiment presets: throughput sweeps and first-order capacity tables as CSV."""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cache import CapacityCache
from .config import ScenarioConfig, blocks_to_rate, config_from_mapping
from .markov import first_order_capacity, ge_kappa
from .netcal import BoundEvaluator, PeriodicSource, throughput
from .scenario import build_scenario

THROUGHPUT_COLUMNS = [
    "d_guarantee", "eps", "method", "n", "snr_db",
    "lambda_blocks_per_slot", "lambda_bits_per_s_per_hz", "theta_star", "tail_mass",
]
FADING_COLUMNS = ["p_bg", "p_gb", "kappa", "mean_change_time", "n", "lambda_blocks_per_slot"]
TABLE1_COLUMNS = ["n", "c1_bits_per_s_per_hz", "kappa", "snr_db"]

# preset defaults, applied before user overrides
PRESETS = {
    "fig2": {"n": 2, "d_grid": (10, 20, 30, 40, 50, 60)},
    "fig3": {"n": 2, "eps": 1e-6, "d_grid": (20, 30, 40, 50), "snr_grid": (5, 10, 15, 20, 25, 30)},
    "fig4": {"kappa": 0.1, "d_guarantee": 30, "eps": 1e-3, "p_bg_points": 10},
    "fig5": {"eps": 1e-3, "d_grid": (10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 200, 500, 1000)},
    "table1": {"kappa": 0.1},
}
FIG2_EPS = (1e-2, 1e-4, 1e-6)
ANTENNAS = {"fig4": (2, 3), "fig5": (2, 3, 4), "table1": (2, 3)}


class UnknownPreset(KeyError):
    pass


@dataclass
class Curve:
    name: str
    columns: list
    rows: list = field(default_factory=list)


@dataclass
class ExperimentResult:
    preset: str
    config: ScenarioConfig
    curves: list
    files: list = field(default_factory=list)
    issues: list = field(default_factory=list)


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.9g}"


def _throughput_point(args):
    chain, d, eps, cfg = args
    search = cfg.search()
    ev = BoundEvaluator(chain, search.theta_grid, search.trunc, search.refine)
    lam = throughput(chain, d, eps, cfg.tau, search, evaluator=ev)
    bound = ev.delay_bound(PeriodicSource.from_rate(lam, cfg.tau), eps)
    return lam, bound


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


class _Runner:
    def __init__(self, cfg, cache, jobs):
        self.cfg = cfg
        self.cache = cache
        self.jobs = jobs
        self.issues = []

    def chain(self, **changes):
        return build_scenario(self.cfg.replace(**changes), self.cache)[0]

    def throughputs(self, tasks):
        """tasks: (chain, d, eps, cfg, label) tuples; returns (lam, bound) per task."""
        out = _map(_throughput_point, [t[:4] for t in tasks], self.jobs)
        for (_, d, eps, _, label), (lam, bound) in zip(tasks, out):
            if lam == 0.0 or not bound.feasible:
                self.issues.append(f"{label}: d={d} eps={eps:g} lambda={lam:.6g} bound={bound.d}")
        return out

    def throughput_curve(self, name, chain, cfg, eps, method, ds):
        tasks = [(chain, d, eps, cfg, name) for d in ds]
        curve = Curve(name, THROUGHPUT_COLUMNS)
        for d, (lam, bound) in zip(ds, self.throughputs(tasks)):
            curve.rows.append([
                d, eps, method, cfg.n, cfg.snr_db, lam,
                blocks_to_rate(lam, cfg.units), bound.theta_star, bound.tail_mass,
            ])
        return curve


def _eps_tag(eps):
    return f"{eps:.0e}".replace("-0", "-").replace("+0", "")


def _fig2(r: _Runner, explicit):
    cfg = r.cfg
    eps_list = (cfg.eps,) if "eps" in explicit else FIG2_EPS
    methods = (cfg.method,) if "method" in explicit else (1, 2)
    curves = []
    for method in methods:
        chain = r.chain(method=method)
        for eps in eps_list:
            name = f"fig2_method{method}_eps{_eps_tag(eps)}"
            curves.append(r.throughput_curve(name, chain, cfg.replace(method=method), eps, method, cfg.d_grid))
    return curves


def _fig3(r: _Runner, explicit):
    cfg = r.cfg
    curves = {d: Curve(f"fig3_d{d}", THROUGHPUT_COLUMNS) for d in cfg.d_grid}
    shannon = Curve("fig3_shannon", ["snr_db", "c1_bits_per_s_per_hz", "c1_blocks_per_slot"])
    for snr in cfg.snr_grid:
        scfg = cfg.replace(snr_db=float(snr))
        chain = r.chain(snr_db=float(snr))
        c1 = first_order_capacity(chain)
        shannon.rows.append([float(snr), blocks_to_rate(c1, cfg.units), c1])
        tasks = [(chain, d, cfg.eps, scfg, f"fig3 snr={snr}") for d in cfg.d_grid]
        for d, (lam, bound) in zip(cfg.d_grid, r.throughputs(tasks)):
            curves[d].rows.append([
                d, cfg.eps, cfg.method, cfg.n, float(snr), lam,
                blocks_to_rate(lam, cfg.units), bound.theta_star, bound.tail_mass,
            ])
    return list(curves.values()) + [shannon]


def fading_grid(points: int) -> np.ndarray:
    return np.logspace(-3, math.log10(0.5), points)


def _fig4(r: _Runner, explicit):
    cfg = r.cfg
    ns = (cfg.n,) if "n" in explicit else ANTENNAS["fig4"]
    curves = []
    for n in ns:
        curve = Curve(f"fig4_n{n}", FADING_COLUMNS)
        tasks = []
        for p_bg in fading_grid(cfg.p_bg_points):
            ncfg = cfg.replace(n=n, p_bg=float(p_bg))
            tasks.append((r.chain(n=n, p_bg=float(p_bg)), cfg.d_guarantee, cfg.eps, ncfg, f"fig4 n={n}"))
        for (chain, _, _, ncfg, _), (lam, _) in zip(tasks, r.throughputs(tasks)):
            ge = ncfg.gilbert_elliott()
            curve.rows.append([
                ge.p_bg, ge.p_gb, ge_kappa(ge), 1.0 / ge.p_bg + 1.0 / ge.p_gb, n, lam,
            ])
        curves.append(curve)
    return curves


def _fig5(r: _Runner, explicit):
    cfg = r.cfg
    ns = (cfg.n,) if "n" in explicit else ANTENNAS["fig5"]
    return [
        r.throughput_curve(f"fig5_n{n}", r.chain(n=n), cfg.replace(n=n), cfg.eps, cfg.method, cfg.d_grid)
        for n in ns
    ]


def _table1(r: _Runner, explicit):
    cfg = r.cfg
    ns = (cfg.n,) if "n" in explicit else ANTENNAS["table1"]
    curve = Curve("table1", TABLE1_COLUMNS)
    for n in ns:
        chain = r.chain(n=n)
        c1 = blocks_to_rate(first_order_capacity(chain), cfg.units)
        curve.rows.append([n, c1, ge_kappa(cfg.gilbert_elliott()), cfg.snr_db])
    return [curve]


_BUILDERS = {"fig2": _fig2, "fig3": _fig3, "fig4": _fig4, "fig5": _fig5, "table1": _table1}


def preset_config(preset: str, overrides: dict | None = None) -> ScenarioConfig:
    if preset not in PRESETS:
        raise UnknownPreset(preset)
    cfg = config_from_mapping(PRESETS[preset])
    return config_from_mapping(overrides or {}, cfg)


def write_csv(path: Path, curve: Curve, meta: dict):
    lines = [f"# {k}: {v}" for k, v in meta.items()]
    lines.append(",".join(curve.columns))
    lines.extend(",".join(fmt(x) for x in row) for row in curve.rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_experiment(preset: str, overrides: dict | None = None, out_dir=None,
                   cache: CapacityCache | None = None, jobs: int = 1) -> ExperimentResult:
    """Run a preset; CSV files are written when ``out_dir`` is given."""
    overrides = {k.replace("-", "_"): v for k, v in (overrides or {}).items() if v is not None}
    cfg = preset_config(preset, overrides)
    runner = _Runner(cfg, cache if cache is not None else CapacityCache(), jobs)
    curves = _BUILDERS[preset](runner, set(overrides))
    result = ExperimentResult(preset, cfg, curves, issues=runner.issues)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        meta = {
            "preset": preset,
            "code_version": __version__,
            "seed": cfg.seed,
            "config": json.dumps(cfg.echo(), sort_keys=True),
        }
        for curve in curves:
            path = out / f"{curve.name}.csv"
            write_csv(path, curve, meta)
            result.files.append(path)
    return result
