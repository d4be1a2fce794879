"""``qdftlab`` command line: run experiments from a config file and write reports.

Outputs (inside the output directory):

* ``run.json``        manifest: version, config echo, per-experiment status, timings, file index
* ``summary.json``    verdicts per experiment
* ``conditions.csv``  Hannan / weak-Hannan / regularity partial sums
* ``frequencies.csv`` classification of each configured frequency
* ``sigma2.csv``      closed-form and Monte Carlo limiting variance
* ``decompose.csv``, ``decay.csv``, ``fdd.csv``, ``avgfreq.csv``, ``pathtest.csv``
* ``paths/*.dat``     whitespace-separated plot data

Every numeric CSV value column is followed by a ``_se`` column holding its
standard error or the tag ``exact``; key columns and true/false verdicts have none.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .conditions import classify_frequency, evaluate_conditions, sigma2_estimator
from .config import ConfigError, RunConfig, load_config
from .model import SPLITMIX_CONSTANTS, mix_seed, sample_past, simulate_future
from .quenched import (
    make_experiment,
    run_anisotropy_probe,
    run_averaged_frequency_test,
    run_fdd_test,
    run_path_functional_test,
    simulate_paths,
)
from .transforms import decay_diagnostic, decomposition_residual, m_path, w_path

SUBCOMMANDS = ("conditions", "simulate", "decompose-check", "decay", "fdd-test",
               "anisotropy", "avg-freq", "path-test")
EXACT = "exact"
DECOMP_RTOL = 1e-9


def fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


@dataclass
class RunManifest:
    tool_version: str
    config: dict
    experiments: list = field(default_factory=list)
    files: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "tool": "qdftlab",
            "tool_version": self.tool_version,
            "config": self.config,
            "seed_mixing": {"algorithm": "splitmix64", **SPLITMIX_CONSTANTS},
            "experiments": self.experiments,
            "files": self.files,
            "timings": self.timings,
        }

    @property
    def failed(self) -> bool:
        return any(e["status"] == "error" or e.get("verdict") == "fail" for e in self.experiments)


class _Writer:
    """Serialized file writes that keep an index of everything produced."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []

    def _target(self, rel: str) -> Path:
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def csv(self, rel: str, header: list, rows: list):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
        self.text(rel, buf.getvalue())

    def dat(self, rel: str, comment: str, columns: list):
        lines = [f"# {comment}"]
        for row in zip(*columns):
            lines.append(" ".join(fmt(v) for v in row))
        self.text(rel, "\n".join(lines) + "\n")

    def text(self, rel: str, body: str):
        self._target(rel).write_text(body, encoding="utf-8")
        if rel not in self.files:
            self.files.append(rel)


def _prepare_outdir(root: Path):
    """Create the output directory, clearing artifacts of a previous run only."""
    if root.exists():
        old = root / "run.json"
        entries = [p for p in root.rglob("*") if p.is_file()]
        if entries and not old.exists():
            raise ConfigError(f"output directory {root} is not empty and holds no run.json", "directory")
        if old.exists():
            try:
                listed = json.loads(old.read_text(encoding="utf-8")).get("files", [])
            except (OSError, ValueError):
                listed = []
            listed_set = set(listed)
            stray = [p for p in entries if str(p.relative_to(root)) not in listed_set]
            if stray:
                raise ConfigError(f"output directory {root} holds files not produced by qdftlab: "
                                  f"{stray[0]}", "directory")
            for rel in listed:
                (root / rel).unlink(missing_ok=True)
    root.mkdir(parents=True, exist_ok=True)


def _fixed_thetas(cfg: RunConfig) -> list:
    return [] if cfg.uniform else list(cfg.thetas)


def _exp_conditions(cfg: RunConfig, w: _Writer) -> dict:
    rep = evaluate_conditions(cfg.family, cfg.conditions_terms)
    rows = []
    for i in range(cfg.conditions_terms):
        rows.append([i + 1, rep.hannan_partial_sums[i], EXACT, rep.weak_hannan_partial_sums[i], EXACT,
                     rep.regularity_decay[i], EXACT])
    w.csv("conditions.csv",
          ["N", "hannan_partial_sum", "hannan_partial_sum_se", "weak_hannan_partial_sum",
           "weak_hannan_partial_sum_se", "regularity_decay", "regularity_decay_se"], rows)
    w.dat("paths/conditions.dat", "N hannan weak_hannan regularity",
          [np.arange(1, cfg.conditions_terms + 1), rep.hannan_partial_sums,
           rep.weak_hannan_partial_sums, rep.regularity_decay])
    frows = []
    for th in _fixed_thetas(cfg):
        fc = classify_frequency(cfg.family, th)
        s2 = fc.sigma2_closed if fc.sigma2_closed is not None else float("nan")
        frows.append([th, fc.in_I, fc.e2theta_in_spec, s2, EXACT])
    w.csv("frequencies.csv", ["theta", "in_I", "e2theta_in_spec", "sigma2_closed", "sigma2_closed_se"],
          frows)
    return {
        "verdict": "pass",
        "hannan": rep.hannan_verdict,
        "weak_hannan": rep.weak_hannan_verdict,
        "regularity": rep.regularity_verdict,
        "tail_bounds": {k: (v if math.isfinite(v) else "inf") for k, v in rep.analytic_tail_bounds.items()},
    }


def _exp_simulate(cfg: RunConfig, w: _Writer) -> dict:
    past = sample_past(cfg.family, cfg.innovation, cfg.L or 64, cfg.master_seed)
    bundle = simulate_future(past, cfg.family, cfg.innovation, int(cfg.n * cfg.m), 0)
    rows, checks = [], {}
    for i, th in enumerate(_fixed_thetas(cfg)):
        fc = classify_frequency(cfg.family, th)
        est = sigma2_estimator(past, cfg.family, th, cfg.n, max(cfg.R, 100), innov=cfg.innovation)
        closed = fc.sigma2_closed if fc.sigma2_closed is not None else float("nan")
        rows.append([th, closed, EXACT, est.value, est.se, cfg.n, est.replicates])
        if fc.in_I:
            checks[f"theta={fmt(th)}"] = abs(est.value - closed) <= 3.0 * est.se
        wp = w_path(bundle, past, cfg.family, th, cfg.m, cfg.G, n=cfg.n)
        w.dat(f"paths/w_theta{i}.dat", f"t Re Im  W_n(theta={fmt(th)}), replicate 0",
              [wp.times, wp.values.real, wp.values.imag])
        if cfg.family.absolutely_summable:
            vp = m_path(bundle, cfg.family, th, math.inf, cfg.m, cfg.G, n=cfg.n)
            w.dat(f"paths/v_theta{i}.dat", f"t Re Im  V_n,inf(theta={fmt(th)}), replicate 0",
                  [vp.times, vp.values.real, vp.values.imag])
    w.csv("sigma2.csv", ["theta", "sigma2_closed", "sigma2_closed_se", "sigma2_estimate",
                         "sigma2_estimate_se", "n", "replicates"], rows)
    ok = all(checks.values())
    return {"verdict": "pass" if ok else "fail", "checks": checks}


def _exp_decompose(cfg: RunConfig, w: _Writer) -> dict:
    rng = np.random.Generator(np.random.PCG64(mix_seed(cfg.master_seed, 0, 7)))
    rows, worst = [], 0.0
    for i in range(cfg.decompose_tuples):
        th = float(rng.uniform(0.0, 2.0 * math.pi))
        r = int(rng.integers(1, 9))
        n = int(rng.integers(2, 65))
        L = int(rng.integers(1, 33))
        seed = int(rng.integers(0, 2 ** 63))
        past = sample_past(cfg.family, cfg.innovation, L, seed)
        bundle = simulate_future(past, cfg.family, cfg.innovation, n, 0)
        res = decomposition_residual(bundle, past, cfg.family, th, r, n)
        rel = abs(res.residual) / (1.0 + abs(res.lhs))
        worst = max(worst, rel)
        rows.append([i, th, r, n, L, res.lhs.real, EXACT, res.lhs.imag, EXACT,
                     res.rhs.real, EXACT, res.rhs.imag, EXACT, rel, EXACT])
    w.csv("decompose.csv", ["tuple", "theta", "r", "n", "L", "lhs_re", "lhs_re_se", "lhs_im",
                                "lhs_im_se", "rhs_re", "rhs_re_se", "rhs_im", "rhs_im_se",
                                "relative_residual", "relative_residual_se"], rows)
    return {"verdict": "pass" if worst < DECOMP_RTOL else "fail", "max_relative_residual": worst,
            "tolerance": DECOMP_RTOL}


def _exp_decay(cfg: RunConfig, w: _Writer) -> dict:
    past = sample_past(cfg.family, cfg.innovation, cfg.L or 64, cfg.master_seed)
    rows, checks = [], {}
    for i, th in enumerate(_fixed_thetas(cfg)):
        d = decay_diagnostic(past, cfg.family, th, cfg.r_list, cfg.N_list, cfg.decay_replicates,
                             innov=cfg.innovation)
        for a, r in enumerate(d.r_list):
            for b, N in enumerate(d.N_list):
                rows.append([th, r, N, d.mean[a, b], d.se[a, b]])
        for b, N in enumerate(d.N_list):
            w.dat(f"paths/decay_theta{i}_N{N}.dat", f"r value se  theta={fmt(th)} N={N}",
                  [np.array(d.r_list), d.mean[:, b], d.se[:, b]])
        checks[f"theta={fmt(th)}"] = d.nonincreasing_in_r(d.N_list[-1])
    w.csv("decay.csv", ["theta", "r", "N", "value", "value_se"], rows)
    return {"verdict": "pass" if all(checks.values()) else "fail",
            "monotone_in_r_at_largest_N": checks}


_FDD_HEADER = ["experiment", "theta", "t", "var_re", "var_re_se", "target_re", "target_re_se",
               "var_im", "var_im_se", "target_im", "target_im_se", "corr_re_im", "corr_re_im_se",
               "increment_corr", "increment_corr_se", "ks_stat_re", "ks_stat_re_se", "ks_p_re",
               "ks_p_re_se", "ks_stat_im", "ks_stat_im_se", "ks_p_im", "ks_p_im_se", "pass"]


def _fdd_rows(report, theta, R) -> list:
    out = []
    corr_se = 1.0 / math.sqrt(R)
    for row in report.rows:
        out.append([report.experiment, theta, row.t, row.var_re, row.var_re_se, row.target_re, EXACT,
                    row.var_im, row.var_im_se, row.target_im, EXACT, row.corr_re_im, corr_se,
                    row.incr_corr, corr_se, row.ks_stat_re, EXACT, row.ks_p_re, EXACT,
                    row.ks_stat_im, EXACT, row.ks_p_im, EXACT, all(row.verdicts.values())])
    return out


def _ecdf_overlay(w: _Writer, rel: str, sample: np.ndarray, scale: float, comment: str):
    from scipy import stats

    xs = np.sort(sample)
    emp = np.arange(1, len(xs) + 1) / len(xs)
    ref = stats.norm.cdf(xs / scale) if scale > 0 else (xs >= 0).astype(float)
    w.dat(rel, comment, [xs, emp, ref])


def _experiment(cfg: RunConfig, theta: float | None, **kw):
    return make_experiment(cfg.family, theta, n=cfg.n, R=cfg.R, L=cfg.L,
                           master_seed=cfg.master_seed, innov=cfg.innovation, m=cfg.m,
                           time_grid=cfg.time_grid, significance=cfg.significance, **kw)


class _FddCollector:
    def __init__(self):
        self.rows = []


def _exp_fdd(cfg: RunConfig, w: _Writer, fdd: _FddCollector) -> dict:
    checks, skipped = {}, []
    for i, th in enumerate(_fixed_thetas(cfg)):
        fc = classify_frequency(cfg.family, th)
        if not fc.in_I:
            skipped.append(th)
            continue
        exp = _experiment(cfg, th)
        rep = run_fdd_test(exp)
        fdd.rows.extend(_fdd_rows(rep, th, cfg.R))
        vals = simulate_paths(exp, [cfg.time_grid[-1]])["values"][:, 0]
        _ecdf_overlay(w, f"paths/fdd_ecdf_theta{i}.dat", vals.real,
                      math.sqrt(rep.extras["sigma2"] * cfg.time_grid[-1]),
                      f"x empirical_cdf normal_cdf  Re W(t={fmt(cfg.time_grid[-1])}), theta={fmt(th)}")
        checks[f"theta={fmt(th)}"] = rep.passed
    if not checks:
        return {"verdict": "n/a", "skipped_not_in_I": skipped}
    return {"verdict": "pass" if all(checks.values()) else "fail", "checks": checks,
            "skipped_not_in_I": skipped}


def _exp_anisotropy(cfg: RunConfig, w: _Writer, fdd: _FddCollector) -> dict:
    thetas = [th for th in _fixed_thetas(cfg) if abs(math.sin(th)) < 1e-12] or [math.pi]
    checks = {}
    for th in thetas:
        rep = run_anisotropy_probe(_experiment(cfg, th))
        fdd.rows.extend(_fdd_rows(rep, th, cfg.R))
        checks[f"theta={fmt(th)}"] = rep.passed
    return {"verdict": "pass" if all(checks.values()) else "fail", "checks": checks}


def _exp_avg_freq(cfg: RunConfig, w: _Writer) -> dict:
    rep = run_averaged_frequency_test(_experiment(cfg, None, theta_mode="uniform"))
    e = rep.extras
    w.csv("avgfreq.csv", ["t", "mean_sq", "mean_sq_se", "target", "target_se", "angle_ks_p",
                          "angle_ks_p_se", "modulus_ks_p", "modulus_ks_p_se", "pass"],
          [[cfg.time_grid[-1], e["mean_sq"], e["mean_sq_se"], e["target"], EXACT,
            e["angle_ks_p"], EXACT, e["modulus_ks_p"], EXACT, rep.passed]])
    return {"verdict": "pass" if rep.passed else "fail", "checks": e["verdicts"]}


def _exp_path(cfg: RunConfig, w: _Writer) -> dict:
    rows, checks = [], {}
    for i, th in enumerate(_fixed_thetas(cfg)):
        if not classify_frequency(cfg.family, th).in_I:
            continue
        rep = run_path_functional_test(_experiment(cfg, th))
        rows.append([th, rep.path, rep.sigma, EXACT, rep.ks_stat, EXACT, rep.critical_value, EXACT,
                     rep.ks_p, EXACT, rep.passed])
        xs = np.sort(rep.sample)
        ys = np.sort(rep.reference)
        grid = np.arange(1, len(xs) + 1) / len(xs)
        w.dat(f"paths/pathmax_theta{i}.dat", "sample_sorted reference_sorted cdf_level",
              [xs, ys, grid])
        checks[f"theta={fmt(th)}"] = rep.passed
    w.csv("pathtest.csv", ["theta", "path", "sigma", "sigma_se", "ks_stat", "ks_stat_se",
                           "critical_value", "critical_value_se", "ks_p", "ks_p_se", "pass"], rows)
    if not checks:
        return {"verdict": "n/a"}
    return {"verdict": "pass" if all(checks.values()) else "fail", "checks": checks}


def run(cfg: RunConfig, subcommand: str = "all") -> RunManifest:
    """Execute ``subcommand`` (or ``all``) and write every artifact under ``cfg.output_dir``."""
    if subcommand != "all" and subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    selected = list(SUBCOMMANDS) if subcommand == "all" else [subcommand]
    root = Path(cfg.output_dir)
    _prepare_outdir(root)
    writer = _Writer(root)
    manifest = RunManifest(__version__, cfg.echo())
    fdd = _FddCollector()
    summary = {}
    t0 = time.perf_counter()
    dispatch = {
        "conditions": lambda: _exp_conditions(cfg, writer),
        "simulate": lambda: _exp_simulate(cfg, writer),
        "decompose-check": lambda: _exp_decompose(cfg, writer),
        "decay": lambda: _exp_decay(cfg, writer),
        "fdd-test": lambda: _exp_fdd(cfg, writer, fdd),
        "anisotropy": lambda: _exp_anisotropy(cfg, writer, fdd),
        "avg-freq": lambda: _exp_avg_freq(cfg, writer),
        "path-test": lambda: _exp_path(cfg, writer),
    }
    for name in selected:
        started = time.perf_counter() - t0
        entry = {"id": name}
        if name in ("fdd-test", "path-test", "simulate", "decay") and cfg.uniform:
            result = {"verdict": "n/a", "note": "needs fixed frequencies"}
        elif name == "avg-freq" and not cfg.uniform and subcommand == "all":
            result = {"verdict": "n/a", "note": "needs theta = uniform"}
        else:
            try:
                result = dispatch[name]()
            except Exception as exc:  # recorded per experiment, never silently dropped
                result = None
                entry.update(status="error", verdict="fail", error=f"{name}: {exc}",
                             partial_outputs=False)
        if result is not None:
            entry.update(status="ok", verdict=result.get("verdict", "n/a"))
            summary[name] = result
        else:
            summary[name] = {"verdict": "fail", "error": entry["error"]}
        finished = time.perf_counter() - t0
        entry.update(started_s=round(started, 6), finished_s=round(max(finished, started), 6))
        manifest.experiments.append(entry)
    if fdd.rows:
        writer.csv("fdd.csv", _FDD_HEADER, fdd.rows)
    writer.text("summary.json", json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    manifest.timings = {"total_s": round(time.perf_counter() - t0, 6)}
    manifest.files = sorted(writer.files + ["run.json"])
    tmp = root / "run.json.tmp"
    tmp.write_text(json.dumps(_jsonable(manifest.to_dict()), indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, root / "run.json")
    return manifest


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="qdftlab", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS + ("all",))
    ap.add_argument("config", help="path to the run configuration")
    ap.add_argument("--seed", type=int, help="override master_seed")
    ap.add_argument("--out", help="override the output directory")
    ap.add_argument("--replicates", type=int, help="override R")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(args.seed, args.out, args.replicates)
        manifest = run(cfg, args.subcommand)
    except (ConfigError, OSError) as exc:
        print(f"qdftlab: {exc}", file=sys.stderr)
        return 2
    for e in manifest.experiments:
        line = f"{e['id']:16s} {e['status']:6s} {e['verdict']}"
        if "error" in e:
            line += f"  ({e['error']})"
        print(line)
    return 1 if manifest.failed else 0


if __name__ == "__main__":
    sys.exit(main())
