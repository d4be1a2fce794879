"""Quenched Monte Carlo: freeze one past, resample many futures.

For the causal linear model the centered transform
``S_n(theta) - E_0 S_n(theta)`` only involves future innovations, so each
replicate needs a single convolution of its future draw with the
coefficients.  Statistics are compared against the complex Brownian limit
``sigma(theta) (B_1 + i B_2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .conditions import CONVERGES, classify_frequency, evaluate_conditions
from .model import (
    STREAM_REFERENCE,
    CoefficientFamily,
    InnovationDistribution,
    PastRealization,
    centered_future_parts,
    mix_seed,
    sample_past,
    sq_norm,
    tail_sq_sum,
    transfer_function,
)
from .parallel import map_chunks
from .transforms import INFINITE_R, martingale_approximant, rotation_factors

__all__ = [
    "QuenchedExperiment",
    "FddRow",
    "FddTestReport",
    "PathTestReport",
    "DispersionReport",
    "TRUNCATION_GATE",
    "required_depth",
    "make_experiment",
    "simulate_paths",
    "run_fdd_test",
    "run_anisotropy_probe",
    "run_averaged_frequency_test",
    "run_path_functional_test",
    "nonrandom_limit_check",
]

STREAM_THETA = 3
TRUNCATION_GATE = 0.02
DEFAULT_DEPTH = 64
MAX_DEPTH = 1 << 22
KS_CRIT_1PCT = 1.628  # asymptotic two-sample KS constant c(0.01)


@dataclass(frozen=True, eq=False)
class QuenchedExperiment:
    family: CoefficientFamily
    innov: InnovationDistribution
    past: PastRealization
    theta: float | None = None
    theta_mode: str = "fixed"
    n: int = 4096
    m: float = 1.0
    R: int = 2000
    time_grid: tuple = (0.5, 1.0)
    significance: float = 0.01
    var_rtol: float = 0.10
    corr_tol: float = 0.05
    threads: int | None = None

    def __post_init__(self):
        if self.theta_mode not in ("fixed", "uniform"):
            raise ValueError("theta_mode must be 'fixed' or 'uniform'")
        if self.theta_mode == "fixed" and self.theta is None:
            raise ValueError("fixed theta_mode needs theta")
        grid = list(self.time_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("time_grid must be strictly increasing")
        if grid[0] <= 0 or grid[-1] > self.m:
            raise ValueError("time_grid must lie in (0, m]")

    @property
    def master_seed(self) -> int:
        return self.past.master_seed

    def describe(self) -> dict:
        return {
            "family": self.family.to_dict(),
            "innovation": self.innov.kind,
            "theta": self.theta,
            "theta_mode": self.theta_mode,
            "n": self.n,
            "m": self.m,
            "R": self.R,
            "L": self.past.depth,
            "time_grid": list(self.time_grid),
            "master_seed": self.master_seed,
            "truncation_error_bound": self.past.truncation_error_bound,
        }


def required_depth(family: CoefficientFamily, sigma: float,
                   minimum: int = DEFAULT_DEPTH) -> int:
    """Smallest power-of-two depth whose truncation bound is within the gate."""
    L = minimum
    limit = TRUNCATION_GATE * sigma
    while math.sqrt(tail_sq_sum(family, L + 1)) > limit:
        if L >= MAX_DEPTH:
            raise ValueError(f"no past depth up to {MAX_DEPTH} meets the truncation gate")
        L *= 2
    return L


def _gate(exp: QuenchedExperiment, sigma: float):
    bound = exp.past.truncation_error_bound
    if bound > TRUNCATION_GATE * sigma:
        raise ValueError(
            f"past truncation bound {bound:.3g} exceeds {TRUNCATION_GATE} * sigma = "
            f"{TRUNCATION_GATE * sigma:.3g}; raise L (try {required_depth(exp.family, sigma)})"
        )


def make_experiment(family: CoefficientFamily, theta: float | None = None, *,
                    theta_mode: str = "fixed", n: int = 4096, R: int = 2000,
                    L: int | None = None, master_seed: int = 0,
                    innov: InnovationDistribution | None = None, **kw) -> QuenchedExperiment:
    """Sample the frozen past (depth chosen to pass the truncation gate) and bundle the run."""
    innov = innov or InnovationDistribution()
    if L is None:
        if theta_mode == "fixed" and not family.is_zero:
            try:
                scale = abs(transfer_function(family, theta))
            except ValueError:
                scale = math.sqrt(sq_norm(family))
            L = required_depth(family, scale / math.sqrt(2.0)) if scale > 0 else DEFAULT_DEPTH
        else:
            L = DEFAULT_DEPTH
    past = sample_past(family, innov, L, master_seed)
    return QuenchedExperiment(family, innov, past, theta, theta_mode, n, R=R, **kw)


def _seeds(master_seed: int, idx) -> list[int]:
    return [mix_seed(master_seed, int(i)) for i in idx]


def _theta_draws(master_seed: int, idx) -> np.ndarray:
    return np.array([
        np.random.Generator(np.random.PCG64(mix_seed(master_seed, int(i), STREAM_THETA)))
        .uniform(0.0, 2.0 * math.pi)
        for i in idx
    ])


def simulate_paths(exp: QuenchedExperiment, times, *, path: str = "w",
                   with_running_max: bool = False) -> dict:
    """Sample ``W_n(theta)(t)`` (or the martingale path ``V_{n,inf}``) at ``times``.

    Returns a dict with ``"values"`` of shape ``(R, len(times))``, optionally
    ``"re_max"`` (``max_{t<=1} Re`` over integer partial sums, including
    ``t = 0``) and ``"theta"`` for the uniform mode.
    """
    n = exp.n
    times = np.asarray(times, dtype=float)
    idx_t = np.floor(n * times + 1e-9).astype(np.int64)
    horizon = int(max(idx_t.max(), n if with_running_max else 0))
    scale = 1.0 / math.sqrt(n)
    uniform = exp.theta_mode == "uniform"
    if path not in ("w", "v"):
        raise ValueError("path must be 'w' or 'v'")
    if not uniform:
        rot_fixed = rotation_factors(exp.theta, horizon)
        d = martingale_approximant(exp.family, exp.theta, INFINITE_R).d0_coef if path == "v" else None

    def work(idx):
        x, F = centered_future_parts(exp.family, exp.innov, horizon, _seeds(exp.master_seed, idx))
        out = {}
        if uniform:
            th = _theta_draws(exp.master_seed, idx)
            rot = rotation_factors(th, horizon)
            out["theta"] = th
        else:
            rot = rot_fixed
        if path == "w":
            terms = rot * F
        else:
            x[:, 0] = exp.past.x0
            terms = d * (rot * x)
        partial = np.zeros((len(idx), horizon + 1), dtype=complex)
        np.cumsum(terms, axis=1, out=partial[:, 1:])
        out["values"] = partial[:, idx_t] * scale
        if with_running_max:
            out["re_max"] = partial[:, :n + 1].real.max(axis=1) * scale
        return out

    return map_chunks(work, exp.R, threads=exp.threads)


@dataclass(frozen=True)
class FddRow:
    t: float
    var_re: float
    var_im: float
    var_re_se: float
    var_im_se: float
    target_re: float
    target_im: float
    corr_re_im: float
    incr_corr: float
    ks_stat_re: float
    ks_p_re: float
    ks_stat_im: float
    ks_p_im: float
    verdicts: dict


@dataclass(frozen=True, eq=False)
class FddTestReport:
    experiment: str
    setup: dict
    rows: list
    tolerances: dict
    passed: bool
    extras: dict = field(default_factory=dict)


def _var_and_se(v: np.ndarray) -> tuple[float, float]:
    R = len(v)
    var = float(np.var(v, ddof=1))
    return var, var * math.sqrt(2.0 / (R - 1))


def _corr(a: np.ndarray, b: np.ndarray) -> float:
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        return 0.0
    return float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))


def _complex_corr(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(np.sum(np.abs(a) ** 2)) * float(np.sum(np.abs(b) ** 2)))
    if den == 0.0:
        return 0.0
    return float(abs(np.sum(a * np.conj(b))) / den)


def _ks_normal(sample: np.ndarray, scale: float) -> tuple[float, float]:
    if scale <= 0.0:
        return 0.0, 1.0
    res = stats.kstest(sample / scale, "norm")
    return float(res.statistic), float(res.pvalue)


def _fdd_rows(exp: QuenchedExperiment, vals: np.ndarray, target_re, target_im,
              isotropic: bool, n_ks: int) -> tuple[list, bool]:
    R = exp.R
    alpha_b = exp.significance / n_ks
    incr_tol = 3.0 / math.sqrt(R)
    rows = []
    ok_all = True
    prev = None
    for g, t in enumerate(exp.time_grid):
        w = vals[:, g]
        vre, vre_se = _var_and_se(w.real)
        vim, vim_se = _var_and_se(w.imag)
        tre, tim = target_re(t), target_im(t)
        corr = _corr(w.real, w.imag)
        incr = _complex_corr(prev, w - prev) if prev is not None else float("nan")
        ks_re = _ks_normal(w.real, math.sqrt(tre))
        ks_im = _ks_normal(w.imag, math.sqrt(tim)) if isotropic else (float("nan"), float("nan"))
        v = {}
        if tre == 0.0:
            v["var_re"] = vre == 0.0
        else:
            v["var_re"] = abs(vre - tre) <= exp.var_rtol * tre
        if isotropic:
            v["var_im"] = (vim == 0.0) if tim == 0.0 else abs(vim - tim) <= exp.var_rtol * tim
            v["corr_re_im"] = abs(corr) < exp.corr_tol
            v["ks_im"] = ks_im[1] > alpha_b
        else:
            v["var_im"] = vim < 0.01 * vre if vre > 0 else vim == 0.0
        v["ks_re"] = ks_re[1] > alpha_b
        if prev is not None:
            v["increment_corr"] = incr < incr_tol
        v = {k: bool(x) for k, x in v.items()}
        ok_all &= all(v.values())
        rows.append(FddRow(float(t), vre, vim, vre_se, vim_se, float(tre), float(tim), corr,
                           incr, ks_re[0], ks_re[1], ks_im[0], ks_im[1], v))
        prev = w
    return rows, ok_all


def run_fdd_test(exp: QuenchedExperiment) -> FddTestReport:
    """Finite-dimensional test of ``W_n(theta)`` against ``sigma(theta)(B_1 + i B_2)``."""
    if exp.theta_mode != "fixed":
        raise ValueError("run_fdd_test needs a fixed frequency")
    fc = classify_frequency(exp.family, exp.theta)
    if not fc.in_I:
        raise ValueError(
            f"theta={exp.theta!r} is not in I ({fc.notes}); use run_anisotropy_probe"
        )
    s2 = fc.sigma2_closed
    _gate(exp, math.sqrt(s2))
    vals = simulate_paths(exp, exp.time_grid)["values"]
    n_ks = 2 * len(exp.time_grid)
    rows, ok = _fdd_rows(exp, vals, lambda t: s2 * t, lambda t: s2 * t, True, n_ks)
    tol = {
        "var_rtol": exp.var_rtol,
        "corr_tol": exp.corr_tol,
        "significance": exp.significance,
        "bonferroni_tests": n_ks,
        "increment_corr_tol": 3.0 / math.sqrt(exp.R),
    }
    return FddTestReport("fdd", exp.describe(), rows, tol, ok, {"sigma2": s2})


def run_anisotropy_probe(exp: QuenchedExperiment) -> FddTestReport:
    """At ``theta`` in {0, pi}: real-line limit with ``Var Re -> A(e^{i theta})^2``, ``Var Im -> 0``.

    ``theta = 0`` needs the Hannan condition; at ``theta = pi`` the weak
    Hannan condition with regularity is enough for the transfer series to
    converge.
    """
    if exp.theta_mode != "fixed":
        raise ValueError("anisotropy probe needs a fixed frequency")
    th = exp.theta
    if abs(math.sin(th)) > 1e-12:
        raise ValueError("anisotropy probe is for theta in {0, pi}")
    if exp.family.values and any(isinstance(v, complex) for v in exp.family.values):
        raise ValueError("anisotropy probe assumes real coefficients")
    rep = evaluate_conditions(exp.family, 8)
    at_zero = math.cos(th) > 0
    if rep.hannan_verdict != CONVERGES:
        weak_ok = rep.weak_hannan_verdict == CONVERGES and rep.regularity_verdict == CONVERGES
        if at_zero or not weak_ok:
            raise ValueError("anisotropy probe needs a family satisfying the Hannan condition")
    A = transfer_function(exp.family, th)
    a2 = abs(A) ** 2
    _gate(exp, math.sqrt(a2))
    vals = simulate_paths(exp, exp.time_grid)["values"]
    n_ks = len(exp.time_grid)
    rows, ok = _fdd_rows(exp, vals, lambda t: a2 * t, lambda t: 0.0, False, n_ks)
    tol = {
        "var_rtol": exp.var_rtol,
        "var_im_over_var_re": 0.01,
        "significance": exp.significance,
        "bonferroni_tests": n_ks,
        "increment_corr_tol": 3.0 / math.sqrt(exp.R),
    }
    return FddTestReport("anisotropy", exp.describe(), rows, tol, ok,
                         {"transfer_real": A.real, "transfer_imag": A.imag, "var_re_target": a2})


def run_averaged_frequency_test(exp: QuenchedExperiment) -> FddTestReport:
    """Each replicate draws ``theta ~ U[0, 2 pi)``; tests the mixed limit law at ``t = m``.

    Checks ``E|W(1)|^2`` against ``||X_0||^2`` (Parseval), uniformity of the
    angle of ``W(1)`` and the law of ``|W(1)|^2`` against a direct sampler of
    ``sigma(theta)^2 (Z_1^2 + Z_2^2)``.
    """
    if exp.theta_mode != "uniform":
        raise ValueError("averaged-frequency test needs theta_mode='uniform'")
    rep = evaluate_conditions(exp.family, 8)
    if rep.regularity_verdict != CONVERGES:
        raise ValueError("averaged-frequency test needs the regularity condition")
    t = exp.time_grid[-1]
    res = simulate_paths(exp, [t])
    w = res["values"][:, 0]
    mod2 = np.abs(w) ** 2
    target = sq_norm(exp.family) * t
    mean = float(mod2.mean())
    se = float(mod2.std(ddof=1) / math.sqrt(exp.R))
    alpha = exp.significance
    verdicts = {"mean_sq": abs(mean - target) <= 3.0 * se if se > 0 else mean == target}
    extras = {"mean_sq": mean, "mean_sq_se": se, "target": target}
    if exp.family.is_zero or target == 0.0:
        extras.update(angle_ks_p=1.0, modulus_ks_p=1.0, degenerate=True)
    else:
        angles = np.mod(np.angle(w), 2.0 * math.pi) / (2.0 * math.pi)
        ks_a = stats.kstest(angles, "uniform")
        ref = _reference_modulus(exp, t)
        ks_m = stats.ks_2samp(mod2, ref)
        extras.update(angle_ks_stat=float(ks_a.statistic), angle_ks_p=float(ks_a.pvalue),
                      modulus_ks_stat=float(ks_m.statistic), modulus_ks_p=float(ks_m.pvalue))
        verdicts["angle_uniform"] = ks_a.pvalue > alpha
        verdicts["modulus_law"] = ks_m.pvalue > alpha
    verdicts = {k: bool(v) for k, v in verdicts.items()}
    tol = {"mean_sq_se_multiple": 3.0, "significance": alpha}
    return FddTestReport("avg-freq", exp.describe(), [], tol, all(verdicts.values()),
                         {**extras, "verdicts": verdicts})


def _reference_modulus(exp: QuenchedExperiment, t: float) -> np.ndarray:
    """``sigma(theta)^2 t (Z_1^2 + Z_2^2)`` with ``theta`` uniform, from the reference stream."""
    rng = np.random.Generator(np.random.PCG64(mix_seed(exp.master_seed, 0, STREAM_REFERENCE)))
    th = rng.uniform(0.0, 2.0 * math.pi, exp.R)
    z = rng.standard_normal((exp.R, 2))
    s2 = np.array([abs(transfer_function(exp.family, x)) ** 2 / 2.0 for x in th])
    return s2 * t * (z ** 2).sum(axis=1)


@dataclass(frozen=True, eq=False)
class PathTestReport:
    experiment: str
    setup: dict
    path: str
    sigma: float
    ks_stat: float
    ks_p: float
    critical_value: float
    passed: bool
    sample: np.ndarray
    reference: np.ndarray


def _brownian_max_reference(exp: QuenchedExperiment, sigma: float) -> np.ndarray:
    n = exp.n

    def work(idx):
        out = np.empty(len(idx))
        for i, j in enumerate(idx):
            rng = np.random.Generator(np.random.PCG64(mix_seed(exp.master_seed, int(j), STREAM_REFERENCE)))
            walk = np.cumsum(rng.standard_normal(n))
            out[i] = max(0.0, float(walk.max()))
        return {"m": out}

    return sigma * map_chunks(work, exp.R, threads=exp.threads)["m"] / math.sqrt(n)


def run_path_functional_test(exp: QuenchedExperiment, path: str = "w") -> PathTestReport:
    """Two-sample KS of ``max_{t<=1} Re W(t)`` against ``sigma max_{t<=1} B(t)``.

    The Brownian reference is an ``n``-step Gaussian random walk so the
    discretisation matches.  ``path="v"`` runs the martingale-only path
    ``V_{n,inf}`` instead (Hannan families only).
    """
    if exp.theta_mode != "fixed":
        raise ValueError("path functional test needs a fixed frequency")
    fc = classify_frequency(exp.family, exp.theta)
    if not fc.in_I:
        raise ValueError(f"theta={exp.theta!r} is not in I ({fc.notes})")
    sigma = math.sqrt(fc.sigma2_closed)
    _gate(exp, sigma)
    sample = simulate_paths(exp, [1.0], path=path, with_running_max=True)["re_max"]
    crit = KS_CRIT_1PCT * math.sqrt(2.0 / exp.R)
    if sigma == 0.0:
        ref = np.zeros(exp.R)
        return PathTestReport("path-test", exp.describe(), path, 0.0, 0.0, 1.0, crit,
                              bool(np.all(sample == 0.0)), sample, ref)
    ref = _brownian_max_reference(exp, sigma)
    ks = stats.ks_2samp(sample, ref)
    passed = bool(ks.statistic < crit and ks.pvalue > exp.significance)
    return PathTestReport("path-test", exp.describe(), path, sigma, float(ks.statistic),
                          float(ks.pvalue), crit, passed, sample, ref)


@dataclass(frozen=True, eq=False)
class DispersionReport:
    variances: np.ndarray
    ses: np.ndarray
    x0s: np.ndarray
    pooled: float
    z_scores: np.ndarray
    chi2: float
    chi2_p: float
    passed: bool


def nonrandom_limit_check(family: CoefficientFamily, theta: float, *, K: int = 5,
                          n: int = 4096, R: int = 2000, master_seed: int = 0,
                          L: int | None = None, t: float = 1.0,
                          innov: InnovationDistribution | None = None,
                          threads: int | None = None) -> DispersionReport:
    """Per-past ``Var Re W(t)`` across ``K`` independent frozen pasts.

    The quenched limit does not depend on the past, so the per-past
    estimates should scatter only by Monte Carlo error: every z-score
    against the inverse-variance pooled value must stay below 3.
    """
    variances, ses, x0s = [], [], []
    for k in range(K):
        seed = mix_seed(master_seed, k, STREAM_THETA + 1)
        exp = make_experiment(family, theta, n=n, R=R, L=L, master_seed=seed, innov=innov,
                              time_grid=(t,), m=max(1.0, t), threads=threads)
        w = simulate_paths(exp, [t])["values"][:, 0]
        v, se = _var_and_se(w.real)
        variances.append(v)
        ses.append(se)
        x0s.append(exp.past.x0)
    v = np.array(variances)
    s = np.array(ses)
    if np.all(s == 0.0):
        return DispersionReport(v, s, np.array(x0s), 0.0, np.zeros(K), 0.0, 1.0, True)
    wts = 1.0 / s ** 2
    pooled = float(np.sum(wts * v) / np.sum(wts))
    z = (v - pooled) / s
    chi2 = float(np.sum(z ** 2))
    p = float(stats.chi2.sf(chi2, K - 1))
    return DispersionReport(v, s, np.array(x0s), pooled, z, chi2, p, bool(np.max(np.abs(z)) < 3.0))
