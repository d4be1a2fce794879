"""Hannan-type conditions, frequency classification and the limiting variance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .model import (
    CoefficientFamily,
    InnovationDistribution,
    PastRealization,
    centered_future_parts,
    coef,
    coefficients,
    mix_seed,
    past_conditional_means,
    sample_past,
    sq_norm,
    tail_sq_sum,
    transfer_function,
    transfer_partial,
    transfer_tail_bound,
)
from .parallel import map_chunks
from .transforms import martingale_approximant, rotation_factors

__all__ = [
    "CONVERGES",
    "DIVERGES",
    "UNKNOWN",
    "ConditionReport",
    "FrequencyClass",
    "Sigma2Estimate",
    "ErgodicAverage",
    "evaluate_conditions",
    "classify_frequency",
    "sigma2_closed",
    "sigma2_estimator",
    "ergodic_average_check",
]

CONVERGES = "converges"
DIVERGES = "diverges"
UNKNOWN = "unknown"

_UNIT_ROOT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class ConditionReport:
    """Partial sums of the three conditions, index ``i`` standing for ``N = i + 1``.

    ``regularity_decay[i]`` is ``||E_{-n} X_0||_2`` at ``n = i + 1``.
    """

    family: CoefficientFamily
    hannan_partial_sums: np.ndarray
    hannan_verdict: str
    weak_hannan_partial_sums: np.ndarray
    weak_hannan_verdict: str
    regularity_decay: np.ndarray
    regularity_verdict: str
    analytic_tail_bounds: dict = field(default_factory=dict)


def _hannan_tail(family: CoefficientFamily, N: int) -> float:
    """``sum_{n>N} |a_n|``."""
    kind = family.kind
    if kind == "geometric":
        return family.rho ** (N + 1) / (1.0 - family.rho)
    if kind == "finite":
        return math.fsum(abs(v) for v in family.values[N:])
    if kind == "power" and family.alpha > 1.0:
        return float(special.zeta(family.alpha, N + 1))
    return math.inf


def _weak_hannan_tail(family: CoefficientFamily, N: int) -> float:
    """``sum_{n>N} |a_{n+1} - a_n|``; telescopes to ``a_{N+1}`` for decreasing families."""
    if family.kind == "finite":
        vals = (0.0,) + family.values + (0.0,)
        return math.fsum(abs(vals[n + 1] - vals[n]) for n in range(N + 1, len(vals) - 1))
    return coef(family, N + 1)


def evaluate_conditions(family: CoefficientFamily, N_terms: int) -> ConditionReport:
    """Hannan, weak Hannan and regularity sequences with analytic verdicts."""
    if N_terms < 1:
        raise ValueError("N_terms must be at least 1")
    a = np.asarray(coefficients(family, N_terms + 2))
    hannan = np.cumsum(np.abs(a[1:N_terms + 1]))
    # sum_{n=1}^{N} |a_{n+1} - a_n|
    weak = np.cumsum(np.abs(np.diff(a[1:N_terms + 2])))
    total = sq_norm(family)
    reg = np.array([math.sqrt(tail_sq_sum(family, n)) for n in range(1, N_terms + 1)])

    kind = family.kind
    if kind in ("geometric", "finite"):
        hv = CONVERGES
    elif kind == "power":
        hv = CONVERGES if family.alpha > 1.0 else DIVERGES
    else:
        hv = DIVERGES
    # all library families are eventually monotone, so the weak-Hannan sum
    # telescopes; square summability gives regularity
    wv = CONVERGES
    rv = CONVERGES
    tails = {
        "hannan": _hannan_tail(family, N_terms),
        "weak_hannan": _weak_hannan_tail(family, N_terms),
        "regularity": math.sqrt(tail_sq_sum(family, N_terms + 1)),
        "norm_sq": total,
    }
    return ConditionReport(family, hannan, hv, weak, wv, reg, rv, tails)


@dataclass(frozen=True)
class FrequencyClass:
    theta: float
    in_I: bool
    e2theta_in_spec: bool
    sigma2_closed: float | None
    sigma2_truncated: float | None = None
    sigma2_uncertainty: float | None = None
    m_roots_excluded: bool = False
    notes: str = ""


def _is_unit_root(theta: float, m: int = 1) -> bool:
    # e^{2 i m theta} == 1  <=>  sin(m theta) == 0
    return abs(math.sin(m * theta)) < _UNIT_ROOT_TOL


def sigma2_closed(family: CoefficientFamily, theta: float) -> float:
    """``|A(e^{i theta})|^2 / 2``; raises where the transfer series diverges."""
    return abs(transfer_function(family, theta)) ** 2 / 2.0


def classify_frequency(family: CoefficientFamily, theta: float, m: int = 1,
                       J: int | None = None) -> FrequencyClass:
    """Place ``theta`` against the set I for the i.i.d. shift (point spectrum {1}).

    ``m`` only drives the reported ``m_roots_excluded`` flag, i.e. whether
    ``e^{2 i m theta} = 1``, the exclusion for a base whose point spectrum
    is the m-th roots of unity.
    """
    if not 0.0 <= theta < 2.0 * math.pi:
        raise ValueError("theta must lie in [0, 2*pi)")
    in_spec = _is_unit_root(theta)
    at_zero = abs(math.sin(theta / 2.0)) < _UNIT_ROOT_TOL
    notes = []
    series_ok = family.absolutely_summable or not at_zero
    if not series_ok:
        notes.append("transfer series diverges at theta=0")
    in_I = (not in_spec) and series_ok
    if in_spec:
        notes.append("e^{-2i theta} = 1 lies in the point spectrum")
    s2 = s2t = unc = None
    if series_ok:
        s2 = sigma2_closed(family, theta)
        J = J or family.effective_length
        part = transfer_partial(family, theta, J)
        tail = transfer_tail_bound(family, theta, J)
        s2t = abs(part) ** 2 / 2.0
        unc = (2.0 * abs(part) * tail + tail * tail) / 2.0
    return FrequencyClass(float(theta), in_I, in_spec, s2, s2t, unc,
                          _is_unit_root(theta, m), "; ".join(notes))


@dataclass(frozen=True)
class Sigma2Estimate:
    value: float
    se: float
    n: int
    replicates: int


def sigma2_estimator(past: PastRealization, family: CoefficientFamily, theta: float,
                     n: int, R: int, *, innov: InnovationDistribution | None = None,
                     threads: int | None = None) -> Sigma2Estimate:
    """Average of ``|S_n(theta) - E_0 S_n(theta)|^2 / (2n)`` over ``R`` futures."""
    if n < 16 or R < 100:
        raise ValueError("sigma2_estimator needs n >= 16 and R >= 100")
    innov = innov or InnovationDistribution()
    rot = rotation_factors(theta, n)

    def work(idx):
        seeds = [mix_seed(past.master_seed, int(i)) for i in idx]
        _, F = centered_future_parts(family, innov, n, seeds)
        s = np.sum(F * rot, axis=1)
        return {"v": np.abs(s) ** 2 / (2.0 * n)}

    v = map_chunks(work, R, threads=threads)["v"]
    return Sigma2Estimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(R)), n, R)


@dataclass(frozen=True)
class ErgodicAverage:
    y_spec: str
    per_past: np.ndarray
    mean: float
    target: float
    N: int


_Y_SPECS = ("x0_sq", "X0_sq", "D0r_sq")


def ergodic_average_check(family: CoefficientFamily, y_spec: str, N: int, R: int, *,
                          L: int = 64, master_seed: int = 0,
                          innov: InnovationDistribution | None = None,
                          theta: float | None = None, r: int | None = None) -> ErgodicAverage:
    """``(1/N) sum_{n<N} E_0 T^n Y`` under ``R`` frozen pasts, against ``E Y``.

    Supported ``y_spec``: ``"x0_sq"`` (``x_0^2``), ``"X0_sq"`` (``X_0^2``) and
    ``"D0r_sq"`` (``|D_{0,r}(theta)|^2``, needs ``theta`` and ``r``).  All
    conditional expectations are closed forms in the frozen past.
    """
    if y_spec not in _Y_SPECS:
        raise ValueError(f"unsupported functional {y_spec!r}; expected one of {_Y_SPECS}")
    innov = innov or InnovationDistribution()
    if y_spec == "D0r_sq":
        if theta is None or r is None:
            raise ValueError("D0r_sq needs theta and r")
        scale = martingale_approximant(family, theta, r).second_moment
    else:
        scale = 1.0
    a = np.asarray(coefficients(family, N))
    # Var_0 X_n = sum_{j=1}^{n-1} a_j^2 from the unseen future innovations
    future_var = np.concatenate([[0.0], np.cumsum(a[:N - 1] ** 2)])
    out = np.empty(R)
    for i in range(R):
        past = sample_past(family, innov, L, mix_seed(master_seed, i))
        if y_spec == "X0_sq":
            e0 = past_conditional_means(past, family, N)
            terms = e0 ** 2 + future_var
        else:
            terms = np.ones(N)
            terms[0] = past.x0 ** 2
            terms = scale * terms
        out[i] = math.fsum(terms) / N
    target = sq_norm(family) if y_spec == "X0_sq" else scale
    return ErgodicAverage(y_spec, out, float(out.mean()), float(target), int(N))
