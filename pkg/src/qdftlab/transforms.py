"""Discrete Fourier transforms of the process and their martingale approximants.

Path objects follow the cadlag convention: a path sampled at ``t`` holds the
partial sum with ``floor(n t)`` terms, scaled by ``1/sqrt(n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    CoefficientFamily,
    InnovationDistribution,
    PastRealization,
    TrajectoryBundle,
    centered_future_parts,
    coefficients,
    mix_seed,
    past_conditional_means,
    transfer_function,
    transfer_partial,
)
from .parallel import map_chunks

__all__ = [
    "ComplexPath",
    "MartingaleApproximant",
    "DecompositionResult",
    "DecayDiagnostic",
    "DoobCheck",
    "HuntYoungCheck",
    "INFINITE_R",
    "rotation_factors",
    "martingale_approximant",
    "dft_partial",
    "w_path",
    "m_path",
    "decomposition_residual",
    "decay_diagnostic",
    "doob_check",
    "hunt_young_check",
]

INFINITE_R = math.inf
RENORM_BLOCK = 1024
MAX_GRID = 4096


def _exponent(x: np.ndarray) -> np.ndarray:
    return np.frexp(np.where(x == 0.0, 1.0, x))[1]


def rotation_factors(theta, n: int) -> np.ndarray:
    """``exp(i k theta)`` for ``k = 0..n-1`` by repeated multiplication.

    The running product is reset to the exact exponential every
    ``RENORM_BLOCK`` steps.  ``theta`` may be an array, in which case the
    result has shape ``theta.shape + (n,)``.
    """
    th = np.asarray(theta, dtype=float)[..., None]
    block = min(n, RENORM_BLOCK)
    step = np.exp(1j * th)
    local = np.empty(th.shape[:-1] + (block,), dtype=complex)
    local[..., 0] = 1.0
    if block > 1:
        local[..., 1:] = np.cumprod(np.broadcast_to(step, th.shape[:-1] + (block - 1,)), axis=-1)
    nblocks = -(-n // block)
    starts = np.arange(nblocks) * block
    # theta = hi + lo with hi on 26 bits, so hi * start is exact for start < 2**27
    hi = np.ldexp(np.round(np.ldexp(th, 26 - _exponent(th))), _exponent(th) - 26)
    lo = th - hi
    base = np.exp(1j * (hi * starts)) * np.exp(1j * (lo * starts))  # (..., nblocks)
    out = (base[..., :, None] * local[..., None, :]).reshape(th.shape[:-1] + (nblocks * block,))
    out = out[..., :n]
    return out if np.ndim(theta) else out.reshape(n)


@dataclass(frozen=True)
class MartingaleApproximant:
    """``D_{0,r}(theta) = d0_coef * x_0`` for the linear model."""

    r: float
    d0_coef: complex
    theta: float

    @property
    def second_moment(self) -> float:
        """``E|D_{0,r}(theta)|^2`` under unit innovation variance."""
        return abs(self.d0_coef) ** 2


def martingale_approximant(family: CoefficientFamily, theta: float, r) -> MartingaleApproximant:
    """Build ``D_{0,r}(theta)``; ``r = INFINITE_R`` needs an absolutely summable family."""
    if r == INFINITE_R:
        if not family.absolutely_summable:
            raise ValueError("Hannan series divergent")
        return MartingaleApproximant(INFINITE_R, transfer_function(family, theta), float(theta))
    r = int(r)
    if r < 0:
        raise ValueError("r must be nonnegative")
    return MartingaleApproximant(r, transfer_partial(family, theta, r), float(theta))


@dataclass(frozen=True, eq=False)
class ComplexPath:
    horizon: float
    grid_points: int
    values: np.ndarray
    scale_n: int
    indices: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.grid_points + 1) * (self.horizon / self.grid_points)

    def at(self, t: float) -> complex:
        """Path value at ``t`` using the cadlag partial-sum convention."""
        g = int(math.floor(t * self.grid_points / self.horizon + 1e-12))
        return complex(self.values[min(max(g, 0), self.grid_points)])


def _grid_indices(n: int, m: float, G: int) -> np.ndarray:
    g = np.arange(G + 1, dtype=float)
    return np.floor(n * m * g / G).astype(np.int64)


def _path(partial: np.ndarray, n: int, m: float, G: int | None) -> ComplexPath:
    """``partial[p]`` holds the sum of the first ``p`` terms (``partial[0] = 0``)."""
    if G is None:
        G = min(int(n * m), MAX_GRID)
    if G <= 0:
        raise ValueError("grid size G must be positive")
    idx = _grid_indices(n, m, G)
    if idx[-1] >= partial.shape[-1]:
        raise ValueError("bundle horizon shorter than floor(n*m)")
    vals = partial[idx] / math.sqrt(n)
    return ComplexPath(float(m), int(G), vals, int(n), idx)


def _partials(terms: np.ndarray) -> np.ndarray:
    out = np.zeros(terms.shape[:-1] + (terms.shape[-1] + 1,), dtype=complex)
    np.cumsum(terms, axis=-1, out=out[..., 1:])
    return out


def dft_partial(bundle: TrajectoryBundle, theta: float) -> np.ndarray:
    """``(S_1(theta), ..., S_n(theta))`` with ``S_n = sum_{k<n} e^{ik theta} X_k``."""
    return np.cumsum(rotation_factors(theta, bundle.n) * bundle.X)


def _scale(bundle: TrajectoryBundle, m: float, n: int | None) -> int:
    if n is None:
        n = int(bundle.n // m) if m >= 1 else bundle.n
    return n


def w_path(bundle: TrajectoryBundle, past: PastRealization, family: CoefficientFamily,
           theta: float, m: float = 1.0, G: int | None = None,
           n: int | None = None) -> ComplexPath:
    """Centered transform path ``(S_{[nt]} - E_0 S_{[nt]}) / sqrt(n)`` on ``[0, m]``."""
    n = _scale(bundle, m, n)
    e0 = past_conditional_means(past, family, bundle.n)
    rot = rotation_factors(theta, bundle.n)
    return _path(_partials(rot * (bundle.X - e0)), n, m, G)


def m_path(bundle: TrajectoryBundle, family: CoefficientFamily, theta: float, r,
           m: float = 1.0, G: int | None = None, n: int | None = None) -> ComplexPath:
    """Martingale path ``M_{[nt],r}(theta) / sqrt(n)`` where ``T^k D_{0,r} = d0_coef x_k``."""
    n = _scale(bundle, m, n)
    d = martingale_approximant(family, theta, r).d0_coef
    x = np.concatenate([[bundle.x0], bundle.future])
    rot = rotation_factors(theta, bundle.n)
    return _path(d * _partials(rot * x), n, m, G)


@dataclass(frozen=True)
class DecompositionResult:
    lhs: complex
    rhs: complex
    residual: complex
    a_term: complex
    middle_term: complex
    b_term: complex
    d0: complex


class _Innovations:
    """Full record ``x_{-L}..x_{n-1}`` with direct conditional-expectation sums."""

    def __init__(self, bundle: TrajectoryBundle, past: PastRealization,
                 family: CoefficientFamily, extra_lags: int):
        self.L = past.depth
        self.top = bundle.n - 1
        self.z = np.concatenate([past.values[::-1], bundle.future])
        self.a = coefficients(family, bundle.n + extra_lags + self.L + 2)

    def cond_exp(self, k: int, base: int) -> float:
        """``E_base X_k = sum_{j >= max(1, k-base)}^{k+L} a_j x_{k-j}``."""
        if min(base, k - 1) > self.top:
            raise ValueError("conditioning time beyond bundle horizon")
        j0 = max(1, k - base)
        j1 = k + self.L
        if j0 > j1:
            return 0.0
        # x_{k-j} sits at z[k - j + L]
        zs = self.z[k - j1 + self.L:k - j0 + self.L + 1][::-1]
        return math.fsum(self.a[j0:j1 + 1] * zs)


def decomposition_residual(bundle: TrajectoryBundle, past: PastRealization,
                           family: CoefficientFamily, theta: float, r: int,
                           n: int) -> DecompositionResult:
    """Check the exact martingale decomposition of ``S_n - E_0 S_n - M_{n,r}``.

    The left side comes from the convolved ``X_k`` of the bundle and the
    closed-form ``E_0 X_k``; the right side

        -e^{i(n-1)theta} A_{n,r} + e^{ir theta} sum_{k=2}^{n-1}(...) - D_{0,r}

    is assembled from direct lag sums of conditional expectations.  The
    ``b_term`` field is the same middle sum taken over ``k = 0..n-1``; its
    first two summands vanish identically.
    """
    if n < 2 or r < 1:
        raise ValueError("need n >= 2 and finite r >= 1")
    if n > bundle.n:
        raise ValueError("n exceeds bundle horizon")
    inn = _Innovations(bundle, past, family, extra_lags=r)
    rot = rotation_factors(theta, max(n, r + 1))
    d = martingale_approximant(family, theta, r).d0_coef
    e0 = past_conditional_means(past, family, n)

    x = np.concatenate([[bundle.x0], bundle.future[:n - 1]])
    s_centered = np.sum(rot[:n] * (bundle.X[:n] - e0))
    mart = d * np.sum(rot[:n] * x)
    lhs = complex(s_centered - mart)

    # T^{n-1} E_0 X_k = E_{n-1} X_{k+n-1};  E_0 T^{n-1} E_0 X_k = E_0 X_{k+n-1}
    a_term = sum(
        (inn.cond_exp(k + n - 1, n - 1) - inn.cond_exp(k + n - 1, 0)) * rot[k]
        for k in range(1, r + 1)
    )

    # T^k E_{-1} X_r = E_{k-1} X_{k+r};  E_0 of it is E_{min(0,k-1)} X_{k+r}
    def b_summand(k):
        e_hi = inn.cond_exp(k + r, k - 1)
        e_lo = inn.cond_exp(k + r, min(0, k - 1))
        return (e_hi - e_lo) * np.exp(1j * k * theta)

    middle = sum((b_summand(k) for k in range(2, n)), 0j)
    b_full = sum((b_summand(k) for k in range(0, n)), 0j)
    d0 = d * bundle.x0
    rot_n1 = np.exp(1j * (n - 1) * theta)
    rot_r = np.exp(1j * r * theta)
    rhs = complex(-rot_n1 * a_term + rot_r * middle - d0)
    return DecompositionResult(lhs, rhs, lhs - rhs, complex(a_term), complex(middle),
                               complex(b_full), complex(d0))


def _se(samples: np.ndarray) -> np.ndarray:
    R = samples.shape[0]
    if R < 2:
        return np.zeros(samples.shape[1:])
    return samples.std(axis=0, ddof=1) / math.sqrt(R)


@dataclass(frozen=True, eq=False)
class DecayDiagnostic:
    theta: float
    r_list: tuple
    N_list: tuple
    mean: np.ndarray  # shape (len(r_list), len(N_list))
    se: np.ndarray
    replicates: int

    def nonincreasing_in_r(self, N: int, n_se: float = 2.0) -> bool:
        """True if no step ``r_k -> r_{k+1}`` rises by more than ``n_se`` combined SEs at ``N``."""
        b = self.N_list.index(int(N))
        col, se = self.mean[:, b], self.se[:, b]
        return all(col[k + 1] <= col[k] + n_se * math.hypot(se[k], se[k + 1])
                   for k in range(len(col) - 1))


def _replicate_seeds(master_seed: int, idx: np.ndarray) -> list[int]:
    return [mix_seed(master_seed, int(i)) for i in idx]


def decay_diagnostic(past: PastRealization, family: CoefficientFamily, theta: float,
                     r_list, N_list, R: int, *,
                     innov: InnovationDistribution | None = None,
                     threads: int | None = None) -> DecayDiagnostic:
    """Monte Carlo ``E_0[max_{n<=N} |S_n - E_0 S_n - M_{n,r}|^2] / N`` per ``(r, N)``.

    All ``r`` share the same futures (common random numbers), which keeps
    differences along ``r`` sharp.
    """
    r_list = tuple(int(r) for r in r_list)
    N_list = tuple(int(N) for N in N_list)
    if not r_list or not N_list:
        raise ValueError("r_list and N_list must be nonempty")
    if list(r_list) != sorted(set(r_list)) or list(N_list) != sorted(set(N_list)):
        raise ValueError("r_list and N_list must be strictly increasing")
    innov = innov or InnovationDistribution()
    Nmax = N_list[-1]
    rot = rotation_factors(theta, Nmax)
    ds = np.array([martingale_approximant(family, theta, r).d0_coef for r in r_list])
    cols = np.array(N_list) - 1
    Ns = np.array(N_list, dtype=float)

    def work(idx):
        x, F = centered_future_parts(family, innov, Nmax, _replicate_seeds(past.master_seed, idx))
        x[:, 0] = past.x0
        centered = np.cumsum(rot * F, axis=1)  # column n-1 holds S_n - E_0 S_n
        inn = np.cumsum(rot * x, axis=1)
        out = np.empty((len(idx), len(r_list), len(N_list)))
        for i, d in enumerate(ds):
            sq = np.abs(centered - d * inn) ** 2
            run = np.maximum.accumulate(sq, axis=1)
            out[:, i, :] = run[:, cols] / Ns
        return {"v": out}

    v = map_chunks(work, R, threads=threads)["v"]
    return DecayDiagnostic(float(theta), r_list, N_list, v.mean(axis=0), _se(v), int(R))


@dataclass(frozen=True)
class DoobCheck:
    max_mean: float
    end_mean: float
    ratio: float
    ratio_se: float
    eps: float
    eps_se: float

    @property
    def holds(self) -> bool:
        """``E max |M_n|^2 <= 4 (1 + eps) E|M_N|^2`` with ``eps`` within 3 SE of 0."""
        return self.eps <= 3.0 * self.eps_se


def doob_check(past: PastRealization, family: CoefficientFamily, theta: float, r,
               N: int, R: int, *, innov: InnovationDistribution | None = None,
               threads: int | None = None) -> DoobCheck:
    """Empirical maximal inequality for the martingale ``M_{n,r}(theta)``, ``0 <= n <= N``."""
    innov = innov or InnovationDistribution()
    d = martingale_approximant(family, theta, r).d0_coef
    rot = rotation_factors(theta, N)

    def work(idx):
        x, _ = centered_future_parts(CoefficientFamily.finite([]), innov, N,
                                     _replicate_seeds(past.master_seed, idx))
        x[:, 0] = past.x0
        sq = np.abs(d * np.cumsum(rot * x, axis=1)) ** 2
        return {"max": sq.max(axis=1), "end": sq[:, -1]}

    res = map_chunks(work, R, threads=threads)
    mx, end = res["max"], res["end"]
    end_mean = float(end.mean())
    max_mean = float(mx.mean())
    if end_mean == 0.0:
        return DoobCheck(max_mean, end_mean, 0.0, 0.0, -1.0, 0.0)
    q = max_mean / end_mean
    q_se = float(np.std(mx - q * end, ddof=1) / math.sqrt(len(mx)) / end_mean)
    return DoobCheck(max_mean, end_mean, q, q_se, q / 4.0 - 1.0, q_se / 4.0)


@dataclass(frozen=True)
class HuntYoungCheck:
    ratios: np.ndarray
    fitted_constant: float
    mean_ratio: float


def hunt_young_check(past: PastRealization, family: CoefficientFamily, r: int, N: int,
                     R: int, *, n_theta: int | None = None,
                     innov: InnovationDistribution | None = None,
                     threads: int | None = None) -> HuntYoungCheck:
    """Maximal partial-sum ratio for random trigonometric polynomials.

    Coefficients are the centered terms ``c_k = E_{k-1}X_{k+r} - E_0 X_{k+r}``
    for ``k = 2..N-1``.  For each replicate the ratio
    ``int sup_n |S_{n,f}|^2 / int |f|^2`` is computed on a uniform frequency
    grid fine enough for the grid mean of ``|f|^2`` to be exact.  The fitted
    constant is the largest observed ratio; no bound is asserted here.
    """
    innov = innov or InnovationDistribution()
    n_theta = n_theta or 2 * N
    thetas = 2.0 * math.pi * np.arange(n_theta) / n_theta
    rot = rotation_factors(thetas, N)  # (n_theta, N)

    def work(idx):
        _, c = centered_future_parts(family, innov, N, _replicate_seeds(past.master_seed, idx),
                                     lag_shift=r)
        out = np.empty(len(idx))
        for i in range(len(idx)):
            energy = float(np.sum(c[i] ** 2))
            if energy == 0.0:
                out[i] = 1.0
                continue
            partial = np.cumsum(rot * c[i][None, :], axis=1)
            out[i] = float(np.mean(np.max(np.abs(partial) ** 2, axis=1))) / energy
        return {"ratio": out}

    ratios = map_chunks(work, R, threads=threads)["ratio"]
    return HuntYoungCheck(ratios, float(ratios.max()), float(ratios.mean()))
