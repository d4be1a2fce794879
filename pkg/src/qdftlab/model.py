"""Causal linear processes over i.i.d. unit-variance innovations.

The process is ``X_k = sum_{j>=1} a_j x_{k-j}`` with the filtration
``F_n = sigma(x_t, t <= n)``.  Fixing the past innovations
``x_0, x_{-1}, ..., x_{-L}`` is exactly conditioning on ``F_0``, so every
conditional expectation used downstream has a closed form in terms of the
frozen past and the coefficient sequence.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np
from scipy import signal, special

__all__ = [
    "CoefficientFamily",
    "InnovationDistribution",
    "PastRealization",
    "TrajectoryBundle",
    "SPLITMIX_CONSTANTS",
    "splitmix64",
    "mix_seed",
    "coef",
    "coefficients",
    "tail_sq_sum",
    "sample_past",
    "simulate_future",
    "cond_exp_X",
    "past_conditional_means",
    "projection_coef",
    "future_innovations",
    "centered_future_parts",
    "transfer_function",
    "transfer_partial",
    "transfer_tail_bound",
    "sq_norm",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

SPLITMIX_CONSTANTS = {
    "increment": hex(_GOLDEN),
    "mul1": hex(_MIX1),
    "mul2": hex(_MIX2),
    "shifts": [30, 27, 31],
}

# seed streams
STREAM_REPLICATE = 0
STREAM_PAST = 1
STREAM_REFERENCE = 2

FAMILY_KINDS = ("geometric", "harmonic", "power", "finite")
INNOVATION_KINDS = ("standard_normal", "rademacher", "centered_uniform")

DEFAULT_EFFECTIVE_LENGTH = 1 << 16


def splitmix64(x: int) -> int:
    """One step of the splitmix64 generator: increment then avalanche."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def mix_seed(master_seed: int, index: int, stream: int = STREAM_REPLICATE) -> int:
    """Derive an independent 64-bit seed for ``(stream, index)``."""
    base = splitmix64((master_seed & _MASK64) ^ ((stream * _GOLDEN) & _MASK64))
    return splitmix64((base + (index & _MASK64)) & _MASK64)


@dataclass(frozen=True)
class CoefficientFamily:
    """The coefficient sequence ``(a_j)_{j>=1}`` of the linear process.

    Build instances with the classmethod constructors; ``a_0`` is always 0
    (the process is strictly causal).
    """

    kind: str
    rho: float | None = None
    alpha: float | None = None
    values: tuple[float, ...] = ()
    effective_length: int = DEFAULT_EFFECTIVE_LENGTH

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown coefficient family {self.kind!r}")
        if self.kind == "geometric":
            if self.rho is None or not 0.0 < self.rho < 1.0:
                raise ValueError("geometric ratio must be in (0,1)")
        if self.kind == "power":
            if self.alpha is None or not self.alpha > 0.5:
                raise ValueError("power exponent must exceed 1/2")
        if self.effective_length < 1:
            raise ValueError("effective_length must be positive")

    @classmethod
    def geometric(cls, rho: float, effective_length: int = DEFAULT_EFFECTIVE_LENGTH):
        return cls("geometric", rho=float(rho), effective_length=effective_length)

    @classmethod
    def harmonic(cls, effective_length: int = DEFAULT_EFFECTIVE_LENGTH):
        return cls("harmonic", effective_length=effective_length)

    @classmethod
    def power(cls, alpha: float, effective_length: int = DEFAULT_EFFECTIVE_LENGTH):
        return cls("power", alpha=float(alpha), effective_length=effective_length)

    @classmethod
    def finite(cls, values: Sequence[float]):
        vals = tuple(float(v) for v in values)
        return cls("finite", values=vals, effective_length=max(len(vals), 1))

    @property
    def label(self) -> str:
        if self.kind == "geometric":
            return f"geometric(rho={self.rho!r})"
        if self.kind == "power":
            return f"power(alpha={self.alpha!r})"
        if self.kind == "finite":
            return f"finite({list(self.values)!r})"
        return "harmonic"

    @property
    def is_zero(self) -> bool:
        return self.kind == "finite" and not any(self.values)

    @property
    def absolutely_summable(self) -> bool:
        if self.kind == "harmonic":
            return False
        if self.kind == "power":
            return self.alpha > 1.0
        return True

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "effective_length": self.effective_length}
        if self.rho is not None:
            out["rho"] = self.rho
        if self.alpha is not None:
            out["alpha"] = self.alpha
        if self.kind == "finite":
            out["values"] = list(self.values)
        return out


def coef(family: CoefficientFamily, j: int) -> float:
    """Return ``a_j`` (``a_0 = 0``)."""
    if j < 1:
        return 0.0
    kind = family.kind
    if kind == "geometric":
        return family.rho ** j
    if kind == "harmonic":
        return 1.0 / j
    if kind == "power":
        return float(j) ** (-family.alpha)
    if j <= len(family.values):
        return family.values[j - 1]
    return 0.0


@lru_cache(maxsize=64)
def _coef_array(family: CoefficientFamily, n: int) -> np.ndarray:
    out = np.array([coef(family, j) for j in range(n)], dtype=float)
    out.setflags(write=False)
    return out


def coefficients(family: CoefficientFamily, n: int) -> np.ndarray:
    """Array ``[a_0, a_1, ..., a_{n-1}]`` with ``a_0 = 0``.

    Entries are produced by :func:`coef` itself, so they agree bit for bit
    with scalar evaluation.  The returned array is read-only and cached.
    """
    return _coef_array(family, int(n))


def tail_sq_sum(family: CoefficientFamily, n: int) -> float:
    """Analytic ``sum_{j>=n} a_j**2`` (for ``n >= 1``)."""
    n = max(int(n), 1)
    kind = family.kind
    if kind == "geometric":
        r2 = family.rho ** 2
        return r2 ** n / (1.0 - r2)
    if kind == "harmonic":
        return float(special.polygamma(1, n))
    if kind == "power":
        return float(special.zeta(2.0 * family.alpha, n))
    return math.fsum(v * v for v in family.values[n - 1:])


def sq_norm(family: CoefficientFamily) -> float:
    """``||X_0||_2^2 = sum_j a_j**2``."""
    return tail_sq_sum(family, 1)


@dataclass(frozen=True)
class InnovationDistribution:
    kind: str = "standard_normal"
    variance: float = 1.0

    def __post_init__(self):
        if self.kind not in INNOVATION_KINDS:
            raise ValueError(f"unknown innovation distribution {self.kind!r}")
        if self.variance != 1.0:
            raise ValueError("innovations are normalized to unit variance")

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.kind == "standard_normal":
            return rng.standard_normal(size)
        if self.kind == "rademacher":
            return rng.integers(0, 2, size=size).astype(float) * 2.0 - 1.0
        s3 = math.sqrt(3.0)
        return rng.uniform(-s3, s3, size=size)


@dataclass(frozen=True, eq=False)
class PastRealization:
    """Frozen past innovations ``values[i] = x_{-i}`` for ``i = 0..L``."""

    depth: int
    values: np.ndarray
    master_seed: int
    truncation_error_bound: float

    @property
    def x0(self) -> float:
        return float(self.values[0])

    def innovation(self, t: int) -> float:
        """``x_t`` for ``-L <= t <= 0`` and 0 before the truncation point."""
        if t > 0:
            raise ValueError("past realization only holds t <= 0")
        if -t > self.depth:
            return 0.0
        return float(self.values[-t])


@dataclass(frozen=True, eq=False)
class TrajectoryBundle:
    """One future draw: ``future[l-1] = x_l`` for ``l = 1..n-1``, ``X[k] = X_k``."""

    n: int
    future: np.ndarray
    X: np.ndarray
    x0: float
    replicate_index: int
    replicate_seed: int

    def innovation(self, t: int, past: PastRealization) -> float:
        if t <= 0:
            return past.innovation(t)
        if t > self.n - 1:
            raise ValueError(f"x_{t} is beyond the bundle horizon")
        return float(self.future[t - 1])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def sample_past(family: CoefficientFamily, innov: InnovationDistribution, L: int,
                master_seed: int) -> PastRealization:
    """Draw ``x_0, x_{-1}, ..., x_{-L}`` from the past stream of ``master_seed``."""
    if L < 1:
        raise ValueError("past depth L must be at least 1")
    rng = np.random.Generator(np.random.PCG64(mix_seed(master_seed, 0, STREAM_PAST)))
    values = innov.draw(rng, L + 1)
    bound = math.sqrt(tail_sq_sum(family, L + 1))
    return PastRealization(int(L), _readonly(values), int(master_seed), bound)


def future_innovations(innov: InnovationDistribution, n: int, seed: int) -> np.ndarray:
    """Future innovations ``x_1..x_{n-1}`` for one replicate seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return innov.draw(rng, max(n - 1, 0))


def simulate_future(past: PastRealization, family: CoefficientFamily,
                    innov: InnovationDistribution, n: int,
                    replicate_index: int) -> TrajectoryBundle:
    """Resample the future under the frozen past and build ``X_0..X_{n-1}``.

    ``X_k`` is the convolution of the full innovation record
    ``x_{-L}, ..., x_{n-1}`` with ``a_1..a_{k+L}``.
    """
    if n < 1:
        raise ValueError("horizon n must be at least 1")
    seed = mix_seed(past.master_seed, replicate_index, STREAM_REPLICATE)
    fut = future_innovations(innov, n, seed)
    L = past.depth
    # z[i] = x_{i-L}, i = 0..L+n-1
    z = np.concatenate([past.values[::-1], fut])
    a = coefficients(family, L + n)
    full = signal.fftconvolve(z, a)
    X = full[L:L + n]
    return TrajectoryBundle(int(n), _readonly(fut), _readonly(X), past.x0,
                            int(replicate_index), seed)


def _ordered_sum(terms) -> float:
    # exactly rounded, hence independent of summation order
    return math.fsum(terms)


def cond_exp_X(past: PastRealization, family: CoefficientFamily, k: int,
               base: int = 0) -> float:
    """``E_base X_k`` from the frozen past, for ``base in {0, -1}`` and ``k >= 0``.

    ``E_0 X_k = sum_{j>=max(k,1)} a_j x_{k-j}`` and
    ``E_{-1} X_k = sum_{j>=k+1} a_j x_{k-j}``, cut at lag ``k + L``.
    """
    if base not in (0, -1):
        raise ValueError("base must be 0 or -1")
    if k < 0:
        raise ValueError("k must be nonnegative")
    j0 = max(k - base, 1)
    a = coefficients(family, k + past.depth + 1)
    vals = past.values
    return _ordered_sum(a[j] * vals[j - k] for j in range(j0, k + past.depth + 1))


def past_conditional_means(past: PastRealization, family: CoefficientFamily,
                           n: int, base: int = 0) -> np.ndarray:
    """Vector of ``E_base X_k`` for ``k = 0..n-1`` (FFT correlation)."""
    if base not in (0, -1):
        raise ValueError("base must be 0 or -1")
    L = past.depth
    a = np.array(coefficients(family, n + L))
    v = np.array(past.values)
    if base == -1:
        v[0] = 0.0
    # P_k = sum_i a_{k+i} v_i
    return signal.fftconvolve(a, v[::-1], mode="valid")[:n]


def projection_coef(family: CoefficientFamily, k: int) -> float:
    """Scalar ``c_k`` with ``P_0 X_k = c_k x_0``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return coef(family, k) if k >= 1 else 0.0


def centered_future_parts(family: CoefficientFamily, innov: InnovationDistribution,
                          n: int, seeds: Sequence[int], lag_shift: int = 0,
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Batch of future innovations and ``X_k - E_0 X_k`` for several replicates.

    Returns ``(x, F)`` of shape ``(len(seeds), n)`` where ``x[:, l]`` is
    ``x_l`` (column 0 is left at zero; the caller owns ``x_0``) and
    ``F[:, k] = sum_{l=1}^{k-1} a_{k-l+s} x_l`` with ``s = lag_shift``.
    For ``s = 0`` this is ``X_k - E_0 X_k``; for ``s = r`` it is
    ``E_{k-1} X_{k+r} - E_0 X_{k+r}``.
    """
    R = len(seeds)
    x = np.zeros((R, n))
    for i, s in enumerate(seeds):
        x[i, 1:] = future_innovations(innov, n, s)
    F = np.zeros((R, n))
    if n > 2:
        a = np.asarray(coefficients(family, n + lag_shift))[1 + lag_shift:n - 1 + lag_shift]
        if a.any():
            u = signal.fftconvolve(x[:, 1:n - 1], a[None, :], axes=1)
            F[:, 2:] = u[:, :n - 2]
    return x, F


def transfer_function(family: CoefficientFamily, theta: float) -> complex:
    """Closed-form ``A(e^{i theta}) = sum_{k>=1} a_k e^{ik theta}``.

    Raises ``ValueError`` where the series diverges (harmonic or power with
    ``alpha <= 1`` at ``theta = 0``).
    """
    kind = family.kind
    z = complex(math.cos(theta), math.sin(theta))
    if kind == "geometric":
        w = family.rho * z
        return w / (1.0 - w)
    if kind == "finite":
        return transfer_partial(family, theta, len(family.values))
    if math.isclose(math.cos(theta), 1.0, rel_tol=0.0, abs_tol=1e-15) and not family.absolutely_summable:
        raise ValueError("Hannan series divergent at theta = 0")
    if kind == "harmonic":
        return -cmath.log(1.0 - z)
    return complex(mpmath.polylog(family.alpha, mpmath.mpc(z.real, z.imag)))


def transfer_partial(family: CoefficientFamily, theta: float, r: int) -> complex:
    """``sum_{k=1}^{r} a_k e^{ik theta}`` summed in increasing lag order."""
    if r <= 0:
        return 0j
    a = coefficients(family, r + 1)[1:]
    k = np.arange(1, r + 1)
    terms = a * np.exp(1j * k * theta)
    return complex(_ordered_sum(terms.real), _ordered_sum(terms.imag))


def transfer_tail_bound(family: CoefficientFamily, theta: float, r: int) -> float:
    """Bound on ``|A(e^{i theta}) - sum_{k<=r} a_k e^{ik theta}|``.

    Uses the absolute tail when summable, otherwise Abel summation for
    monotone coefficients: ``a_{r+1} / |sin(theta/2)|``.
    """
    kind = family.kind
    if kind == "finite":
        return math.fsum(abs(v) for v in family.values[r:])
    if kind == "geometric":
        return family.rho ** (r + 1) / (1.0 - family.rho)
    if kind == "power" and family.alpha > 1.0:
        return float(special.zeta(family.alpha, r + 1))
    s = abs(math.sin(theta / 2.0))
    if s == 0.0:
        return math.inf
    return coef(family, r + 1) / s
