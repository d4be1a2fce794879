"""Brute-force reference computations, written without the package's FFT paths.

Everything here is plain Python loops over explicit innovation records so it
can serve as an independent check of the vectorized code.
"""
import cmath
import math


def coef_direct(kind, j, rho=None, alpha=None, values=()):
    if j < 1:
        return 0.0
    if kind == "geometric":
        return rho ** j
    if kind == "harmonic":
        return 1.0 / j
    if kind == "power":
        return j ** (-alpha)
    return values[j - 1] if j <= len(values) else 0.0


def record(past_values, future):
    """Dict ``t -> x_t`` from ``past_values[i] = x_{-i}`` and ``future[l-1] = x_l``."""
    rec = {-i: float(v) for i, v in enumerate(past_values)}
    rec.update({l + 1: float(v) for l, v in enumerate(future)})
    return rec


def X_direct(a, rec, k):
    """``X_k = sum_{j>=1} a_j x_{k-j}`` over every innovation present in ``rec``."""
    lo = min(rec)
    return sum(a(j) * rec[k - j] for j in range(1, k - lo + 1))


def cond_exp_direct(a, rec, k, m):
    """``E_m X_k``: keep only innovations with time ``<= m``."""
    lo = min(rec)
    return sum(a(j) * rec[k - j] for j in range(max(1, k - m), k - lo + 1))


def dft_direct(xs, theta, n):
    return sum(cmath.exp(1j * k * theta) * xs[k] for k in range(n))


def geometric_sigma2(rho, theta):
    return rho * rho / (1.0 + rho * rho - 2.0 * rho * math.cos(theta)) / 2.0
