"""Special functions and combinatorial identities shared by all modules.

Recurring objects: the Poisson weights ``psi_l(x) = x^l e^{-x} / l!`` and
their tails, binomial tails for the deterministic (fixed ball count) scheme,
the normalization constants ``c_j``/``f_j``/``g_j`` that turn raw box counts
into convergent quantities, the limiting variance constants ``b_l`` (at-least
counts) and ``b*_l`` (exact counts), two binomial-coefficient identities the
covariance algebra rests on, and the log-Erlang distribution of box fill
epochs.

Everything here is a pure function; exact integer / rational arithmetic is
used where equality is claimed exact, log-space floats everywhere sums can
overflow or underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Union

import numpy as np
from scipy import special

from .errors import ValidationError

__all__ = [
    "psi",
    "poisson_tail",
    "binomial_tail",
    "AsymptoticParams",
    "c_f_g",
    "b_constants",
    "convolution_identity",
    "binomial_identity_lhs",
    "erlang_and_gl",
    "gl_density_bound",
]


def psi(l: int, x) -> Union[float, np.ndarray]:
    """Poisson weight ``psi_l(x) = x^l exp(-x) / l!``.

    ``psi_0(x) = exp(-x)``.  For ``l >= 1`` the value is computed as
    ``exp(l*log(x) - x - lgamma(l+1))`` so that huge ``x`` underflows
    cleanly to 0.0 instead of tripping an overflow in ``x**l``.

    Accepts a scalar or array ``x >= 0``; ``psi(l, 0) = 1`` iff ``l == 0``.
    """
    l = int(l)
    if l < 0:
        raise ValidationError(f"level must be >= 0, got {l}")
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0):
        raise ValidationError("psi requires x >= 0")
    if l == 0:
        out = np.exp(-arr)
    else:
        with np.errstate(divide="ignore"):
            out = np.exp(l * np.log(arr) - arr - math.lgamma(l + 1))
    if arr.ndim == 0:
        return float(out)
    return out


def poisson_tail(l: int, m) -> Union[float, np.ndarray]:
    """P{Poisson(m) >= l}, stable in both regimes.

    For ``m < 0.7*l`` the tail itself is summed (ascending series from
    ``i = l``, term ratio below 0.7 so it terminates quickly); otherwise
    the complement ``1 - sum_{i<l} psi_i(m)`` is used.  This keeps relative
    accuracy when the tail is many orders of magnitude below 1.
    """
    l = int(l)
    m_arr = np.asarray(m, dtype=float)
    if np.any(m_arr < 0.0):
        raise ValidationError("poisson_tail requires m >= 0")
    scalar = m_arr.ndim == 0
    m_arr = np.atleast_1d(m_arr).astype(float)
    if l <= 0:
        out = np.ones_like(m_arr)
    else:
        out = np.empty_like(m_arr)
        small = m_arr < 0.7 * l
        ms = m_arr[small]
        term = np.atleast_1d(psi(l, ms))
        acc = term.copy()
        i = l
        while term.size and np.any(term > 1e-17 * np.maximum(acc, 1e-300)):
            i += 1
            term = term * (ms / i)
            acc += term
        out[small] = acc
        mb = m_arr[~small]
        term = np.exp(-mb)
        low = term.copy()
        for i in range(1, l):
            term = term * (mb / i)
            low += term
        out[~small] = 1.0 - low
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def binomial_tail(n: int, p, l: int) -> Union[float, np.ndarray]:
    """P{Binomial(n, p) >= l} via the regularized incomplete beta function.

    Vectorized over ``p`` (the moments module sums this over large arrays of
    box weights).  The identity P{Bin(n, p) >= l} = I_p(l, n - l + 1) keeps
    full relative precision in both tails, where direct pmf accumulation
    against ``1 - lower_sum`` cancels.
    """
    n = int(n)
    l = int(l)
    if n < 0:
        raise ValidationError(f"ball count must be >= 0, got {n}")
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr < 0.0) | (p_arr > 1.0)):
        raise ValidationError("binomial_tail requires 0 <= p <= 1")
    scalar = p_arr.ndim == 0
    p_arr = np.atleast_1d(p_arr).astype(float)
    if l <= 0:
        out = np.ones_like(p_arr)
    elif l > n:
        out = np.zeros_like(p_arr)
    else:
        out = special.betainc(l, n - l + 1, p_arr)
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class AsymptoticParams:
    """Normalization inputs: index beta >= 0, generation j >= 1, and the
    slowly varying factor ``ell`` (a constant or a callable of the argument).

    For the Weibull-like family ``beta = 1/alpha - 1`` and ``ell`` is the
    constant ``1/alpha``; the geometric family has ``beta = 0`` with
    ``ell(y) = y / log(1/p)``.
    """

    beta: float
    j: int
    ell: Union[float, Callable[[float], float]] = 1.0

    def ell_at(self, y: float) -> float:
        if callable(self.ell):
            return float(self.ell(y))
        return float(self.ell)


def c_f_g(params: AsymptoticParams, t: float) -> tuple[float, float, float]:
    """Normalization triple ``(c_j, f_j(t), g_j(t))``.

    ``c_j = Gamma(beta+1)^j / Gamma(j*(beta+1))``,
    ``f_j(t) = t^{j*beta + j - 1} * ell(t)^j`` and
    ``g_j(t) = (log t)^{j*beta + j - 1} * ell(log t)^j``, so that
    ``f_j(T) = g_j(e^T)``.  Variance normalizations use ``c_j * f_j(T)``
    at time ``e^T``; mean normalizations use ``c_j * g_j(t)`` directly.
    """
    beta, j = float(params.beta), int(params.j)
    if j < 1:
        raise ValidationError(f"generation must be >= 1, got {j}")
    if beta < 0:
        raise ValidationError(f"beta must be >= 0, got {beta}")
    if t <= 1.0:
        raise ValidationError(f"normalizations need t > 1, got {t}")
    c = math.gamma(beta + 1.0) ** j / math.gamma(j * (beta + 1.0))
    expo = j * beta + j - 1.0
    f = t**expo * params.ell_at(t) ** j
    g = math.log(t) ** expo * params.ell_at(math.log(t)) ** j
    return c, f, g


def _x_series_term(k: int) -> Fraction:
    """Exact term (2k-1)! / ((k!)^2 * 4^k) of the b_l series."""
    return Fraction(math.factorial(2 * k - 1), math.factorial(k) ** 2 * 4**k)


def b_constants(l: int) -> tuple[float, float]:
    """Limiting variance constants ``(b_l, b*_l)``.

    ``b_l = log 2 - sum_{k=1}^{l-1} (2k-1)! / ((k!)^2 2^{2k})`` (empty sum
    for l=1, so b_1 = log 2) and ``b*_l = (1 - binom(2l, l) 2^{-2l-1}) / l``.
    The series is accumulated in exact rationals and converted to float once.
    """
    l = int(l)
    if l < 1:
        raise ValidationError(f"level must be >= 1, got {l}")
    s = Fraction(0)
    for k in range(1, l):
        s += _x_series_term(k)
    b = math.log(2.0) - float(s)
    bstar = float(
        (1 - Fraction(math.comb(2 * l, l), 2 ** (2 * l + 1))) / Fraction(l)
    )
    return b, bstar


def convolution_identity(a: int, r: int, n: int, max_value: int = 30) -> tuple[int, int]:
    """Both sides of the binomial convolution
    ``sum_{k=0}^n C(a+k, k) C(r+n-k, n-k) = C(a+r+n+1, n)`` as exact ints.

    Inputs are capped (default 30, override via ``max_value``) per the
    configured exact-arithmetic range.
    """
    a, r, n = int(a), int(r), int(n)
    if min(a, r, n) < 0:
        raise ValidationError("convolution_identity needs nonnegative integers")
    if max(a, r, n) > max_value:
        raise ValidationError(
            f"inputs up to {max(a, r, n)} exceed the configured bound {max_value}"
        )
    lhs = sum(math.comb(a + k, k) * math.comb(r + n - k, n - k) for k in range(n + 1))
    rhs = math.comb(a + r + n + 1, n)
    return lhs, rhs


def binomial_identity_lhs(l: int, a: float, b: float) -> float:
    """Left side of
    ``sum_{k=0}^{l-1} C(k+l, l) (a^k b^l + a^l b^k) / ((a+b)^{k+l} (k+l)) = 1/l``.

    Evaluated with the normalized ratios a/(a+b), b/(a+b) so large raw
    inputs cannot overflow.  Tests assert the sum equals 1/l.
    """
    l = int(l)
    if l < 1:
        raise ValidationError(f"level must be >= 1, got {l}")
    if a <= 0 or b <= 0:
        raise ValidationError("binomial_identity_lhs requires a, b > 0")
    u = a / (a + b)
    v = b / (a + b)
    total = 0.0
    for k in range(l):
        total += math.comb(k + l, l) * (u**k * v**l + u**l * v**k) / (k + l)
    return total


def erlang_and_gl(l: int, x) -> tuple:
    """CDF and density of ``G_l``, the log of the l-th fill epoch of a
    unit-weight box under Poissonization.

    ``P{G_l <= x} = 1 - e^{-e^x} sum_{i<l} e^{xi}/i!`` — equivalently
    ``P{Poisson(e^x) >= l}`` — and the density is
    ``g_l(x) = e^{-e^x} e^{xl} / (l-1)!``, unimodal with mode at ``log l``.
    Requires ``|x|`` moderate (``e^x`` must stay finite).
    """
    l = int(l)
    if l < 1:
        raise ValidationError(f"level must be >= 1, got {l}")
    arr = np.asarray(x, dtype=float)
    ex = np.exp(arr)
    cdf = poisson_tail(l, ex)
    dens = np.exp(-ex + l * arr - math.lgamma(l))
    if arr.ndim == 0:
        return cdf, float(dens)
    return cdf, dens


def gl_density_bound(l: int) -> float:
    """Constant ``d_l`` with ``g_l(x) <= d_l * exp(-|x - log l|)`` everywhere.

    ``d_1 = 1``; for l >= 2 it is the max of
    ``(l+1)^{l+1} e^{-(l+1)} / l!`` and ``(l-1)^{l-1} e^{-(l-1)} l / (l-1)!``.
    """
    l = int(l)
    if l < 1:
        raise ValidationError(f"level must be >= 1, got {l}")
    if l == 1:
        return 1.0
    first = math.exp((l + 1) * math.log(l + 1.0) - (l + 1) - math.lgamma(l + 1))
    second = math.exp(
        (l - 1) * math.log(l - 1.0) - (l - 1) + math.log(l) - math.lgamma(l)
    )
    return max(first, second)
