"""Exact finite-time moments by pruned enumeration over generation-j boxes.

Every expectation/covariance of the Poissonized scheme is a sum over the
(countably many) generation-j boxes r of a summand evaluated at the box
weight p_r.  The enumeration walks the weighted prefix tree depth-first in
decreasing-weight order and prunes with *certified* bounds: the caller
supplies ``scale``, a per-unit-weight Markov coefficient such that the
absolute contribution of any set of boxes of total weight m is at most
``scale * m`` (e.g. ``t/l`` for ``E K_t(l)`` since
``P{Poisson(pt) >= l} <= pt/l``).  The reported ``error_bound`` is the
accumulated ``scale * pruned-mass`` at the actual stopping points, which is
guaranteed not to exceed the requested budget.

Budget bookkeeping: a prefix holding budget B spends at most B/2 on its own
k-loop tail when it still has children (the full B at terminal depth) and
hands child k the share (B/2) * p_k; since the p_k sum to at most 1, the
total certified error never exceeds the root budget.  A useful consequence:
within one generation the k-loop cutoff is the same for every prefix of the
same depth, so cost scales like (cutoff)^j, not with the budget split.

All sums stream over numpy chunks (one chunk per terminal prefix) and are
combined with math.fsum, so no intermediate array ever holds the full box
population.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ValidationError
from .kernels import binomial_tail, poisson_tail, psi
from .weights import WeightFamily

__all__ = [
    "MomentEstimate",
    "BoxEnumeration",
    "enumerate_boxes",
    "mean_K",
    "mean_K_star",
    "mean_K_binomial",
    "cov_K_same",
    "cov_K_star_same",
    "cov_K_cross_level",
    "cov_K_cross_gen",
    "depoissonization_constant",
    "poisson_low",
]

_BOX_WARN = 20_000_000


@dataclass(frozen=True)
class MomentEstimate:
    """An exact truncated sum: |value - true sum| <= error_bound (certified)."""

    value: float
    error_bound: float
    boxes_enumerated: int
    prune_threshold: float

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return (
            f"{self.value:.12g} ± {self.error_bound:.3g} "
            f"({self.boxes_enumerated} boxes)"
        )


@dataclass
class BoxEnumeration:
    """Plan of terminal prefixes: chunks() yields the weight array of each
    prefix's enumerated children; tail_bound is the certified scaled bound on
    everything not enumerated."""

    family: WeightFamily
    j: int
    plan: list  # (prefix_weight, kenum) pairs
    boxes: int
    tail_bound: float

    def chunks(self) -> Iterator[np.ndarray]:
        if not self.plan:
            return
        kmax = max(k for _, k in self.plan)
        table = self.family.weight_prefix(kmax)
        for w, k in self.plan:
            yield w * table[:k]


def enumerate_boxes(
    family: WeightFamily,
    j: int,
    budget: float,
    scale: float,
    *,
    box_warn_threshold: int = _BOX_WARN,
) -> BoxEnumeration:
    """Certified enumeration of generation-j box weights.

    Guarantees ``tail_bound <= budget`` where tail_bound bounds
    ``scale * (total weight of boxes not enumerated)``; the caller's summand
    must be absolutely bounded by ``scale * p_r`` per box for this to be a
    certified truncation error.
    """
    j = int(j)
    if j < 1:
        raise ValidationError(f"generation must be >= 1, got {j}")
    if budget <= 0.0:
        raise ValidationError(f"prune budget must be > 0, got {budget}")
    if scale <= 0.0:
        raise ValidationError(f"scale must be > 0, got {scale}")
    plan: list = []
    boxes = 0
    tail = 0.0

    def rec(prefix_w: float, depth: int, b: float) -> None:
        nonlocal boxes, tail
        b_local = b if depth == j else b / 2.0
        kenum = family.tail_index(b_local / (scale * prefix_w))
        tail += scale * prefix_w * family.tail_mass_bound(kenum)
        if kenum == 0:
            return
        if depth == j:
            plan.append((prefix_w, kenum))
            boxes += kenum
            return
        child_w = prefix_w * family.weight_prefix(kenum)
        half = b / 2.0
        table = family.weight_prefix(kenum)
        for k in range(kenum):
            rec(float(child_w[k]), depth + 1, half * float(table[k]))

    rec(1.0, 1, float(budget))
    if boxes > box_warn_threshold:
        warnings.warn(
            f"enumeration visits {boxes} generation-{j} boxes; "
            "consider a looser prune budget",
            stacklevel=2,
        )
    return BoxEnumeration(family=family, j=j, plan=plan, boxes=boxes, tail_bound=tail)


def poisson_low(l: int, m) -> np.ndarray:
    """P{Poisson(m) < l} = sum_{i<l} psi_i(m), summed directly so it stays
    accurate when it is tiny (the complement 1 - poisson_tail would not)."""
    arr = np.asarray(m, dtype=float)
    out = np.zeros_like(arr)
    for i in range(int(l)):
        out = out + psi(i, arr)
    return np.minimum(out, 1.0)


def _estimate(chunk_sums: list, enum: BoxEnumeration, prune: float) -> MomentEstimate:
    return MomentEstimate(
        value=math.fsum(chunk_sums),
        error_bound=enum.tail_bound,
        boxes_enumerated=enum.boxes,
        prune_threshold=prune,
    )


def _check_level(l: int, name: str = "l") -> int:
    l = int(l)
    if l < 1:
        raise ValidationError(f"{name} must be >= 1, got {l}")
    return l


def mean_K(family, j, l, t, *, prune: float = 1e-9) -> MomentEstimate:
    """E K_t^(j)(l) = sum_r P{Poisson(p_r t) >= l} (Poissonized scheme)."""
    l = _check_level(l)
    if t < 0.0:
        raise ValidationError("time must be >= 0")
    if t == 0.0:
        return MomentEstimate(0.0, 0.0, 0, prune)
    enum = enumerate_boxes(family, j, prune, t / l)
    sums = [float(np.sum(poisson_tail(l, c * t))) for c in enum.chunks()]
    return _estimate(sums, enum, prune)


def mean_K_star(family, j, l, t, *, prune: float = 1e-9) -> MomentEstimate:
    """E K*_t^(j)(l) = sum_r psi_l(p_r t) (exactly-l boxes)."""
    l = _check_level(l)
    if t < 0.0:
        raise ValidationError("time must be >= 0")
    if t == 0.0:
        return MomentEstimate(0.0, 0.0, 0, prune)
    enum = enumerate_boxes(family, j, prune, t / l)
    sums = [float(np.sum(psi(l, c * t))) for c in enum.chunks()]
    return _estimate(sums, enum, prune)


def mean_K_binomial(family, j, l, n, *, prune: float = 1e-9) -> MomentEstimate:
    """E 𝒦_n^(j)(l) for the deterministic scheme: sum_r P{Bin(n, p_r) >= l}."""
    l = _check_level(l)
    n = int(n)
    if n < 0:
        raise ValidationError("ball count must be >= 0")
    if n == 0 or n < l:
        return MomentEstimate(0.0, 0.0, 0, prune)
    enum = enumerate_boxes(family, j, prune, n / l)
    sums = [float(np.sum(binomial_tail(n, c, l))) for c in enum.chunks()]
    return _estimate(sums, enum, prune)


def cov_K_same(family, j, l, s, t, *, prune: float = 1e-9) -> MomentEstimate:
    """Cov(K_s^(j)(l), K_t^(j)(l)); the events nest across time, so the
    per-box term is tail(l, p*(s∧t)) * P{Poisson(p*(s∨t)) < l}."""
    l = _check_level(l)
    if s < 0.0 or t < 0.0:
        raise ValidationError("times must be >= 0")
    lo, hi = min(s, t), max(s, t)
    if lo == 0.0:
        return MomentEstimate(0.0, 0.0, 0, prune)
    enum = enumerate_boxes(family, j, prune, lo / l)
    sums = [
        float(np.sum(poisson_tail(l, c * lo) * poisson_low(l, c * hi)))
        for c in enum.chunks()
    ]
    return _estimate(sums, enum, prune)


def cov_K_star_same(family, j, l, s, t, *, prune: float = 1e-9) -> MomentEstimate:
    """Cov(K*_s^(j)(l), K*_t^(j)(l)) =
    sum_r [psi_l(p(s∧t)) e^{-p|t-s|} - psi_l(ps) psi_l(pt)]."""
    l = _check_level(l)
    if s < 0.0 or t < 0.0:
        raise ValidationError("times must be >= 0")
    lo, hi = min(s, t), max(s, t)
    if lo == 0.0:
        return MomentEstimate(0.0, 0.0, 0, prune)
    gap = hi - lo
    enum = enumerate_boxes(family, j, prune, lo / l)
    sums = [
        float(
            np.sum(
                psi(l, c * lo) * np.exp(-c * gap) - psi(l, c * s) * psi(l, c * t)
            )
        )
        for c in enum.chunks()
    ]
    return _estimate(sums, enum, prune)


def cov_K_cross_level(family, j, l1, l2, s, t, *, prune: float = 1e-9) -> MomentEstimate:
    """Cov(K_s^(j)(l1), K_t^(j)(l2)) — level l1 observed at time s, level l2
    at time t.  Matches cov_K_same when l1 == l2.

    Internally normalized to s <= t (the covariance is symmetric under
    swapping the (level, time) pairs).  With s <= t and l1 >= l2 the events
    nest; otherwise the joint lower tail is a short psi-convolution.
    """
    l1, l2 = _check_level(l1, "l1"), _check_level(l2, "l2")
    if s < 0.0 or t < 0.0:
        raise ValidationError("times must be >= 0")
    if s > t:
        l1, l2, s, t = l2, l1, t, s
    if s == 0.0:
        return MomentEstimate(0.0, 0.0, 0, prune)
    coef = min(s / l1, t / l2)
    enum = enumerate_boxes(family, j, prune, coef)
    gap = t - s
    sums = []
    for c in enum.chunks():
        if l1 >= l2:
            val = poisson_tail(l1, c * s) * poisson_low(l2, c * t)
        else:
            joint = np.zeros_like(c)
            for k in range(l2):
                for i in range(min(k, l1 - 1) + 1):
                    joint += psi(i, c * s) * psi(k - i, c * gap)
            val = joint - poisson_low(l1, c * s) * poisson_low(l2, c * t)
        sums.append(float(np.sum(val)))
    return _estimate(sums, enum, prune)


def cov_K_cross_gen(
    family, i, j, l, n, s, t, *, prune: float = 1e-9, box_warn_threshold: int = _BOX_WARN
) -> MomentEstimate:
    """Cov(K_s^(i)(l), K_t^(j)(n)) across generations i < j.

    Thinning argument: conditioned on a generation-i box r1, each of its
    balls independently continues into a given generation-(j-i) suffix r2
    with probability p_{r2}, and fresh arrivals after the earlier snapshot
    are an independent Poisson stream.  The double sum over (r1, r2) is
    enumerated with the outer budget prune/2, each outer box handing its
    weight-proportional share prune/2 * p_{r1} to the inner enumeration.
    """
    i, j = int(i), int(j)
    if not 1 <= i < j:
        raise ValidationError(f"need 1 <= i < j, got i={i}, j={j}")
    l, n = _check_level(l, "l"), _check_level(n, "n")
    if s < 0.0 or t < 0.0:
        raise ValidationError("times must be >= 0")
    if s == 0.0 or t == 0.0:
        return MomentEstimate(0.0, 0.0, 0, prune)
    outer = enumerate_boxes(
        family, i, prune / 2.0, t / n, box_warn_threshold=box_warn_threshold
    )
    # Inner cutoffs do not depend on the outer weight p1 (budget and scale are
    # both proportional to p1), so one inner plan serves every outer box; its
    # tail bound enters scaled by p1, and sum(p1) <= 1 keeps the total within
    # budget.
    inner = enumerate_boxes(
        family,
        j - i,
        prune / 2.0,
        t / n,
        box_warn_threshold=box_warn_threshold,
    )
    total_tail = outer.tail_bound
    sums: list = []
    boxes = outer.boxes
    for chunk in outer.chunks():
        for p1 in chunk.tolist():
            total_tail += p1 * inner.tail_bound
            boxes += inner.boxes
            for p2 in inner.chunks():
                sums.append(float(np.sum(_cross_gen_term(p1, p2, l, n, s, t))))
    if boxes > box_warn_threshold:
        warnings.warn(
            f"cross-generation enumeration visited {boxes} boxes", stacklevel=2
        )
    return MomentEstimate(
        value=math.fsum(sums),
        error_bound=total_tail,
        boxes_enumerated=boxes,
        prune_threshold=prune,
    )


def _cross_gen_term(p1: float, p2: np.ndarray, l: int, n: int, s: float, t: float):
    """Per-(r1, r2) covariance term, vectorized over the inner weights p2."""
    joint = np.zeros_like(p2)
    if t >= s:
        for m in range(l):
            psm = psi(m, p1 * s)
            if psm == 0.0:
                continue
            inner = np.zeros_like(p2)
            for k in range(min(m, n - 1) + 1):
                pmf = math.comb(m, k) * p2**k * (1.0 - p2) ** (m - k)
                inner += pmf * poisson_low(n - k, p1 * p2 * (t - s))
            joint += psm * inner
    else:
        for k in range(l):
            pkt = psi(k, p1 * t)
            if pkt == 0.0:
                continue
            tail_room = float(np.sum([psi(a, p1 * (s - t)) for a in range(l - k)]))
            inner = np.zeros_like(p2)
            for m in range(min(k, n - 1) + 1):
                inner += math.comb(k, m) * p2**m * (1.0 - p2) ** (k - m)
            joint += pkt * tail_room * inner
    return joint - poisson_low(l, p1 * s) * poisson_low(n, p1 * p2 * t)


def depoissonization_constant(l: int) -> float:
    """Uniform bound on |E K_t^(j)(l) - E 𝒦_⌊t⌋^(j)(l)|:
    ``1 + sum_{i<l} max(A_i, B_i)`` with ``A_0 = 0``, ``A_i = i^i/(i-1)!``,
    ``B_0 = e^{-1}``, ``B_1 = 4 e^{-2}`` and for i >= 2
    ``B_i = (i+1)^{i+1} e^{-(i+1)}/i! + (i-1)^{i-1} e^{-(i-1)}/(2 (i-2)!)``.

    For l = 1 this is 1 + e^{-1} ≈ 1.3679.
    """
    l = _check_level(l)
    total = 1.0
    for i in range(l):
        if i == 0:
            a_i, b_i = 0.0, math.exp(-1.0)
        elif i == 1:
            a_i, b_i = 1.0, 4.0 * math.exp(-2.0)
        else:
            a_i = math.exp(i * math.log(i) - math.lgamma(i))
            b_i = math.exp(
                (i + 1) * math.log(i + 1.0) - (i + 1) - math.lgamma(i + 1)
            ) + math.exp(
                (i - 1) * math.log(i - 1.0) - (i - 1) - math.lgamma(i - 1) - math.log(2.0)
            )
        total += max(a_i, b_i)
    return total
