"""Simulation of the nested occupancy scheme.

Balls arrive one at a time (deterministic scheme) or as a unit-rate Poisson
stream (Poissonized scheme).  Each ball independently draws an infinite path
(ξ_1, ξ_2, ...) of i.i.d. indices from the weight family; its generation-j
box is the prefix (ξ_1, ..., ξ_j).  We only ever materialize prefixes up to
the requested maximum generation J, and only counts-of-counts up to level
L+1 (the guard level makes K* at level L exact).

Bookkeeping is incremental: per generation a hash map box-prefix -> ball
count, plus the running statistics K[j][l] (# boxes with >= l balls) and the
excess (# balls sitting in boxes that already exceed level L).  A batch of
fresh balls therefore costs O(batch * J) plus the snapshot copies, which is
what makes many-snapshot CLT trajectories cheap.

Box prefixes are packed into a single int64 per generation (base
``len(table) + 2`` positional code), which keeps the maps primitive-keyed
and the uniqueness pass vectorized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .weights import WeightFamily

__all__ = [
    "OccupancyTrajectory",
    "sample_index",
    "simulate_deterministic",
    "simulate_poissonized",
]

_TRAJECTORY_CSV_HEADER = "replica,j,l,grid_index,time,K,K_star,balls"


def sample_index(family: WeightFamily, draw):
    """Inverse-CDF sample of a single path coordinate.

    ``draw`` may be a scalar in [0, 1) or an array of such; returns 1-based
    indices.  The lookup table covers cumulative mass >= 1 - 2**-53; draws
    landing beyond it (probability < 2**-53) are assigned to one extra
    overflow bucket rather than rejected, so the map is total.
    """
    table = family.cumulative_table()
    arr = np.asarray(draw, dtype=float)
    if np.any((arr < 0.0) | (arr >= 1.0)):
        raise ValidationError("uniform draws must lie in [0, 1)")
    idx = np.searchsorted(table, arr, side="right") + 1
    idx = np.minimum(idx, len(table) + 1)
    if np.isscalar(draw) or arr.ndim == 0:
        return int(idx)
    return idx.astype(np.int64)


@dataclass
class OccupancyTrajectory:
    """Snapshot record of one simulated scheme.

    K has shape (J, L, G) — K[j-1, l-1, i] is the number of generation-j
    boxes holding at least l balls at grid point i; K_star likewise for
    exactly-l.  ``balls`` is the realized total at each grid point, and
    ``excess`` the per-generation count of balls in boxes beyond level L
    (needed for exact conservation checks).
    """

    kind: str
    grid: np.ndarray
    K: np.ndarray
    K_star: np.ndarray
    guard: np.ndarray  # K at level L+1, shape (J, G)
    excess: np.ndarray  # shape (J, G)
    balls: np.ndarray  # shape (G,)
    seed: int
    replica: int
    family_kind: str = ""
    levels: int = field(init=False)
    generations: int = field(init=False)

    def __post_init__(self) -> None:
        self.generations, self.levels = self.K.shape[0], self.K.shape[1]

    def validate(self) -> None:
        """Assert the structural invariants; raises AssertionError on breach."""
        J, L, _ = self.K.shape
        full = np.concatenate([self.K, self.guard[:, None, :]], axis=1)
        assert np.all(np.diff(full, axis=1) <= 0), "K must be nonincreasing in l"
        assert np.all(self.K_star == self.K - full[:, 1:, :]), "K* = K_l - K_{l+1}"
        levels = np.arange(1, L + 1)[None, :, None]
        occupied = np.einsum("jlg,jlg->jg", self.K_star, np.broadcast_to(levels, self.K_star.shape))
        assert np.all(occupied + self.excess == self.balls[None, :]), "ball conservation"
        assert np.all(np.diff(self.K[:, 0, :], axis=0) >= 0), "K(1) nondecreasing in j"
        assert np.all(np.diff(self.K, axis=2) >= 0), "K nondecreasing along the grid"
        with np.errstate(divide="ignore"):
            cap = self.balls[None, None, :] // np.arange(1, L + 1)[None, :, None]
        assert np.all(self.K <= cap), "K(l) <= balls/l"

    def to_csv_rows(self):
        """Yield CSV lines in the trajectory dump format (no header)."""
        for j in range(self.generations):
            for l in range(self.levels):
                for i in range(len(self.grid)):
                    g = self.grid[i]
                    time_txt = repr(float(g)) if self.kind == "poissonized" else str(int(g))
                    yield (
                        f"{self.replica},{j + 1},{l + 1},{i},{time_txt},"
                        f"{self.K[j, l, i]},{self.K_star[j, l, i]},{self.balls[i]}"
                    )

    @staticmethod
    def csv_header() -> str:
        return _TRAJECTORY_CSV_HEADER


def _make_rng(seed: int, replica: int) -> np.random.Generator:
    key = np.array([seed % 2**64, replica % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _run(
    family: WeightFamily,
    increments: list,
    grid: np.ndarray,
    J: int,
    L: int,
    rng: np.random.Generator,
    kind: str,
    seed: int,
    replica: int,
) -> OccupancyTrajectory:
    table = family.cumulative_table()
    stride = len(table) + 2
    if J * math.log2(stride) >= 63:
        raise ValidationError(
            f"cannot pack {J} generations of indices < {stride} into int64 keys"
        )
    G = len(grid)
    counts: list = [dict() for _ in range(J)]
    k_live = np.zeros((J, L + 1), dtype=np.int64)
    excess_live = np.zeros(J, dtype=np.int64)
    K_full = np.zeros((J, L + 1, G), dtype=np.int64)
    excess = np.zeros((J, G), dtype=np.int64)
    balls = np.zeros(G, dtype=np.int64)
    total = 0
    for i, delta in enumerate(increments):
        if delta:
            u = rng.random((delta, J))
            idx = np.searchsorted(table, u, side="right").astype(np.int64) + 1
            np.minimum(idx, stride - 1, out=idx)
            codes = np.zeros(delta, dtype=np.int64)
            for g in range(J):
                codes = codes * stride + idx[:, g]
                uniq, cnt = np.unique(codes, return_counts=True)
                store = counts[g]
                old = np.fromiter(
                    (store.get(c, 0) for c in uniq.tolist()),
                    dtype=np.int64,
                    count=len(uniq),
                )
                new = old + cnt
                for c, v in zip(uniq.tolist(), new.tolist()):
                    store[c] = v
                for l in range(1, L + 2):
                    k_live[g, l - 1] += int(np.count_nonzero((old < l) & (new >= l)))
                excess_live[g] += int(new[new > L].sum() - old[old > L].sum())
            total += delta
        K_full[:, :, i] = k_live
        excess[:, i] = excess_live
        balls[i] = total
    traj = OccupancyTrajectory(
        kind=kind,
        grid=np.asarray(grid),
        K=K_full[:, :L, :].copy(),
        K_star=K_full[:, :L, :] - K_full[:, 1:, :],
        guard=K_full[:, L, :].copy(),
        excess=excess,
        balls=balls,
        seed=seed,
        replica=replica,
        family_kind=family.kind,
    )
    return traj


def _check_jl(J: int, L: int) -> tuple:
    J, L = int(J), int(L)
    if J < 1 or L < 1:
        raise ValidationError(f"need J >= 1 and L >= 1, got J={J}, L={L}")
    return J, L


def simulate_deterministic(
    family: WeightFamily,
    n: int,
    J: int,
    L: int,
    time_grid,
    seed: int,
    *,
    replica: int = 0,
) -> OccupancyTrajectory:
    """Fixed-ball-count scheme: snapshots at the integer ball counts in
    ``time_grid`` (nondecreasing, max <= n)."""
    J, L = _check_jl(J, L)
    n = int(n)
    if n < 0:
        raise ValidationError("ball count must be >= 0")
    grid = np.asarray(list(time_grid), dtype=np.int64)
    if grid.size == 0:
        raise ValidationError("time_grid must be nonempty")
    if np.any(np.diff(grid) < 0) or grid[0] < 0:
        raise ValidationError("time_grid must be nondecreasing and nonnegative")
    if grid[-1] > n:
        raise ValidationError(f"grid point {grid[-1]} exceeds ball count n={n}")
    increments = np.diff(np.concatenate([[0], grid])).tolist()
    rng = _make_rng(seed, replica)
    return _run(family, increments, grid, J, L, rng, "deterministic", seed, replica)


def simulate_poissonized(
    family: WeightFamily,
    times,
    J: int,
    L: int,
    seed: int,
    *,
    replica: int = 0,
) -> OccupancyTrajectory:
    """Poissonized scheme: fresh Poisson(t_i - t_{i-1}) balls before each
    snapshot, so the count at t_i is Poisson(t_i)-many i.i.d. placements."""
    J, L = _check_jl(J, L)
    grid = np.asarray(list(times), dtype=float)
    if grid.size == 0:
        raise ValidationError("times must be nonempty")
    if np.any(np.diff(grid) < 0) or grid[0] < 0.0:
        raise ValidationError("times must be nondecreasing and nonnegative")
    rng = _make_rng(seed, replica)
    gaps = np.diff(np.concatenate([[0.0], grid]))
    increments = [int(rng.poisson(gap)) if gap > 0.0 else 0 for gap in gaps]
    return _run(family, increments, grid, J, L, rng, "poissonized", seed, replica)
