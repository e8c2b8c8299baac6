"""Discrete capacity of finite subsets of Z^d.

Two independent estimators are provided:

* :func:`capacity_escape_mc` uses ``Cap(S) = sum_{a in S} 2d * P_a(no return to S)``,
  with walks truncated at a horizon and the truncation bias bounded by the
  local limit theorem and folded into the reported error;
* :func:`capacity_variational` uses ``1 / Cap(S) = min_mu mu^T G mu`` over
  probability measures on ``S``, with Green's function values from a cached
  Monte Carlo :class:`GreenTable`.

The module also holds the uniform-start hitting sum, the greedy covering of
a set by well separated boxes, the ``(alpha, r)``-good classifier used when
extracting M-sets, and the LERW-prefix capacity summary.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path as FilePath

import numpy as np
from scipy import linalg

import lattice
import paths
from lattice import CapacityEstimate, EstimateMethod
from misc_tools import config_hash
from settings import config

logger = logging.getLogger(__name__)

CACHE_DIR = config("CACHE_DIR")
ESCAPE_HORIZON = config("ESCAPE_HORIZON")
GREEN_TRIALS = config("GREEN_TRIALS")
GREEN_HORIZON = config("GREEN_HORIZON")

MAX_VARIATIONAL_POINTS = 64
MAX_CONDITION_NUMBER = 1e10
GREEN_TABLE_VERSION = 1

__all__ = [
    "CapacityEstimate",
    "EstimateMethod",
    "EquilibriumMeasure",
    "IllConditionedError",
    "GreenTable",
    "capacity_escape_mc",
    "capacity_variational",
    "uniform_hit_sum",
    "greedy_cover",
    "covering_bullets",
    "alpha_r_good",
    "AlphaRGoodClassifier",
    "lerw_prefix_capacity",
]


class IllConditionedError(ValueError):
    """Green matrix too close to singular for the variational solve."""

    def __init__(self, message, condition_number):
        super().__init__(message)
        self.condition_number = condition_number


def as_point_array(S, d=None):
    """Distinct points of ``S`` as a lexicographically sorted ``(k, d)`` array."""
    if isinstance(S, paths.Path):
        pts = S.points
    else:
        pts = np.asarray(list(S) if isinstance(S, (set, frozenset)) else S, dtype=np.int64)
    if pts.size == 0:
        if d is None:
            raise ValueError("an empty point set needs an explicit dimension")
        return np.zeros((0, d), dtype=np.int64)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1)
    return np.unique(pts, axis=0)


def _require_transient(d):
    d = lattice.check_dimension(d)
    if d < 3:
        raise ValueError(f"capacity is degenerate in the recurrent dimension d={d}")
    return d


def _visits_tail(d, horizon):
    """Bound on expected visits to one site after ``horizon``."""
    return 2 * d * lattice.green_tail_bound(d, horizon)


########################################################################################
## Escape estimator
########################################################################################


def capacity_escape_mc(S, trials, horizon=ESCAPE_HORIZON, seed=0, sample_starts=False):
    """``2d * sum_a P_a(no return to S within horizon)``.

    Parameters
    ----------
    S : set of tuples, array of shape (k, d) or Path
    trials : int
        Walks per point of ``S`` or, with ``sample_starts``, walks in total
        from uniformly chosen points of ``S``.
    horizon : int
        Truncation time. A walk that has not returned by then is counted as
        escaped; the resulting upward bias is at most
        ``2d |S| * |S| * (visits after horizon)`` and is folded into ``std_error``.
    seed : int or RngSeed
    sample_starts : bool, default=False
        Draw the starting point of each walk uniformly from ``S``; cheaper for
        large sets.

    Returns
    -------
    CapacityEstimate
    """
    pts = as_point_array(S)
    k, d = pts.shape
    if k == 0:
        raise ValueError("capacity_escape_mc needs a nonempty set")
    _require_transient(d)
    if trials < 2:
        raise ValueError("capacity_escape_mc needs at least 2 trials")
    seed = lattice.as_seed(seed)
    mask = lattice.SiteMask(pts)
    degree = 2 * d

    def escaped(start, rng):
        return lattice.first_hit_time(start, mask, rng, horizon) is None

    if sample_starts:
        flags = []
        for t in range(trials):
            rng = seed.generator(t)
            flags.append(escaped(pts[rng.integers(0, k)], rng))
        p = float(np.mean(flags))
        value = degree * k * p
        mc_error = degree * k * math.sqrt(p * (1 - p) / trials)
    else:
        p_hat = np.array(
            [
                np.mean([escaped(a, seed.generator(i, t)) for t in range(trials)])
                for i, a in enumerate(pts)
            ]
        )
        value = float(degree * p_hat.sum())
        mc_error = degree * math.sqrt(float(np.sum(p_hat * (1 - p_hat))) / trials)

    bias = degree * k * k * _visits_tail(d, horizon)
    logger.debug("escape capacity of %d points: %.4g (bias bound %.2g)", k, value, bias)
    return CapacityEstimate(
        value=float(value),
        std_error=math.sqrt(mc_error**2 + bias**2),
        trials=trials,
        method=EstimateMethod.ESCAPE_MC,
        truncation_bound=bias,
    )


########################################################################################
## Variational estimator
########################################################################################


class GreenTable:
    """Monte Carlo Green's function values keyed by offset up to lattice symmetry.

    ``G(x, y)`` depends only on the sorted absolute coordinates of ``y - x``.
    Each key is estimated from its own random stream, so a lazily filled table
    equals one built in bulk. Tables persist as ``.npz`` files in ``CACHE_DIR``.
    """

    def __init__(self, d, trials=GREEN_TRIALS, horizon=GREEN_HORIZON, seed=0, entries=None):
        self.d = _require_transient(d)
        self.trials = int(trials)
        self.horizon = int(horizon)
        self.seed = lattice.as_seed(seed)
        self.entries = dict(entries or {})

    @staticmethod
    def key(offset):
        return tuple(sorted(abs(int(c)) for c in offset))

    def get(self, offset):
        """``(value, std_error)`` of ``G(0, offset)``, estimated on first use."""
        key = self.key(offset)
        if len(key) != self.d:
            raise ValueError(f"offset {tuple(offset)} is not {self.d}-dimensional")
        if key not in self.entries:
            est = lattice.green_estimate(
                lattice.origin(self.d), key, self.trials, self.horizon, self.seed.child(*key)
            )
            self.entries[key] = (est.value, est.std_error)
        return self.entries[key]

    def matrix(self, pts):
        """Green matrix, its entrywise standard errors and the key of each entry."""
        k = pts.shape[0]
        G = np.empty((k, k))
        E = np.empty((k, k))
        keys = [[None] * k for _ in range(k)]
        for i in range(k):
            for j in range(i, k):
                key = self.key(pts[j] - pts[i])
                value, error = self.get(key)
                G[i, j] = G[j, i] = value
                E[i, j] = E[j, i] = error
                keys[i][j] = keys[j][i] = key
        return G, E, keys

    def fill(self, max_offset):
        """Estimate every key with all coordinates at most ``max_offset``."""
        for key in itertools.combinations_with_replacement(range(max_offset + 1), self.d):
            self.get(key)
        return self

    @staticmethod
    def cache_path(d, max_offset, trials, horizon, seed, cache_dir=None):
        cache_dir = FilePath(CACHE_DIR if cache_dir is None else cache_dir)
        seed = lattice.as_seed(seed)
        return cache_dir / (
            f"green_d{d}_m{max_offset}_t{trials}_h{horizon}_s{seed.seed}-{seed.stream}.npz"
        )

    def save(self, filepath):
        keys = sorted(self.entries)
        filepath = FilePath(filepath)
        filepath.parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            filepath,
            meta=np.array(
                [GREEN_TABLE_VERSION, self.d, self.trials, self.horizon, self.seed.seed, self.seed.stream],
                dtype=np.uint64,
            ),
            keys=np.array(keys, dtype=np.int64).reshape(-1, self.d),
            values=np.array([self.entries[k][0] for k in keys], dtype=float),
            errors=np.array([self.entries[k][1] for k in keys], dtype=float),
        )

    @classmethod
    def load(cls, filepath):
        with np.load(filepath) as data:
            version, d, trials, horizon, seed, stream = (int(x) for x in data["meta"])
            if version != GREEN_TABLE_VERSION:
                raise ValueError(f"unsupported Green table version {version}")
            entries = {
                tuple(int(c) for c in key): (float(v), float(e))
                for key, v, e in zip(data["keys"], data["values"], data["errors"])
            }
        return cls(d, trials, horizon, lattice.RngSeed(seed, stream), entries)

    @classmethod
    def cached(cls, d, max_offset, trials=GREEN_TRIALS, horizon=GREEN_HORIZON, seed=0, cache_dir=None):
        """Load the table for these parameters from the cache, building it if absent."""
        filepath = cls.cache_path(d, max_offset, trials, horizon, seed, cache_dir)
        if filepath.exists():
            logger.info("loading Green table %s", filepath)
            return cls.load(filepath)
        logger.info("building Green table d=%d max_offset=%d", d, max_offset)
        table = cls(d, trials, horizon, seed).fill(max_offset)
        table.save(filepath)
        return table


@dataclass(frozen=True, eq=False)
class EquilibriumMeasure:
    support: np.ndarray
    weights: np.ndarray
    quadratic_form_value: float


def capacity_variational(S, green_table):
    """Capacity from the minimum of ``mu^T G mu`` over probability vectors on ``S``.

    The minimizer solves ``G mu = lambda 1``; weights that come out negative
    (Monte Carlo noise in ``G``) are dropped and the system re-solved on the
    remaining support. The standard error propagates the Green-table errors to
    first order, treating entries that share a key as one estimate.

    Returns
    -------
    (CapacityEstimate, EquilibriumMeasure)
    """
    pts = as_point_array(S, d=green_table.d)
    k = pts.shape[0]
    if k == 0:
        raise ValueError("capacity_variational needs a nonempty set")
    if k > MAX_VARIATIONAL_POINTS:
        raise ValueError(f"capacity_variational handles at most {MAX_VARIATIONAL_POINTS} points")
    G, E, keys = green_table.matrix(pts)

    active = np.arange(k)
    while True:
        sub = G[np.ix_(active, active)]
        cond = float(np.linalg.cond(sub))
        if not np.isfinite(cond) or cond > MAX_CONDITION_NUMBER:
            raise IllConditionedError(
                f"Green matrix on {active.size} points has condition number {cond:.3g}",
                condition_number=cond,
            )
        x = linalg.solve(sub, np.ones(active.size), assume_a="sym")
        if np.all(x > 0):
            break
        logger.debug("dropping %d negative equilibrium weights", int(np.sum(x <= 0)))
        active = active[x > 0]
        if active.size == 0:
            raise IllConditionedError("no positive equilibrium weights remain", condition_number=cond)

    weights = np.zeros(k)
    weights[active] = x / x.sum()
    quad = float(weights @ G @ weights)
    cap = 1.0 / quad

    gradient = {}
    for i, j in itertools.product(active, active):
        gradient[keys[i][j]] = gradient.get(keys[i][j], 0.0) + cap**2 * weights[i] * weights[j]
    key_error = {keys[i][j]: E[i, j] for i, j in itertools.product(active, active)}
    variance = sum((g * key_error[key]) ** 2 for key, g in gradient.items())

    estimate = CapacityEstimate(
        value=cap,
        std_error=math.sqrt(variance),
        trials=green_table.trials,
        method=EstimateMethod.VARIATIONAL,
    )
    return estimate, EquilibriumMeasure(support=pts, weights=weights, quadratic_form_value=quad)


########################################################################################
## Hitting sums
########################################################################################


def _sample_outside(box, mask, rng):
    while True:
        z = box.sample(rng, 16)
        free = ~mask.hits(z)
        if free.any():
            return z[int(np.argmax(free))]


def _hit_sum(box, target, trials, horizon, seed):
    """``sum_{z in box} P_z(hit target)`` with the target's own points counted exactly.

    Returns ``(estimate, mc_error, truncation_bound)``.
    """
    mask = lattice.SiteMask(target, d=box.d)
    inside = mask.size
    outside = box.volume - inside
    if outside == 0 or inside == 0:
        return float(inside), 0.0, 0.0
    hits = 0
    for t in range(trials):
        rng = seed.generator(t)
        z = _sample_outside(box, mask, rng)
        hits += lattice.first_hit_time(z, mask, rng, horizon) is not None
    p = hits / trials
    mc_error = outside * math.sqrt(p * (1 - p) / trials)
    bound = outside * inside * _visits_tail(box.d, horizon)
    return inside + outside * p, mc_error, bound


def uniform_hit_sum(S, r, trials, horizon=None, seed=0, capacity=None):
    """``sum_{x in Lambda(r)} P_x(X hits S)`` for ``S`` inside ``Lambda(r)``.

    Points of ``S`` contribute exactly 1; the rest of the box is sampled
    uniformly. ``truncation_bound`` bounds the hits missed after ``horizon``
    (not folded into ``std_error``). With a ``capacity`` estimate the ratio to
    ``r^{d-2} Cap(S)`` is reported as well.
    """
    if len(S) == 0:
        return CapacityEstimate(0.0, 0.0, trials, EstimateMethod.HIT_SUM)
    pts = as_point_array(S)
    d = _require_transient(pts.shape[1])
    box = lattice.Box.around_origin(d, r)
    if not np.all(box.contains_array(pts)):
        raise ValueError(f"S is not contained in the box of radius {r}")
    if horizon is None:
        horizon = max(10_000, 50 * box.side**2)
    value, mc_error, bound = _hit_sum(box, pts, trials, horizon, lattice.as_seed(seed))
    ratio = ratio_error = None
    if capacity is not None and capacity.value > 0:
        scale = r ** (d - 2) * capacity.value
        ratio = value / scale
        rel = math.hypot(mc_error / value, capacity.std_error / capacity.value)
        ratio_error = ratio * rel
    return CapacityEstimate(
        value=value,
        std_error=mc_error,
        trials=trials,
        method=EstimateMethod.HIT_SUM,
        truncation_bound=bound,
        ratio=ratio,
        ratio_std_error=ratio_error,
    )


########################################################################################
## Greedy covering
########################################################################################


def cardinality(points):
    return float(len(points))


def _grid_cells(pts, r):
    side = 2 * r + 1
    cells = np.floor_divide(pts + r, side)
    groups = {}
    for cell, p in zip(map(tuple, cells.tolist()), pts):
        groups.setdefault(cell, []).append(p)
    return {cell: np.asarray(members) for cell, members in groups.items()}


def greedy_cover(S, r, f=cardinality):
    """Centres ``x_1..x_K`` on the grid ``(2r+1) Z^d`` selected greedily.

    Candidate centres are the grid points whose box ``Lambda(x, r)`` meets
    ``S`` with ``f > 0``. The remaining candidate with the largest
    ``f(S cap Lambda(x, r))`` is selected (ties to the lexicographically
    smallest centre) and every candidate within sup-distance ``2r + 1`` of it,
    itself included, is removed.
    """
    if r < 1:
        raise ValueError("r must be a positive integer")
    pts = as_point_array(S)
    if pts.shape[0] == 0:
        raise ValueError("greedy_cover needs a nonempty set")
    side = 2 * r + 1
    groups = _grid_cells(pts, r)
    values = {cell: float(f(members)) for cell, members in groups.items()}
    order = sorted((c for c in values if values[c] > 0), key=lambda c: (-values[c], c))
    offsets = list(itertools.product((-1, 0, 1), repeat=pts.shape[1]))

    removed = set()
    centres = []
    for cell in order:
        if cell in removed:
            continue
        centres.append(tuple(int(c) * side for c in cell))
        for off in offsets:
            removed.add(tuple(c + o for c, o in zip(cell, off)))
    return centres


@dataclass(frozen=True)
class CoveringCheck:
    total: float
    near_sum: float
    far_sum: float
    lower_ok: bool
    upper_ok: bool
    min_separation: float
    disjoint_3r: bool


def covering_bullets(S, r, centres, f=cardinality):
    """Evaluate the two covering inequalities for the given centres.

    ``sum f(S cap Lambda(x_i, r)) >= 3^{-d} f(S)`` and
    ``sum f(S cap Lambda(x_i, 3r)) <= 15^d sum f(S cap Lambda(x_i, r))``.

    ``disjoint_3r`` reports whether the boxes ``Lambda(x_i, 3r)`` are pairwise
    disjoint; greedy centres only guarantee that for ``Lambda(x_i, 2r)``.
    """
    pts = as_point_array(S)
    d = pts.shape[1]
    total = float(f(pts))
    near = far = 0.0
    for x in centres:
        near += float(f(pts[lattice.Box(x, r).contains_array(pts)]))
        far += float(f(pts[lattice.Box(x, 3 * r).contains_array(pts)]))
    c = np.asarray(centres, dtype=np.int64).reshape(-1, d)
    if c.shape[0] > 1:
        gaps = np.abs(c[:, None, :] - c[None, :, :]).max(axis=2)
        separation = float(gaps[~np.eye(c.shape[0], dtype=bool)].min())
    else:
        separation = math.inf
    return CoveringCheck(
        total=total,
        near_sum=near,
        far_sum=far,
        lower_ok=near >= 3.0 ** (-d) * total,
        upper_ok=far <= 15.0**d * near,
        min_separation=separation,
        disjoint_3r=separation > 6 * r,
    )


########################################################################################
## (alpha, r)-goodness
########################################################################################


@dataclass(frozen=True)
class GoodnessVerdict:
    good: bool
    margin_sigma: float
    hit_sum: float
    std_error: float
    threshold: float


def goodness_threshold(alpha, r, d):
    return alpha * r**d / math.log(r)


def path_hit_sum(gamma, r, trials, seed, horizon=None):
    """``sum_{z in Lambda(gamma_0, 6r)} P_z(hit gamma cap Lambda(gamma_0, 6r))``.

    Returns ``(estimate, std_error)`` with the truncation bound folded in.
    """
    if r < 3:
        raise ValueError("r must be at least 3 so that log r > 1")
    box = lattice.Box(gamma.start, 6 * r)
    target = as_point_array(gamma)
    target = target[box.contains_array(target)]
    if horizon is None:
        horizon = 16 * box.side**2
    value, mc_error, bound = _hit_sum(box, target, trials, horizon, lattice.as_seed(seed))
    return value, math.hypot(mc_error, bound)


def _verdict(value, error, alpha, r, d):
    threshold = goodness_threshold(alpha, r, d)
    if error > 0:
        margin = (threshold - value) / error
    else:
        margin = math.copysign(math.inf, threshold - value) if threshold != value else 0.0
    return GoodnessVerdict(
        good=value <= threshold,
        margin_sigma=margin,
        hit_sum=value,
        std_error=error,
        threshold=threshold,
    )


def alpha_r_good(gamma, alpha, r, trials, seed, horizon=None):
    """Whether the hit sum of ``gamma`` near its start is at most ``alpha r^d / log r``."""
    value, error = path_hit_sum(gamma, r, trials, seed, horizon)
    return _verdict(value, error, alpha, r, gamma.d)


class AlphaRGoodClassifier:
    """``classifier(path, alpha) -> bool`` with one hit-sum estimate per path.

    Each path gets a random stream derived from its points, so verdicts do
    not depend on the order in which paths are classified.
    """

    def __init__(self, r, trials, seed, horizon=None):
        self.r = r
        self.trials = trials
        self.seed = lattice.as_seed(seed)
        self.horizon = horizon
        self._cache = {}

    def estimate(self, path):
        if path not in self._cache:
            stream = int(config_hash(path.tolist()), 16)
            self._cache[path] = path_hit_sum(
                path, self.r, self.trials, self.seed.child(stream), self.horizon
            )
        return self._cache[path]

    def verdict(self, path, alpha):
        value, error = self.estimate(path)
        return _verdict(value, error, alpha, self.r, path.d)

    def __call__(self, path, alpha):
        return self.verdict(path, alpha).good


########################################################################################
## LERW prefix capacity
########################################################################################


@dataclass(frozen=True, eq=False)
class PrefixCapacitySummary:
    n: int
    normalized: np.ndarray
    quantiles: dict

    @property
    def median(self):
        return float(np.median(self.normalized))


def lerw_prefix_capacity(n, trials, seed, cap_trials=200, horizon=4000):
    """Distribution of ``Cap(LE^n) (log n)^{2/3} / n`` over LERW prefixes in Z^4."""
    if n < 8:
        raise ValueError("n must be at least 8")
    seed = lattice.as_seed(seed)
    scale = math.log(n) ** (2.0 / 3.0) / n
    normalized = []
    for t in range(trials):
        gamma = paths.sample_lerw(n, seed.child(t, 0), d=4)
        cap = capacity_escape_mc(
            gamma, cap_trials, horizon, seed.child(t, 1), sample_starts=True
        )
        normalized.append(cap.value * scale)
    normalized = np.asarray(normalized)
    levels = (0.1, 0.25, 0.5, 0.75, 0.9)
    return PrefixCapacitySummary(
        n=n,
        normalized=normalized,
        quantiles={q: float(np.quantile(normalized, q)) for q in levels},
    )
