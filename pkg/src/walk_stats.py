"""Simple random walk on a spanning tree and ensemble estimators.

The walk steps uniformly among tree neighbours. Edges to the wired
supernode are treated as absent, so the walk lives on the tree restricted to
lattice vertices; walks that touch a vertex adjacent to the wired boundary are
discarded and redrawn, and the discard rate is reported.

Ensemble statistics are reduced within each tree first and then across trees,
so confidence intervals reflect the randomness of the tree.
"""

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

import lattice
import tree as tree_tools
import wilson
from misc_tools import (
    config_hash,
    mean_confidence_interval,
    median_standard_error,
    weighted_quantile,
)
from settings import config

logger = logging.getLogger(__name__)

DIMENSION = config("DIMENSION")
SEED = config("SEED")
THREADS = config("THREADS")

TREE_STREAM = 1
WALK_STREAM = 2
DISCARD_WARNING_RATE = 0.10


class BoundaryEffectError(ValueError):
    """The region a statistic depends on reaches the wired boundary."""


########################################################################################
## Single walks
########################################################################################


@dataclass(frozen=True, eq=False)
class WalkSummary:
    """Summary of the first ``steps`` steps of one walk.

    ``returns`` counts the times ``0 < t <= steps`` with ``X_t = X_0``;
    ``odd_returns`` is always 0 on a tree.
    """

    steps: int
    end_distance: int
    max_distance: int
    max_extrinsic: float
    range: int
    repeat_visits: int
    returns: int
    odd_returns: int
    at_start: bool
    touched_boundary: bool
    trajectory: np.ndarray | None = None

    def to_dict(self):
        out = asdict(self)
        out.pop("trajectory")
        return out


class TreeWalker:
    """Neighbour lookups for walks on one tree, cached per vertex."""

    def __init__(self, tree):
        self.tree = tree
        self._neighbors = {}
        self._parent = tree.parent
        supernode = tree.supernode
        boundary = np.zeros(tree.n_vertices, dtype=bool)
        if supernode is not None:
            boundary |= tree.parent == supernode
            boundary[supernode] = False
        if tree.L is not None and tree.coords is not None:
            on_face = np.abs(tree.coords).max(axis=1) == tree.L
            boundary[: on_face.size] |= on_face
        self._boundary = boundary

    def neighbors(self, v):
        nbrs = self._neighbors.get(v)
        if nbrs is None:
            tree = self.tree
            nbrs = tree.children(v).tolist()
            if v != tree.root:
                nbrs.append(int(self._parent[v]))
            if tree.supernode is not None:
                nbrs = [u for u in nbrs if u != tree.supernode]
            self._neighbors[v] = nbrs
        return nbrs

    def walk(self, start, steps, rng):
        """Vertices ``X_0..X_steps`` and intrinsic distances ``d(X_0, X_t)``."""
        uniforms = rng.random(steps).tolist()
        trajectory = [start]
        distance = [0]
        geodesic = [start]
        v = start
        for u in uniforms:
            nbrs = self.neighbors(v)
            if nbrs:
                v = nbrs[int(u * len(nbrs))]
                if len(geodesic) > 1 and geodesic[-2] == v:
                    geodesic.pop()
                else:
                    geodesic.append(v)
            trajectory.append(v)
            distance.append(len(geodesic) - 1)
        return np.asarray(trajectory, dtype=np.int64), np.asarray(distance, dtype=np.int64)

    def touches_boundary(self, vertices):
        return self._boundary[vertices]


def _summaries(walker, trajectory, distance, checkpoints, keep_trajectory):
    tree = walker.tree
    start = trajectory[0]
    _, first_index = np.unique(trajectory, return_index=True)
    new_site = np.zeros(trajectory.size, dtype=bool)
    new_site[first_index] = True
    range_so_far = np.cumsum(new_site)
    at_start = trajectory == start
    at_start[0] = False
    times = np.arange(trajectory.size)
    even_returns = np.cumsum(at_start & (times % 2 == 0))
    odd_returns = np.cumsum(at_start & (times % 2 == 1))
    max_distance = np.maximum.accumulate(distance)
    touched = np.logical_or.accumulate(walker.touches_boundary(trajectory))
    if tree.coords is not None:
        offset = np.abs(tree.coords[trajectory] - tree.coords[start]).max(axis=1)
        max_extrinsic = np.maximum.accumulate(offset).astype(float)
    else:
        max_extrinsic = np.full(trajectory.size, np.nan)

    out = []
    for n in checkpoints:
        out.append(
            WalkSummary(
                steps=int(n),
                end_distance=int(distance[n]),
                max_distance=int(max_distance[n]),
                max_extrinsic=float(max_extrinsic[n]),
                range=int(range_so_far[n]),
                repeat_visits=int(n + 1 - range_so_far[n]),
                returns=int(even_returns[n] + odd_returns[n]),
                odd_returns=int(odd_returns[n]),
                at_start=bool(trajectory[n] == start),
                touched_boundary=bool(touched[n]),
                trajectory=trajectory[: n + 1].copy() if keep_trajectory else None,
            )
        )
    return out


def run_walk_checkpoints(tree, start, checkpoints, seed, keep_trajectory=False, walker=None):
    """One walk of ``max(checkpoints)`` steps summarized at every checkpoint."""
    checkpoints = sorted(int(n) for n in checkpoints)
    if not checkpoints or checkpoints[0] < 0:
        raise ValueError("checkpoints must be nonnegative")
    start = tree_tools._check_vertex(tree, start)
    if not tree.is_lattice_vertex(start):
        raise ValueError("the walk cannot start at the wired supernode")
    walker = TreeWalker(tree) if walker is None else walker
    rng = lattice.as_seed(seed).generator()
    trajectory, distance = walker.walk(start, checkpoints[-1], rng)
    return _summaries(walker, trajectory, distance, checkpoints, keep_trajectory)


def run_walk(tree, start, steps, seed, keep_trajectory=False):
    """Summary of a ``steps``-step simple random walk on ``tree`` from ``start``."""
    return run_walk_checkpoints(tree, start, [steps], seed, keep_trajectory)[0]


def exit_time(tree, n, trials, seed, start=None):
    """Samples of the first time the walk is at intrinsic distance ``n`` from its start.

    ``start`` defaults to the lattice origin for trees with coordinates and to
    the root otherwise.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if start is None:
        start = tree.origin if tree.coords is not None else tree.root
    b = tree_tools.ball(tree, start, n)
    if b.sphere.size == 0:
        raise ValueError(f"the intrinsic sphere of radius {n} is empty")
    if b.hits_wired_boundary:
        raise BoundaryEffectError(
            f"the intrinsic ball of radius {n} reaches the wired boundary; use a larger L"
        )
    walker = TreeWalker(tree)
    seed = lattice.as_seed(seed)
    samples = np.empty(trials, dtype=np.int64)
    for i in range(trials):
        uniforms = wilson.uniform_stream(seed.generator(i), block=4096)
        v, t = start, 0
        geodesic = [start]
        while len(geodesic) - 1 < n:
            nbrs = walker.neighbors(v)
            v = nbrs[int(next(uniforms) * len(nbrs))]
            if len(geodesic) > 1 and geodesic[-2] == v:
                geodesic.pop()
            else:
                geodesic.append(v)
            t += 1
        samples[i] = t
    return samples


########################################################################################
## Ensembles
########################################################################################


@dataclass(frozen=True)
class EnsembleConfig:
    """Which trees to sample and how many walks to run on each.

    ``surrogate="line"`` replaces the spanning trees by a single line tree
    of ``line_length`` edges walked from its midpoint, whose exponents are
    known in closed form.
    """

    d: int = DIMENSION
    L: int = 16
    trees: int = 8
    walks_per_tree: int = 16
    seed: int = SEED
    surrogate: str = "ust"
    line_length: int = 1 << 14
    threads: int = THREADS
    max_redraws: int = 10

    def __post_init__(self):
        if self.surrogate not in ("ust", "line"):
            raise ValueError(f"unknown surrogate {self.surrogate!r}")
        if self.trees < 1 or self.walks_per_tree < 1:
            raise ValueError("trees and walks_per_tree must be positive")

    @property
    def n_trees(self):
        return 1 if self.surrogate == "line" else self.trees

    def sample_tree(self, index):
        """``(tree, start vertex)`` for tree ``index``."""
        if self.surrogate == "line":
            half = self.line_length // 2
            return tree_tools.line_tree(2 * half, d=self.d, center=half), half
        seed = lattice.RngSeed(self.seed, TREE_STREAM).child(index)
        sampled = wilson.wired_box_ust(self.d, self.L, seed)
        return sampled, sampled.origin

    def config_hash(self):
        return config_hash(asdict(self))


def tree_walk_records(cfg, index, checkpoints, sampled=None, start=None):
    """Walks on tree ``index`` of the ensemble: ``(rows, discarded)``.

    A walk that touches the boundary by its last checkpoint is redrawn up to
    ``max_redraws`` times. Every touching attempt counts in ``discarded``; if
    the last one touches too, its rows are kept with ``boundary_flag`` set so
    the walk shows up as missing, and estimators skip them.
    """
    if sampled is None:
        sampled, start = cfg.sample_tree(index)
    walker = TreeWalker(sampled)
    base = lattice.RngSeed(cfg.seed, WALK_STREAM)
    rows = []
    discarded = 0
    for w in range(cfg.walks_per_tree):
        for attempt in range(cfg.max_redraws + 1):
            summaries = run_walk_checkpoints(
                sampled, start, checkpoints, base.child(index, w, attempt), walker=walker
            )
            if not summaries[-1].touched_boundary:
                break
            discarded += 1
        flagged = summaries[-1].touched_boundary
        for s in summaries:
            row = s.to_dict()
            row.update(tree=index, walk=w, boundary_flag=flagged)
            rows.append(row)
    logger.debug("tree %d: %d discarded walks", index, discarded)
    return rows, discarded


@dataclass(frozen=True, eq=False)
class WalkRecords:
    """Per-(tree, walk, checkpoint) summaries of an ensemble run.

    ``discarded`` counts every attempt that touched the boundary, including
    the final attempt of a walk that never got clear of it.
    """

    frame: pd.DataFrame
    discarded: int
    config: EnsembleConfig

    @property
    def clean(self):
        """Rows from walks that stayed away from the boundary."""
        if "boundary_flag" not in self.frame.columns:
            return self.frame
        return self.frame[~self.frame["boundary_flag"].astype(bool)]

    @property
    def kept_walks(self):
        if "boundary_flag" not in self.frame.columns:
            return self.config.n_trees * self.config.walks_per_tree
        return int(self.clean[["tree", "walk"]].drop_duplicates().shape[0])

    @property
    def discard_rate(self):
        """Discarded attempts over all attempts."""
        attempted = self.discarded + self.kept_walks
        return self.discarded / attempted if attempted else 0.0


def ensemble_walks(cfg, checkpoints):
    """Run the ensemble once, recording summaries at every checkpoint."""
    checkpoints = sorted({int(n) for n in checkpoints} | {0})
    results = Parallel(n_jobs=cfg.threads)(
        delayed(tree_walk_records)(cfg, i, checkpoints) for i in range(cfg.n_trees)
    )
    rows = [row for tree_rows, _ in results for row in tree_rows]
    discarded = sum(count for _, count in results)
    records = WalkRecords(pd.DataFrame(rows), discarded, cfg)
    if records.discard_rate > DISCARD_WARNING_RATE:
        logger.warning(
            "%.1f%% of walks touched the wired boundary; consider a larger L than %d",
            100 * records.discard_rate,
            cfg.L,
        )
    return records


@dataclass(frozen=True)
class EnsembleEstimate:
    statistic: str
    n: int
    estimate: float
    ci_low: float
    ci_high: float
    trees: int
    walks_per_tree: int
    seed: int
    discard_rate: float
    between_tree_var: float
    within_tree_var: float

    def to_dict(self):
        return asdict(self)


def _reduce(values, reducer):
    if reducer == "median":
        return float(np.median(values))
    return float(np.mean(values))


def _clean_at(records, n):
    frame = records.frame
    if frame.empty or not (frame["steps"] == n).any():
        raise ValueError(f"no records at n={n}")
    df = records.clean
    df = df[df["steps"] == n]
    if df.empty:
        raise BoundaryEffectError(f"every walk at n={n} touched the wired boundary")
    return df


def aggregate(records, statistic, n, column, reducer="mean", transform=None):
    """Reduce ``column`` at time ``n`` within each tree, then across trees.

    With a single tree the interval comes from the within-tree spread instead.
    Walks flagged as touching the boundary are left out.
    """
    df = _clean_at(records, n)
    values = df[column].astype(float)
    if transform is not None:
        values = transform(values)
    grouped = values.groupby(df["tree"])
    per_tree = grouped.apply(lambda v: _reduce(v.to_numpy(), reducer)).to_numpy()
    within = grouped.var(ddof=1).fillna(0.0).to_numpy()
    cfg = records.config
    if per_tree.size > 1:
        estimate, lo, hi, _ = mean_confidence_interval(per_tree)
        between = float(per_tree.var(ddof=1))
    else:
        estimate = float(per_tree[0])
        sample = values.to_numpy()
        if reducer == "median":
            se = median_standard_error(sample)
        else:
            se = float(sample.std(ddof=1) / np.sqrt(sample.size)) if sample.size > 1 else np.nan
        lo, hi = estimate - 1.96 * se, estimate + 1.96 * se
        between = float("nan")
    return EnsembleEstimate(
        statistic=statistic,
        n=int(n),
        estimate=float(estimate),
        ci_low=float(lo),
        ci_high=float(hi),
        trees=int(per_tree.size),
        walks_per_tree=cfg.walks_per_tree,
        seed=cfg.seed,
        discard_rate=records.discard_rate,
        between_tree_var=between,
        within_tree_var=float(np.mean(within)),
    )


def return_probability(cfg, n, records=None):
    """Fraction of walks back at their start at time ``n`` (``n`` even)."""
    if n < 0 or n % 2:
        raise ValueError("return probabilities are taken at even times n >= 0")
    if n == 0:
        return EnsembleEstimate(
            "return_probability", 0, 1.0, 1.0, 1.0, cfg.n_trees, cfg.walks_per_tree,
            cfg.seed, 0.0, 0.0, 0.0,
        )
    records = ensemble_walks(cfg, [n]) if records is None else records
    return aggregate(records, "return_probability", n, "at_start")


def return_probability_profile(cfg, n_grid, records=None):
    records = ensemble_walks(cfg, n_grid) if records is None else records
    return [return_probability(cfg, n, records) for n in n_grid]


DISPLACEMENT_STATISTICS = {
    "intrinsic_displacement": ("end_distance", "median", None),
    "max_intrinsic_displacement": ("max_distance", "median", None),
    "extrinsic_displacement": ("max_extrinsic", "median", None),
    "mean_square_displacement": ("max_distance", "mean", np.square),
}


def displacement_profile(cfg, n_grid, records=None):
    """Median intrinsic, maximal intrinsic and extrinsic displacement and the
    mean squared maximal displacement, per ``n``."""
    records = ensemble_walks(cfg, n_grid) if records is None else records
    out = []
    for statistic, (column, reducer, transform) in DISPLACEMENT_STATISTICS.items():
        for n in n_grid:
            out.append(aggregate(records, statistic, n, column, reducer, transform))
    return out


def range_profile(cfg, n_grid, records=None):
    records = ensemble_walks(cfg, n_grid) if records is None else records
    return [aggregate(records, "range", n, "range", "median") for n in n_grid]


def exit_time_profile(cfg, n_grid, trials):
    """Mean exit time of the intrinsic ball per ``n``, tree by tree."""
    samples = {n: [] for n in n_grid}
    for i in range(cfg.n_trees):
        sampled, start = cfg.sample_tree(i)
        for n in n_grid:
            seed = lattice.RngSeed(cfg.seed, WALK_STREAM).child(i, n)
            samples[n].append(exit_time(sampled, n, trials, seed, start=start))
    estimates = []
    for n, per_tree in samples.items():
        frame = pd.DataFrame(
            {
                "steps": n,
                "tree": np.repeat(np.arange(len(per_tree)), trials),
                "exit_time": np.concatenate(per_tree),
            }
        )
        records = WalkRecords(frame, 0, replace(cfg, walks_per_tree=trials))
        estimates.append(aggregate(records, "exit_time", n, "exit_time"))
    return estimates


def pooled_quantiles(records, n, column, quantiles=(0.1, 0.5, 0.9)):
    """Quantiles of ``column`` at time ``n`` over all walks, every tree weighted equally."""
    df = _clean_at(records, n)
    weights = 1.0 / df.groupby("tree")["walk"].transform("size").to_numpy(dtype=float)
    return weighted_quantile(df[column].to_numpy(dtype=float), quantiles, sample_weight=weights)


def estimates_frame(estimates):
    return pd.DataFrame([e.to_dict() for e in estimates])
