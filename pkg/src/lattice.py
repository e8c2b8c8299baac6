"""Z^d substrate: points, boxes, simple random walk and Green's function estimates.

Lattice points are plain tuples of ints; bulk operations use ``(k, d)`` int64
arrays. Walk primitives are vectorized over blocks of steps so only the
bookkeeping between blocks runs in Python.

Randomness is always drawn from an explicit :class:`RngSeed`, never from
global state; two calls with the same seed and stream give the same draws.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np

import paths
from settings import config

logger = logging.getLogger(__name__)

MAX_DIMENSION = config("MAX_DIMENSION")

# Largest bounding box (in cells) a SiteMask stores as a dense boolean grid
DENSE_MASK_CELLS = 2**24


########################################################################################
## Points and boxes
########################################################################################


def check_dimension(d):
    if not isinstance(d, (int, np.integer)) or not 1 <= d <= MAX_DIMENSION:
        raise ValueError(f"dimension must be an integer in [1, {MAX_DIMENSION}], got {d}")
    return int(d)


def origin(d):
    return (0,) * check_dimension(d)


@lru_cache(maxsize=None)
def _unit_steps(d):
    steps = np.zeros((2 * d, d), dtype=np.int64)
    for i in range(d):
        steps[2 * i, i] = 1
        steps[2 * i + 1, i] = -1
    steps.setflags(write=False)
    return steps


def unit_steps(d):
    """The ``2d`` unit vectors in the order ``+e1, -e1, +e2, -e2, ...``."""
    return _unit_steps(check_dimension(d))


def neighbors(p):
    """The ``2d`` nearest neighbours of ``p`` in the fixed order of :func:`unit_steps`.

    Examples
    --------
    >>> neighbors((0, 0))
    [(1, 0), (-1, 0), (0, 1), (0, -1)]
    """
    base = np.asarray(p, dtype=np.int64)
    return [tuple(int(c) for c in row) for row in base + unit_steps(len(p))]


def sup_norm(p):
    return int(np.max(np.abs(np.asarray(p, dtype=np.int64)))) if len(p) else 0


def l1_norm(p):
    return int(np.sum(np.abs(np.asarray(p, dtype=np.int64))))


@dataclass(frozen=True)
class Box:
    """The closed sup-norm ball ``Lambda(center, radius)``."""

    center: tuple
    radius: int

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("box radius must be nonnegative")
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))

    @classmethod
    def around_origin(cls, d, radius):
        return cls(origin(d), radius)

    @property
    def d(self):
        return len(self.center)

    @property
    def side(self):
        return 2 * self.radius + 1

    @property
    def volume(self):
        return self.side**self.d

    def contains(self, p):
        return all(abs(int(a) - b) <= self.radius for a, b in zip(p, self.center))

    def contains_array(self, points):
        """Row-wise membership of a ``(k, d)`` array."""
        points = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        offset = np.abs(points - np.asarray(self.center, dtype=np.int64))
        return np.all(offset <= self.radius, axis=1)

    def points(self):
        """All points as a ``(volume, d)`` array in lexicographic order."""
        grid = np.indices((self.side,) * self.d, dtype=np.int64).reshape(self.d, -1).T
        return grid - self.radius + np.asarray(self.center, dtype=np.int64)

    def boundary_points(self):
        """Points at sup-norm distance exactly ``radius`` from the centre."""
        pts = self.points()
        dist = np.abs(pts - np.asarray(self.center, dtype=np.int64)).max(axis=1)
        return pts[dist == self.radius]

    def sample(self, rng, size):
        """``size`` uniform points of the box as a ``(size, d)`` array."""
        offsets = rng.integers(-self.radius, self.radius + 1, size=(size, self.d))
        return offsets + np.asarray(self.center, dtype=np.int64)


########################################################################################
## Seeds
########################################################################################


@dataclass(frozen=True)
class RngSeed:
    """A 64-bit seed plus a stream key.

    Independent streams are addressed by extending the key, e.g.
    ``seed.child(tree_index, walk_index)``; generators built from distinct
    keys are statistically independent and never share state.

    Examples
    --------
    >>> s = RngSeed(7)
    >>> float(s.generator(3).random()) == float(s.child(3).generator().random())
    True
    """

    seed: int
    stream: int = 0
    keys: tuple = field(default=())

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if int(self.stream) < 0 or any(int(k) < 0 for k in self.keys):
            raise ValueError("stream keys must be nonnegative")

    @property
    def spawn_key(self):
        return (int(self.stream),) + tuple(int(k) for k in self.keys)

    def child(self, *keys):
        return RngSeed(self.seed, self.stream, self.keys + tuple(int(k) for k in keys))

    def generator(self, *keys):
        sequence = np.random.SeedSequence(
            int(self.seed), spawn_key=self.spawn_key + tuple(int(k) for k in keys)
        )
        return np.random.Generator(np.random.Philox(sequence))


def as_seed(seed, stream=0):
    """Accept an :class:`RngSeed` or a bare integer."""
    if isinstance(seed, RngSeed):
        return seed
    return RngSeed(int(seed), stream)


########################################################################################
## Site sets
########################################################################################


class SiteMask:
    """Fast membership test for a finite set of sites.

    Stored as a dense boolean grid over the bounding box when that box is
    small enough, else as a set of tuples behind a bounding-box prefilter.
    """

    def __init__(self, points, d=None):
        pts = np.asarray(points, dtype=np.int64)
        if pts.size == 0:
            if d is None:
                raise ValueError("an empty SiteMask needs an explicit dimension")
            pts = pts.reshape(0, d)
        elif pts.ndim == 1:
            pts = pts.reshape(1, -1)
        self.d = pts.shape[1]
        pts = np.unique(pts, axis=0)
        self.points = pts
        self.size = pts.shape[0]
        if self.size == 0:
            self._lo = self._hi = None
            self._grid = None
            self._set = set()
            return
        self._lo = pts.min(axis=0)
        self._hi = pts.max(axis=0)
        shape = self._hi - self._lo + 1
        if math.prod(int(s) for s in shape) <= DENSE_MASK_CELLS:
            self._grid = np.zeros(tuple(int(s) for s in shape), dtype=bool)
            self._grid[tuple((pts - self._lo).T)] = True
            self._set = None
        else:
            self._grid = None
            self._set = {tuple(int(c) for c in row) for row in pts}

    def __len__(self):
        return self.size

    def __contains__(self, p):
        return bool(self.hits(np.asarray(p, dtype=np.int64).reshape(1, -1))[0])

    def hits(self, positions):
        """Boolean array: which rows of a ``(k, d)`` array lie in the set."""
        positions = np.asarray(positions, dtype=np.int64).reshape(-1, self.d)
        out = np.zeros(positions.shape[0], dtype=bool)
        if self.size == 0:
            return out
        inside = np.all((positions >= self._lo) & (positions <= self._hi), axis=1)
        if not inside.any():
            return out
        rel = positions[inside] - self._lo
        if self._grid is not None:
            out[inside] = self._grid[tuple(rel.T)]
        else:
            rows = positions[inside]
            out[inside] = [tuple(int(c) for c in row) in self._set for row in rows]
        return out


########################################################################################
## Simple random walk
########################################################################################


def srw_increments(rng, d, size):
    """``size`` i.i.d. uniform unit steps as a ``(size, d)`` array."""
    return unit_steps(d)[rng.integers(0, 2 * d, size=size)]


def sample_srw(start, steps, seed):
    """A simple random walk path with ``steps`` steps from ``start``."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    seed = as_seed(seed)
    start = np.asarray(start, dtype=np.int64)
    rng = seed.generator()
    incs = srw_increments(rng, start.size, steps)
    pts = np.vstack([start[None, :], start + np.cumsum(incs, axis=0)])
    return paths.Path(pts, validate=False)


def iter_srw_blocks(start, rng, first_block=256, max_block=65536):
    """Yield ``(t, block)`` where ``block[j]`` is the walk position at time ``t + j + 1``.

    Block sizes double up to ``max_block``; the generator never ends.
    """
    pos = np.asarray(start, dtype=np.int64)
    d = pos.size
    t = 0
    size = first_block
    while True:
        block = pos + np.cumsum(srw_increments(rng, d, size), axis=0)
        yield t, block
        pos = block[-1]
        t += size
        size = min(2 * size, max_block)


def first_hit_time(start, target, rng, horizon, include_start=False):
    """First time ``t`` (``t >= 1``, or ``t >= 0`` with ``include_start``) the
    walk is in ``target`` (a :class:`SiteMask`), or ``None`` if after ``horizon``.
    """
    if include_start and tuple(start) in target:
        return 0
    for t, block in iter_srw_blocks(start, rng):
        if t >= horizon:
            return None
        block = block[: horizon - t]
        hit = target.hits(block)
        if hit.any():
            return t + int(np.argmax(hit)) + 1


def count_visits(start, y, rng, horizon):
    """Number of times ``0 <= t <= horizon`` the walk from ``start`` sits at ``y``."""
    y = np.asarray(y, dtype=np.int64)
    count = int(np.array_equal(np.asarray(start, dtype=np.int64), y))
    for t, block in iter_srw_blocks(start, rng):
        if t >= horizon:
            return count
        block = block[: horizon - t]
        count += int(np.all(block == y, axis=1).sum())


def walk_positions_until(start, target, rng, horizon, include_start=False):
    """Walk positions from time 0 up to and including the first hit of ``target``.

    Returns ``(positions, hit)``; when the horizon is reached first,
    ``positions`` has ``horizon + 1`` rows and ``hit`` is false.
    """
    start = np.asarray(start, dtype=np.int64)
    if include_start and tuple(int(c) for c in start) in target:
        return start[None, :], True
    pieces = [start[None, :]]
    for t, block in iter_srw_blocks(start, rng):
        if t >= horizon:
            return np.vstack(pieces), False
        block = block[: horizon - t]
        hit = target.hits(block)
        if hit.any():
            j = int(np.argmax(hit))
            pieces.append(block[: j + 1])
            return np.vstack(pieces), True
        pieces.append(block)


########################################################################################
## Green's function
########################################################################################


class EstimateMethod(str, Enum):
    ESCAPE_MC = "escape_mc"
    VARIATIONAL = "variational"
    HIT_SUM = "hit_sum"
    VISIT_COUNT = "visit_count"


@dataclass(frozen=True)
class CapacityEstimate:
    """A Monte Carlo (or variational) estimate with its uncertainty.

    ``std_error`` already includes any truncation bias bound that the method
    folds in; ``truncation_bound`` reports that bound on its own.
    """

    value: float
    std_error: float
    trials: int
    method: EstimateMethod
    truncation_bound: float = 0.0
    ratio: float | None = None
    ratio_std_error: float | None = None

    def to_dict(self):
        out = asdict(self)
        out["method"] = EstimateMethod(self.method).value
        return out


def green_tail_bound(d, horizon):
    """Upper bound on ``G(x, y)`` contributed by times after ``horizon``.

    Uses the local limit bound ``p_m(x, y) <= 2 (d / (2 pi m))^{d/2}`` (the factor
    2 for parity), summed over the ``m > horizon`` of the right parity and
    divided by the degree ``2d``. Of order ``horizon^{1 - d/2}``.
    """
    d = check_dimension(d)
    if d < 3:
        raise ValueError("the Green's function is finite only for d >= 3")
    if horizon < 1:
        return math.inf
    half = d / 2.0
    visits = (d / (2.0 * math.pi)) ** half * horizon ** (1.0 - half) / (half - 1.0)
    return visits / (2 * d)


def green_estimate(x, y, trials, horizon, seed):
    """Monte Carlo estimate of ``G(x, y)``, the expected number of visits to ``y``
    by a walk started at ``x`` divided by the degree ``2d``.

    Visits after ``horizon`` are not counted; the resulting downward bias is
    bounded by :func:`green_tail_bound` and reported as ``truncation_bound``.
    """
    d = check_dimension(len(x))
    if len(y) != d:
        raise ValueError("x and y must have the same dimension")
    if d < 3:
        raise ValueError("the Green's function is finite only for d >= 3")
    if trials < 2:
        raise ValueError("green_estimate needs at least 2 trials")
    seed = as_seed(seed)
    visits = np.array(
        [count_visits(x, y, seed.generator(i), horizon) for i in range(trials)],
        dtype=float,
    )
    degree = 2 * d
    value = float(visits.mean() / degree)
    std_error = float(visits.std(ddof=1) / math.sqrt(trials) / degree)
    bound = green_tail_bound(d, horizon)
    if bound > std_error:
        logger.warning(
            "Green truncation bound %.3g exceeds the Monte Carlo error %.3g; "
            "consider a longer horizon than %d",
            bound,
            std_error,
            horizon,
        )
    return CapacityEstimate(
        value=value,
        std_error=std_error,
        trials=trials,
        method=EstimateMethod.VISIT_COUNT,
        truncation_bound=bound,
    )
