"""Lattice paths, chronological loop-erasure and cut times.

A :class:`Path` is an adjacency-consecutive sequence of points of Z^d stored as
an ``(m + 1, d)`` integer array. Loop-erasure is computed through the times

    ell_0 = 0,    ell_{k+1} = 1 + max{j : w_j = w_{ell_k}},

so that ``LE(w)_k = w_{ell_k}``, and the counting function
``rho(m) = max{k : ell_k <= m}`` is its inverse in the sense
``ell_n <= m  <=>  rho(m) >= n``.

The infinite loop-erasure of a transient walk is only available through cut
times: a time ``t`` at which ``w[0..t]`` and ``w[t+1..]`` are disjoint splits the
erasure into the erasures of the two pieces, so any prefix of the erasure that
is finished before a cut time is final.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path as FilePath

import numpy as np

import lattice

logger = logging.getLogger(__name__)

TEXT_HEADER = "# lattice-path v1"


class Path:
    """Immutable nearest-neighbour path in Z^d.

    ``len(path)`` is the number of points; ``path.length`` the number of
    steps, so a length-``m`` path has ``m + 1`` points.

    Parameters
    ----------
    points : array-like of shape (m + 1, d)
        Consecutive points.
    validate : bool, default=True
        Check that consecutive points are at l1 distance exactly 1.
    """

    def __init__(self, points, validate=True):
        arr = np.array(points, dtype=np.int64)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError(
                f"a path needs a nonempty (m + 1, d) array of points, got shape {arr.shape}"
            )
        if validate and arr.shape[0] > 1:
            steps = np.abs(np.diff(arr, axis=0)).sum(axis=1)
            if not np.all(steps == 1):
                bad = int(np.argmax(steps != 1))
                raise ValueError(
                    f"points {bad} and {bad + 1} are not lattice neighbours: "
                    f"{tuple(arr[bad])} -> {tuple(arr[bad + 1])}"
                )
        arr.setflags(write=False)
        self._points = arr

    @classmethod
    def single(cls, point):
        return cls([tuple(point)], validate=False)

    @property
    def points(self):
        return self._points

    @property
    def d(self):
        return self._points.shape[1]

    @property
    def length(self):
        return self._points.shape[0] - 1

    @property
    def start(self):
        return tuple(int(c) for c in self._points[0])

    @property
    def end(self):
        return tuple(int(c) for c in self._points[-1])

    def __len__(self):
        return self._points.shape[0]

    def __getitem__(self, item):
        if isinstance(item, slice):
            step = item.step
            return Path(self._points[item], validate=step not in (None, 1))
        return tuple(int(c) for c in self._points[item])

    def __iter__(self):
        for row in self._points:
            yield tuple(int(c) for c in row)

    def __eq__(self, other):
        if not isinstance(other, Path):
            return NotImplemented
        return self._points.shape == other._points.shape and bool(
            np.array_equal(self._points, other._points)
        )

    def __hash__(self):
        return hash((self._points.shape, self._points.tobytes()))

    def __repr__(self):
        return f"Path(d={self.d}, length={self.length}, start={self.start}, end={self.end})"

    def prefix(self, k):
        """The path stopped after ``k`` steps (points ``0..k``)."""
        if not 0 <= k <= self.length:
            raise ValueError(f"prefix length {k} outside [0, {self.length}]")
        return Path(self._points[: k + 1], validate=False)

    def tolist(self):
        return list(self)

    @cached_property
    def keys(self):
        """Integer site id per point; equal ids exactly for equal points."""
        _, inverse = np.unique(self._points, axis=0, return_inverse=True)
        return np.asarray(inverse, dtype=np.int64).reshape(-1)

    def is_simple(self):
        return np.unique(self.keys).size == len(self)

    def translate(self, offset):
        return Path(self._points + np.asarray(offset, dtype=np.int64), validate=False)

    ## Serialization: one line per point, d integer columns.

    def to_text(self):
        lines = [TEXT_HEADER, f"# d={self.d} length={self.length}"]
        lines.extend(" ".join(str(int(c)) for c in row) for row in self._points)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        rows = [
            [int(tok) for tok in line.split()]
            for line in text.splitlines()
            if line.strip() and not line.startswith("#")
        ]
        return cls(rows)

    def save(self, filepath):
        FilePath(filepath).write_text(self.to_text())

    @classmethod
    def load(cls, filepath):
        return cls.from_text(FilePath(filepath).read_text())


def concatenate(*paths):
    """Join paths whose consecutive endpoints are lattice neighbours."""
    if not paths:
        raise ValueError("nothing to concatenate")
    return Path(np.vstack([p.points for p in paths]), validate=True)


@dataclass(frozen=True, eq=False)
class LoopErasureRecord:
    """Loop-erasure of a finite path together with its ``ell`` times.

    Attributes
    ----------
    erased : Path
        The simple path ``LE(w)``.
    ell : numpy.ndarray
        Strictly increasing indices into the input with ``erased[i] = w[ell[i]]``.
    source_length : int
        Length (number of steps) of the input path.
    """

    erased: Path
    ell: np.ndarray
    source_length: int

    def rho(self, m):
        return rho(self, m)


def erase_loops(path):
    """Chronological loop-erasure of a finite path via the ``ell`` recursion.

    Examples
    --------
    >>> w = Path([(0, 0), (1, 0), (0, 0), (0, 1)])
    >>> rec = erase_loops(w)
    >>> rec.erased.tolist()
    [(0, 0), (0, 1)]
    >>> rec.ell.tolist()
    [0, 3]
    """
    keys = path.keys
    m = path.length
    last = np.full(int(keys.max()) + 1, -1, dtype=np.int64)
    np.maximum.at(last, keys, np.arange(m + 1, dtype=np.int64))
    last_list = last.tolist()
    key_list = keys.tolist()

    ell = [0]
    j = last_list[key_list[0]]
    while j < m:
        ell.append(j + 1)
        j = last_list[key_list[j + 1]]

    ell = np.asarray(ell, dtype=np.int64)
    ell.setflags(write=False)
    erased = Path(path.points[ell], validate=False)
    return LoopErasureRecord(erased=erased, ell=ell, source_length=m)


def rho(record, m):
    """Number of erased-path steps contributed by the first ``m`` input steps.

    Implements ``rho(m) = max{k : ell_k <= m}``, the form for which
    ``ell_n <= m`` holds exactly when ``rho(m) >= n``.
    """
    if not 0 <= m <= record.source_length:
        raise ValueError(f"m={m} outside [0, {record.source_length}]")
    return int(np.searchsorted(record.ell, m, side="right")) - 1


def cut_times(path):
    """All ``t`` with ``{w_0..w_t}`` and ``{w_{t+1}..w_m}`` disjoint, ascending.

    A point first seen at ``f`` and last seen at ``l > f`` blocks every
    ``t`` in ``[f, l)``; the cut times are the unblocked indices. The final
    index is always included since its suffix is empty.

    Examples
    --------
    >>> cut_times(Path([(0, 0), (1, 0), (0, 0), (0, 1)])).tolist()
    [2, 3]
    """
    keys = path.keys
    m = path.length
    n_keys = int(keys.max()) + 1
    idx = np.arange(m + 1, dtype=np.int64)
    first = np.full(n_keys, m + 1, dtype=np.int64)
    last = np.full(n_keys, -1, dtype=np.int64)
    np.minimum.at(first, keys, idx)
    np.maximum.at(last, keys, idx)

    blocked = first < last
    cover = np.zeros(m + 2, dtype=np.int64)
    np.add.at(cover, first[blocked], 1)
    np.add.at(cover, last[blocked], -1)
    depth = np.cumsum(cover[: m + 1])
    return np.nonzero(depth == 0)[0]


def le_prefix_certified(walk, n):
    """Prefix of the loop-erasure contributed by the first ``n`` steps.

    Returns ``(LE(walk)^{rho_n}, certified)``. ``certified`` is true when the
    walk has a cut time ``t`` with ``n <= t < walk.length``; the terminal
    index never certifies because nothing after it has been observed.
    """
    if not 0 <= n <= walk.length:
        raise ValueError(f"n={n} outside [0, {walk.length}]")
    record = erase_loops(walk)
    k = rho(record, n)
    cuts = cut_times(walk)
    certified = bool(np.any((cuts >= n) & (cuts < walk.length)))
    return record.erased.prefix(k), certified


class LoopEraser:
    """Incremental chronological loop-erasure.

    Sites are pushed one at a time; stepping onto a site already on the
    stack erases the loop just closed. ``times`` holds the push time of
    each retained site, which coincides with the ``ell`` times of
    :func:`erase_loops` on the same sequence. Sites may be any hashable
    (lattice tuples or graph vertex ids).
    """

    def __init__(self, start):
        self.stack = [start]
        self.times = [0]
        self._position = {start: 0}
        self._clock = 0

    def push(self, site):
        self._clock += 1
        pos = self._position.get(site)
        if pos is None:
            self._position[site] = len(self.stack)
            self.stack.append(site)
            self.times.append(self._clock)
            return
        for erased in self.stack[pos + 1 :]:
            del self._position[erased]
        del self.stack[pos + 1 :]
        del self.times[pos + 1 :]

    def extend(self, sites):
        for site in sites:
            self.push(site)

    def __contains__(self, site):
        return site in self._position

    def __len__(self):
        return len(self.stack)

    @property
    def tip(self):
        return self.stack[-1]


########################################################################################
## Infinite loop-erasure through certified walks
########################################################################################


def _grow_certified_walk(seed, d, accept, initial=64):
    """Grow a walk from the origin (doubling) until ``accept(record, cuts, m)``."""
    rng = lattice.as_seed(seed).generator()
    steps = lattice.unit_steps(d)
    points = np.zeros((1, d), dtype=np.int64)
    target = initial
    while True:
        extra = target - (points.shape[0] - 1)
        incs = steps[rng.integers(0, 2 * d, size=extra)]
        block = points[-1] + np.cumsum(incs, axis=0)
        points = np.vstack([points, block])
        walk = Path(points, validate=False)
        record = erase_loops(walk)
        cuts = cut_times(walk)
        if accept(record, cuts, walk.length):
            return walk, record, cuts
        logger.debug("walk of length %d not yet certified, doubling", walk.length)
        target *= 2


def _cut_with_erased_length(record, cuts, m, n, min_time=0):
    """Whether some non-terminal cut time ``t >= min_time`` has ``rho(t) >= n``."""
    usable = cuts[(cuts < m) & (cuts >= min_time)]
    if usable.size == 0:
        return False
    rho_at = np.searchsorted(record.ell, usable, side="right") - 1
    return bool(np.any(rho_at >= n))


def sample_lerw(n, seed, d=4):
    """First ``n`` steps of the infinite loop-erased random walk from the origin.

    The underlying walk is doubled in length until a non-terminal cut time
    carries at least ``n`` erased steps, so the returned path is exact for
    transient ``d`` (d >= 3).
    """
    if d < 3:
        raise ValueError("the infinite loop-erasure needs a transient walk (d >= 3)")
    if n < 0:
        raise ValueError("n must be nonnegative")
    _, record, _ = _grow_certified_walk(
        seed, d, lambda rec, cuts, m: _cut_with_erased_length(rec, cuts, m, n),
        initial=max(64, 4 * n),
    )
    return record.erased.prefix(n)


def lerw_length_ratios(n, seed, d=4):
    """Normalized ``rho_n`` and ``ell_n`` of the infinite erasure of one walk.

    Returns ``(rho_n / (n (log n)^{-1/3}), ell_n / (n (log n)^{1/3}))``; both
    concentrate around a constant in d = 4.
    """
    if n < 3:
        raise ValueError("n must be at least 3 so that log n > 1")
    walk, record, _ = _grow_certified_walk(
        seed,
        d,
        lambda rec, cuts, m: _cut_with_erased_length(rec, cuts, m, n, min_time=n),
        initial=max(64, 4 * n),
    )
    rho_n = rho(record, n)
    ell_n = int(record.ell[n])
    log_n = math.log(n)
    return rho_n / (n * log_n ** (-1.0 / 3.0)), ell_n / (n * log_n ** (1.0 / 3.0))
