"""Exact analytics on a sampled spanning tree.

Everything here is deterministic given the tree: intrinsic balls and spheres,
pasts and futures, effective resistance to a sphere, geodesic counts,
weighted tree metrics and extrinsic (lattice) geometry of intrinsic balls.

Balls are built level by level with vectorized CSR gathers; the wired
supernode is never part of a ball, since its edges stand for the lattice
outside the box.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import spsolve

import paths
from wilson import SpanningTree

logger = logging.getLogger(__name__)


def _check_vertex(tree, v):
    if not isinstance(v, (int, np.integer)) or not 0 <= v < tree.n_vertices:
        raise ValueError(f"unknown vertex {v!r}")
    return int(v)


########################################################################################
## Fixture trees
########################################################################################


def from_parents(parents, coords=None):
    """Tree from a parent list; the root is the unique ``v`` with ``parents[v] == v``."""
    parents = np.asarray(parents, dtype=np.int64)
    roots = np.nonzero(parents == np.arange(parents.size))[0]
    if roots.size != 1:
        raise ValueError(f"expected exactly one root, found {roots.size}")
    tree = SpanningTree(
        parent=parents,
        root=int(roots[0]),
        coords=None if coords is None else np.asarray(coords, dtype=np.int64),
    )
    tree.validate()
    return tree


def line_tree(m, d=1, center=0):
    """Path ``0 - 1 - ... - m`` rooted at 0 and embedded along ``e1`` at ``i - center``."""
    parents = np.concatenate([[0], np.arange(m, dtype=np.int64)])
    coords = np.zeros((m + 1, d), dtype=np.int64)
    coords[:, 0] = np.arange(m + 1) - center
    return from_parents(parents, coords)


def full_binary_tree(depth):
    """Complete binary tree of the given depth; children of ``i`` are ``2i+1, 2i+2``."""
    n = 2 ** (depth + 1) - 1
    idx = np.arange(n, dtype=np.int64)
    parents = np.where(idx == 0, 0, (idx - 1) // 2)
    return from_parents(parents)


def random_tree(n, rng):
    """Random recursive tree on ``n`` vertices: ``parent[i]`` uniform on ``0..i-1``."""
    parents = np.zeros(n, dtype=np.int64)
    if n > 1:
        parents[1:] = np.floor(rng.random(n - 1) * np.arange(1, n)).astype(np.int64)
    return from_parents(parents)


########################################################################################
## Balls
########################################################################################


@dataclass(frozen=True, eq=False)
class BallDecomposition:
    """BFS levels of the intrinsic ball ``B(v, n)``.

    ``levels[k]`` is the intrinsic sphere at distance ``k``;
    ``parent_positions[k][i]`` is the position in ``levels[k - 1]`` of the BFS
    parent of ``levels[k][i]``. Levels past the end of the component are
    empty arrays, so ``len(levels) == radius + 1`` always.
    """

    center: int
    radius: int
    levels: list
    parent_positions: list
    hits_wired_boundary: bool

    @property
    def sphere(self):
        return self.levels[self.radius]

    @property
    def vertices(self):
        return np.concatenate(self.levels)

    @property
    def volume(self):
        return int(sum(level.size for level in self.levels))

    def volumes(self):
        """``|B(v, k)|`` for ``k = 0..radius``."""
        return np.cumsum([level.size for level in self.levels])


def _neighbor_pairs(tree, frontier):
    """All tree neighbours of the frontier: ``(source positions, neighbours)``."""
    src_c, kids = tree.gather_children(frontier)
    has_parent = frontier != tree.root
    src_p = np.nonzero(has_parent)[0]
    par = tree.parent[frontier[has_parent]]
    return np.concatenate([src_c, src_p]), np.concatenate([kids, par])


def ball(tree, v, n):
    """Intrinsic ball of radius ``n`` around ``v``, as BFS levels."""
    v = _check_vertex(tree, v)
    if n < 0:
        raise ValueError("radius must be nonnegative")
    if not tree.is_lattice_vertex(v):
        raise ValueError("balls around the wired supernode are not defined")
    levels = [np.array([v], dtype=np.int64)]
    positions = [np.array([-1], dtype=np.int64)]
    came_from = np.array([-1], dtype=np.int64)
    boundary = False
    for _ in range(n):
        frontier = levels[-1]
        if frontier.size == 0:
            levels.append(frontier)
            positions.append(frontier)
            continue
        src, nbr = _neighbor_pairs(tree, frontier)
        keep = nbr != came_from[src]
        if tree.supernode is not None:
            wired = nbr == tree.supernode
            boundary = boundary or bool(np.any(wired & keep))
            keep &= ~wired
        nxt, pos = nbr[keep], src[keep]
        levels.append(nxt)
        positions.append(pos)
        came_from = frontier[pos]
    return BallDecomposition(
        center=v,
        radius=n,
        levels=levels,
        parent_positions=positions,
        hits_wired_boundary=boundary,
    )


def ball_frame(tree, decomposition):
    """One row per ball vertex: ``vertex, level`` and coordinates when known."""
    frames = []
    for k, level in enumerate(decomposition.levels):
        frames.append(pd.DataFrame({"vertex": level, "level": k}))
    df = pd.concat(frames, ignore_index=True)
    if tree.coords is not None:
        for i in range(tree.d):
            df[f"x{i + 1}"] = tree.coords[df["vertex"].to_numpy(), i]
    return df


########################################################################################
## Pasts and futures
########################################################################################


def past(tree, v, n=None):
    """``v`` together with all vertices whose root path passes through ``v``,
    optionally truncated to intrinsic distance ``n``."""
    v = _check_vertex(tree, v)
    if v == tree.root:
        raise ValueError("the root has no past")
    return tree.descendants(v, max_depth=n)


def past_reaches(tree, v, n):
    """Whether the past of ``v`` contains a vertex at distance exactly ``n``."""
    v = _check_vertex(tree, v)
    if v == tree.root:
        raise ValueError("the root has no past")
    return bool(tree.height[v] >= n)


class FutureMeet(NamedTuple):
    path_u: list
    path_v: list
    meet: int


def future_and_meet(tree, u, v):
    """Root-directed paths from ``u`` and ``v`` up to the first vertex they share."""
    u = _check_vertex(tree, u)
    v = _check_vertex(tree, v)
    future_u = tree.path_to_root(u)
    position = {w: i for i, w in enumerate(future_u)}
    path_v = [v]
    parent = tree.parent
    while path_v[-1] not in position:
        path_v.append(int(parent[path_v[-1]]))
    meet = path_v[-1]
    return FutureMeet(future_u[: position[meet] + 1], path_v, meet)


def _meets_only_at_supernode(tree, fm, u, v):
    return (
        tree.supernode is not None
        and fm.meet == tree.supernode
        and u != tree.supernode
        and v != tree.supernode
    )


def tree_distance(tree, u, v):
    """Intrinsic distance; infinite when the two futures only meet at the wired boundary."""
    fm = future_and_meet(tree, u, v)
    if _meets_only_at_supernode(tree, fm, u, v):
        return math.inf
    return len(fm.path_u) + len(fm.path_v) - 2


########################################################################################
## Effective resistance and geodesics
########################################################################################


def _nonempty_sphere(tree, v, n):
    if n < 1:
        raise ValueError("n must be a positive integer")
    b = ball(tree, v, n)
    if b.sphere.size == 0:
        raise ValueError(f"the intrinsic sphere of radius {n} around {v} is empty")
    return b


def resistance_to_sphere(tree, v, n, exact=False):
    """Effective resistance between ``v`` and the identified sphere at distance ``n``.

    Leaf-to-root recursion over the ball. Sphere vertices sit at resistance 0
    from the terminal; each child contributes an edge in series, ``1 + R``,
    and siblings combine in parallel. A vertex with a single child just adds
    the edge, so chains stay exact in floating point. Dead ends have infinite
    resistance. With ``exact=True`` the arithmetic is in
    :class:`fractions.Fraction`.

    Examples
    --------
    >>> resistance_to_sphere(line_tree(10), 0, 4)
    4.0
    >>> resistance_to_sphere(full_binary_tree(3), 0, 3, exact=True)
    Fraction(7, 8)
    """
    b = _nonempty_sphere(tree, v, n)
    if exact:
        return _resistance_exact(b)
    resistance = np.zeros(b.sphere.size)
    for k in range(n, 0, -1):
        pos = b.parent_positions[k]
        size = b.levels[k - 1].size
        series = 1.0 + resistance
        kids = np.bincount(pos, minlength=size)
        chain = np.bincount(pos, weights=series, minlength=size)
        conductance = np.bincount(pos, weights=1.0 / series, minlength=size)
        with np.errstate(divide="ignore"):
            resistance = np.where(kids == 1, chain, 1.0 / conductance)
    return float(resistance[0])


def _resistance_exact(b):
    conductance = [None] * b.sphere.size
    for k in range(b.radius, 0, -1):
        above = [Fraction(0)] * b.levels[k - 1].size
        for pos, c in zip(b.parent_positions[k].tolist(), conductance):
            above[pos] += Fraction(1) if c is None else c / (1 + c)
        conductance = above
    return 1 / conductance[0]


def resistance_to_sphere_linear(tree, v, n):
    """Same quantity from the harmonic system on the ball (oracle for small balls)."""
    b = _nonempty_sphere(tree, v, n)
    vertices = b.vertices
    index = {int(w): i for i, w in enumerate(vertices)}
    rows, cols = [], []
    for k in range(1, n + 1):
        for w, pos in zip(b.levels[k].tolist(), b.parent_positions[k].tolist()):
            rows.append(index[w])
            cols.append(index[int(b.levels[k - 1][pos])])
    m = vertices.size
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, m)).tocsr()
    adj = adj + adj.T
    degree = np.asarray(adj.sum(axis=1)).ravel()

    potential = np.zeros(m)
    potential[0] = 1.0
    sphere_start = m - b.sphere.size
    interior = np.arange(1, sphere_start)
    if interior.size:
        lap = (coo_matrix((degree, (np.arange(m), np.arange(m))), shape=(m, m)) - adj).tocsr()
        lap_ii = lap[interior][:, interior].tocsc()
        rhs = -lap[interior][:, [0]].toarray().ravel()
        potential[interior] = np.atleast_1d(spsolve(lap_ii, rhs))
    current = float(degree[0] * potential[0] - adj[0].dot(potential)[0])
    return 1.0 / current


def geodesic_counts(tree, v, n):
    """``N_v(n, k)`` for ``k = 1..n``: vertices at distance ``k`` lying on a
    geodesic from ``v`` to the sphere of radius ``n``."""
    b = _nonempty_sphere(tree, v, n)
    counts = np.zeros(n, dtype=np.int64)
    marked = np.ones(b.sphere.size, dtype=bool)
    for k in range(n, 0, -1):
        counts[k - 1] = int(marked.sum())
        above = np.bincount(b.parent_positions[k][marked], minlength=b.levels[k - 1].size)
        marked = above > 0
    return counts


def geodesic_table(tree, v, n):
    """``(n, k, N, resistance)`` rows for CSV export."""
    counts = geodesic_counts(tree, v, n)
    return pd.DataFrame(
        {
            "n": n,
            "k": np.arange(1, n + 1),
            "N": counts,
            "resistance": resistance_to_sphere(tree, v, n),
        }
    )


########################################################################################
## Weighted metrics
########################################################################################


@dataclass(frozen=True, eq=False)
class VertexWeighting:
    """A nonnegative weight per vertex, stored densely."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("vertex weights must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, tree, value):
        return cls(np.full(tree.n_vertices, float(value)))

    def __call__(self, v):
        return float(self.values[v])


def weighted_distance(tree, omega, u, v):
    """Sum over the tree path of ``(omega(a) + omega(b)) / 2`` per edge."""
    fm = future_and_meet(tree, u, v)
    if _meets_only_at_supernode(tree, fm, u, v):
        return math.inf
    route = fm.path_u + fm.path_v[-2::-1]
    w = omega.values[np.asarray(route, dtype=np.int64)]
    return float(np.sum((w[:-1] + w[1:]) / 2.0))


def omega_r(tree, r):
    """Indicator that the past of a vertex reaches depth ``r``.

    Examples
    --------
    >>> int(omega_r(line_tree(5), 2).values.sum())
    4
    """
    if r < 1:
        raise ValueError("r must be a positive integer")
    values = (tree.height >= r).astype(float)
    if tree.supernode is not None:
        values[tree.supernode] = 0.0
    return VertexWeighting(values)


########################################################################################
## Extrinsic geometry
########################################################################################


class ExtrinsicStats(NamedTuple):
    max_displacement: int
    containment_radius: int


def _require_coords(tree):
    if tree.coords is None:
        raise ValueError("this tree has no lattice coordinates")


def extrinsic_stats(tree, v, n):
    """Largest sup-norm distance from ``v`` over ``B(v, n)``, and the smallest
    ``r`` with ``B(v, n)`` inside the origin-centred box ``Lambda(r)``."""
    _require_coords(tree)
    b = ball(tree, v, n)
    pts = tree.coords[b.vertices]
    return ExtrinsicStats(
        int(np.abs(pts - tree.coords[v]).max()),
        int(np.abs(pts).max()),
    )


def extrinsic_volume(tree, v, r):
    """Number of ``x`` whose tree geodesic to ``v`` stays inside ``Lambda(v, r)``."""
    _require_coords(tree)
    v = _check_vertex(tree, v)
    centre = tree.coords[v]
    n_lattice = tree.coords.shape[0]

    count = 1
    frontier = np.array([v], dtype=np.int64)
    came_from = np.array([-1], dtype=np.int64)
    while frontier.size:
        src, nbr = _neighbor_pairs(tree, frontier)
        keep = nbr != came_from[src]
        if tree.supernode is not None:
            keep &= nbr != tree.supernode
        src, nbr = src[keep], nbr[keep]
        lattice_nbr = nbr < n_lattice
        src, nbr = src[lattice_nbr], nbr[lattice_nbr]
        ok = np.abs(tree.coords[nbr] - centre).max(axis=1) <= r
        came_from = frontier[src[ok]]
        frontier = nbr[ok]
        count += frontier.size
    return count


########################################################################################
## M-set extraction
########################################################################################


def m_set_length_threshold(r):
    if r < 3:
        raise ValueError("r must be at least 3")
    return max(1, math.floor(r**2 / math.log(r) ** (1.0 / 3.0)))


def extract_M_set(tree, x, r, alpha, classifier, origin=None):
    """Vertices ``y`` of ``Lambda(x, 3r)`` whose path to the origin's future
    stays in ``Lambda(x, 3r)``, has length at most
    ``max(1, floor(r^2 / (log r)^{1/3}))`` and is accepted by
    ``classifier(path, alpha)``.

    Paths that only join the origin's future at the wired supernode never
    qualify. ``x`` is a vertex; ``origin`` defaults to the tree vertex at the
    lattice origin.
    """
    _require_coords(tree)
    threshold = m_set_length_threshold(r)
    x = _check_vertex(tree, x)
    origin = tree.origin if origin is None else _check_vertex(tree, origin)
    n_lattice = tree.coords.shape[0]
    centre = tree.coords[x]
    radius = 3 * r
    origin_future = set(tree.path_to_root(origin))
    parent = tree.parent

    in_box = np.abs(tree.coords - centre).max(axis=1) <= radius
    selected = []
    for y in np.nonzero(in_box)[0].tolist():
        route = [y]
        u = y
        ok = True
        while u not in origin_future:
            if len(route) > threshold:
                ok = False
                break
            u = int(parent[u])
            if u >= n_lattice or not in_box[u]:
                ok = False
                break
            route.append(u)
        if not ok or (tree.supernode is not None and u == tree.supernode):
            continue
        if classifier(paths.Path(tree.coords[route], validate=False), alpha):
            selected.append(y)
    return np.asarray(selected, dtype=np.int64)
