"""Uniform spanning trees via Wilson's algorithm, plus exact finite-graph oracles.

Graphs are anything exposing ``n_vertices``, ``supernode``, ``coords`` and
``random_neighbor(v, u)``, which maps a uniform ``u`` in [0, 1) to a neighbour
of ``v`` chosen with probability proportional to edge multiplicity.
:class:`WiredBox` computes its neighbours arithmetically, so a box with tens of
millions of vertices needs no adjacency storage.

Trees are returned as :class:`SpanningTree`, a parent array oriented towards
the root with a CSR children index built on demand.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path as FilePath

import numpy as np
from scipy import linalg
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

import lattice
from paths import LoopEraser
from settings import config

logger = logging.getLogger(__name__)

INDEX_WIDTH = config("INDEX_WIDTH")
MAX_VERTICES = config("MAX_VERTICES")

# Exhaustive enumeration is exponential; keep it to oracle-sized graphs
MAX_ENUMERATION_VERTICES = 12

TREE_MAGIC = 0x55535431
TREE_FORMAT_VERSION = 1
TEXT_HEADER = "# spanning-tree v1"


class DisconnectedGraphError(ValueError):
    """Raised when no spanning tree exists."""


########################################################################################
## Graphs
########################################################################################


class FiniteGraph:
    """Finite undirected multigraph on vertices ``0..n-1``.

    ``adjacency[v]`` lists neighbours of ``v`` with repetition, so a parallel
    edge of multiplicity ``k`` appears ``k`` times.
    """

    def __init__(self, n_vertices, adjacency, supernode=None, coords=None):
        if len(adjacency) != n_vertices:
            raise ValueError("adjacency must have one entry per vertex")
        self.n_vertices = int(n_vertices)
        self.adjacency = tuple(tuple(int(u) for u in nbrs) for nbrs in adjacency)
        self.supernode = supernode
        self.coords = coords
        self.d = None if coords is None else int(np.asarray(coords).shape[1])
        self.L = None

    @classmethod
    def from_edges(cls, n_vertices, edges, supernode=None, coords=None):
        """Build from an edge list; repeated pairs become parallel edges."""
        adjacency = [[] for _ in range(n_vertices)]
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at {u} is not allowed")
            adjacency[u].append(v)
            adjacency[v].append(u)
        return cls(n_vertices, adjacency, supernode=supernode, coords=coords)

    def degree(self, v):
        return len(self.adjacency[v])

    def random_neighbor(self, v, u):
        nbrs = self.adjacency[v]
        return nbrs[int(u * len(nbrs))]

    def edge_multiplicities(self):
        """``{(a, b): multiplicity}`` with ``a < b``."""
        counts = {}
        for v, nbrs in enumerate(self.adjacency):
            for u in nbrs:
                if v < u:
                    counts[(v, u)] = counts.get((v, u), 0) + 1
        return counts

    def to_csr(self):
        mult = self.edge_multiplicities()
        if not mult:
            return coo_matrix((self.n_vertices, self.n_vertices)).tocsr()
        rows, cols = np.array(list(mult), dtype=np.int64).T
        weights = np.array(list(mult.values()), dtype=float)
        matrix = coo_matrix(
            (np.concatenate([weights, weights]), (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(self.n_vertices, self.n_vertices),
        )
        return matrix.tocsr()

    def laplacian(self):
        adj = self.to_csr().toarray()
        return np.diag(adj.sum(axis=1)) - adj

    def is_connected(self):
        if self.n_vertices <= 1:
            return True
        n_comp, _ = connected_components(self.to_csr(), directed=False)
        return n_comp == 1


class WiredBox:
    """``Lambda(L)`` in Z^d with its outer boundary collapsed to one supernode.

    Lattice vertices are numbered in lexicographic order of their coordinates
    (``numpy.ravel_multi_index`` order); the supernode is ``(2L + 1)^d``. A
    boundary vertex reaches the supernode once per missing lattice neighbour,
    so corner edges carry multiplicity up to ``d``.
    """

    def __init__(self, d, L):
        self.d = lattice.check_dimension(d)
        if L < 1:
            raise ValueError("box half-width L must be at least 1")
        self.L = int(L)
        self.side = 2 * self.L + 1
        self.n_lattice = self.side**self.d
        if self.n_lattice + 1 > 2 ** (INDEX_WIDTH - 1) - 1:
            raise OverflowError(
                f"(2L+1)^d + 1 = {self.n_lattice + 1} does not fit a signed "
                f"{INDEX_WIDTH}-bit vertex index"
            )
        self.n_vertices = self.n_lattice + 1
        self.supernode = self.n_lattice
        self.strides = tuple(self.side ** (self.d - 1 - i) for i in range(self.d))

    def index_of(self, point):
        if len(point) != self.d or any(abs(int(c)) > self.L for c in point):
            raise ValueError(f"{tuple(point)} is not in the box of half-width {self.L}")
        return int(sum((int(c) + self.L) * s for c, s in zip(point, self.strides)))

    def point_of(self, index):
        if not 0 <= index < self.n_lattice:
            raise ValueError(f"{index} is not a lattice vertex of the box")
        return tuple(int(c) - self.L for c in np.unravel_index(index, (self.side,) * self.d))

    @property
    def origin(self):
        return self.index_of(lattice.origin(self.d))

    @cached_property
    def coords(self):
        return lattice.Box.around_origin(self.d, self.L).points()

    def random_neighbor(self, v, u):
        k = int(u * 2 * self.d)
        stride = self.strides[k >> 1]
        c = (v // stride) % self.side
        if k & 1:
            return v - stride if c > 0 else self.supernode
        return v + stride if c < self.side - 1 else self.supernode

    def to_finite_graph(self):
        """Explicit multigraph with the same vertex numbering."""
        edges = []
        steps = lattice.unit_steps(self.d)
        for v, p in enumerate(self.coords):
            for step in steps[::2]:
                q = p + step
                if np.all(np.abs(q) <= self.L):
                    edges.append((v, self.index_of(q)))
            for step in steps:
                if np.any(np.abs(p + step) > self.L):
                    edges.append((v, self.supernode))
        graph = FiniteGraph.from_edges(self.n_vertices, edges, supernode=self.supernode)
        graph.coords = self.coords
        graph.d = self.d
        graph.L = self.L
        return graph


def check_box_size(d, L):
    """Raise before allocating a box larger than ``MAX_VERTICES``."""
    n = (2 * L + 1) ** d + 1
    if n > MAX_VERTICES:
        raise MemoryError(f"a box with d={d}, L={L} has {n} vertices > MAX_VERTICES={MAX_VERTICES}")
    return n


########################################################################################
## Spanning trees
########################################################################################


def _gather(indptr, indices, nodes):
    """CSR rows of ``nodes`` flattened: ``(source positions, values)``."""
    starts = indptr[nodes]
    counts = indptr[nodes + 1] - starts
    total = int(counts.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    src = np.repeat(np.arange(nodes.size, dtype=np.int64), counts)
    offsets = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(counts) - counts, counts)
    return src, indices[np.repeat(starts, counts) + offsets]


@dataclass(frozen=True, eq=False)
class SpanningTree:
    """A spanning tree stored as a parent array.

    Attributes
    ----------
    parent : numpy.ndarray
        ``parent[v]`` is the next vertex towards the root; ``parent[root] == root``.
    root : int
    supernode : int or None
        Index of the wired boundary vertex when the tree lives on a wired box.
    coords : numpy.ndarray or None
        ``(n_lattice, d)`` coordinates of the non-supernode vertices.
    L : int or None
        Box half-width for trees sampled on a box.
    """

    parent: np.ndarray
    root: int
    supernode: int | None = None
    coords: np.ndarray | None = None
    L: int | None = None

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=np.int64)
        parent.setflags(write=False)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "root", int(self.root))
        if parent.ndim != 1 or not 0 <= self.root < parent.size:
            raise ValueError("root must index the parent array")
        if parent[self.root] != self.root:
            raise ValueError("parent[root] must equal root")

    @property
    def n_vertices(self):
        return self.parent.size

    @property
    def d(self):
        return None if self.coords is None else int(self.coords.shape[1])

    def is_lattice_vertex(self, v):
        return self.supernode is None or v != self.supernode

    @cached_property
    def _children_csr(self):
        n = self.n_vertices
        kids = np.nonzero(self.parent != np.arange(n))[0]
        par = self.parent[kids]
        order = np.argsort(par, kind="stable")
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(np.bincount(par, minlength=n))
        return indptr, kids[order]

    def children(self, v):
        indptr, indices = self._children_csr
        return indices[indptr[v] : indptr[v + 1]]

    def gather_children(self, nodes):
        indptr, indices = self._children_csr
        return _gather(indptr, indices, np.asarray(nodes, dtype=np.int64))

    @cached_property
    def levels(self):
        """Vertices grouped by depth below the root."""
        out = [np.array([self.root], dtype=np.int64)]
        while True:
            _, nxt = self.gather_children(out[-1])
            if nxt.size == 0:
                return out
            out.append(nxt)

    @cached_property
    def depth(self):
        depth = np.full(self.n_vertices, -1, dtype=np.int64)
        for k, level in enumerate(self.levels):
            depth[level] = k
        return depth

    @cached_property
    def height(self):
        """Depth of the deepest descendant of each vertex, relative to it."""
        height = np.zeros(self.n_vertices, dtype=np.int64)
        for level in reversed(self.levels[1:]):
            np.maximum.at(height, self.parent[level], height[level] + 1)
        return height

    def descendants(self, v, max_depth=None):
        """``v`` and everything below it, optionally at most ``max_depth`` down."""
        out = [np.array([v], dtype=np.int64)]
        k = 0
        while max_depth is None or k < max_depth:
            _, nxt = self.gather_children(out[-1])
            if nxt.size == 0:
                break
            out.append(nxt)
            k += 1
        return np.sort(np.concatenate(out))

    def path_to_root(self, v):
        out = [int(v)]
        parent = self.parent
        while out[-1] != self.root:
            out.append(int(parent[out[-1]]))
        return out

    def edges(self):
        """Undirected edge set as ``frozenset`` of ``(a, b)`` with ``a < b``."""
        v = np.nonzero(self.parent != np.arange(self.n_vertices))[0]
        p = self.parent[v]
        return frozenset(zip(np.minimum(v, p).tolist(), np.maximum(v, p).tolist()))

    def validate(self):
        """Check that every vertex reaches the root, i.e. the array is a tree."""
        roots = np.nonzero(self.parent == np.arange(self.n_vertices))[0]
        if roots.size != 1:
            raise ValueError(f"expected exactly one root, found {roots.size}")
        reached = sum(level.size for level in self.levels)
        if reached != self.n_vertices:
            raise ValueError(f"only {reached} of {self.n_vertices} vertices reach the root")
        return True

    def vertex_at(self, point):
        """Vertex index of a lattice point (box trees or explicit coordinates)."""
        if self.coords is None:
            raise ValueError("this tree has no coordinates")
        if self.L is not None:
            side = 2 * self.L + 1
            if any(abs(int(c)) > self.L for c in point):
                raise ValueError(f"{tuple(point)} is outside the box")
            return int(np.ravel_multi_index(tuple(int(c) + self.L for c in point), (side,) * self.d))
        hits = np.nonzero(np.all(self.coords == np.asarray(point), axis=1))[0]
        if hits.size == 0:
            raise ValueError(f"{tuple(point)} is not a vertex of this tree")
        return int(hits[0])

    @property
    def origin(self):
        return self.vertex_at(lattice.origin(self.d))

    ## Serialization

    def to_bytes(self):
        """Little-endian int64 header, parent array, then coordinates unless
        they are implied by the box."""
        store_coords = self.coords is not None and self.L is None
        header = np.array(
            [
                TREE_MAGIC,
                TREE_FORMAT_VERSION,
                self.n_vertices,
                self.root,
                -1 if self.supernode is None else self.supernode,
                -1 if self.d is None else self.d,
                -1 if self.L is None else self.L,
                int(store_coords),
            ],
            dtype="<i8",
        )
        body = [header.tobytes(), self.parent.astype("<i8").tobytes()]
        if store_coords:
            body.append(np.asarray(self.coords).astype("<i8").tobytes())
        return b"".join(body)

    @classmethod
    def from_bytes(cls, data):
        header = np.frombuffer(data[:64], dtype="<i8")
        magic, version, n, root, supernode, d, L, store_coords = (int(x) for x in header)
        if magic != TREE_MAGIC:
            raise ValueError("not a spanning-tree file")
        if version != TREE_FORMAT_VERSION:
            raise ValueError(f"unsupported spanning-tree format version {version}")
        parent = np.frombuffer(data[64 : 64 + 8 * n], dtype="<i8").astype(np.int64)
        coords = None
        if store_coords:
            rows = n - (0 if supernode < 0 else 1)
            raw = np.frombuffer(data[64 + 8 * n : 64 + 8 * n + 8 * rows * d], dtype="<i8")
            coords = raw.astype(np.int64).reshape(rows, d)
        elif L >= 0:
            coords = lattice.Box.around_origin(d, L).points()
        return cls(
            parent=parent,
            root=root,
            supernode=None if supernode < 0 else supernode,
            coords=coords,
            L=None if L < 0 else L,
        )

    def save(self, filepath):
        FilePath(filepath).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, filepath):
        return cls.from_bytes(FilePath(filepath).read_bytes())

    def to_text(self):
        lines = [
            TEXT_HEADER,
            f"# n={self.n_vertices} root={self.root} supernode={self.supernode} "
            f"d={self.d} L={self.L}",
        ]
        for v in range(self.n_vertices):
            row = [str(v), str(int(self.parent[v]))]
            if self.coords is not None and self.is_lattice_vertex(v):
                row.extend(str(int(c)) for c in self.coords[v])
            lines.append(" ".join(row))
        return "\n".join(lines) + "\n"


########################################################################################
## Wilson's algorithm
########################################################################################


def uniform_stream(rng, block=1 << 16):
    """Endless stream of uniforms drawn from ``rng`` in blocks."""
    while True:
        yield from rng.random(block).tolist()


def _wilson(graph, roots, order, rng):
    n = graph.n_vertices
    parent = list(range(n))
    in_tree = bytearray(n)
    for r in roots:
        in_tree[r] = 1
    uniforms = uniform_stream(rng)
    step = graph.random_neighbor
    steps_taken = 0
    for v in order:
        if in_tree[v]:
            continue
        eraser = LoopEraser(v)
        u = v
        while not in_tree[u]:
            u = step(u, next(uniforms))
            eraser.push(u)
            steps_taken += 1
        branch = eraser.stack
        for a, b in zip(branch, branch[1:]):
            parent[a] = b
            in_tree[a] = 1
    logger.debug("Wilson: %d vertices, %d walk steps", n, steps_taken)
    return np.asarray(parent, dtype=np.int64)


def wilson_sample(graph, root, seed, order=None):
    """A uniform spanning tree of ``graph`` rooted at ``root``.

    Walks start from vertices in ``order`` (default ``0..n-1``) and the loop
    erasure of each walk up to its first hit of the current tree is grafted
    on. The result is deterministic given ``seed`` and ``order``.
    """
    seed = lattice.as_seed(seed)
    if not 0 <= root < graph.n_vertices:
        raise ValueError(f"root {root} is not a vertex")
    if isinstance(graph, WiredBox) and root != graph.supernode:
        raise ValueError("a wired box is always rooted at its supernode")
    if isinstance(graph, FiniteGraph) and not graph.is_connected():
        raise DisconnectedGraphError("graph is not connected; it has no spanning tree")
    order = range(graph.n_vertices) if order is None else order
    parent = _wilson(graph, [root], order, seed.generator())
    return SpanningTree(
        parent=parent,
        root=root,
        supernode=graph.supernode,
        coords=graph.coords,
        L=getattr(graph, "L", None),
    )


def wired_box_ust(d, L, seed, order=None):
    """Wired uniform spanning tree of ``Lambda(L)`` in Z^d, rooted at the supernode."""
    graph = WiredBox(d, L)
    check_box_size(d, L)
    logger.info("sampling wired UST: d=%d L=%d (%d vertices)", d, L, graph.n_vertices)
    return wilson_sample(graph, graph.supernode, seed, order=order)


def zero_wired_box(d, L, seed, order=None):
    """UST of the box with the origin glued to the wired boundary.

    Returns ``(tree, origin_component)``. In the tree the origin is a child of
    the supernode, standing in for the identification; ``origin_component``
    holds the vertices whose path to the boundary passes through the origin,
    the origin included.
    """
    if L < 2:
        raise ValueError("the zero-wired box needs L >= 2")
    graph = WiredBox(d, L)
    check_box_size(d, L)
    seed = lattice.as_seed(seed)
    o = graph.origin
    order = range(graph.n_vertices) if order is None else order
    parent = _wilson(graph, [graph.supernode, o], order, seed.generator())
    parent[o] = graph.supernode
    tree = SpanningTree(
        parent=parent, root=graph.supernode, supernode=graph.supernode, coords=graph.coords, L=L
    )
    return tree, tree.descendants(o)


########################################################################################
## Exact oracles
########################################################################################


def enumerate_spanning_trees(graph):
    """Every spanning tree as a sorted tuple of ``(a, b)`` edges, in lexicographic order.

    Parallel edges are listed once; :func:`tree_weight` gives the number of
    multigraph spanning trees each edge set stands for.
    """
    if isinstance(graph, WiredBox):
        graph = graph.to_finite_graph()
    n = graph.n_vertices
    if n > MAX_ENUMERATION_VERTICES:
        raise ValueError(
            f"enumeration is limited to {MAX_ENUMERATION_VERTICES} vertices, got {n}"
        )
    edges = sorted(graph.edge_multiplicities())
    trees = []

    def extend(i, chosen, labels):
        if len(chosen) == n - 1:
            trees.append(tuple(chosen))
            return
        if n - 1 - len(chosen) > len(edges) - i:
            return
        a, b = edges[i]
        if labels[a] != labels[b]:
            old, new = labels[b], labels[a]
            merged = [new if lab == old else lab for lab in labels]
            extend(i + 1, chosen + [edges[i]], merged)
        extend(i + 1, chosen, labels)

    extend(0, [], list(range(n)))
    return trees


def tree_weight(graph, tree_edges):
    mult = graph.edge_multiplicities()
    return math.prod(mult[e] for e in tree_edges)


def count_spanning_trees(graph):
    """Kirchhoff's matrix-tree theorem (counts multigraph trees)."""
    if isinstance(graph, WiredBox):
        graph = graph.to_finite_graph()
    if graph.n_vertices == 1:
        return 1
    lap = graph.laplacian()
    return int(round(linalg.det(lap[1:, 1:])))


def exact_edge_marginals(graph):
    """``P(e in T)`` for the uniform spanning tree: multiplicity times effective resistance."""
    if isinstance(graph, WiredBox):
        graph = graph.to_finite_graph()
    pinv = linalg.pinv(graph.laplacian())
    return {
        (a, b): m * float(pinv[a, a] + pinv[b, b] - 2 * pinv[a, b])
        for (a, b), m in graph.edge_multiplicities().items()
    }
