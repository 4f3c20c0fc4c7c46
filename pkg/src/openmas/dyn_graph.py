"""Undirected graph snapshots over labeled nodes and their Laplacian spectra."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO

import numpy as np

from .errors import InvalidInputError, UnknownNodeError
from .open_state import as_label_array

__all__ = [
    "GraphSnapshot",
    "LaplacianMatrix",
    "degree",
    "laplacian",
    "laplacian_spectrum",
    "algebraic_connectivity",
    "is_connected",
    "erdos_renyi",
    "write_graph",
    "read_graph",
]

# Spectral connectivity threshold on the second-smallest Laplacian eigenvalue.
CONNECTIVITY_TOL = 1e-9


def _canonical_edges(nodes: np.ndarray, edges: Iterable[tuple[int, int]] | np.ndarray) -> np.ndarray:
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        out = np.empty((0, 2), dtype=np.int64)
        out.setflags(write=False)
        return out
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidInputError("edges must be pairs of node labels")
    if np.any(arr[:, 0] == arr[:, 1]):
        raise InvalidInputError("self-loops are not allowed")
    arr = np.sort(arr, axis=1)
    arr = np.unique(arr, axis=0)
    known = np.isin(arr, nodes)
    if not known.all():
        bad = arr[~known.all(axis=1)][0]
        raise InvalidInputError(f"edge ({bad[0]}, {bad[1]}) has an endpoint outside the node set")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class GraphSnapshot:
    """Node set plus undirected edge set at one time step.

    ``nodes`` is sorted ascending; ``edges`` is an ``(m, 2)`` array of
    canonical pairs (smaller label first), lexicographically sorted and
    free of duplicates.  Derived quantities (positions, degrees, spectrum)
    are computed once and cached on the instance.
    """

    nodes: np.ndarray
    edges: np.ndarray
    memo: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        nodes = self.nodes
        if not (isinstance(nodes, np.ndarray) and nodes.dtype == np.int64 and not nodes.flags.writeable):
            nodes = as_label_array(nodes)
        elif nodes.size > 1 and not np.all(nodes[1:] > nodes[:-1]):
            raise InvalidInputError("nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", _canonical_edges(nodes, self.edges))

    @classmethod
    def from_edges(cls, nodes: Iterable[int], edges: Iterable[tuple[int, int]] = ()) -> "GraphSnapshot":
        return cls(as_label_array(nodes), np.asarray(list(edges), dtype=np.int64).reshape(-1, 2))

    @property
    def n(self) -> int:
        return int(self.nodes.size)

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphSnapshot):
            return NotImplemented
        return self is other or (
            np.array_equal(self.nodes, other.nodes) and np.array_equal(self.edges, other.edges)
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"GraphSnapshot(n={self.n}, m={self.m})"

    def index_of(self, v: int) -> int:
        i = int(np.searchsorted(self.nodes, v))
        if i >= self.nodes.size or self.nodes[i] != v:
            raise UnknownNodeError(f"node {v} not in graph")
        return i

    def __contains__(self, v: object) -> bool:
        try:
            self.index_of(v)  # type: ignore[arg-type]
        except (UnknownNodeError, TypeError):
            return False
        return True

    @cached_property
    def edge_positions(self) -> tuple[np.ndarray, np.ndarray]:
        """Edge endpoints as positions into ``nodes``."""
        i = np.searchsorted(self.nodes, self.edges[:, 0])
        j = np.searchsorted(self.nodes, self.edges[:, 1])
        return i, j

    @cached_property
    def degrees(self) -> np.ndarray:
        i, j = self.edge_positions
        deg = np.bincount(i, minlength=self.n) + np.bincount(j, minlength=self.n)
        deg.setflags(write=False)
        return deg

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max()) if self.n else 0

    def neighbors(self, v: int) -> list[int]:
        self.index_of(v)
        e = self.edges
        out = np.concatenate([e[e[:, 0] == v, 1], e[e[:, 1] == v, 0]])
        return sorted(int(w) for w in out)

    @cached_property
    def laplacian_array(self) -> np.ndarray:
        n = self.n
        lap = np.zeros((n, n))
        i, j = self.edge_positions
        lap[i, j] = -1.0
        lap[j, i] = -1.0
        lap[np.arange(n), np.arange(n)] = self.degrees
        lap.setflags(write=False)
        return lap

    @cached_property
    def spectrum(self) -> np.ndarray:
        """Laplacian eigenvalues in ascending order."""
        if self.n == 0:
            raise InvalidInputError("empty graph has no Laplacian")
        ev = np.linalg.eigvalsh(self.laplacian_array)
        ev.setflags(write=False)
        return ev

    def without_node(self, v: int) -> "GraphSnapshot":
        idx = self.index_of(v)
        keep = (self.edges[:, 0] != v) & (self.edges[:, 1] != v)
        nodes = np.delete(self.nodes, idx)
        nodes.setflags(write=False)
        return GraphSnapshot(nodes, self.edges[keep])

    def with_node(self, v: int, neighbors: Iterable[int] = ()) -> "GraphSnapshot":
        if v in self:
            raise InvalidInputError(f"node {v} already present")
        nodes = np.insert(self.nodes, int(np.searchsorted(self.nodes, v)), v)
        nodes.setflags(write=False)
        new = np.asarray([(min(w, v), max(w, v)) for w in neighbors], dtype=np.int64).reshape(-1, 2)
        return GraphSnapshot(nodes, np.concatenate([self.edges, new]))


@dataclass(frozen=True)
class LaplacianMatrix:
    ordering: np.ndarray
    entries: np.ndarray


def _require_nonempty(g: GraphSnapshot) -> None:
    if g.n == 0:
        raise InvalidInputError("graph has no nodes")


def degree(g: GraphSnapshot, v: int) -> int:
    return int(g.degrees[g.index_of(v)])


def laplacian(g: GraphSnapshot) -> LaplacianMatrix:
    """Dense Laplacian ``D - A`` in ascending label order."""
    _require_nonempty(g)
    return LaplacianMatrix(ordering=g.nodes, entries=g.laplacian_array)


def laplacian_spectrum(g: GraphSnapshot) -> np.ndarray:
    _require_nonempty(g)
    return g.spectrum


def algebraic_connectivity(g: GraphSnapshot) -> float:
    """Second-smallest Laplacian eigenvalue, clipped at zero.

    A single node has no second eigenvalue; 0 is returned for it.
    """
    _require_nonempty(g)
    if g.n == 1:
        return 0.0
    return max(float(g.spectrum[1]), 0.0)


def is_connected(g: GraphSnapshot) -> bool:
    """Connectivity decided by breadth-first traversal."""
    _require_nonempty(g)
    n = g.n
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in zip(*g.edge_positions):
        adj[a].append(b)
        adj[b].append(a)
    seen = bytearray(n)
    seen[0] = 1
    queue = deque([0])
    count = 1
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if not seen[b]:
                seen[b] = 1
                count += 1
                queue.append(b)
    return count == n


def erdos_renyi(n: int, p: float, rng: np.random.Generator) -> GraphSnapshot:
    """G(n, p) on labels ``0..n-1``.

    One uniform draw per unordered pair, in row-major upper-triangle order,
    so the result depends only on the generator state.
    """
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"edge probability {p} outside [0, 1]")
    iu, ju = np.triu_indices(n, k=1)
    draws = rng.random(iu.size)
    keep = draws < p
    edges = np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64)
    return GraphSnapshot(np.arange(n, dtype=np.int64), edges)


def write_graph(g: GraphSnapshot, fh: TextIO) -> None:
    """Line format: ``n m``, one label per line, then one ``u v`` per edge."""
    fh.write(f"{g.n} {g.m}\n")
    if g.n:
        fh.write("\n".join(str(int(v)) for v in g.nodes))
        fh.write("\n")
    if g.m:
        fh.write("\n".join(f"{int(a)} {int(b)}" for a, b in g.edges))
        fh.write("\n")


def read_graph(lines: Iterable[str]) -> GraphSnapshot:
    """Inverse of :func:`write_graph`; consumes exactly ``1 + n + m`` lines."""
    it = iter(lines)
    try:
        head = next(it).split()
        n, m = int(head[0]), int(head[1])
        if len(head) != 2 or n < 0 or m < 0:
            raise ValueError
        nodes = [int(next(it)) for _ in range(n)]
        edges = []
        for _ in range(m):
            a, b = next(it).split()
            edges.append((int(a), int(b)))
    except (StopIteration, ValueError, IndexError) as exc:
        raise InvalidInputError("malformed graph block") from exc
    return GraphSnapshot.from_edges(nodes, edges)
