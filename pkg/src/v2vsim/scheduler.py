"""Slot scheduling: conflict graph and hash-priority transmitter selection.

Two senders conflict when either lies inside the other's exclusion
footprint (the union of its receivers' exclusion disks, evaluated on
estimated locations).  Each slot, every vehicle derives the same pseudo-
random priority permutation from (vehicle id, slot, seed) and the
lexicographically-first maximal independent set by that order transmits.
That set has a one-hop fixed-point characterization - a vehicle transmits
exactly when every higher-priority conflict neighbor stays silent - so the
selection is computable distributively even though this implementation
evaluates it centrally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    """splitmix64 finalizer: a well-distributed 64-bit mixing function."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def slot_priority(vehicle: int, slot: int, seed: int) -> int:
    """Deterministic 64-bit priority of one vehicle in one slot."""
    h = _mix64(seed & _MASK64)
    h = _mix64(h ^ ((vehicle * _GOLDEN) & _MASK64))
    return _mix64(h ^ ((slot * _GOLDEN) & _MASK64))


def slot_priorities(vehicles, slot: int, seed: int) -> dict[int, int]:
    return {v: slot_priority(v, slot, seed) for v in vehicles}


@dataclass(frozen=True)
class SenderFootprint:
    """A pending sender's exclusion footprint: per-receiver disk centers
    (estimated receiver locations) and radii (ratio x estimated link
    distance)."""

    sender: int
    centers: np.ndarray
    radii: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "centers",
                           np.asarray(self.centers, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "radii",
                           np.asarray(self.radii, dtype=float).reshape(-1))
        if len(self.centers) != len(self.radii):
            raise ValueError("one radius per disk center required")
        if np.any(self.radii < 0):
            raise ValueError("radii must be nonnegative")

    def covers(self, xy: np.ndarray) -> np.ndarray:
        """Boolean membership of points (n, 2) in the footprint."""
        pts = np.asarray(xy, dtype=float).reshape(-1, 2)
        if len(self.centers) == 0:
            return np.zeros(len(pts), dtype=bool)
        d2 = ((pts[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
        return (d2 <= self.radii[None, :] ** 2).any(axis=1)


class ConflictGraph:
    """Undirected conflict relation over pending senders."""

    def __init__(self, vertices, adjacency: np.ndarray):
        self.vertices = tuple(vertices)
        self._index = {v: i for i, v in enumerate(self.vertices)}
        adj = np.asarray(adjacency, dtype=bool)
        n = len(self.vertices)
        if adj.shape != (n, n):
            raise ValueError("adjacency shape mismatch")
        if np.any(adj != adj.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diag(adj)):
            raise ValueError("self-loops not allowed")
        self.adjacency = adj

    @classmethod
    def from_edges(cls, vertices, edges) -> "ConflictGraph":
        verts = tuple(vertices)
        index = {v: i for i, v in enumerate(verts)}
        adj = np.zeros((len(verts), len(verts)), dtype=bool)
        for a, b in edges:
            if a == b:
                raise ValueError("self-loops not allowed")
            adj[index[a], index[b]] = True
            adj[index[b], index[a]] = True
        return cls(verts, adj)

    def __len__(self) -> int:
        return len(self.vertices)

    def has_edge(self, a: int, b: int) -> bool:
        return bool(self.adjacency[self._index[a], self._index[b]])

    def neighbors(self, v: int) -> frozenset[int]:
        row = self.adjacency[self._index[v]]
        return frozenset(self.vertices[i] for i in np.flatnonzero(row))

    def edges(self) -> list[tuple[int, int]]:
        iu, ju = np.nonzero(np.triu(self.adjacency))
        return [(self.vertices[i], self.vertices[j]) for i, j in zip(iu, ju)]


def build_conflict_graph(footprints, positions: dict[int, tuple[float, float]]
                         ) -> ConflictGraph:
    """Conflict edges from footprint membership on estimated positions.

    `footprints` lists the pending senders; `positions` must locate each of
    them.  Senders i and j conflict when i's position falls in j's
    footprint or vice versa.
    """
    fps = list(footprints)
    verts = [fp.sender for fp in fps]
    if len(set(verts)) != len(verts):
        raise ValueError("duplicate sender footprint")
    xy = np.asarray([positions[v] for v in verts], dtype=float).reshape(-1, 2)
    n = len(verts)
    inside = np.zeros((n, n), dtype=bool)  # inside[j, i]: i in footprint of j
    for j, fp in enumerate(fps):
        inside[j] = fp.covers(xy)
    adj = inside | inside.T
    np.fill_diagonal(adj, False)
    return ConflictGraph(verts, adj)


@dataclass
class SlotSchedule:
    """Outcome of one slot's selection."""

    slot: int
    transmitters: frozenset[int]
    priorities: dict[int, int] = field(default_factory=dict)


def select_transmitters(graph: ConflictGraph, priorities: dict[int, int],
                        slot: int = 0) -> SlotSchedule:
    """Greedy maximal independent set by descending priority (ties toward
    the lower vehicle id)."""
    n = len(graph)
    if n == 0:
        return SlotSchedule(slot=slot, transmitters=frozenset(),
                            priorities=dict(priorities))
    verts = graph.vertices
    order = sorted(range(n), key=lambda i: (-priorities[verts[i]], verts[i]))
    blocked = np.zeros(n, dtype=bool)
    picked = []
    for i in order:
        if not blocked[i]:
            picked.append(verts[i])
            blocked |= graph.adjacency[i]
    return SlotSchedule(slot=slot, transmitters=frozenset(picked),
                        priorities=dict(priorities))
