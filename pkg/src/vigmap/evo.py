"""NSGA-II building blocks shared by the mapping and architecture searches.

Everything here works on plain float arrays in *minimize* space: callers
with maximize objectives negate those columns first (``to_min_space``).
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Any, Hashable, Iterable, Sequence

import numpy as np


class Sense(str, enum.Enum):
    MIN = "min"
    MAX = "max"


@dataclasses.dataclass(frozen=True)
class ObjectiveVector:
    values: tuple[float, ...]
    senses: tuple[Sense, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        senses = tuple(Sense(s) for s in self.senses)
        if len(vals) != len(senses):
            raise ValueError(f"{len(vals)} values but {len(senses)} senses")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"objective values must be finite: {vals}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "senses", senses)

    @classmethod
    def minimize(cls, *values: float) -> "ObjectiveVector":
        return cls(values, (Sense.MIN,) * len(values))

    def minimized(self) -> tuple[float, ...]:
        return tuple(-v if s is Sense.MAX else v for v, s in zip(self.values, self.senses))


def to_min_space(values, senses: Sequence[Sense | str]) -> np.ndarray:
    """Copy of ``values`` (n, m) with maximize columns negated."""
    arr = np.array(values, dtype=float, ndmin=2)
    if arr.shape[1] != len(senses):
        raise ValueError(f"got {arr.shape[1]} objectives for {len(senses)} senses")
    flip = np.array([Sense(s) is Sense.MAX for s in senses])
    arr[:, flip] *= -1.0
    return arr


def dominates(a: ObjectiveVector, b: ObjectiveVector) -> bool:
    if a.senses != b.senses:
        raise ValueError(f"objective senses differ: {a.senses} vs {b.senses}")
    x, y = a.minimized(), b.minimized()
    return all(p <= q for p, q in zip(x, y)) and any(p < q for p, q in zip(x, y))


def _as_points(pop) -> np.ndarray:
    if len(pop) == 0:
        return np.zeros((0, 0))
    if isinstance(pop[0], ObjectiveVector):
        senses = pop[0].senses
        if any(v.senses != senses for v in pop):
            raise ValueError("population mixes objective senses")
        return np.array([v.minimized() for v in pop], dtype=float)
    return np.array(pop, dtype=float, ndmin=2)


def dominance_matrix(points: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is true when point i dominates point j."""
    p = np.asarray(points, dtype=float)
    le = (p[:, None, :] <= p[None, :, :]).all(axis=2)
    lt = (p[:, None, :] < p[None, :, :]).any(axis=2)
    return le & lt


def nondominated_sort(pop) -> list[list[int]]:
    """Fronts as ascending index lists; front 0 is the non-dominated set."""
    pts = _as_points(pop)
    n = len(pts)
    if n == 0:
        raise ValueError("cannot sort an empty population")
    dom = dominance_matrix(pts)
    count = dom.sum(axis=0)
    fronts = []
    remaining = np.ones(n, dtype=bool)
    current = np.flatnonzero(count == 0)
    while current.size:
        fronts.append(current.tolist())
        remaining[current] = False
        count = count - dom[current].sum(axis=0)
        current = np.flatnonzero(remaining & (count == 0))
    return fronts


def front_ranks(points) -> np.ndarray:
    ranks = np.empty(len(points), dtype=int)
    for r, front in enumerate(nondominated_sort(points)):
        ranks[front] = r
    return ranks


def nondominated_mask(points) -> np.ndarray:
    """Boolean mask of the non-dominated rows. Identical rows are all kept."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 0:
        return np.zeros(0, dtype=bool)
    uniq, inverse = np.unique(pts, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    if uniq.shape[1] == 2:
        # np.unique sorts rows lexicographically; a row is dominated iff some
        # earlier row has a second coordinate no larger
        prev_min = np.minimum.accumulate(np.concatenate(([np.inf], uniq[:-1, 1])))
        keep = uniq[:, 1] < prev_min
    else:
        keep = np.ones(len(uniq), dtype=bool)
        for start in range(0, len(uniq), 1024):
            block = uniq[start:start + 1024]
            le = (uniq[:, None, :] <= block[None, :, :]).all(axis=2)
            lt = (uniq[:, None, :] < block[None, :, :]).any(axis=2)
            keep[start:start + len(block)] = ~(le & lt).any(axis=0)
    return keep[inverse]


def crowding_distance(front) -> np.ndarray:
    """Per-member crowding distance with per-objective min-max normalization."""
    pts = _as_points(front)
    n, m = pts.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(pts[:, k], kind="stable")
        col = pts[order, k]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = col[-1] - col[0]
        if span <= 0:
            continue
        dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


def rank_and_crowding(points) -> tuple[np.ndarray, np.ndarray]:
    pts = _as_points(points)
    ranks = np.empty(len(pts), dtype=int)
    crowd = np.empty(len(pts))
    for r, front in enumerate(nondominated_sort(pts)):
        ranks[front] = r
        crowd[front] = crowding_distance(pts[front])
    return ranks, crowd


def order_by(ranks, secondary) -> np.ndarray:
    """Indices sorted by rank, then by *descending* secondary key, then index."""
    ranks = np.asarray(ranks)
    sec = np.asarray(secondary, dtype=float)
    return np.lexsort((np.arange(len(ranks)), -sec, ranks))


def select_best(points, k: int) -> np.ndarray:
    """NSGA-II truncation: the ``k`` best indices by (rank, crowding)."""
    ranks, crowd = rank_and_crowding(points)
    return order_by(ranks, crowd)[:k]


def binary_tournament(ranks, crowding, rng: np.random.Generator, size: int) -> np.ndarray:
    """Winners of ``size`` two-way tournaments: lower rank, then larger crowding."""
    ranks = np.asarray(ranks)
    crowding = np.asarray(crowding, dtype=float)
    n = len(ranks)
    pairs = rng.integers(n, size=(size, 2))
    a, b = pairs[:, 0], pairs[:, 1]
    a_wins = (ranks[a] < ranks[b]) | ((ranks[a] == ranks[b]) & (crowding[a] >= crowding[b]))
    return np.where(a_wins, a, b)


@dataclasses.dataclass
class ArchiveMember:
    id: Hashable
    objectives: tuple[float, ...]
    payload: Any = None


class ParetoArchive:
    """Mutually non-dominated set of (id, objectives, payload) records.

    Objectives are stored in the caller's orientation; ``senses`` says how to
    compare them. Members with identical objective vectors collapse onto the
    one with the smallest id, so the final set does not depend on the order
    candidates arrive in.
    """

    def __init__(self, senses: Sequence[Sense | str], capacity: int | None = None):
        self.senses = tuple(Sense(s) for s in senses)
        self.capacity = capacity
        self.members: list[ArchiveMember] = []

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def objectives(self) -> np.ndarray:
        if not self.members:
            return np.zeros((0, len(self.senses)))
        return np.array([m.objectives for m in self.members], dtype=float)

    def update(self, candidates: Iterable[tuple[Hashable, Sequence[float], Any]]) -> "ParetoArchive":
        by_vec: dict[tuple[float, ...], ArchiveMember] = {m.objectives: m for m in self.members}
        for cid, obj, payload in candidates:
            vec = tuple(float(v) for v in obj)
            if len(vec) != len(self.senses):
                raise ValueError(f"candidate has {len(vec)} objectives, archive {len(self.senses)}")
            held = by_vec.get(vec)
            if held is None or cid < held.id:
                by_vec[vec] = ArchiveMember(cid, vec, payload)
        pool = list(by_vec.values())
        if not pool:
            return self
        pts = to_min_space([m.objectives for m in pool], self.senses)
        keep = nondominated_mask(pts)
        pool = [m for m, k in zip(pool, keep) if k]
        pool.sort(key=lambda m: m.objectives)
        if self.capacity is not None and len(pool) > self.capacity:
            crowd = crowding_distance(to_min_space([m.objectives for m in pool], self.senses))
            idx = np.lexsort((np.arange(len(pool)), -crowd))[:self.capacity]
            pool = [pool[i] for i in sorted(idx)]
        self.members = pool
        return self

    def copy(self) -> "ParetoArchive":
        out = ParetoArchive(self.senses, self.capacity)
        out.members = list(self.members)
        return out
