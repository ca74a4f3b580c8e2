"""Galton-Watson trees in breadth-first layout.

Node ids are assigned in BFS order, which makes every level, and every set of
descendants of a node at a fixed generation, a contiguous id range.  The
BFS order doubles as the fixed enumeration used for tie-breaking.
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .rng import RandomStream, as_generator

__all__ = [
    "OffspringLaw",
    "GWTree",
    "DynamicalGWTree",
    "NodeBudgetError",
    "DEFAULT_NODE_BUDGET",
    "sample_tree",
    "sample_dynamical_tree",
    "kth_predecessor",
    "descendants_at",
]

DEFAULT_NODE_BUDGET = 10**7


class NodeBudgetError(RuntimeError):
    def __init__(self, level: int, nodes: float, budget: int):
        self.level = level
        super().__init__(f"node budget {budget} exceeded at level {level} ({nodes:.3g} nodes)")


@dataclass(frozen=True)
class OffspringLaw:
    support: tuple
    probs: tuple

    def __post_init__(self):
        support = tuple(int(k) for k in self.support)
        probs = tuple(float(p) for p in self.probs)
        if not support or len(support) != len(probs):
            raise ValueError("offspring law needs a nonempty support with one probability per value")
        if len(set(support)) != len(support):
            raise ValueError("offspring law support contains duplicates")
        if any(k <= 0 for k in support):
            raise ValueError("offspring support excludes 0 (and negative values): every particle has >= 1 child")
        if any(not p > 0 for p in probs):
            raise ValueError(f"offspring probabilities must be strictly positive, got {probs}")
        if abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError(f"offspring probabilities sum to {math.fsum(probs)!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        if not self.mean > 1:
            raise ValueError(f"mean offspring must exceed 1, got {self.mean}")

    @property
    def mean(self) -> float:
        return math.fsum(k * p for k, p in zip(self.support, self.probs))

    @property
    def max_offspring(self) -> int:
        return max(self.support)

    @classmethod
    def point(cls, k: int) -> "OffspringLaw":
        return cls((k,), (1.0,))

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "OffspringLaw":
        items = sorted((int(k), float(p)) for k, p in mapping.items())
        return cls(tuple(k for k, _ in items), tuple(p for _, p in items))

    @classmethod
    def parse(cls, text: str) -> "OffspringLaw":
        """``"2"`` (point mass) or ``"1:0.5,3:0.5"``."""
        text = text.strip()
        if re.fullmatch(r"-?\d+", text):
            return cls.point(int(text))
        mapping = {}
        for part in text.split(","):
            k, sep, p = part.partition(":")
            if not sep:
                raise ValueError(f"cannot parse offspring law {text!r}; expected 'k:p,k:p'")
            mapping[int(k)] = float(p)
        return cls.from_mapping(mapping)

    def sample(self, gen: np.random.Generator, size) -> np.ndarray:
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, gen.random(size), side="right")
        return np.asarray(self.support, dtype=np.int64)[idx]

    def pmf(self) -> dict:
        return dict(zip(self.support, self.probs))


class GWTree:
    """A rooted tree materialised to a fixed number of levels.

    Attributes are numpy arrays indexed by node id: ``parent`` (-1 at the
    root), ``depth``, ``child_count``; ``child_start`` has one extra entry so
    the children of ``v`` are ``range(child_start[v], child_start[v + 1])``.
    ``level_offsets[n]:level_offsets[n + 1]`` is level n.
    """

    def __init__(self, level_counts: list):
        # level_counts[n][i] = number of children of the i-th node of level n
        self.n_levels = len(level_counts) + 1
        sizes = [1]
        for counts in level_counts:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.size != sizes[-1]:
                raise ValueError("child counts do not match level size")
            sizes.append(int(counts.sum()))
        self.level_offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        n = int(self.level_offsets[-1])
        child_count = np.zeros(n, dtype=np.int64)
        for lvl, counts in enumerate(level_counts):
            child_count[self.level_offsets[lvl] : self.level_offsets[lvl + 1]] = counts
        self.child_count = child_count
        self.child_start = np.concatenate([[1], 1 + np.cumsum(child_count)]).astype(np.int64)
        self.parent = np.full(n, -1, dtype=np.int64)
        self.parent[1:] = np.repeat(np.arange(n, dtype=np.int64), child_count)
        self.depth = np.repeat(np.arange(self.n_levels, dtype=np.int64), sizes)
        for arr in (self.child_count, self.child_start, self.parent, self.depth, self.level_offsets):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return int(self.level_offsets[-1])

    @property
    def max_depth(self) -> int:
        return self.n_levels - 1

    def level(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.max_depth:
            raise IndexError(f"level {n} outside tree of depth {self.max_depth}")
        return np.arange(self.level_offsets[n], self.level_offsets[n + 1])

    def level_range(self, n: int) -> tuple[int, int]:
        return int(self.level_offsets[n]), int(self.level_offsets[n + 1])

    def level_sizes(self) -> np.ndarray:
        return np.diff(self.level_offsets)

    def children(self, v: int) -> np.ndarray:
        return np.arange(self.child_start[v], self.child_start[v + 1])

    def descendant_range(self, v: int, k: int) -> tuple[int, int]:
        """Id range of the generation-k descendants of ``v``."""
        if k < 0 or self.depth[v] + k > self.max_depth:
            raise IndexError(f"level {int(self.depth[v]) + k} outside tree of depth {self.max_depth}")
        lo, hi = int(v), int(v) + 1
        cs = self.child_start
        for _ in range(k):
            lo, hi = int(cs[lo]), int(cs[hi])
        return lo, hi

    def path(self, v: int) -> list:
        """Node ids on the geodesic from the root to ``v``, root excluded."""
        out = []
        while v > 0:
            out.append(int(v))
            v = self.parent[v]
        return out[::-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("id,parent,depth\n")
        for v in range(self.n_nodes):
            buf.write(f"{v},{int(self.parent[v])},{int(self.depth[v])}\n")
        return buf.getvalue()

    def child_counts_by_level(self) -> list:
        return [
            self.child_count[self.level_offsets[n] : self.level_offsets[n + 1]].copy()
            for n in range(self.max_depth)
        ]

    def reenumerated(self) -> "GWTree":
        """Rebuild with fresh BFS ids; the result equals ``self``."""
        return GWTree(self.child_counts_by_level())

    def __eq__(self, other):
        return (
            isinstance(other, GWTree)
            and self.n_levels == other.n_levels
            and np.array_equal(self.child_count, other.child_count)
        )

    def __repr__(self):
        return f"GWTree(levels={self.n_levels}, nodes={self.n_nodes})"


def _check_expected_budget(mu: OffspringLaw, depth: int, budget: int):
    m = mu.mean
    total = 0.0
    for n in range(depth + 1):
        total += m**n
        if total > budget:
            raise NodeBudgetError(n, total, budget)


def sample_tree(
    mu: OffspringLaw,
    depth: int,
    rng: Union[RandomStream, np.random.Generator],
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> GWTree:
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    _check_expected_budget(mu, depth, node_budget)
    gen = as_generator(rng)
    counts = []
    size, total = 1, 1
    for n in range(depth):
        c = mu.sample(gen, size)
        counts.append(c)
        size = int(c.sum())
        total += size
        if total > node_budget:
            raise NodeBudgetError(n + 1, total, node_budget)
    return GWTree(counts)


def kth_predecessor(tree: GWTree, v: int, k: int) -> int:
    if k < 0 or k > tree.depth[v]:
        raise ValueError(f"cannot ascend {k} levels from node {v} at depth {int(tree.depth[v])}")
    for _ in range(k):
        v = tree.parent[v]
    return int(v)


def descendants_at(tree: GWTree, v: int, k: int) -> np.ndarray:
    lo, hi = tree.descendant_range(v, k)
    return np.arange(lo, hi)


class DynamicalGWTree:
    """Galton-Watson tree whose offspring counts refresh on rate-1 clocks.

    Storage is a union tree: every node keeps as many prospective children as
    its largest offspring value over ``[0, horizon]``.  At time t only the
    first ``count(t)`` children of an active node are active, so surviving
    subtrees keep their identities across t.
    """

    def __init__(self, union: GWTree, offsets, times, values, horizon: float):
        self.union = union
        self.offsets = offsets
        self.times = times
        self.values = values
        self.horizon = float(horizon)

    def event_count(self, v: int) -> int:
        return int(self.offsets[v + 1] - self.offsets[v])

    def event_times(self, v: int) -> np.ndarray:
        return self.times[self.offsets[v] : self.offsets[v + 1]]

    def counts_at(self, t: float) -> np.ndarray:
        """Offspring count in force at time t for every union node."""
        if not 0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        n = self.union.n_nodes
        edge = np.repeat(np.arange(n), np.diff(self.offsets))
        past = np.bincount(edge[self.times <= t], minlength=n)
        return self.values[self.offsets[:-1] + np.arange(n) + past]

    def active_at(self, t: float) -> np.ndarray:
        u = self.union
        counts = self.counts_at(t)
        active = np.zeros(u.n_nodes, dtype=bool)
        active[0] = True
        for n in range(1, u.n_levels):
            lo, hi = u.level_range(n)
            par = u.parent[lo:hi]
            rank = np.arange(lo, hi) - u.child_start[par]
            active[lo:hi] = active[par] & (rank < counts[par])
        return active

    def tree_at(self, t: float) -> GWTree:
        u = self.union
        counts = self.counts_at(t)
        active = self.active_at(t)
        level_counts = []
        for n in range(u.max_depth):
            lo, hi = u.level_range(n)
            level_counts.append(counts[lo:hi][active[lo:hi]])
        return GWTree(level_counts)


def sample_dynamical_tree(
    mu: OffspringLaw,
    depth: int,
    horizon: float,
    rng: Union[RandomStream, np.random.Generator],
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> DynamicalGWTree:
    if depth < 0:
        raise ValueError(f"depth must be >= 0, got {depth}")
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    gen = as_generator(rng)
    level_counts, all_offsets, all_times, all_values = [], [], [], []
    size, total = 1, 1
    for n in range(depth + 1):
        k = gen.poisson(horizon, size)
        t = gen.uniform(0.0, horizon, int(k.sum()))
        owner = np.repeat(np.arange(size), k)
        order = np.lexsort((t, owner))
        t = t[order]
        vals = mu.sample(gen, int(k.sum()) + size)
        if n < depth:
            voff = np.concatenate([[0], np.cumsum(k + 1)])
            mx = np.maximum.reduceat(vals, voff[:-1])
            level_counts.append(mx)
        all_offsets.append(k)
        all_times.append(t)
        all_values.append(vals)
        if n < depth:
            size = int(level_counts[-1].sum())
            total += size
            if total > node_budget:
                raise NodeBudgetError(n + 1, total, node_budget)
    union = GWTree(level_counts)
    k_all = np.concatenate(all_offsets)
    offsets = np.concatenate([[0], np.cumsum(k_all)]).astype(np.int64)
    return DynamicalGWTree(union, offsets, np.concatenate(all_times), np.concatenate(all_values), horizon)
