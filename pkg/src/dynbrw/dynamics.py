"""Poisson-refreshed edge labels.

Each edge label is a right-continuous piecewise-constant path: value
``X^(0)`` on ``[0, psi_1)``, ``X^(j)`` on ``[psi_j, psi_(j+1))``, with the
``psi_j`` a rate-1 Poisson process.  Everything is stored event-exactly; no
time grid anywhere.  Values are stored as indices into the step law's
support.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .groups import Element, StepLaw
from .rng import RandomStream, as_generator

__all__ = [
    "DynamicalLabel",
    "LabelSet",
    "BreakpointSweep",
    "sample_label",
    "sample_labels",
    "value_at",
    "constant_on",
    "sweep",
]

Rng = Union[RandomStream, np.random.Generator]


def _check_time(t: float, horizon: float):
    if not 0 <= t <= horizon:
        raise ValueError(f"time {t} outside [0, {horizon}]")


@dataclass(frozen=True, eq=False)
class DynamicalLabel:
    edge: int
    horizon: float
    times: np.ndarray
    values: np.ndarray
    law: StepLaw

    def __post_init__(self):
        if len(self.values) != len(self.times) + 1:
            raise ValueError("a label needs exactly one more value than events")
        if len(self.times) and (self.times[0] <= 0 or self.times[-1] > self.horizon):
            raise ValueError("event times must lie in (0, horizon]")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("event times must be strictly increasing")

    def value_index_at(self, t: float) -> int:
        _check_time(t, self.horizon)
        return int(self.values[np.searchsorted(self.times, t, side="right")])

    def value_at(self, t: float) -> Element:
        return self.law.support[self.value_index_at(t)]

    def constant_on(self, a: float, b: float) -> bool:
        if not 0 <= a <= b <= self.horizon:
            raise ValueError(f"interval [{a}, {b}] not inside [0, {self.horizon}]")
        lo = np.searchsorted(self.times, a, side="right")
        hi = np.searchsorted(self.times, b, side="right")
        return bool(hi == lo)

    def extend(self, horizon: float, rng: Rng) -> "DynamicalLabel":
        """Continue the clock past the current horizon (memorylessness)."""
        if horizon <= self.horizon:
            return self
        gen = as_generator(rng)
        new, t = [], self.horizon
        while True:
            t += gen.exponential()
            if t > horizon:
                break
            new.append(t)
        vals = self.law.sample_indices(gen, len(new))
        return DynamicalLabel(
            self.edge,
            horizon,
            np.concatenate([self.times, new]),
            np.concatenate([self.values, vals]),
            self.law,
        )

    def to_dict(self) -> dict:
        fmt = self.law.family.format
        return {
            "edge": int(self.edge),
            "events": [float(t) for t in self.times],
            "values": [fmt(self.law.support[int(i)]) for i in self.values],
        }


def sample_label(edge: int, law: StepLaw, horizon: float, rng: Rng) -> DynamicalLabel:
    """One label: exponential gaps accumulated up to ``horizon``."""
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    gen = as_generator(rng)
    times, t = [], 0.0
    while True:
        t += gen.exponential()
        if t > horizon:
            break
        times.append(t)
    vals = law.sample_indices(gen, len(times) + 1)
    return DynamicalLabel(int(edge), float(horizon), np.asarray(times, dtype=float), vals, law)


def value_at(label: DynamicalLabel, t: float) -> Element:
    return label.value_at(t)


def constant_on(label: DynamicalLabel, a: float, b: float) -> bool:
    return label.constant_on(a, b)


class LabelSet:
    """Labels for edges ``0..n_edges-1`` in flat (CSR) storage.

    ``times[offsets[e]:offsets[e+1]]`` are the events of edge e, and its
    values are ``values[offsets[e] + e : offsets[e+1] + e + 1]``.
    """

    def __init__(self, law: StepLaw, horizon: float, offsets, times, values):
        self.law = law
        self.horizon = float(horizon)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=np.int64)
        self.event_edge = np.repeat(np.arange(self.n_edges), np.diff(self.offsets))
        if self.values.size != self.times.size + self.n_edges:
            raise ValueError("a label needs exactly one more value than events")

    @property
    def n_edges(self) -> int:
        return self.offsets.size - 1

    def __len__(self):
        return self.n_edges

    def event_counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def label(self, e: int) -> DynamicalLabel:
        lo, hi = self.offsets[e], self.offsets[e + 1]
        return DynamicalLabel(
            int(e), self.horizon, self.times[lo:hi], self.values[lo + e : hi + e + 1], self.law
        )

    def __iter__(self):
        return (self.label(e) for e in range(self.n_edges))

    def _edge_mask(self, edges: Optional[tuple]) -> Union[slice, np.ndarray]:
        if edges is None:
            return slice(None)
        lo, hi = edges
        return slice(self.offsets[lo], self.offsets[hi])

    def value_indices_at(self, t: float, edges: Optional[tuple] = None) -> np.ndarray:
        """Step index in force at time t for every edge (or the edge range ``[lo, hi)``)."""
        _check_time(t, self.horizon)
        lo, hi = (0, self.n_edges) if edges is None else edges
        sl = self._edge_mask(edges)
        past = np.bincount(self.event_edge[sl][self.times[sl] <= t] - lo, minlength=hi - lo)
        e = np.arange(lo, hi)
        return self.values[self.offsets[lo:hi] + e + past]

    def initial_indices(self, edges: Optional[tuple] = None) -> np.ndarray:
        lo, hi = (0, self.n_edges) if edges is None else edges
        return self.values[self.offsets[lo:hi] + np.arange(lo, hi)]

    def events(self, a: float, b: float, edges: Optional[tuple] = None):
        """Events in ``(a, b]`` as time-sorted arrays ``(times, edges, new_value_index)``."""
        sl = self._edge_mask(edges)
        t = self.times[sl]
        sel = (t > a) & (t <= b)
        idx = np.arange(self.times.size)[sl][sel]
        order = np.argsort(self.times[idx], kind="stable")
        idx = idx[order]
        edge = self.event_edge[idx]
        # the event at flat position i installs value number (i - offsets[e]) + 1 of edge e
        new_val = self.values[idx + edge + 1]
        return self.times[idx], edge, new_val

    def constant_on(self, a: float, b: float) -> np.ndarray:
        if not 0 <= a <= b <= self.horizon:
            raise ValueError(f"interval [{a}, {b}] not inside [0, {self.horizon}]")
        inside = (self.times > a) & (self.times <= b)
        return np.bincount(self.event_edge[inside], minlength=self.n_edges) == 0

    def extend(self, horizon: float, rng: Rng) -> "LabelSet":
        """Append the clocks' events on ``(self.horizon, horizon]``."""
        if horizon <= self.horizon:
            return self
        gen = as_generator(rng)
        E = self.n_edges
        k = gen.poisson(horizon - self.horizon, E)
        t = gen.uniform(self.horizon, horizon, int(k.sum()))
        owner = np.repeat(np.arange(E), k)
        order = np.lexsort((t, owner))
        t = t[order]
        new_vals = self.law.sample_indices(gen, int(k.sum()))
        old_k = self.event_counts()
        offsets = np.concatenate([[0], np.cumsum(old_k + k)])
        times = np.empty(offsets[-1])
        values = np.empty(offsets[-1] + E, dtype=np.int64)
        new_off = np.concatenate([[0], np.cumsum(k)])
        for e in range(E):
            o, n = offsets[e], old_k[e]
            times[o : o + n] = self.times[self.offsets[e] : self.offsets[e + 1]]
            times[o + n : offsets[e + 1]] = t[new_off[e] : new_off[e + 1]]
            values[o + e : o + e + n + 1] = self.values[self.offsets[e] + e : self.offsets[e + 1] + e + 1]
            values[o + e + n + 1 : offsets[e + 1] + e + 1] = new_vals[new_off[e] : new_off[e + 1]]
        return LabelSet(self.law, horizon, offsets, times, values)

    def to_json(self) -> str:
        return json.dumps({"horizon": self.horizon, "labels": [lab.to_dict() for lab in self]})

    @classmethod
    def from_labels(cls, labels: Sequence[DynamicalLabel]) -> "LabelSet":
        if not labels:
            raise ValueError("need at least one label")
        horizons = {lab.horizon for lab in labels}
        if len(horizons) != 1:
            raise ValueError(f"labels have mixed horizons {sorted(horizons)}")
        law = labels[0].law
        counts = [len(lab.times) for lab in labels]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        times = np.concatenate([lab.times for lab in labels]) if sum(counts) else np.zeros(0)
        values = np.concatenate([lab.values for lab in labels])
        return cls(law, horizons.pop(), offsets, times, values)

    @classmethod
    def frozen(cls, law: StepLaw, horizon: float, indices: Sequence[int]) -> "LabelSet":
        """Labels with no events, each fixed at the given step index."""
        E = len(indices)
        return cls(law, horizon, np.zeros(E + 1, dtype=np.int64), np.zeros(0), np.asarray(indices))


def sample_labels(law: StepLaw, n_edges: int, horizon: float, rng: Rng) -> LabelSet:
    """Independent labels for ``n_edges`` edges, drawn in edge order from one stream.

    Given its event count, a Poisson path on ``(0, T]`` has i.i.d. uniform
    event times; this is the vectorised equivalent of gap accumulation.
    """
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    gen = as_generator(rng)
    k = gen.poisson(horizon, n_edges)
    total = int(k.sum())
    t = horizon - gen.uniform(0.0, horizon, total)  # in (0, horizon]
    owner = np.repeat(np.arange(n_edges), k)
    order = np.lexsort((t, owner))
    values = law.sample_indices(gen, total + n_edges)
    offsets = np.concatenate([[0], np.cumsum(k)])
    return LabelSet(law, horizon, offsets, t[order], values)


@dataclass(frozen=True)
class BreakpointSweep:
    a: float
    b: float
    points: np.ndarray

    def segments(self):
        return zip(self.points[:-1], self.points[1:])

    def __len__(self):
        return self.points.size


def sweep(labels: Union[LabelSet, Iterable[DynamicalLabel]], a: float, b: float) -> BreakpointSweep:
    """Merged breakpoints of ``labels`` on [a, b]: {a, b} plus every event in (a, b)."""
    if not isinstance(labels, LabelSet):
        labels = list(labels)
        horizons = {lab.horizon for lab in labels}
        if len(horizons) > 1:
            raise ValueError(f"labels have mixed horizons {sorted(horizons)}")
        times = np.concatenate([lab.times for lab in labels]) if labels else np.zeros(0)
        horizon = horizons.pop() if horizons else np.inf
    else:
        times, horizon = labels.times, labels.horizon
    if not 0 <= a <= b <= horizon:
        raise ValueError(f"interval [{a}, {b}] not inside [0, {horizon}]")
    inner = times[(times > a) & (times < b)]
    return BreakpointSweep(float(a), float(b), np.unique(np.concatenate([[a, b], inner])))
