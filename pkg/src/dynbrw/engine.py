"""Tree-indexed dynamical walks and the exact time-sweep constructions.

Every process quantity here is piecewise constant in t, with breakpoints
among the label event times.  "For all t in [a, b]" questions are therefore
answered exactly by visiting ``a`` and every event in ``(a, b]``.

Node ``v > 0`` carries the label of edge ``v - 1`` (the edge from its parent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.stats import norm

from .dynamics import LabelSet, sample_labels
from .groups import LatticeZd, StepLaw, log_return_probabilities
from .gwtree import GWTree, OffspringLaw, sample_tree
from .rng import RandomStream

__all__ = [
    "LevelSnapshot",
    "EmbeddedState",
    "InfProcessState",
    "Certificate",
    "ScanResult",
    "NoPeriodError",
    "positions",
    "positions_at",
    "returns_at",
    "zeta_n",
    "zeta_n_given_tau",
    "zeta_profile",
    "sigma_first_hit",
    "smallest_hitting_node",
    "a_event_holds",
    "embedded_pick_k",
    "embedded_process",
    "y_count",
    "inf_Y",
    "inf_embedded",
    "stability_certificate",
    "certificate_replicate",
    "exceptional_scan",
    "exit_times",
    "EPSILON_GRID",
]

Rng = Union[RandomStream, np.random.Generator]

EPSILON_GRID = tuple(2.0**-j for j in range(21))
MIN_CERTIFICATE_REPLICATES = 1000


class NoPeriodError(ValueError):
    """No k <= k_max with p^(k)(e,e) m^k > 1."""


# ---------------------------------------------------------------------------
# position arithmetic, vectorised per family


def _is_lattice(law: StepLaw) -> bool:
    return isinstance(law.family, LatticeZd)


def _identity_positions(law: StepLaw, n: int):
    if _is_lattice(law):
        return np.zeros((n, law.family.d), dtype=np.int64)
    out = np.empty(n, dtype=object)
    out[:] = [()] * n
    return out


def _extend(law: StepLaw, parent_pos, steps: np.ndarray, vectors=None):
    """Right-multiply each parent position by the step with the given index."""
    if _is_lattice(law):
        return parent_pos + (law.vectors if vectors is None else vectors)[steps]
    mul = law.family.multiply
    sup = law.support
    out = np.empty(len(steps), dtype=object)
    out[:] = [mul(p, sup[s]) for p, s in zip(parent_pos, steps)]
    return out


def _prepend(law: StepLaw, steps: np.ndarray, pos):
    """Left-multiply each position by the step with the given index."""
    if _is_lattice(law):
        return law.vectors[steps] + pos
    mul = law.family.multiply
    sup = law.support
    out = np.empty(len(steps), dtype=object)
    out[:] = [mul(sup[s], p) for s, p in zip(steps, pos)]
    return out


def _at_identity(law: StepLaw, pos) -> np.ndarray:
    if _is_lattice(law):
        return ~pos.any(axis=1)
    return np.fromiter((len(p) == 0 for p in pos), dtype=bool, count=len(pos))


def _check_labels(tree: GWTree, labels: LabelSet, max_level: int):
    need = int(tree.level_offsets[max_level + 1]) - 1
    if labels.n_edges < need:
        raise ValueError(
            f"missing labels: tree needs {need} edge labels up to level {max_level}, got {labels.n_edges}"
        )


def positions(tree: GWTree, labels: LabelSet, t: float, max_level: Optional[int] = None):
    """``S_v(t)`` for every node up to ``max_level``, computed top-down from scratch."""
    L = tree.max_depth if max_level is None else max_level
    _check_labels(tree, labels, L)
    law = labels.law
    n = int(tree.level_offsets[L + 1])
    steps = labels.value_indices_at(t, edges=(0, n - 1))
    pos = _identity_positions(law, n)
    for lvl in range(1, L + 1):
        lo, hi = tree.level_range(lvl)
        pos[lo:hi] = _extend(law, pos[tree.parent[lo:hi]], steps[lo - 1 : hi - 1])
    return pos


@dataclass
class LevelSnapshot:
    t: float
    level: int
    nodes: np.ndarray
    positions: object
    return_count: int


def positions_at(tree: GWTree, labels: LabelSet, t: float) -> list:
    pos = positions(tree, labels, t)
    out = []
    for lvl in range(tree.n_levels):
        lo, hi = tree.level_range(lvl)
        p = pos[lo:hi]
        out.append(LevelSnapshot(t, lvl, np.arange(lo, hi), p, int(_at_identity(labels.law, p).sum())))
    return out


def returns_at(tree: GWTree, labels: LabelSet, t: float, n: int) -> int:
    """Number of level-n particles at the identity at time t."""
    pos = positions(tree, labels, t, max_level=n)
    lo, hi = tree.level_range(n)
    return int(_at_identity(labels.law, pos[lo:hi]).sum())


# ---------------------------------------------------------------------------
# incremental sweeps


class _Tracker:
    """Positions relative to ``base`` over generations 0..K of its subtree,
    kept current while label events are applied one at a time."""

    def __init__(self, tree: GWTree, labels: LabelSet, base: int, K: int, t0: float):
        self.tree, self.labels, self.law = tree, labels, labels.law
        self.base, self.K = int(base), int(K)
        self.d0 = int(tree.depth[base])
        if self.d0 + K > tree.max_depth:
            raise ValueError(f"tree of depth {tree.max_depth} has no generation {K} below node {base}")
        self.lattice = _is_lattice(self.law)
        self.vectors = self.law.vectors if self.lattice else None
        cs = tree.child_start
        self.lo, self.hi = [self.base], [self.base + 1]
        for _ in range(K):
            self.lo.append(int(cs[self.lo[-1]]))
            self.hi.append(int(cs[self.hi[-1]]))
        # step indices in force, per node id in the tracked generations 1..K
        self.steps = {}
        self.pos, self.zero = [_identity_positions(self.law, 1)], [np.ones(1, dtype=bool)]
        self.counts = np.zeros(K + 1, dtype=np.int64)
        self.counts[0] = 1
        for j in range(1, K + 1):
            lo, hi = self.lo[j], self.hi[j]
            s = labels.value_indices_at(t0, edges=(lo - 1, hi - 1)) if hi > lo else np.zeros(0, np.int64)
            self.steps[j] = s.copy()
            par = tree.parent[lo:hi] - self.lo[j - 1]
            p = _extend(self.law, self.pos[j - 1][par], s, self.vectors)
            z = _at_identity(self.law, p)
            self.pos.append(p)
            self.zero.append(z)
            self.counts[j] = int(z.sum())

    def edge_ranges(self):
        return [(self.lo[j] - 1, self.hi[j] - 1) for j in range(1, self.K + 1) if self.hi[j] > self.lo[j]]

    def events(self, a: float, b: float):
        parts = [self.labels.events(a, b, edges=r) for r in self.edge_ranges()]
        if not parts:
            return np.zeros(0), np.zeros(0, np.int64), np.zeros(0, np.int64)
        t = np.concatenate([p[0] for p in parts])
        e = np.concatenate([p[1] for p in parts])
        v = np.concatenate([p[2] for p in parts])
        order = np.argsort(t, kind="stable")
        return t[order], e[order], v[order]

    def set_step(self, edge: int, new: int):
        u = int(edge) + 1
        j = int(self.tree.depth[u]) - self.d0
        off = u - self.lo[j]
        old = int(self.steps[j][off])
        if old == new:
            return
        self.steps[j][off] = new
        cs = self.tree.child_start
        lo, hi = u, u + 1
        delta = self.vectors[new] - self.vectors[old] if self.lattice else None
        for g in range(j, self.K + 1):
            if g > j:
                lo, hi = int(cs[lo]), int(cs[hi])
            if hi <= lo:
                break
            a, b = lo - self.lo[g], hi - self.lo[g]
            if self.lattice:
                self.pos[g][a:b] += delta
            else:
                par = self.tree.parent[lo:hi] - self.lo[g - 1]
                self.pos[g][a:b] = _extend(self.law, self.pos[g - 1][par], self.steps[g][a:b])
            z = _at_identity(self.law, self.pos[g][a:b])
            self.counts[g] += int(z.sum()) - int(self.zero[g][a:b].sum())
            self.zero[g][a:b] = z

    def segments(self, a: float, b: float):
        """Yield ``(start, end)`` for each constant piece of [a, b]; state is current during the yield."""
        t, e, v = self.events(a, b)
        start, i, n = a, 0, t.size
        while i < n:
            now = t[i]
            yield start, now
            while i < n and t[i] == now:
                self.set_step(e[i], v[i])
                i += 1
            start = now
        yield start, b


# ---------------------------------------------------------------------------
# first-moment quantities


def zeta_n(tree: GWTree, labels: LabelSet, n: int, rng: Rng) -> float:
    """Integral over [0, tau] of the level-n return count, tau ~ Exp(1).

    The labels are extended past their horizon when tau exceeds it.
    """
    return float(zeta_profile(tree, labels, n, rng)[n])


def zeta_n_given_tau(tree: GWTree, labels: LabelSet, n: int, tau: float) -> float:
    return float(zeta_profile_given_tau(tree, labels, n, tau)[n])


def zeta_profile(tree: GWTree, labels: LabelSet, n: int, rng: Rng) -> np.ndarray:
    """``Z_0, ..., Z_n`` from one sweep, sharing tau and the label extension."""
    if isinstance(rng, RandomStream):
        tau = float(rng.child("tau").generator().exponential())
        ext = rng.child("extend")
    else:
        tau = float(rng.exponential())
        ext = rng
    return zeta_profile_given_tau(tree, labels.extend(tau, ext), n, tau)


def zeta_profile_given_tau(tree: GWTree, labels: LabelSet, n: int, tau: float) -> np.ndarray:
    tr = _Tracker(tree, labels, 0, n, 0.0)
    total = np.zeros(n + 1)
    for s, e in tr.segments(0.0, tau):
        total += (e - s) * tr.counts
    return total


def sigma_first_hit(tree: GWTree, labels: LabelSet, n: int, horizon: Optional[float] = None) -> Optional[float]:
    """First time in [0, horizon] some level-n particle is at the identity, or None."""
    horizon = labels.horizon if horizon is None else horizon
    tr = _Tracker(tree, labels, 0, n, 0.0)
    for s, _ in tr.segments(0.0, horizon):
        if tr.counts[n] > 0:
            return float(s)
    return None


def smallest_hitting_node(tree: GWTree, labels: LabelSet, sigma: float, n: int) -> int:
    pos = positions(tree, labels, sigma, max_level=n)
    lo, hi = tree.level_range(n)
    hits = np.flatnonzero(_at_identity(labels.law, pos[lo:hi]))
    if hits.size == 0:
        raise ValueError(f"no level-{n} particle at the identity at time {sigma}")
    return int(lo + hits[0])


def a_event_holds(tree: GWTree, labels: LabelSet, v: int, a: float, length: float) -> bool:
    """No label on the root-to-v geodesic changes during (a, a + length]."""
    b = a + length
    if not 0 <= a <= b <= labels.horizon:
        raise ValueError(f"window [{a}, {b}] not inside [0, {labels.horizon}]")
    for u in tree.path(v):
        lab = labels.label(u - 1)
        if not lab.constant_on(a, b):
            return False
    return True


# ---------------------------------------------------------------------------
# embedded process


def embedded_pick_k(law: StepLaw, m: float, k_max: int = 200) -> int:
    """Smallest k <= k_max with p^(k)(e,e) m^k > 1, from exact return probabilities."""
    if k_max < 2:
        raise ValueError(f"k_max must be >= 2, got {k_max}")
    lp = log_return_probabilities(law, k_max)
    k = np.arange(k_max + 1)
    with np.errstate(invalid="ignore"):
        score = lp + k * math.log(m)
    hits = np.flatnonzero(score[1:] > 0)
    if hits.size == 0:
        raise NoPeriodError(
            f"no k <= {k_max} with p^(k)(e,e) m^k > 1 for m={m} on {law.family}; "
            "k_max too small or the configuration is not recurrent"
        )
    return int(hits[0] + 1)


@dataclass
class EmbeddedState:
    k: int
    n: int
    members: np.ndarray
    t: Optional[float] = None

    @property
    def count(self) -> int:
        return int(self.members.size)


def _descendant_block(tree: GWTree, vs: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = vs.astype(np.int64), vs.astype(np.int64) + 1
    cs = tree.child_start
    for _ in range(k):
        lo, hi = cs[lo], cs[hi]
    return lo, hi


def _ranges(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    if lo.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)])


def _check_depth(tree: GWTree, k: int, levels: int):
    if k < 1 or levels < 1:
        raise ValueError("period k and level count must be >= 1")
    if tree.max_depth < (levels - 1) * k:
        raise ValueError(f"tree depth {tree.max_depth} < (levels-1)*k = {(levels - 1) * k}")


def embedded_process(tree: GWTree, labels: LabelSet, t: float, k: int, levels: int) -> list:
    """H_1(t), ..., H_levels(t): particles at e at times that are multiples of k."""
    _check_depth(tree, k, levels)
    L = (levels - 1) * k
    zero = _at_identity(labels.law, positions(tree, labels, t, max_level=L))
    H = np.array([0], dtype=np.int64)
    out = [EmbeddedState(k, 1, H, t)]
    for n in range(2, levels + 1):
        lo, hi = _descendant_block(tree, H, k)
        cand = _ranges(lo, hi)
        H = cand[zero[cand]]
        out.append(EmbeddedState(k, n, H, t))
    return out


def y_count(tree: GWTree, labels: LabelSet, v: int, k: int, t: float) -> int:
    """Y_v(t): generation-k descendants w of v with S_w(t) = S_v(t).

    Evaluated from the k labels between v and each w only, independently of
    the positions from the root.
    """
    law = labels.law
    lo, hi = tree.descendant_range(v, k)
    if hi == lo:
        return 0
    idx = labels.value_indices_at(t)
    w = np.arange(lo, hi)
    rel = _identity_positions(law, hi - lo)
    for _ in range(k):
        rel = _prepend(law, idx[w - 1], rel)
        w = tree.parent[w]
    return int(_at_identity(law, rel).sum())


def exit_times(tree: GWTree, labels: LabelSet, v: int, k: int, a: float, b: float) -> np.ndarray:
    """For each generation-k descendant w of v: the first time in [a, b] at which
    the label product from v to w differs from e (``inf`` if it never does)."""
    if not 0 <= a <= b <= labels.horizon:
        raise ValueError(f"interval [{a}, {b}] not inside [0, {labels.horizon}]")
    tr = _Tracker(tree, labels, v, k, a)
    out = np.full(tr.hi[k] - tr.lo[k], np.inf)
    for s, _ in tr.segments(a, b):
        out[(~tr.zero[k]) & np.isinf(out)] = s
    return out


def inf_Y(tree: GWTree, labels: LabelSet, v: int, k: int, a: float, b: float) -> int:
    """Descendants w in T^v_k with S_w(t) = S_v(t) for every t in [a, b]."""
    return int(np.isinf(exit_times(tree, labels, v, k, a, b)).sum())


@dataclass
class InfProcessState:
    a: float
    b: float
    n: int
    members: np.ndarray

    @property
    def count(self) -> int:
        return int(self.members.size)


def inf_embedded(tree: GWTree, labels: LabelSet, a: float, b: float, k: int, levels: int) -> list:
    """The intersection process: particles that stay at e throughout [a, b]."""
    _check_depth(tree, k, levels)
    if not 0 <= a <= b <= labels.horizon:
        raise ValueError(f"interval [{a}, {b}] not inside [0, {labels.horizon}]")
    H = np.array([0], dtype=np.int64)
    out = [InfProcessState(a, b, 1, H)]
    for n in range(2, levels + 1):
        keep = []
        for v in H:
            ex = exit_times(tree, labels, int(v), k, a, b)
            lo, _ = tree.descendant_range(int(v), k)
            keep.append(lo + np.flatnonzero(np.isinf(ex)))
        H = np.concatenate(keep) if keep else np.zeros(0, dtype=np.int64)
        out.append(InfProcessState(a, b, n, H))
    return out


# ---------------------------------------------------------------------------
# epsilon certificate


@dataclass
class Certificate:
    epsilon: Optional[float]
    estimate: Optional[float]
    lower_bound: Optional[float]
    replicates: int
    certified: bool
    confidence: float = 0.99
    table: list = field(default_factory=list)  # (eps, mean, se, lower bound) per grid point

    def to_dict(self) -> dict:
        return {
            "certified": self.certified,
            "epsilon": self.epsilon,
            "estimate": self.estimate,
            "lower_bound": self.lower_bound,
            "replicates": self.replicates,
            "confidence": self.confidence,
            "table": [dict(zip(("epsilon", "mean", "se", "lower_bound"), row)) for row in self.table],
        }


def certificate_replicate(
    stream: RandomStream, law: StepLaw, mu: OffspringLaw, k: int, grid=EPSILON_GRID
) -> np.ndarray:
    """One generation of depth k: ``inf_[0,eps] Y`` of the root for every eps in the grid."""
    tree = sample_tree(mu, k, stream.child("tree"))
    horizon = max(grid)
    labels = sample_labels(law, tree.n_nodes - 1, horizon, stream.child("labels"))
    ex = exit_times(tree, labels, 0, k, 0.0, horizon)
    eps = np.asarray(grid)
    return (ex[None, :] > eps[:, None]).sum(axis=1)


def stability_certificate(
    law: StepLaw,
    mu: OffspringLaw,
    k: int,
    replicates: int,
    rng: RandomStream,
    grid=EPSILON_GRID,
    confidence: float = 0.99,
    samples: Optional[np.ndarray] = None,
) -> Certificate:
    """Search the grid for the largest eps with a lower confidence bound on
    E[inf_[0,eps] Y] above 1.

    ``samples`` (replicates x grid) may be supplied precomputed, e.g. by a
    parallel fan-out over :func:`certificate_replicate`.
    """
    if replicates < MIN_CERTIFICATE_REPLICATES:
        raise ValueError(
            f"certification refused: {replicates} replicates < {MIN_CERTIFICATE_REPLICATES} "
            "(normal-approximation bounds need a large sample)"
        )
    if samples is None:
        samples = np.array([certificate_replicate(rng.child(r), law, mu, k, grid) for r in range(replicates)])
    samples = np.asarray(samples, dtype=float)
    if samples.shape != (replicates, len(grid)):
        raise ValueError(f"samples must have shape {(replicates, len(grid))}, got {samples.shape}")
    z = float(norm.ppf(confidence))
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(replicates)
    lcb = mean - z * se
    table = [(float(e), float(m), float(s), float(lb)) for e, m, s, lb in zip(grid, mean, se, lcb)]
    ok = [i for i in range(len(grid)) if lcb[i] > 1]
    if not ok:
        return Certificate(None, None, None, replicates, False, confidence, table)
    i = max(ok, key=lambda j: grid[j])
    return Certificate(float(grid[i]), float(mean[i]), float(lcb[i]), replicates, True, confidence, table)


# ---------------------------------------------------------------------------
# exceptional-time scan


@dataclass
class ScanResult:
    starts: np.ndarray
    ends: np.ndarray
    counts: np.ndarray  # (segments, levels + 1)

    @property
    def horizon(self) -> float:
        return float(self.ends[-1])

    def level(self, n: int) -> list:
        return [((float(s), float(e)), int(c)) for s, e, c in zip(self.starts, self.ends, self.counts[:, n])]

    def time_average(self, n: int) -> float:
        span = self.ends[-1] - self.starts[0]
        if span <= 0:
            return float(self.counts[0, n])
        return float(np.sum((self.ends - self.starts) * self.counts[:, n]) / span)

    def max_total(self, levels) -> int:
        return int(self.counts[:, list(levels)].sum(axis=1).max())

    def value_at(self, t: float, n: int) -> int:
        i = int(np.searchsorted(self.starts, t, side="right")) - 1
        return int(self.counts[max(i, 0), n])


def exceptional_scan(tree: GWTree, labels: LabelSet, horizon: float, n: int) -> ScanResult:
    """Return counts of levels 0..n on every constant piece of [0, horizon]."""
    if not 0 < horizon <= labels.horizon:
        raise ValueError(f"horizon {horizon} not inside (0, {labels.horizon}]")
    tr = _Tracker(tree, labels, 0, n, 0.0)
    starts, ends, counts = [], [], []
    for s, e in tr.segments(0.0, horizon):
        starts.append(s)
        ends.append(e)
        counts.append(tr.counts.copy())
    return ScanResult(np.array(starts), np.array(ends), np.array(counts))
