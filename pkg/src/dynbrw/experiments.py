"""Run configured experiments: replicate fan-out, aggregation, reports."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .dynamics import sample_labels
from .engine import (
    certificate_replicate,
    embedded_pick_k,
    embedded_process,
    exceptional_scan,
    positions,
    stability_certificate,
    zeta_n,
    _at_identity,
)
from .groups import log_return_probabilities
from .gwtree import sample_tree
from .rng import RandomStream
from .spectral import classify, estimate_rho, series_condition

__all__ = ["RunReport", "ReplicateError", "run", "map_replicates", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1


class ReplicateError(RuntimeError):
    pass


@dataclass
class RunReport:
    config: dict
    results: dict
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"config": self.config, "results": self.results, "meta": self.meta},
            indent=2,
            sort_keys=True,
            allow_nan=True,
        ) + "\n"

    def to_csv(self) -> str:
        rows = self.rows or [self.results]
        header = list(rows[0].keys())
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _csv_value(r.get(k)) for k in header})
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        return self.to_csv() if fmt == "csv" else self.to_json()


def _csv_value(v):
    if isinstance(v, (list, tuple, dict)):
        return json.dumps(v, sort_keys=True)
    return v


def _call(args):
    fn, stream, extra = args
    try:
        return fn(stream, *extra)
    except Exception as err:  # tag and re-raise with reproduction info
        raise ReplicateError(
            f"replicate {stream.path[-1]} failed (seed={stream.seed}, path={list(stream.path)}): "
            f"{type(err).__name__}: {err}"
        ) from err


def map_replicates(fn: Callable, stream: RandomStream, replicates: int, extra: tuple = (), workers: int = 1) -> list:
    """Apply ``fn(stream.child(r), *extra)`` for r = 0..replicates-1, results in replicate order."""
    jobs = [(fn, stream.child(r), extra) for r in range(replicates)]
    if workers <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs, chunksize=max(1, replicates // (4 * workers))))


def _mean_se(x) -> tuple:
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    mean = x.mean(axis=0)
    se = x.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full_like(mean, np.nan)
    return mean, se


def _floats(a) -> list:
    return [float(x) for x in np.ravel(a)]


def _first_moment(cfg: ExperimentConfig, levels: int) -> list:
    lp = log_return_probabilities(cfg.step_law, levels)
    m = cfg.mean_offspring
    return [float(math.exp(lp[n] + n * math.log(m))) if np.isfinite(lp[n]) else 0.0 for n in range(levels + 1)]


# ---------------------------------------------------------------------------
# per-replicate workers (module level so they pickle)


def _rep_simulate(s, law, mu, depth, horizon, times, dump):
    tree = sample_tree(mu, depth, s.child("tree"))
    labels = sample_labels(law, max(tree.n_nodes - 1, 1), horizon, s.child("labels"))
    out = []
    for t in times:
        zero = _at_identity(law, positions(tree, labels, t))
        out.append([int(zero[tree.level_range(n)[0] : tree.level_range(n)[1]].sum()) for n in range(depth + 1)])
    return out, (json.loads(labels.to_json()) if dump else None)


def _rep_zeta(s, law, mu, n, horizon, dump):
    tree = sample_tree(mu, n, s.child("tree"))
    labels = sample_labels(law, max(tree.n_nodes - 1, 1), horizon, s.child("labels"))
    z = zeta_n(tree, labels, n, s.child("zeta"))
    return z, (json.loads(labels.to_json()) if dump else None)


def _rep_embedded(s, law, mu, k, levels, t, horizon, dump):
    tree = sample_tree(mu, (levels - 1) * k, s.child("tree"))
    labels = sample_labels(law, max(tree.n_nodes - 1, 1), max(horizon, t), s.child("labels"))
    xi = [st.count for st in embedded_process(tree, labels, t, k, levels)]
    return xi, (json.loads(labels.to_json()) if dump else None)


def _rep_scan(s, law, mu, n, horizon, dump):
    tree = sample_tree(mu, n, s.child("tree"))
    labels = sample_labels(law, max(tree.n_nodes - 1, 1), horizon, s.child("labels"))
    sc = exceptional_scan(tree, labels, horizon, n)
    summary = {
        "time_average": [sc.time_average(j) for j in range(n + 1)],
        "max_total": sc.max_total(range(1, n + 1)) if n >= 1 else 0,
        "segments": [
            (float(a), float(b), [int(c) for c in row]) for a, b, row in zip(sc.starts, sc.ends, sc.counts)
        ],
    }
    return summary, (json.loads(labels.to_json()) if dump else None)


# ---------------------------------------------------------------------------
# experiment kinds


def _run_classify(cfg):
    rho = cfg.rho
    fit = None
    if rho is None:
        est = estimate_rho(cfg.step_law, cfg.default_n_max())
        rho, fit = est.estimate, est.fit
    tol = fit["residual"] if fit else 0.0
    res = classify(cfg.mean_offspring, rho, tolerance=tol).to_dict()
    if fit is not None:
        res["fit"] = fit
    return res, []


def _run_rho(cfg):
    est = estimate_rho(cfg.step_law, cfg.default_n_max())
    rows = [{"n": i + 1, "steps": 2 * (i + 1), "lower_bound": float(x)} for i, x in enumerate(est.lower_bounds)]
    return est.to_dict(), rows


def _run_series(cfg):
    v = series_condition(cfg.step_law, cfg.mean_offspring, cfg.default_n_max(), cfg.delta)
    return v.to_dict(), []


def _labels_dump(reps):
    return [{"replicate": r, **lab} for r, (_, lab) in enumerate(reps) if lab is not None]


def _run_simulate(cfg):
    times = cfg.times if cfg.times is not None else [0.0, cfg.horizon]
    for t in times:
        if not 0 <= t <= cfg.horizon:
            raise ValueError(f"times: {t} outside [0, horizon={cfg.horizon}]")
    reps = map_replicates(
        _rep_simulate,
        RandomStream(cfg.seed),
        cfg.replicates,
        (cfg.step_law, cfg.offspring, cfg.depth, cfg.horizon, list(times), cfg.dump_labels),
        cfg.workers,
    )
    arr = np.array([r[0] for r in reps], dtype=float)  # (R, times, levels)
    mean, se = _mean_se(arr)
    res = {
        "times": list(times),
        "mean_returns": [_floats(row) for row in mean],
        "se_returns": [_floats(row) for row in se],
        "first_moment": _first_moment(cfg, cfg.depth),
    }
    if cfg.dump_labels:
        res["labels"] = _labels_dump(reps)
    rows = []
    for r, (counts, _) in enumerate(reps):
        for t, row in zip(times, counts):
            rows.append({"replicate": r, "t": t, **{f"level_{n}": c for n, c in enumerate(row)}})
    return res, rows


def _run_zeta(cfg):
    n = cfg.n if cfg.n is not None else cfg.depth
    reps = map_replicates(
        _rep_zeta,
        RandomStream(cfg.seed),
        cfg.replicates,
        (cfg.step_law, cfg.offspring, n, cfg.horizon, cfg.dump_labels),
        cfg.workers,
    )
    z = np.array([r[0] for r in reps])
    mean, se = _mean_se(z)
    target = _first_moment(cfg, n)[n]
    positive = float(np.mean(z > 0))
    res = {
        "n": n,
        "mean": float(mean),
        "se": float(se),
        "target": target,
        "p_positive": positive,
        "bound_e2_n": float(math.e**2 * n * target),
    }
    if cfg.dump_labels:
        res["labels"] = _labels_dump(reps)
    rows = [{"replicate": r, "zeta": float(v)} for r, v in enumerate(z)]
    return res, rows


def _pick_k(cfg):
    if cfg.k is not None:
        return cfg.k
    return embedded_pick_k(cfg.step_law, cfg.mean_offspring, cfg.k_max)


def _run_embedded(cfg):
    k = _pick_k(cfg)
    reps = map_replicates(
        _rep_embedded,
        RandomStream(cfg.seed),
        cfg.replicates,
        (cfg.step_law, cfg.offspring, k, cfg.levels, cfg.t, cfg.horizon, cfg.dump_labels),
        cfg.workers,
    )
    xi = np.array([r[0] for r in reps], dtype=float)
    mean, se = _mean_se(xi)
    lp = log_return_probabilities(cfg.step_law, k)
    y_mean = math.exp(lp[k] + k * math.log(cfg.mean_offspring)) if np.isfinite(lp[k]) else 0.0
    res = {
        "k": k,
        "levels": cfg.levels,
        "t": cfg.t,
        "mean_xi": _floats(mean),
        "se_xi": _floats(se),
        "mean_Y": y_mean,
        "expected_xi": [y_mean**j for j in range(cfg.levels)],
    }
    if cfg.dump_labels:
        res["labels"] = _labels_dump(reps)
    rows = [{"replicate": r, **{f"xi_{j + 1}": int(x) for j, x in enumerate(v)}} for r, (v, _) in enumerate(reps)]
    return res, rows


def _run_certify(cfg):
    k = _pick_k(cfg)
    samples = map_replicates(
        certificate_replicate,
        RandomStream(cfg.seed),
        cfg.replicates,
        (cfg.step_law, cfg.offspring, k),
        cfg.workers,
    )
    cert = stability_certificate(
        cfg.step_law, cfg.offspring, k, cfg.replicates, RandomStream(cfg.seed), samples=np.array(samples)
    )
    res = {"k": k, **cert.to_dict()}
    return res, res["table"]


def _run_scan(cfg):
    n = cfg.n if cfg.n is not None else cfg.depth
    reps = map_replicates(
        _rep_scan,
        RandomStream(cfg.seed),
        cfg.replicates,
        (cfg.step_law, cfg.offspring, n, cfg.horizon, cfg.dump_labels),
        cfg.workers,
    )
    ta = np.array([r[0]["time_average"] for r in reps])
    mean, se = _mean_se(ta)
    zero_frac = float(np.mean([r[0]["max_total"] == 0 for r in reps]))
    res = {
        "n": n,
        "horizon": cfg.horizon,
        "mean_time_average": _floats(mean),
        "se_time_average": _floats(se),
        "first_moment": _first_moment(cfg, n),
        "fraction_no_return": zero_frac,
    }
    if cfg.dump_labels:
        res["labels"] = _labels_dump(reps)
    rows = []
    for r, (summ, _) in enumerate(reps):
        for a, b, counts in summ["segments"]:
            rows.append({"replicate": r, "start": a, "end": b, **{f"level_{j}": c for j, c in enumerate(counts)}})
    return res, rows


def _run_tree(cfg):
    tree = sample_tree(cfg.offspring, cfg.depth, RandomStream(cfg.seed).child("tree"))
    rows = [{"id": v, "parent": int(tree.parent[v]), "depth": int(tree.depth[v])} for v in range(tree.n_nodes)]
    return {"level_sizes": [int(x) for x in tree.level_sizes()], "nodes": tree.n_nodes}, rows


_RUNNERS = {
    "classify": _run_classify,
    "rho": _run_rho,
    "series": _run_series,
    "simulate": _run_simulate,
    "zeta": _run_zeta,
    "embedded": _run_embedded,
    "certify": _run_certify,
    "scan": _run_scan,
    "tree": _run_tree,
}


def run(cfg: ExperimentConfig) -> RunReport:
    start = time.perf_counter()
    results, rows = _RUNNERS[cfg.kind](cfg)
    meta = {
        "version": __version__,
        "schema": SCHEMA_VERSION,
        "wall_clock_seconds": time.perf_counter() - start,
    }
    return RunReport(cfg.to_dict(), results, rows, meta)
