"""Acceptance criteria 1-11, plus a companion to criterion 10 (``10b``).

Each criterion is a function returning ``(ok, detail, payload)``; ``payload``
holds every number the criterion computed, so criterion 11 can re-run the
others and compare serialised payloads byte for byte.  One PASS/FAIL line is
printed per criterion (also when run as ``python tests/test_acceptance.py``).
"""

import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))
from conftest import binomial_return  # noqa: E402

from dynbrw.cli import main as cli_main  # noqa: E402
from dynbrw.dynamics import sample_labels, sweep  # noqa: E402
from dynbrw.engine import (  # noqa: E402
    certificate_replicate,
    embedded_process,
    exceptional_scan,
    inf_embedded,
    returns_at,
    zeta_profile,
)
from dynbrw.groups import FreeGroup, LatticeZd, StepLaw, return_probabilities  # noqa: E402
from dynbrw.gwtree import OffspringLaw, sample_tree  # noqa: E402
from dynbrw.rng import RandomStream  # noqa: E402
from dynbrw.spectral import Regime, classify, estimate_rho  # noqa: E402

SRW_Z = StepLaw.simple(LatticeZd(1))
SRW_F2 = StepLaw.simple(FreeGroup(2))
BINARY = OffspringLaw.point(2)
ONE_THREE = OffspringLaw((1, 3), (0.5, 0.5))
THIN = OffspringLaw((1, 2), (0.95, 0.05))  # m = 1.05

CRITERIA = {}


def criterion(num, title, budget):
    def wrap(fn):
        CRITERIA[num] = (title, budget, fn)
        return fn

    return wrap


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def evaluate(num):
    title, budget, fn = CRITERIA[num]
    start = time.perf_counter()
    ok, detail, payload = fn()
    elapsed = time.perf_counter() - start
    in_budget = elapsed < budget
    if not in_budget:
        detail += f"; runtime {elapsed:.1f}s over budget {budget}s"
    return ok and in_budget, detail, payload, elapsed


def line(num, ok, detail, elapsed):
    return f"criterion {num:>3} {'PASS' if ok else 'FAIL'} [{elapsed:6.1f}s] {CRITERIA[num][0]}: {detail}"


# ---------------------------------------------------------------------------


@criterion("1", "exact return probabilities", 5)
def c1():
    p = return_probabilities(SRW_Z, 30)
    err_z = max(abs(p[2 * n] - math.comb(2 * n, n) / 4**n) for n in range(16))
    radial = return_probabilities(SRW_F2, 14)
    full = return_probabilities(SRW_F2, 14, method="convolution")
    err_f = float(np.max(np.abs(radial - full)))
    ok = err_z <= 1e-12 and err_f <= 1e-10
    return ok, f"Z binomial err {err_z:.1e}, F2 radial vs convolution err {err_f:.1e}", [err_z, err_f]


def f2_rho_oracle(n_max=2000):
    """Radial walk of SRW on F_2 from scratch, then a fit with the n^(-3/2) correction."""
    size = n_max + 2
    v = np.zeros(size)
    v[0] = 1.0
    log_scale = 0.0
    logs = [0.0]
    for _ in range(n_max):
        # radius r -> r + 1 w.p. 3/4 and r - 1 w.p. 1/4 for r >= 1; 0 -> 1 surely
        new = np.zeros(size)
        new[1] = v[0]
        new[2:] += 0.75 * v[1:-1]
        new[:-1] += np.concatenate([[0.0], 0.25 * v[2:]])
        new[0] = 0.25 * v[1]
        s = new.sum()
        log_scale += math.log(s)
        v = new / s
        logs.append(math.log(v[0]) + log_scale if v[0] > 0 else -math.inf)
    n = np.arange(n_max // 4, n_max // 2 + 1)
    y = np.array([logs[2 * k] for k in n]) + 1.5 * np.log(n)
    slope = np.polyfit(2 * n, y, 1)[0]
    return float(math.exp(slope))


@criterion("2", "spectral radius estimates", 10)
def c2():
    z = estimate_rho(SRW_Z, 200)
    f = estimate_rho(SRW_F2, 2000)
    oracle = f2_rho_oracle()
    mono = all(np.all(np.diff(e.lower_bounds) >= -1e-12) for e in (z, f))
    ok = (
        abs(z.estimate - 1.0) <= 5e-3
        and abs(f.estimate - oracle) <= 5e-3
        and abs(oracle - math.sqrt(3) / 2) <= 1e-3
        and mono
    )
    detail = (
        f"Z {z.estimate:.5f} (target 1), F2 {f.estimate:.5f} vs oracle {oracle:.5f} "
        f"(sqrt(3)/2 = {math.sqrt(3) / 2:.5f}), lower bounds monotone: {mono}"
    )
    return ok, detail, [z.estimate, f.estimate, oracle, bool(mono)]


@criterion("3", "regime classifier on a 1000-pair grid", 1)
def c3():
    gen = RandomStream(3).generator()
    rho = gen.uniform(0.05, 1.0, 1000)
    m = 1.0 + gen.uniform(0.0, 4.0, 1000)
    m[::10] = 1.0 / rho[::10]  # boundary pairs
    m = np.where(m > 1.0, m, 1.0 + 1e-9)
    disagree, boundary = 0, 0
    for mi, ri in zip(m, rho):
        got = classify(float(mi), float(ri)).regime
        want = Regime.TRANSIENT if float(mi) * float(ri) - 1.0 <= 0 else Regime.RECURRENT
        disagree += got is not want
        boundary += float(mi) * float(ri) == 1.0 and got is Regime.TRANSIENT
    ok = disagree == 0
    return ok, f"{disagree} disagreements, {boundary} exact-boundary pairs all Transient", [disagree, boundary]


@criterion("4", "stationarity, clocks and the 1/e freeze", 60)
def c4():
    law = StepLaw(LatticeZd(1), ((1,), (-1,), (2,), (-2,)), (0.4, 0.3, 0.2, 0.1))
    root = RandomStream(4)
    labels = sample_labels(law, 100_000, 10.0, root.child("labels"))
    pvals = []
    for t in (0.0, 3.3, 9.7):
        f_obs = np.bincount(labels.value_indices_at(t), minlength=4)
        pvals.append(float(stats.chisquare(f_obs, np.asarray(law.probs) * 100_000).pvalue))
    k = labels.event_counts()
    m, se = mean_se(k)
    var = float(k.var(ddof=1))
    se_var = math.sqrt(2 * 10.0**2 / (k.size - 1) + 10.0 / k.size)
    freeze = []
    p = math.exp(-1)
    se_f = math.sqrt(p * (1 - p) / 100_000)
    for n in (5, 20, 100):
        hits = 0
        for c in range(10):
            chunk = sample_labels(law, n * 10_000, 1.0, root.child("freeze", n, c))
            hits += int(chunk.constant_on(0.5, 0.5 + 1 / n).reshape(10_000, n).all(axis=1).sum())
        freeze.append(hits / 100_000)
    ok = (
        all(pv > 0.01 for pv in pvals)
        and abs(m - 10) <= 3 * se
        and abs(var - 10) <= 3 * se_var
        and all(abs(f - p) <= 3 * se_f for f in freeze)
    )
    detail = (
        f"chi-square p {[round(x, 3) for x in pvals]}, count mean {m:.4f}+-{se:.4f} var {var:.3f}+-{se_var:.3f}, "
        f"freeze {[round(f, 4) for f in freeze]} vs {p:.5f}+-{se_f:.4f}"
    )
    return ok, detail, [pvals, m, var, freeze]


@criterion("5", "first-moment identity", 120)
def c5():
    root = RandomStream(5)
    levels = (2, 4, 6)
    ret, zet = [], []
    for r in range(10_000):
        s = root.child(r)
        tree = sample_tree(BINARY, 6, s.child("tree"))
        labels = sample_labels(SRW_Z, tree.n_nodes - 1, 1.0, s.child("labels"))
        ret.append([returns_at(tree, labels, 0.0, n) for n in levels])
        zet.append(zeta_profile(tree, labels, 6, s.child("zeta"))[list(levels)])
    ok, parts, payload = True, [], []
    for j, n in enumerate(levels):
        target = 2**n * binomial_return(n)
        for name, arr in (("returns", ret), ("Z", zet)):
            m, se = mean_se(np.asarray(arr)[:, j])
            ok &= abs(m - target) <= 4 * se
            parts.append(f"{name}_{n} {m:.3f}+-{se:.3f}")
            payload += [m, se]
    return ok, ", ".join(parts) + " (targets 2, 6, 20)", payload


def direct_y(gen, offspring, k):
    pos = [0]
    for _ in range(k):
        pos = [p + int(s) for p in pos for s in gen.choice([-1, 1], int(offspring.sample(gen, 1)[0]))]
    return sum(p == 0 for p in pos)


@criterion("6", "embedded-process law", 120)
def c6():
    root = RandomStream(6)
    xi = []
    for r in range(10_000):
        s = root.child(r)
        tree = sample_tree(BINARY, 2, s.child("tree"))
        labels = sample_labels(SRW_Z, tree.n_nodes - 1, 1.0, s.child("labels"))
        xi.append(embedded_process(tree, labels, 0.0, 2, 2)[1].count)
    xi = np.array(xi)
    gen = root.child("direct").generator()
    y = np.array([direct_y(gen, BINARY, 2) for _ in range(10_000)])
    table = np.array([[np.sum(xi == v) for v in range(5)], [np.sum(y == v) for v in range(5)]])
    pval = float(stats.chi2_contingency(table)[1])
    m, se = mean_se(y)
    mx, sex = mean_se(xi)
    ok = pval > 0.01 and abs(m - 2.0) <= 3 * se and abs(mx - 2.0) <= 3 * sex
    detail = f"chi-square p {pval:.3f}, mean Y {m:.4f}+-{se:.4f}, mean xi_2 {mx:.4f}+-{sex:.4f} (target 2)"
    return ok, detail, [table.tolist(), pval, m, mx]


def _members(states):
    return [s.members.tolist() for s in states]


@criterion("7", "inf-process properties", 60)
def c7():
    root = RandomStream(7)
    k, levels = 2, 3
    bad_mono = bad_point = bad_inter = 0
    for r in range(1000):
        s = root.child(r)
        tree = sample_tree(ONE_THREE, (levels - 1) * k, s.child("tree"))
        labels = sample_labels(SRW_Z, tree.n_nodes - 1, 1.0, s.child("labels"))
        gen = s.child("interval").generator()
        a = float(gen.uniform(0.0, 0.8))
        b = float(a + gen.uniform(0.0, 0.2))
        a2, b2 = float(a * gen.uniform()), float(b + (1.0 - b) * gen.uniform())
        narrow = inf_embedded(tree, labels, a, b, k, levels)
        wide = inf_embedded(tree, labels, a2, b2, k, levels)
        for sn, sw in zip(narrow, wide):
            bad_mono += not set(sw.members.tolist()) <= set(sn.members.tolist())
        bad_point += _members(inf_embedded(tree, labels, a, a, k, levels)) != _members(
            embedded_process(tree, labels, a, k, levels)
        )
        pts = sweep(labels, a, b).points
        inter = [set(x) for x in _members(embedded_process(tree, labels, float(pts[0]), k, levels))]
        for t in pts[1:]:
            for n, h in enumerate(_members(embedded_process(tree, labels, float(t), k, levels))):
                inter[n] &= set(h)
        bad_inter += [sorted(x) for x in inter] != _members(narrow)
    ok = bad_mono == bad_point == bad_inter == 0
    detail = f"violations: monotonicity {bad_mono}, point interval {bad_point}, intersection {bad_inter} (1000 realizations)"
    return ok, detail, [bad_mono, bad_point, bad_inter]


@criterion("8", "worst-case lower bound for inf Y", 120)
def c8():
    root = RandomStream(8)
    eps = (0.05, 0.1, 0.2)
    k, reps = 2, 100_000
    grid = (0.0,) + eps  # eps = 0 gives Y itself
    samples = np.array([certificate_replicate(root.child(r), SRW_Z, BINARY, k, grid) for r in range(reps)])
    ok, parts, payload = True, [], []
    for l in (1, 2, 3):
        py = samples[:, 0] >= l
        for j, e in enumerate(eps, start=1):
            pi = samples[:, j] >= l
            bound = py.mean() * math.exp(-e * k * l)
            se = math.sqrt(pi.var(ddof=1) / reps + math.exp(-2 * e * k * l) * py.var(ddof=1) / reps)
            ok &= pi.mean() >= bound - 3 * se
            parts.append(f"l={l} eps={e}: {pi.mean():.4f} >= {bound:.4f}")
            payload += [float(pi.mean()), float(bound)]
    return ok, "; ".join(parts), payload


def _cli_json(argv):
    with tempfile.TemporaryDirectory() as d:
        out = Path(d) / "report.json"
        code = cli_main(argv + ["--out", str(out)])
        if code != 0:
            return None
        return json.loads(out.read_text())


@criterion("9", "stability certificate end to end", 180)
def c9():
    rec = _cli_json(
        ["certify", "--group", "Z^1", "--law", "srw", "--mu", "2", "--k", "2", "--replicates", "10000", "--seed", "9"]
    )
    tra = _cli_json(
        ["certify", "--group", "F_2", "--law", "srw", "--mu", "1:0.95,2:0.05", "--k", "2", "--replicates", "10000", "--seed", "9"]
    )
    r, t = rec["results"], tra["results"]
    ok = r["certified"] and r["epsilon"] > 0 and r["lower_bound"] > 1 and not t["certified"]
    detail = (
        f"Z: certified={r['certified']} eps={r['epsilon']} lower bound={r['lower_bound']:.4f}; "
        f"F2 m=1.05: certified={t['certified']}"
    )
    return ok, detail, [r, t]


def _scan_replicates(root, law, mu, depth, reps):
    out = []
    for r in range(reps):
        s = root.child(r)
        tree = sample_tree(mu, depth, s.child("tree"))
        labels = sample_labels(law, tree.n_nodes - 1, 1.0, s.child("labels"))
        out.append(exceptional_scan(tree, labels, 1.0, depth))
    return out


@criterion("10", "exceptional scan sanity", 300)
def c10():
    root = RandomStream(10)
    m = THIN.mean
    lp = return_probabilities(SRW_F2, 60)
    first = np.array([m**n * lp[n] for n in range(61)])
    # transient: largest depth n with sum_{1..n} m^j p^(j) < 0.1
    csum = np.cumsum(first[1:])
    depth = int(np.flatnonzero(csum < 0.1).max()) + 1
    scans = _scan_replicates(root.child("transient"), SRW_F2, THIN, depth, 1000)
    frac = float(np.mean([sc.max_total(range(1, depth + 1)) == 0 for sc in scans]))
    ok_t = frac >= 0.95
    # recurrent: per-level time averages against m^n p^(n)
    scans = _scan_replicates(root.child("recurrent"), SRW_Z, BINARY, 6, 1000)
    ok_r, parts, payload = True, [], [depth, frac]
    for n in range(1, 7):
        target = 2**n * binomial_return(n)
        mu_, se = mean_se([sc.time_average(n) for sc in scans])
        ok_r &= abs(mu_ - target) <= 4 * se if se > 0 else mu_ == target
        parts.append(f"L{n} {mu_:.3f}+-{se:.3f}/{target:g}")
        payload += [mu_, se]
    detail = f"transient depth {depth}: no-return fraction {frac:.3f}; recurrent " + ", ".join(parts)
    return ok_t and ok_r, detail, payload


@criterion("10b", "exceptional scan, tail-window companion", 300)
def c10_window():
    """Non-vacuous form of the transient half of criterion 10.

    A level-n particle is at e on [0, 1] in at most (1 + #events on its path)
    episodes, so E[#return episodes on levels W] = sum_W (1 + n) m^n p^(n).
    The window W is three even levels, starting at the first level where this
    bound is at most 0.05; Markov's inequality then gives P(no return) >= 0.95.
    """
    root = RandomStream(1012)
    m = THIN.mean
    lp = return_probabilities(SRW_F2, 80)
    epi = np.array([(1 + n) * m**n * lp[n] for n in range(81)])
    n0 = next(n for n in range(2, 75, 2) if epi[n : n + 5].sum() <= 0.05)
    window = range(n0, n0 + 5)
    scans = _scan_replicates(root, SRW_F2, THIN, n0 + 4, 1000)
    frac = float(np.mean([sc.max_total(window) == 0 for sc in scans]))
    bound = float(epi[n0 : n0 + 5].sum())
    return frac >= 0.95, f"levels {n0}..{n0 + 4} (episode bound {bound:.4f}): no-return fraction {frac:.3f}", [n0, frac]


# ---------------------------------------------------------------------------

FIRST_RUN = {}


@pytest.fixture(scope="module")
def say(request):
    reporter = request.config.pluginmanager.getplugin("terminalreporter")

    def emit(text):
        if reporter is not None:
            reporter.write_line(text)
        else:  # pragma: no cover
            print(text)

    return emit


@pytest.mark.acceptance
@pytest.mark.parametrize("num", ["1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "10b"])
def test_criterion(num, say):
    ok, detail, payload, elapsed = evaluate(num)
    FIRST_RUN[num] = json.dumps(payload, sort_keys=True)
    say(line(num, ok, detail, elapsed))
    assert ok, detail


@pytest.mark.acceptance
def test_criterion_11_determinism(say):
    start = time.perf_counter()
    differ = []
    for num in CRITERIA:
        first = FIRST_RUN.get(num)
        if first is None:
            first = json.dumps(evaluate(num)[2], sort_keys=True)
        second = json.dumps(evaluate(num)[2], sort_keys=True)
        if first != second:
            differ.append(num)
    elapsed = time.perf_counter() - start
    ok = not differ
    detail = "all criteria re-run with identical seeds give byte-identical output" if ok else f"differ: {differ}"
    say(f"criterion  11 {'PASS' if ok else 'FAIL'} [{elapsed:6.1f}s] determinism: {detail}")
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for num in CRITERIA:
        ok, detail, payload, elapsed = evaluate(num)
        FIRST_RUN[num] = json.dumps(payload, sort_keys=True)
        print(line(num, ok, detail, elapsed), flush=True)
        failed += not ok
    same = all(json.dumps(evaluate(n)[2], sort_keys=True) == FIRST_RUN[n] for n in CRITERIA)
    print(f"criterion  11 {'PASS' if same else 'FAIL'} determinism", flush=True)
    sys.exit(1 if failed or not same else 0)
