"""The convergence studies behind the CLI.

Every random draw comes from a substream keyed by (seed, stream, index...),
so results do not depend on how replicas are spread over workers. Replica
outputs are merged in replica order.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..generator import generate_finite, generate_hrg_native, sample_limit_ball
from ..geometry import ball_volume
from ..io import ResultRecord, config_digest, run_timestamp, write_graph
from ..kernels import Threshold, verify_tail_bound
from ..neighborhoods import (NeighborhoodHistogram, RootedGraph, canonical_code, code_or_oversized,
                             coupling_check, coupling_radius, empirical_neighborhood_distribution,
                             graph_ball)
from ..stats import (clustering_from_samples, clustering_report, critical_constant,
                     degree_tail_expectation, distance_threshold_fraction, mixed_poisson_pmf,
                     root_clustering_samples, typical_distances, tv_distance)
from .config import ConfigError, ExperimentConfig, config_from_mapping

# substream ids
GRAPHS, LIMIT, ORACLE, BOOTSTRAP, PAIRS, ROOTS, KERNEL = range(7)
# limit-side replicas are split into this many fixed chunks
LIMIT_CHUNKS = 20
BOOTSTRAP_ROUNDS = 200


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class ExperimentResult:
    experiment: str
    records: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


class _Recorder:
    def __init__(self, experiment: str, cfg: ExperimentConfig, timestamp: str | None):
        self.result = ExperimentResult(experiment)
        self.cfg = cfg
        self.digest = config_digest(cfg.digest_dict())
        self.timestamp = timestamp or run_timestamp()

    def add(self, n, statistic, value, stderr=math.nan, parameter="", replicas=0):
        self.result.records.append(ResultRecord(
            self.result.experiment, self.digest, int(self.cfg.seed), int(n), statistic,
            str(parameter), float(value), float(stderr), int(replicas), self.timestamp))

    def check(self, name, passed, detail):
        self.result.checks.append(Check(name, bool(passed), detail))


def _map(fn, tasks, workers):
    tasks = list(tasks)
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _chunks(total):
    base, extra = divmod(total, LIMIT_CHUNKS)
    return [base + (1 if c < extra else 0) for c in range(LIMIT_CHUNKS) if base or c < extra]


def make_graph(cfg: ExperimentConfig, n: int, rng: np.random.Generator):
    if cfg.is_hyperbolic:
        variant = "threshold" if cfg.model == "thrg" else "parametrized"
        return generate_hrg_native(n, cfg.alpha_h, cfg.nu, rng, variant=variant,
                                   temperature=cfg.temperature if variant == "parametrized" else None)
    return generate_finite(n, cfg.d, cfg.kernel(), cfg.weight_law(), rng,
                           metric=cfg.metric, mode=cfg.mode)


def _graph(cfg_dict, ni, n, rep):
    cfg = config_from_mapping(cfg_dict)
    return cfg, make_graph(cfg, n, substream(cfg.seed, GRAPHS, ni, rep))


def _limit_mean_weight(cfg):
    law = cfg.weight_law()
    return law.mean() if cfg.kernel().weight_dependent else None


def _trend(values, errors, direction, sigmas=2.0):
    """Consecutive steps move in ``direction`` (-1 down, +1 up) up to ``sigmas`` joint errors."""
    bad = []
    for i in range(len(values) - 1):
        band = sigmas * math.hypot(errors[i], errors[i + 1])
        step = values[i + 1] - values[i]
        if direction * step < -band:
            bad.append(i)
    return not bad, bad


def _dense(counters, keys):
    index = {k: i for i, k in enumerate(keys)}
    M = np.zeros((len(counters), len(keys)))
    for r, c in enumerate(counters):
        for k, v in c.items():
            M[r, index[k]] = v
    return M


def _bootstrap_tv(counters, reference: dict, rng):
    """TV of the pooled histogram to ``reference`` and its bootstrap error over replicas."""
    keys = sorted(set().union(*[set(c) for c in counters]) | set(reference), key=repr)
    M = _dense(counters, keys)
    q = np.array([reference.get(k, 0.0) for k in keys])

    def tv(counts):
        return 0.5 * np.abs(counts / counts.sum() - q).sum()

    value = tv(M.sum(axis=0))
    R = M.shape[0]
    if R < 2:
        return value, math.nan
    boots = [tv(rng.multinomial(R, np.full(R, 1.0 / R)) @ M) for _ in range(BOOTSTRAP_ROUNDS)]
    return value, float(np.std(boots, ddof=1))


# neighborhoods

def _neighborhood_task(cfg_dict, ni, n, rep):
    cfg, G = _graph(cfg_dict, ni, n, rep)
    hist = empirical_neighborhood_distribution(G, cfg.K, cap=cfg.cap)
    return hist.counts, hist.proportion(_ISOLATED)


_ISOLATED = canonical_code(RootedGraph((0,)))


def _limit_hist_task(cfg_dict, chunk, count, r):
    cfg = config_from_mapping(cfg_dict)
    rng = substream(cfg.seed, LIMIT, chunk)
    mean_weight = _limit_mean_weight(cfg)
    kernel, law = cfg.kernel(), cfg.weight_law()
    counts = Counter()
    for _ in range(count):
        F = sample_limit_ball(kernel, law, r, cfg.d, rng, mean_weight)
        counts[code_or_oversized(graph_ball(F, 0, cfg.K, cfg.cap), cfg.cap)] += 1
    return counts


def limit_histogram(cfg: ExperimentConfig, r: float | None = None):
    """Limit K-ball histogram and its per-chunk parts."""
    r = cfg.coupling_r() if r is None else r
    tasks = [(cfg.to_dict(), c, k, r) for c, k in enumerate(_chunks(cfg.root_replicas))]
    parts = _map(_limit_hist_task, tasks, cfg.workers)
    hist = NeighborhoodHistogram(cfg.K, "graph")
    for p in parts:
        hist.counts.update(p)
    return hist, parts


def run_neighborhood_convergence(cfg: ExperimentConfig, timestamp: str | None = None) -> ExperimentResult:
    cfg.require_limit()
    rec = _Recorder("neighborhoods", cfg, timestamp)
    r = cfg.coupling_r()
    lim, parts = limit_histogram(cfg, r)
    rec.add(0, "limit_isolated", lim.proportion(_ISOLATED), parameter=f"r={r:g}",
            replicas=lim.total)
    rec.add(0, "limit_oversized", lim.oversized_fraction, replicas=lim.total)
    # distance between the two halves of the limit sample: a yardstick for its own noise
    h0 = NeighborhoodHistogram(cfg.K, "graph")
    h1 = NeighborhoodHistogram(cfg.K, "graph")
    for c, part in enumerate(parts):
        (h0 if c % 2 == 0 else h1).counts.update(part)
    if h0.total and h1.total:
        rec.add(0, "limit_split_half_tv", tv_distance(h0, h1), replicas=lim.total)
    ref = lim.proportions()
    tvs, tv_se, sds, pooled_by_n = [], [], [], {}
    for ni, n in enumerate(cfg.n_grid):
        outs = _map(_neighborhood_task, [(cfg.to_dict(), ni, n, rep) for rep in range(cfg.replicas)],
                    cfg.workers)
        counters = [o[0] for o in outs]
        iso = np.array([o[1] for o in outs])
        value, se = _bootstrap_tv(counters, ref, substream(cfg.seed, BOOTSTRAP, ni))
        tvs.append(value)
        tv_se.append(se)
        sd = float(iso.std(ddof=1)) if iso.size > 1 else math.nan
        sds.append(sd)
        pooled = sum(counters, Counter())
        pooled_by_n[n] = NeighborhoodHistogram(cfg.K, "graph", pooled)
        total = sum(pooled.values())
        rec.add(n, "tv", value, se, f"K={cfg.K};r={r:g}", cfg.replicas)
        rec.add(n, "isolated_mean", iso.mean(), sd / math.sqrt(iso.size) if iso.size > 1 else math.nan,
                replicas=cfg.replicas)
        rec.add(n, "isolated_sd", sd, sd / math.sqrt(2 * (iso.size - 1)) if iso.size > 1 else math.nan,
                replicas=cfg.replicas)
        rec.add(n, "oversized_fraction", pooled.get(b"\xff\xff", 0) / total, replicas=cfg.replicas)
    ok, bad = _trend(tvs, tv_se, -1)
    rec.check("tv_decreasing", ok, f"TV by n: {_fmt_list(tvs)} (2-sigma steps violated at {bad})")
    rec.check("tv_final", tvs[-1] <= cfg.tv_max, f"final TV {tvs[-1]:.4f} vs max {cfg.tv_max}")
    if len(sds) > 1:
        rec.check("isolated_sd_halved", sds[-1] <= 0.5 * sds[0],
                  f"replica sd of isolated-root share: first {sds[0]:.5f}, last {sds[-1]:.5f}")
    rec.result.extras.update(tv=tvs, tv_se=tv_se, isolated_sd=sds, limit=lim, pooled=pooled_by_n)
    return rec.result


def _fmt_list(xs):
    return "[" + ", ".join(f"{x:.4g}" for x in xs) + "]"


# degrees

def _degree_task(cfg_dict, ni, n, rep):
    _, G = _graph(cfg_dict, ni, n, rep)
    return np.bincount(G.degrees())


def _limit_degree_task(cfg_dict, chunk, count, r):
    cfg = config_from_mapping(cfg_dict)
    rng = substream(cfg.seed, LIMIT, chunk)
    mean_weight = _limit_mean_weight(cfg)
    kernel, law = cfg.kernel(), cfg.weight_law()
    deg = np.zeros(count, np.int64)
    for i in range(count):
        F = sample_limit_ball(kernel, law, r, cfg.d, rng, mean_weight)
        deg[i] = F.indptr[1] - F.indptr[0]
    return np.bincount(deg)


def degree_oracle(cfg: ExperimentConfig) -> dict:
    """Limit degree pmf on 0..kmax plus a 'tail' cell."""
    res = mixed_poisson_pmf(cfg.kernel(), cfg.weight_law(), np.arange(cfg.kmax + 1), cfg.w0_samples,
                            substream(cfg.seed, ORACLE), d=cfg.d,
                            mean_weight=_limit_mean_weight(cfg))
    pmf = dict(zip(range(cfg.kmax + 1), res.pmf.tolist()))
    pmf["tail"] = max(0.0, 1.0 - float(res.pmf.sum()))
    return pmf


def _bucket(counts: np.ndarray, kmax: int) -> Counter:
    c = Counter({k: int(v) for k, v in enumerate(counts[:kmax + 1]) if v})
    tail = int(counts[kmax + 1:].sum())
    if tail:
        c["tail"] = tail
    return c


def run_degree_law(cfg: ExperimentConfig, timestamp: str | None = None) -> ExperimentResult:
    cfg.require_limit()
    rec = _Recorder("degree-law", cfg, timestamp)
    oracle = degree_oracle(cfg)
    rec.add(0, "oracle_p0", oracle[0])
    rec.add(0, "oracle_mean", sum(k * p for k, p in oracle.items() if k != "tail"))
    r = cfg.coupling_r()
    parts = _map(_limit_degree_task, [(cfg.to_dict(), c, k, r) for c, k in
                                      enumerate(_chunks(cfg.root_replicas))], cfg.workers)
    limit_counts = _bucket(_sum_bincounts(parts), cfg.kmax)
    lim_total = sum(limit_counts.values())
    limit_tv = tv_distance({k: v / lim_total for k, v in limit_counts.items()}, oracle)
    rec.add(0, "limit_tv", limit_tv, parameter=f"r={r:g}", replicas=lim_total)
    tvs, tv_se = [], []
    for ni, n in enumerate(cfg.n_grid):
        outs = _map(_degree_task, [(cfg.to_dict(), ni, n, rep) for rep in range(cfg.replicas)],
                    cfg.workers)
        counters = [_bucket(o, cfg.kmax) for o in outs]
        value, se = _bootstrap_tv(counters, oracle, substream(cfg.seed, BOOTSTRAP, ni))
        tvs.append(value)
        tv_se.append(se)
        rec.add(n, "tv", value, se, replicas=cfg.replicas)
        degrees = np.repeat(np.arange(len(_sum_bincounts(outs))), _sum_bincounts(outs))
        rec.add(n, "mean_degree", degrees.mean(), replicas=cfg.replicas)
        for M, v in degree_tail_expectation([degrees], cfg.M_grid).items():
            rec.add(n, "truncated_mean", v, parameter=f"M={M}", replicas=cfg.replicas)
        kernel = cfg.kernel()
        if isinstance(kernel, Threshold) and not cfg.is_hyperbolic:
            p = ball_volume(cfg.d, kernel.r0) / n
            binom = _binomial_reference(n, p, cfg.kmax)
            bv, bse = _bootstrap_tv(counters, binom, substream(cfg.seed, BOOTSTRAP, ni, 1))
            rec.add(n, "tv_binomial", bv, bse, replicas=cfg.replicas)
    ok, bad = _trend(tvs, tv_se, -1)
    rec.check("tv_decreasing", ok, f"TV by n: {_fmt_list(tvs)} (2-sigma steps violated at {bad})")
    rec.check("tv_final", tvs[-1] <= cfg.tv_max, f"final TV {tvs[-1]:.4f} vs max {cfg.tv_max}")
    rec.result.extras.update(tv=tvs, tv_se=tv_se, oracle=oracle, limit_tv=limit_tv)
    return rec.result


def _binomial_reference(n, p, kmax):
    from scipy import stats as sstats
    pmf = sstats.binom.pmf(np.arange(kmax + 1), n - 1, min(p, 1.0))
    out = dict(zip(range(kmax + 1), pmf.tolist()))
    out["tail"] = max(0.0, 1.0 - float(pmf.sum()))
    return out


def _sum_bincounts(parts):
    size = max(len(p) for p in parts)
    out = np.zeros(size, np.int64)
    for p in parts:
        out[:len(p)] += p
    return out


# clustering

def _clustering_task(cfg_dict, ni, n, rep):
    cfg, G = _graph(cfg_dict, ni, n, rep)
    rep_ = clustering_report(G, tuple(cfg.ks))
    return rep_.global_cc, rep_.local_cc, rep_.by_degree


def _limit_clustering_task(cfg_dict, chunk, count, r):
    cfg = config_from_mapping(cfg_dict)
    return root_clustering_samples(cfg.kernel(), cfg.weight_law(), r, count, cfg.d,
                                   substream(cfg.seed, LIMIT, chunk), _limit_mean_weight(cfg))


def run_clustering(cfg: ExperimentConfig, timestamp: str | None = None) -> ExperimentResult:
    cfg.require_clustering()
    rec = _Recorder("clustering", cfg, timestamp)
    r = cfg.coupling_r()
    parts = _map(_limit_clustering_task, [(cfg.to_dict(), c, k, r) for c, k in
                                          enumerate(_chunks(cfg.root_replicas))], cfg.workers)
    D = np.concatenate([p[0] for p in parts])
    T = np.concatenate([p[1] for p in parts])
    lim = clustering_from_samples(D, T, tuple(cfg.ks))
    N = lim.replicas
    rec.add(0, "limit_delta", lim.delta.mean, lim.delta.stderr, replicas=N)
    rec.add(0, "limit_wedge", lim.wedge.mean, lim.wedge.stderr, replicas=N)
    rec.add(0, "limit_local", lim.local.mean, lim.local.stderr, replicas=N)
    rec.add(0, "limit_global", lim.global_ratio.mean, lim.global_ratio.stderr, replicas=N)
    for k, c in lim.by_degree.items():
        rec.add(0, "limit_by_degree", c.value, c.stderr, f"k={k}", c.hits)
    finite = {}
    for ni, n in enumerate(cfg.n_grid):
        outs = _map(_clustering_task, [(cfg.to_dict(), ni, n, rep) for rep in range(cfg.replicas)],
                    cfg.workers)
        g = np.array([o[0] for o in outs])
        loc = np.array([o[1] for o in outs])
        R = len(outs)

        def se(x):
            return float(x.std(ddof=1) / math.sqrt(R)) if R > 1 else math.nan

        rec.add(n, "global", g.mean(), se(g), replicas=R)
        rec.add(n, "local", loc.mean(), se(loc), replicas=R)
        for k in cfg.ks:
            vals = np.array([o[2][int(k)] for o in outs])
            rec.add(n, "by_degree", vals.mean(), se(vals), f"k={k}", R)
        finite[n] = (g.mean(), se(g), loc.mean(), se(loc))
    g, gse, loc, lse = finite[cfg.n_grid[-1]]
    joint = 3 * math.hypot(lse, lim.local.stderr)
    rec.check("local_matches_limit", abs(loc - lim.local.mean) <= joint,
              f"LCC {loc:.4f} vs limit {lim.local.mean:.4f}, 3 joint sigma {joint:.4f}")
    joint = 3 * math.hypot(gse, lim.global_ratio.stderr)
    rec.check("global_matches_limit", abs(g - lim.global_ratio.mean) <= joint,
              f"GCC {g:.4f} vs limit {lim.global_ratio.mean:.4f}, 3 joint sigma {joint:.4f}")
    rec.result.extras.update(limit=lim, finite=finite)
    return rec.result


# distances

def _distance_task(cfg_dict, ni, n, rep):
    cfg, G = _graph(cfg_dict, ni, n, rep)
    return typical_distances(G, cfg.pairs, substream(cfg.seed, PAIRS, ni, rep))


def run_distances(cfg: ExperimentConfig, timestamp: str | None = None) -> ExperimentResult:
    alpha = cfg.require_limit()
    rec = _Recorder("distances", cfg, timestamp)
    crit = critical_constant(alpha, cfg.d)
    rec.add(0, "critical_constant", crit)
    table = {C: ([], []) for C in cfg.C_grid}
    for ni, n in enumerate(cfg.n_grid):
        if n < 16:
            raise ConfigError("distance experiments need n >= 16")
        outs = _map(_distance_task, [(cfg.to_dict(), ni, n, rep) for rep in range(cfg.replicas)],
                    cfg.workers)
        samples = np.concatenate(outs)
        for C in cfg.C_grid:
            ex = distance_threshold_fraction(samples, n, C, alpha, cfg.d)
            table[C][0].append(ex.fraction)
            table[C][1].append(ex.stderr)
            rec.add(n, "exceedance", ex.fraction, ex.stderr, f"C={C}", cfg.replicas)
        rec.add(n, "finite_fraction", ex.finite_fraction, replicas=cfg.replicas)
        rec.add(n, "finite_mean", ex.finite_mean, replicas=cfg.replicas)
    for C, (vals, ses) in table.items():
        if C >= crit:
            continue
        ok, bad = _trend(vals, ses, +1)
        rec.check(f"nondecreasing_C={C}", ok, f"exceedance by n: {_fmt_list(vals)}")
        rec.check(f"final_floor_C={C}", vals[-1] >= cfg.exceedance_floor,
                  f"final exceedance {vals[-1]:.4f} vs floor {cfg.exceedance_floor}")
    rec.result.extras.update(table=table, critical=crit)
    return rec.result


# coupling

def _coupling_task(cfg_dict, ni, n, rep):
    cfg, G = _graph(cfg_dict, ni, n, rep)
    roots = substream(cfg.seed, ROOTS, ni, rep).integers(0, n, size=cfg.coupling_roots)
    return [sum(not coupling_check(G, int(v), cfg.a, m, cfg.K) for v in roots) for m in cfg.m_grid]


def run_coupling(cfg: ExperimentConfig, timestamp: str | None = None) -> ExperimentResult:
    rec = _Recorder("coupling", cfg, timestamp)
    for m in cfg.m_grid:
        coupling_radius(cfg.a, m, cfg.K)  # parameter errors surface before any sampling
    rates = {}
    for ni, n in enumerate(cfg.n_grid):
        outs = _map(_coupling_task, [(cfg.to_dict(), ni, n, rep) for rep in range(cfg.replicas)],
                    cfg.workers)
        fails = np.sum(np.array(outs), axis=0)
        trials = cfg.replicas * cfg.coupling_roots
        vals, ses = [], []
        for m, f in zip(cfg.m_grid, fails):
            p = f / trials
            s = math.sqrt(p * (1 - p) / trials)
            vals.append(p)
            ses.append(s)
            rec.add(n, "failure_rate", p, s, f"m={m};a={cfg.a:g};K={cfg.K}", cfg.replicas)
        ok, bad = _trend(vals, ses, -1)
        rec.check(f"nonincreasing_n={n}", ok, f"failure rate by m {cfg.m_grid}: {_fmt_list(vals)}")
        rates[n] = (vals, ses)
    rec.result.extras.update(rates=rates)
    return rec.result


# generation and kernel checks

def run_generate(cfg: ExperimentConfig, out_dir=None, timestamp: str | None = None) -> ExperimentResult:
    rec = _Recorder("generate", cfg, timestamp)
    for ni, n in enumerate(cfg.n_grid):
        G = make_graph(cfg, n, substream(cfg.seed, GRAPHS, ni, 0))
        rec.add(n, "edges", G.num_edges, replicas=1)
        rec.add(n, "mean_degree", G.degrees().mean() if G.n else 0.0, replicas=1)
        if out_dir is not None:
            write_graph(G, Path(out_dir) / f"graph_n{n}.edges")
    return rec.result


def run_verify_kernel(cfg: ExperimentConfig, timestamp: str | None = None) -> ExperimentResult:
    rec = _Recorder("verify-kernel", cfg, timestamp)
    spec = cfg.tail_kernel()
    law = cfg.weight_law()
    report = verify_tail_bound(spec, law, cfg.t_grid, cfg.eps, cfg.samples,
                               substream(cfg.seed, KERNEL), prefactor=cfg.prefactor)
    for row in report.rows:
        rec.add(0, "tail_expectation", row.estimate, row.stderr, f"t={row.t:g}", cfg.samples)
        rec.add(0, "tail_bound", row.bound, parameter=f"t={row.t:g}", replicas=cfg.samples)
    rec.check("tail_bound", report.passed,
              f"gamma={report.gamma:g}, eps={report.eps:g}, A={report.prefactor:g}: "
              + ", ".join(f"t={r.t:g}: {r.estimate:.3e}<={r.bound:.3e}" for r in report.rows))
    rec.result.extras.update(report=report)
    return rec.result


RUNNERS = {
    "neighborhoods": run_neighborhood_convergence,
    "degree-law": run_degree_law,
    "clustering": run_clustering,
    "distances": run_distances,
    "coupling": run_coupling,
    "verify-kernel": run_verify_kernel,
}
