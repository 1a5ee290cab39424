"""Edge-placement bias quantification and meta-gradient diagnostics.

Edges (and candidate pairs) are classified by whether their endpoints are
training nodes: L-L (both labeled), L-U (mixed), U-U (both unlabeled).
A plain meta-gradient attack concentrates its flips on L-L and L-U pairs;
this module measures that concentration three ways:

* ``bias_report`` — where an attack's flips landed, with per-class attack
  ratios normalized by the clean graph's edge counts;
* ``term_norms`` — mean magnitudes of the fixed and training-procedure
  (bias) parts of the meta-gradient per pair class, with an optional exact
  mixed-partial reconstruction on tiny graphs;
* ``training_portion_sweep`` — how the flip distribution shifts as the
  labeled fraction grows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .attacks import AttackResult, meta_gradient, run_attack
from .graphs import EDGE_CLASSES, GraphDataset, classify_edge, make_split
from .surrogate import SurrogateConfig, pseudo_labels, train_surrogate
from .tape import Tape, gather_rows, grad


@dataclass(frozen=True)
class BiasClassStat:
    """Flip placement statistics for one edge class."""

    flips: int
    clean_edges: int
    ratio: float            # 100 * flips / clean_edges (see zero_denominator)
    zero_denominator: bool  # no clean edges: ratio reported as the raw count


@dataclass(frozen=True)
class BiasReport:
    method: str
    seed: int
    budget: int
    stats: dict[str, BiasClassStat]

    def counts(self) -> dict[str, int]:
        return {c: s.flips for c, s in self.stats.items()}

    def ratios(self) -> dict[str, float]:
        return {c: s.ratio for c, s in self.stats.items()}


def clean_edge_counts(ds: GraphDataset) -> dict[str, int]:
    """Number of clean edges in each endpoint class."""
    train = set(ds.split.train.tolist())
    counts = dict.fromkeys(EDGE_CLASSES, 0)
    for u, v in ds.edge_list:
        counts[("UU", "LU", "LL")[int(u in train) + int(v in train)]] += 1
    return counts


def bias_report(result: AttackResult, ds: GraphDataset) -> BiasReport:
    """Classify every flip of an attack and normalize by clean edge counts."""
    clean = clean_edge_counts(ds)
    flips = dict.fromkeys(EDGE_CLASSES, 0)
    for f in result.flips:
        if not (0 <= f.u < ds.n and 0 <= f.v < ds.n):
            raise ValueError(f"flip endpoint ({f.u},{f.v}) out of range")
        flips[classify_edge(f.u, f.v, ds.split)] += 1
    stats = {}
    for c in EDGE_CLASSES:
        if clean[c] > 0:
            stats[c] = BiasClassStat(flips[c], clean[c],
                                     100.0 * flips[c] / clean[c], False)
        else:
            stats[c] = BiasClassStat(flips[c], 0, float(flips[c]), True)
    return BiasReport(result.method, result.seed, result.budget, stats)


# ---------------------------------------------------------------------------
# meta-gradient term magnitudes per pair class
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TermClassStat:
    fixed_l1: float
    bias_l1: float
    exact_mixed_l1: float | None = None


@dataclass(frozen=True)
class TermNormReport:
    stats: dict[str, TermClassStat]
    sampled_pairs: dict[str, list[tuple[int, int]]]


def _pairs_by_class(ds: GraphDataset, samples_per_class: int | None,
                    rng: np.random.Generator) -> dict[str, list[tuple[int, int]]]:
    train = set(ds.split.train.tolist())
    pools: dict[str, list[tuple[int, int]]] = {c: [] for c in EDGE_CLASSES}
    n = ds.n
    for u in range(n):
        for v in range(u + 1, n):
            cls = ("UU", "LU", "LL")[int(u in train) + int(v in train)]
            pools[cls].append((u, v))
    if samples_per_class is None:
        return pools
    sampled = {}
    for c, pool in pools.items():
        if len(pool) <= samples_per_class:
            sampled[c] = pool
        else:
            idx = rng.choice(len(pool), size=samples_per_class, replace=False)
            sampled[c] = [pool[i] for i in sorted(idx)]
    return sampled


def _exact_mixed_partials(ds: GraphDataset, cfg: SurrogateConfig,
                          pairs: dict[str, list[tuple[int, int]]],
                          seed: int, precision: str) -> dict[str, float]:
    """Sum over steps and parameter entries of |d(step gradient)/d(pair)|.

    Differentiates every entry of every per-step parameter gradient with
    respect to the adjacency leaf — exact but quadratic in parameter count,
    hence the small-instance guard at the call site.
    """
    t = Tape(precision=precision)
    u = t.input(np.triu(ds.adj, 1))
    a = u + u.T
    x = t.input(ds.features, diff=False)
    trained = train_surrogate(t, a, x, ds, cfg,
                              np.random.default_rng([seed, 0, 0]),
                              np.random.default_rng([seed, 1, 0]),
                              keep_step_grads=True)
    flat_pairs = [p for c in EDGE_CLASSES for p in pairs[c]]
    totals = np.zeros(len(flat_pairs))
    for g1, g2 in trained.step_grads:
        for gmat in (g1, g2):
            rows, cols = gmat.shape
            for i in range(rows):
                row = gather_rows(gmat, np.array([i]))
                for j in range(cols):
                    pick = np.zeros((1, cols))
                    pick[0, j] = 1.0
                    entry = (row * t.constant(pick, key=("pick", cols, j))).sum()
                    gu = grad(entry, u, create_graph=False)
                    for k, (pu, pv) in enumerate(flat_pairs):
                        totals[k] += abs(gu[pu, pv])
    out = {}
    pos = 0
    for c in EDGE_CLASSES:
        k = len(pairs[c])
        out[c] = float(totals[pos:pos + k].mean()) if k else 0.0
        pos += k
    return out


def term_norms(ds: GraphDataset, cfg: SurrogateConfig | None = None, *,
               samples_per_class: int | None = None, exact: bool = False,
               frozen: bool = False, seed: int = 0,
               precision: str = "f64") -> TermNormReport:
    """Mean |fixed| and |bias| meta-gradient magnitude per pair class.

    With ``exact=True`` (n <= 64, T <= 10) the training-procedure term is
    additionally reconstructed from its definition as the accumulated mixed
    partial of the per-step parameter gradients, over the same sampled
    pairs.
    """
    cfg = cfg or SurrogateConfig()
    if exact and (ds.n > 64 or cfg.steps > 10):
        raise ValueError(
            f"exact mixed partials limited to n <= 64 and T <= 10, "
            f"got n={ds.n}, T={cfg.steps}")
    rng = np.random.default_rng([seed, 6])
    pairs = _pairs_by_class(ds, samples_per_class, rng)
    pl = pseudo_labels(ds, cfg, seed=seed)
    mg = meta_gradient(ds, pl, cfg, seed=seed, flip_index=0, frozen=frozen,
                       precision=precision)
    exact_means = (_exact_mixed_partials(ds, cfg, pairs, seed, precision)
                   if exact and not frozen else None)
    if exact and frozen:
        exact_means = dict.fromkeys(EDGE_CLASSES, 0.0)
    stats = {}
    for c in EDGE_CLASSES:
        ps = pairs[c]
        if ps:
            idx = tuple(np.array(k) for k in zip(*ps))
            fixed = float(np.abs(mg.fixed_term[idx]).mean())
            bias = float(np.abs(mg.bias_term[idx]).mean())
        else:
            fixed = bias = 0.0
        stats[c] = TermClassStat(fixed, bias,
                                 None if exact_means is None
                                 else exact_means[c])
    return TermNormReport(stats, pairs)


# ---------------------------------------------------------------------------
# training-portion sweep
# ---------------------------------------------------------------------------

def training_portion_sweep(ds: GraphDataset, portions, method: str = "metattack",
                           ptb_rate: float = 0.05, seeds=(0,),
                           cfg: SurrogateConfig | None = None, *,
                           precision: str = "f64", progress=None):
    """Re-split the dataset at each training portion, attack, and average
    the per-class attack ratios over seeds.

    Returns (rows, reports): one row per (portion, class) with the ratio
    mean and standard deviation, plus the underlying BiasReports.
    """
    rows, reports = [], []
    for portion in portions:
        split = make_split(ds.labels, train_frac=portion, seed=0)
        resplit = replace(ds, split=split)
        ratios = {c: [] for c in EDGE_CLASSES}
        for seed in seeds:
            result = run_attack(resplit, method, ptb_rate, seed=seed,
                                cfg=cfg, precision=precision)
            report = bias_report(result, resplit)
            reports.append((portion, report))
            for c in EDGE_CLASSES:
                ratios[c].append(report.stats[c].ratio)
            if progress is not None:
                progress({"portion": portion, "seed": seed,
                          "counts": report.counts()})
        for c in EDGE_CLASSES:
            vals = np.array(ratios[c])
            rows.append({"portion": portion, "class": c,
                         "ratio_mean": float(vals.mean()),
                         "ratio_std": float(vals.std())})
    return rows, reports


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def write_bias_csv(reports, path) -> None:
    """bias.csv: method, seed, class, flips, clean_edges, ratio."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "seed", "class", "flips", "clean_edges",
                    "ratio"])
        for r in reports:
            for c in EDGE_CLASSES:
                s = r.stats[c]
                w.writerow([r.method, r.seed, c, s.flips, s.clean_edges,
                            f"{s.ratio:.6f}"])


def write_terms_csv(report: TermNormReport, path) -> None:
    """terms.csv: class, fixed_l1, bias_l1 [, exact_mixed_l1]."""
    has_exact = any(s.exact_mixed_l1 is not None
                    for s in report.stats.values())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["class", "fixed_l1", "bias_l1"]
        if has_exact:
            header.append("exact_mixed_l1")
        w.writerow(header)
        for c in EDGE_CLASSES:
            s = report.stats[c]
            row = [c, f"{s.fixed_l1:.12e}", f"{s.bias_l1:.12e}"]
            if has_exact:
                row.append(f"{s.exact_mixed_l1:.12e}")
            w.writerow(row)


def write_sweep_csv(rows, path) -> None:
    """sweep.csv: portion, class, ratio_mean, ratio_std."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["portion", "class", "ratio_mean", "ratio_std"])
        for r in rows:
            w.writerow([r["portion"], r["class"], f"{r['ratio_mean']:.6f}",
                        f"{r['ratio_std']:.6f}"])
