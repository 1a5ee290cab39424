"""Tests for bias quantification and meta-gradient diagnostics."""

import csv

import numpy as np
import pytest

from graphatk.analysis import (
    BiasReport,
    TermNormReport,
    bias_report,
    clean_edge_counts,
    term_norms,
    training_portion_sweep,
    write_bias_csv,
    write_sweep_csv,
    write_terms_csv,
)
from graphatk.attacks import AttackResult, Flip, attack_random
from graphatk.graphs import EDGE_CLASSES, generate_csbm
from graphatk.surrogate import SurrogateConfig


def dataset(seed=0, n=16, train_frac=0.1):
    return generate_csbm(n=n, num_classes=2, p_in=0.4, p_out=0.1, dim=5,
                         noise=0.3, seed=seed, train_frac=train_frac)


def manual_result(flips, budget=None):
    return AttackResult("manual", 0, budget or len(flips), 0.05, flips,
                        {"method": "manual"})


class TestBiasReport:
    def test_counts_sum_to_budget_and_ratios(self):
        ds = dataset(n=30)
        res = attack_random(ds, 0.2, seed=1)
        rep = bias_report(res, ds)
        assert sum(rep.counts().values()) == res.budget
        clean = clean_edge_counts(ds)
        assert sum(clean.values()) == ds.num_edges
        for c in EDGE_CLASSES:
            s = rep.stats[c]
            assert s.ratio >= 0.0
            if not s.zero_denominator:
                assert s.ratio == pytest.approx(100.0 * s.flips / s.clean_edges)

    def test_all_train_train_flips(self):
        ds = dataset(n=30, train_frac=0.4)
        tr = ds.split.train
        flips = [Flip(min(tr[0], tr[1]), max(tr[0], tr[1]), 0, 0.0, "add"),
                 Flip(min(tr[2], tr[3]), max(tr[2], tr[3]), 1, 0.0, "add")]
        rep = bias_report(manual_result(flips), ds)
        assert rep.counts() == {"LL": 2, "LU": 0, "UU": 0}

    def test_zero_denominator_flag(self):
        ds = dataset(n=20, train_frac=0.1)
        # With one train node per class and a tiny graph, L-L clean edges
        # are typically absent; force the situation by picking two train
        # nodes that are not adjacent.
        tr = ds.split.train
        u, v = int(min(tr[0], tr[1])), int(max(tr[0], tr[1]))
        assert clean_edge_counts(ds)["LL"] == 0 or ds.adj[u, v] in (0.0, 1.0)
        if clean_edge_counts(ds)["LL"] == 0:
            rep = bias_report(manual_result([Flip(u, v, 0, 0.0, "add")]), ds)
            assert rep.stats["LL"].zero_denominator
            assert rep.stats["LL"].ratio == 1.0

    def test_out_of_range_flip(self):
        ds = dataset()
        with pytest.raises(ValueError, match="out of range"):
            bias_report(manual_result([Flip(0, 99, 0, 0.0, "add")]), ds)


class TestTermNorms:
    CFG = SurrogateConfig(steps=5, hidden=4)

    def test_frozen_mode_has_zero_bias_everywhere(self):
        ds = dataset(n=16)
        rep = term_norms(ds, self.CFG, frozen=True, exact=True)
        for c in EDGE_CLASSES:
            assert rep.stats[c].bias_l1 == 0.0
            assert rep.stats[c].exact_mixed_l1 == 0.0
            assert rep.stats[c].fixed_l1 >= 0.0

    def test_labeled_classes_carry_more_bias(self):
        # Fig-2c-style direction at criterion scale: n=16, 10% train.
        ds = dataset(n=16, train_frac=0.1)
        rep = term_norms(ds, self.CFG, exact=True)
        uu = rep.stats["UU"]
        for c in ("LL", "LU"):
            assert rep.stats[c].bias_l1 > uu.bias_l1
            assert rep.stats[c].exact_mixed_l1 > uu.exact_mixed_l1

    def test_fixed_magnitudes_are_comparable_across_classes(self):
        ds = dataset(n=16, train_frac=0.1)
        rep = term_norms(ds, self.CFG)
        vals = [rep.stats[c].fixed_l1 for c in EDGE_CLASSES]
        assert max(vals) <= 3.0 * min(vals)

    def test_exact_guard(self):
        with pytest.raises(ValueError, match="n <= 64"):
            term_norms(dataset(n=70), self.CFG, exact=True)
        with pytest.raises(ValueError, match="T <= 10"):
            term_norms(dataset(n=16), SurrogateConfig(steps=20), exact=True)

    def test_sampling_restricts_pairs(self):
        ds = dataset(n=16)
        rep = term_norms(ds, self.CFG, samples_per_class=3)
        for c in EDGE_CLASSES:
            assert len(rep.sampled_pairs[c]) <= 3


class TestPortionSweep:
    def test_single_portion_reduces_to_bias_report(self):
        ds = dataset(n=24)
        cfg = SurrogateConfig(steps=3, hidden=4)
        rows, reports = training_portion_sweep(ds, [0.1], method="random",
                                               ptb_rate=0.1, seeds=(0, 1),
                                               cfg=cfg)
        assert len(rows) == 3
        assert len(reports) == 2
        for row in rows:
            vals = [r.stats[row["class"]].ratio for _, r in reports]
            assert row["ratio_mean"] == pytest.approx(np.mean(vals))
            assert row["ratio_std"] == pytest.approx(np.std(vals))

    def test_row_count_is_portions_times_classes(self):
        ds = dataset(n=24)
        rows, _ = training_portion_sweep(ds, [0.1, 0.3, 0.5],
                                         method="random", ptb_rate=0.1,
                                         seeds=(0,))
        assert len(rows) == 9
        assert [r["portion"] for r in rows] == \
            [p for p in (0.1, 0.3, 0.5) for _ in range(3)]


class TestCsv:
    def test_bias_csv(self, tmp_path):
        ds = dataset(n=24)
        reports = [bias_report(attack_random(ds, 0.1, seed=s), ds)
                   for s in (0, 1)]
        path = tmp_path / "bias.csv"
        write_bias_csv(reports, path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["method", "seed", "class", "flips", "clean_edges",
                           "ratio"]
        assert len(rows) == 1 + 2 * 3
        budget = reports[0].budget
        assert sum(int(r[3]) for r in rows[1:4]) == budget

    def test_terms_csv_with_and_without_exact(self, tmp_path):
        ds = dataset(n=12)
        cfg = SurrogateConfig(steps=3, hidden=3)
        plain = term_norms(ds, cfg)
        exact = term_norms(ds, cfg, exact=True, samples_per_class=4)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_terms_csv(plain, p1)
        write_terms_csv(exact, p2)
        head1 = next(csv.reader(p1.open()))
        head2 = next(csv.reader(p2.open()))
        assert head1 == ["class", "fixed_l1", "bias_l1"]
        assert head2 == ["class", "fixed_l1", "bias_l1", "exact_mixed_l1"]

    def test_sweep_csv(self, tmp_path):
        rows = [{"portion": 0.1, "class": "LL", "ratio_mean": 1.5,
                 "ratio_std": 0.25}]
        path = tmp_path / "sweep.csv"
        write_sweep_csv(rows, path)
        out = list(csv.reader(path.open()))
        assert out[0] == ["portion", "class", "ratio_mean", "ratio_std"]
        assert out[1] == ["0.1", "LL", "1.500000", "0.250000"]
