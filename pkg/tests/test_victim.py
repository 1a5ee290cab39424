"""Tests for victim training and evaluation."""

import csv

import numpy as np
import pytest

from graphatk.attacks import attack_random
from graphatk.graphs import generate_csbm
from graphatk.tape import NonFiniteError
from graphatk.victim import (
    EvalReport,
    VictimConfig,
    evaluate_methods,
    train_victim,
    write_eval_csv,
)

FAST = VictimConfig(hidden=8, epochs=60, patience=20, seeds=(0, 1))


def easy_dataset(seed=0, n=60):
    return generate_csbm(n=n, num_classes=3, p_in=0.4, p_out=0.02, dim=12,
                         noise=0.1, seed=seed)


class TestTrainVictim:
    def test_separable_graph_is_learned(self):
        # Zero feature noise and no cross-class edges: near-perfect accuracy.
        ds = generate_csbm(n=60, num_classes=2, p_in=0.4, p_out=0.0, dim=10,
                           noise=0.0, seed=1)
        acc = train_victim(ds, FAST, seed=0)
        assert acc >= 99.0

    def test_deterministic_per_seed(self):
        ds = easy_dataset()
        a = train_victim(ds, FAST, seed=3)
        b = train_victim(ds, FAST, seed=3)
        c = train_victim(ds, FAST, seed=4)
        assert a == b
        assert 0.0 <= a <= 100.0
        assert isinstance(c, float)

    def test_detailed_info(self):
        ds = easy_dataset()
        acc, info = train_victim(ds, FAST, seed=0, detailed=True)
        assert 0.0 <= acc <= 100.0
        assert 0 <= info["best_epoch"] < info["epochs_run"] <= FAST.epochs
        assert 0.0 <= info["val_accuracy"] <= 1.0

    def test_patience_stops_early(self):
        ds = easy_dataset()
        cfg = VictimConfig(hidden=8, epochs=200, patience=5, seeds=(0,))
        _, info = train_victim(ds, cfg, seed=0, detailed=True)
        assert info["epochs_run"] < 200

    def test_divergence_raises(self):
        ds = easy_dataset()
        cfg = VictimConfig(hidden=8, epochs=10, patience=5,
                           learning_rate=np.inf, dropout=0.0)
        with pytest.raises(NonFiniteError, match="epoch"):
            train_victim(ds, cfg, seed=0)

    def test_no_dropout_no_decay_path(self):
        ds = generate_csbm(n=60, num_classes=2, p_in=0.4, p_out=0.0, dim=10,
                           noise=0.0, seed=1)
        cfg = VictimConfig(hidden=8, dropout=0.0, weight_decay=0.0,
                           epochs=60, patience=20)
        acc = train_victim(ds, cfg, seed=0)
        assert acc >= 99.0

    def test_config_validation(self):
        with pytest.raises(ValueError, match="positive"):
            VictimConfig(hidden=0)
        with pytest.raises(ValueError, match="dropout"):
            VictimConfig(dropout=1.0)
        with pytest.raises(ValueError, match="patience"):
            VictimConfig(epochs=10, patience=20)
        with pytest.raises(ValueError, match="learning rate"):
            VictimConfig(learning_rate=0.0)


class TestEvaluateMethods:
    def test_report_contains_clean_and_methods(self):
        ds = easy_dataset()
        attacks = {"random": attack_random(ds, 0.1, seed=0)}
        report = evaluate_methods(ds, attacks, FAST)
        methods = [r.method for r in report.rows]
        assert methods == ["clean", "random"]
        for r in report.rows:
            assert 0.0 <= r.acc_mean <= 100.0
            assert r.acc_std >= 0.0
            assert r.seed_count == 2

    def test_zero_flip_attack_matches_clean_exactly(self):
        ds = easy_dataset(seed=2)
        res = attack_random(ds, 0.1, seed=0)
        res.flips = []
        res.budget = 0
        report = evaluate_methods(ds, {"noop": res}, FAST)
        by = report.by_method()
        assert by["noop"].acc_mean == by["clean"].acc_mean
        assert by["noop"].acc_std == by["clean"].acc_std

    def test_attack_file_round_trip(self, tmp_path):
        ds = easy_dataset(seed=3)
        res = attack_random(ds, 0.1, seed=1)
        path = tmp_path / "attack.json"
        res.save(path)
        direct = evaluate_methods(ds, {"random": res}, FAST)
        from_file = evaluate_methods(ds, {"random": str(path)}, FAST)
        assert direct.by_method()["random"] == from_file.by_method()["random"]

    def test_pooled_attack_seeds(self):
        ds = easy_dataset(seed=5)
        group = [attack_random(ds, 0.1, seed=s) for s in (0, 1)]
        report = evaluate_methods(ds, {"random": group}, FAST)
        row = report.by_method()["random"]
        assert row.seed_count == 4  # 2 attacks x 2 victim seeds
        singles = [evaluate_methods(ds, {"r": g}, FAST).by_method()["r"]
                   for g in group]
        assert row.acc_mean == pytest.approx(
            np.mean([s.acc_mean for s in singles]))

    def test_mixed_rates_rejected(self):
        ds = easy_dataset(seed=5)
        group = [attack_random(ds, 0.1, seed=0),
                 attack_random(ds, 0.2, seed=0)]
        with pytest.raises(ValueError, match="mixes perturbation"):
            evaluate_methods(ds, {"random": group}, FAST)

    def test_eval_csv(self, tmp_path):
        ds = easy_dataset(seed=4)
        report = evaluate_methods(ds, {}, FAST)
        path = tmp_path / "eval.csv"
        write_eval_csv(report, path)
        rows = list(csv.reader(path.open()))
        assert rows[0] == ["dataset", "method", "ptb_rate", "seed_count",
                           "acc_mean", "acc_std"]
        assert len(rows) == 2
        assert rows[1][1] == "clean"
