"""GCN victim training and accuracy evaluation on poisoned graphs.

The victim is a standard two-layer graph convolutional network with ReLU
and dropout, trained full-batch by gradient descent with weight decay on
whatever graph it is given (clean or poisoned — poisoning happens before
victim training).  Parameters at the best validation accuracy are kept and
scored on the test nodes.

Forward/backward reuses the autodiff tape in plain first-order mode: each
epoch records one small tape and evaluates its gradients eagerly, with the
epoch's dropout mask entering as a constant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import AttackResult
from .graphs import GraphDataset
from .surrogate import glorot, loss_ce
from .tape import NonFiniteError, Tape, grad, softmax_rows

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class VictimConfig:
    """Conventional GCN training recipe."""

    hidden: int = 16
    dropout: float = 0.5
    weight_decay: float = 5e-4
    # Full-batch gradient descent needs a far larger step than the 0.01
    # customary for adaptive optimizers; at 0.3 training converges (early
    # stopping fires) instead of being cut off mid-descent at the epoch cap.
    learning_rate: float = 0.3
    epochs: int = 200
    patience: int = 30
    seeds: tuple = DEFAULT_SEEDS

    def __post_init__(self):
        if min(self.hidden, self.epochs, self.patience) <= 0:
            raise ValueError("hidden, epochs, and patience must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning rate must be positive and weight "
                             "decay non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if self.patience > self.epochs:
            raise ValueError("patience cannot exceed the epoch budget")


def _normalize(adj: np.ndarray) -> np.ndarray:
    ai = adj + np.eye(adj.shape[0], dtype=adj.dtype)
    inv = 1.0 / np.sqrt(ai.sum(axis=1))
    return ai * np.outer(inv, inv)


def train_victim(ds: GraphDataset, cfg: VictimConfig | None = None,
                 seed: int = 0, *, precision: str = "f64",
                 detailed: bool = False):
    """Train the GCN victim; returns test accuracy in percent.

    Deterministic per seed: initialization and the per-epoch dropout masks
    all derive from it.  Training stops early when validation accuracy has
    not improved for ``patience`` epochs; the best-validation parameters
    are evaluated.  With ``detailed=True`` returns (accuracy, info dict).
    """
    cfg = cfg or VictimConfig()
    rng = np.random.default_rng([seed, 5])
    n, d = ds.features.shape
    h, k = cfg.hidden, ds.num_classes
    y, split = ds.labels, ds.split
    w1, w2 = glorot((d, h), rng), glorot((h, k), rng)

    a_hat = _normalize(ds.adj)
    ax = a_hat @ ds.features  # first-layer propagation never changes
    keep = 1.0 - cfg.dropout

    def clean_logits(w1_np, w2_np):
        hid = np.maximum(ax @ w1_np, 0.0)
        return a_hat @ (hid @ w2_np)

    def accuracy(logits, idx):
        if idx.size == 0:
            return 0.0
        return float((logits[idx].argmax(axis=1) == y[idx]).mean())

    best = (-1.0, 0, w1.copy(), w2.copy())
    epochs_run = 0
    for epoch in range(cfg.epochs):
        epochs_run = epoch + 1
        try:
            t = Tape(precision=precision)
            axc = t.constant(ax)
            ac = t.constant(a_hat)
            w1v, w2v = t.input(w1), t.input(w2)
            hidden = (axc @ w1v).clip_min(0.0)
            if cfg.dropout > 0.0:
                mask = (rng.random((n, h)) < keep) / keep
                hidden = hidden * t.constant(mask)
            logits = ac @ (hidden @ w2v)
            loss = loss_ce(softmax_rows(logits), y, split.train)
            if cfg.weight_decay > 0.0:
                reg = ((w1v * w1v).sum() + (w2v * w2v).sum()) * (
                    0.5 * cfg.weight_decay)
                loss = loss + reg
            if not np.isfinite(loss.value[0, 0]):
                raise NonFiniteError("non-finite loss")
            g1, g2 = grad(loss, [w1v, w2v], create_graph=False)
            w1 = w1 - cfg.learning_rate * g1
            w2 = w2 - cfg.learning_rate * g2
            if not (np.all(np.isfinite(w1)) and np.all(np.isfinite(w2))):
                raise NonFiniteError("non-finite weights")
        except NonFiniteError as exc:
            raise NonFiniteError(
                f"victim training diverged at epoch {epoch}: {exc}") from None

        val_acc = accuracy(clean_logits(w1, w2), split.val)
        if val_acc > best[0]:
            best = (val_acc, epoch, w1.copy(), w2.copy())
        elif epoch - best[1] >= cfg.patience:
            break

    val_acc, best_epoch, w1b, w2b = best
    test_acc = 100.0 * accuracy(clean_logits(w1b, w2b), split.test)
    if detailed:
        return test_acc, {"best_epoch": best_epoch, "epochs_run": epochs_run,
                          "val_accuracy": val_acc}
    return test_acc


# ---------------------------------------------------------------------------
# multi-method evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalRow:
    dataset: str
    method: str
    ptb_rate: float
    seed_count: int
    acc_mean: float
    acc_std: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def by_method(self) -> dict[str, EvalRow]:
        return {r.method: r for r in self.rows}


def _seed_accuracies(ds: GraphDataset, cfg: VictimConfig,
                     precision: str) -> np.ndarray:
    return np.array([train_victim(ds, cfg, seed=s, precision=precision)
                     for s in cfg.seeds])


def evaluate_methods(ds: GraphDataset, attacks, cfg: VictimConfig | None = None,
                     *, precision: str = "f64", progress=None) -> EvalReport:
    """Victim accuracy per attack, averaged over seeds, plus clean baseline.

    ``attacks`` maps arbitrary labels to AttackResult objects (or file
    paths), or to lists of them — several attack seeds of the same method
    pool into one row, with seed_count = attacks x victim seeds.  Each
    poisoned graph is reconstructed from the clean dataset before training.
    """
    cfg = cfg or VictimConfig()
    report = EvalReport()

    def add(label, accs, rate):
        row = EvalRow(ds.name, label, rate, len(accs),
                      float(accs.mean()), float(accs.std()))
        report.rows.append(row)
        if progress is not None:
            progress(row)

    add("clean", _seed_accuracies(ds, cfg, precision), 0.0)
    for label, group in dict(attacks).items():
        if isinstance(group, (AttackResult, str, Path)):
            group = [group]
        loaded = [a if isinstance(a, AttackResult) else AttackResult.load(a)
                  for a in group]
        rates = {a.ptb_rate for a in loaded}
        if len(rates) != 1:
            raise ValueError(f"attack group {label!r} mixes perturbation "
                             f"rates {sorted(rates)}")
        accs = np.concatenate([_seed_accuracies(a.apply_to(ds), cfg,
                                                precision) for a in loaded])
        add(label, accs, rates.pop())
    return report


def write_eval_csv(report: EvalReport, path) -> None:
    """eval.csv: dataset, method, ptb_rate, seed_count, acc_mean, acc_std."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "method", "ptb_rate", "seed_count",
                    "acc_mean", "acc_std"])
        for r in report.rows:
            w.writerow([r.dataset, r.method, r.ptb_rate, r.seed_count,
                        f"{r.acc_mean:.4f}", f"{r.acc_std:.4f}"])
