"""Linearized GCN surrogate and its training objectives.

The surrogate is a two-layer graph convolution without nonlinearity:
``logits = A_hat (A_hat X W1) W2`` with ``A_hat`` the self-loop-augmented
symmetric normalization.  Training is plain full-batch gradient descent,
recorded step by step on the tape so the final parameters remain a
differentiable function of the adjacency.

Three objectives are supported:

``ce``
    mean cross-entropy on the training nodes.
``ce_scon``
    cross-entropy plus a sample-space contrastive term: every unlabeled
    node anchors a softmax over cosine similarities between its prediction
    and the predictions of a stochastically augmented view, with all other
    nodes acting as negatives in both views.
``ce_dcon``
    cross-entropy plus a dimension-space term: mean squared distance
    between the two views' predictions, a per-dimension variance hinge and
    an off-diagonal covariance penalty, computed over all nodes.

Both contrastive terms pull gradient mass onto prediction rows of
unlabeled nodes, which is what counteracts the training-node bias of the
plain meta-gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .graphs import GraphDataset, augment_drop_edges, gcn_normalize
from .tape import (
    NonFiniteError,
    Tape,
    Var,
    gather_rows,
    grad,
    normalize_rows,
    softmax_rows,
    tile_rows,
)

OBJECTIVES = ("ce", "ce_scon", "ce_dcon")


@dataclass(frozen=True)
class SurrogateConfig:
    """Hyperparameters of the surrogate and its unrolled training loop."""

    objective: str = "ce"
    hidden: int = 16
    alpha: float = 0.01          # inner gradient-descent step size
    steps: int = 100             # unrolled training iterations T
    lam: float = 1.0             # weight of the contrastive term
    mu1: float = 1.0             # variance hinge weight (dimension objective)
    mu2: float = 1.0             # covariance penalty weight (dimension objective)
    gamma: float = 1.0           # variance target of the hinge
    drop_ratio: float = 0.2      # edge-drop ratio of the augmented view
    temperature: float = 1.0     # similarity scaling (1.0 = plain cosine)
    hinge: str = "root_of_hinge"     # sqrt(max(0, gamma - Var)); alt: "hinge_of_root"
    negatives: str = "all"           # negative pool: "all" or "unlabeled"
    resample: str = "per_attack_step"  # or "per_train_step"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        if self.hinge not in ("root_of_hinge", "hinge_of_root"):
            raise ValueError(f"unknown hinge form {self.hinge!r}")
        if self.negatives not in ("all", "unlabeled"):
            raise ValueError(f"unknown negative pool {self.negatives!r}")
        if self.resample not in ("per_attack_step", "per_train_step"):
            raise ValueError(f"unknown resample mode {self.resample!r}")


def glorot(shape: tuple[int, int], rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-limit, limit, shape)


def forward_surrogate(a_hat: Var, x: Var, w1: Var, w2: Var) -> Var:
    """Two-layer linearized propagation: A_hat (A_hat (X W1)) W2."""
    h = a_hat @ (x @ w1)
    return a_hat @ (h @ w2)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def loss_ce(probs: Var, labels: np.ndarray, idx: np.ndarray) -> Var:
    """Mean cross-entropy -log P[u, y_u] over the index set."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("cross-entropy over an empty node set")
    picked = labels[idx]
    k = probs.shape[1]
    onehot = np.zeros((idx.size, k))
    onehot[np.arange(idx.size), picked] = 1.0
    oh = probs.tape.constant(onehot, key=("onehot", idx.tobytes(), picked.tobytes()))
    lp = gather_rows(probs.log(), idx)
    return (lp * oh).sum() * (-1.0 / idx.size)


def loss_attack(probs: Var, pseudo: np.ndarray, unlabeled: np.ndarray) -> Var:
    """Attack objective: negative cross-entropy on unlabeled nodes against
    pseudo-labels.  The attacker minimizes this (drives the surrogate wrong)."""
    return -loss_ce(probs, pseudo, unlabeled)


def loss_sample_contrastive(probs: Var, probs_aug: Var, anchors: np.ndarray,
                            temperature: float = 1.0,
                            negatives: str = "all",
                            unlabeled: np.ndarray | None = None) -> Var:
    """Sample-space contrastive loss, summed over anchor nodes.

    For anchor u with prediction p_u and augmented prediction q_u::

        l(u) = -log  e^{s(p_u,q_u)} /
                     (e^{s(p_u,q_u)} + sum_{k!=u} e^{s(p_u,q_k)}
                                     + sum_{k!=u} e^{s(q_u,q_k)})

    where s is cosine similarity (optionally divided by ``temperature``).
    With ``negatives="unlabeled"`` the k-sums run over unlabeled nodes only.
    """
    t = probs.tape
    n = probs.shape[0]
    inv_t = 1.0 / float(temperature)
    scaled = (lambda s: s * inv_t) if inv_t != 1.0 else (lambda s: s)
    pn = normalize_rows(probs)
    qn = normalize_rows(probs_aug)

    if negatives == "all":
        neg = np.ones((n, n)) - np.eye(n)
        key = ("scon-neg-all", n)
    else:
        if unlabeled is None:
            raise ValueError("negatives='unlabeled' requires the unlabeled index set")
        neg = np.zeros((n, n))
        neg[:, np.asarray(unlabeled, dtype=np.int64)] = 1.0
        np.fill_diagonal(neg, 0.0)
        key = ("scon-neg-unl", n, np.asarray(unlabeled).tobytes())
    mask = t.constant(neg, key=key)

    e_cross = scaled(pn @ qn.T).exp()
    e_within = scaled(qn @ qn.T).exp()
    pos = scaled((pn * qn).sum(axis=1))
    den = pos.exp() + (e_cross * mask).sum(axis=1) + (e_within * mask).sum(axis=1)
    losses = den.log() - pos
    return gather_rows(losses, np.asarray(anchors, dtype=np.int64)).sum()


def _view_stats(q: Var, mu1: float, mu2: float, gamma: float, hinge: str) -> Var:
    """Variance hinge plus off-diagonal covariance penalty for one view."""
    t = q.tape
    n, k = q.shape
    centered = q - tile_rows(q.mean(axis=0), n)
    var = (centered * centered).sum(axis=0) * (1.0 / (n - 1))
    gamma_row = t.constant(np.full((1, k), float(gamma)), key=("gamma", gamma, k))
    if hinge == "root_of_hinge":
        v = (gamma_row - var).sqrt().sum() / k      # sqrt clamps at EPS: hinge
    else:
        v = (gamma_row - var.sqrt()).clip_min(0.0).sum() / k
    cov = (centered.T @ centered) * (1.0 / (n - 1))
    off = t.constant(np.ones((k, k)) - np.eye(k), key=("offdiag", k))
    masked = cov * off
    c = (masked * masked).sum() / k
    return v * mu1 + c * mu2


def loss_dim_contrastive(probs: Var, probs_aug: Var, mu1: float = 1.0,
                         mu2: float = 1.0, gamma: float = 1.0,
                         hinge: str = "root_of_hinge") -> Var:
    """Dimension-space contrastive loss over all nodes:

    mean squared row distance between the views, plus for each view a
    per-dimension variance hinge (weight mu1) and the mean of squared
    off-diagonal covariance entries (weight mu2).  Variances and covariances
    use the sample (n-1) divisor.
    """
    n = probs.shape[0]
    if n < 2:
        raise ValueError("dimension contrastive loss needs n >= 2 (variance)")
    diff = probs - probs_aug
    m_term = (diff * diff).sum() / n
    return (m_term
            + _view_stats(probs, mu1, mu2, gamma, hinge)
            + _view_stats(probs_aug, mu1, mu2, gamma, hinge))


# ---------------------------------------------------------------------------
# unrolled training
# ---------------------------------------------------------------------------

@dataclass
class TrainedSurrogate:
    """Differentiable handles to the trained surrogate on its tape."""

    a_hat: Var
    w1: Var
    w2: Var
    trace: list[float] = field(default_factory=list)
    step_grads: list[tuple[Var, Var]] | None = None


def train_surrogate(tape: Tape, a: Var, x: Var, ds: GraphDataset,
                    cfg: SurrogateConfig, init_rng: np.random.Generator,
                    aug_rng: np.random.Generator | None = None,
                    keep_step_grads: bool = False) -> TrainedSurrogate:
    """Record ``cfg.steps`` plain gradient-descent steps on the tape.

    Every parameter update is built from emitted gradients, so the returned
    weights are a differentiable function of the adjacency node ``a``.  For
    contrastive objectives an edge-drop view is built from ``aug_rng``; in
    ``per_attack_step`` mode one view is sampled and normalized once, in
    ``per_train_step`` mode the view is resampled every iteration.  Both
    views share the per-step X @ W1 product — augmentation only changes the
    adjacency — so the second view costs only the n^2 propagations, not the
    feature-dimension matmul that dominates on high-dimensional data.
    """
    d, h, k = ds.features.shape[1], cfg.hidden, ds.num_classes
    labels, split = ds.labels, ds.split
    contrastive = cfg.objective != "ce"
    if contrastive and aug_rng is None:
        raise ValueError(f"objective {cfg.objective!r} needs an augmentation stream")

    a_hat = gcn_normalize(a)
    w1 = tape.constant(glorot((d, h), init_rng))
    w2 = tape.constant(glorot((h, k), init_rng))

    edge_list = ds.edge_list
    ah_fixed = None
    if contrastive and cfg.resample == "per_attack_step":
        a_aug = augment_drop_edges(a, edge_list, cfg.drop_ratio, aug_rng)
        ah_fixed = gcn_normalize(a_aug) if a_aug is not a else a_hat

    anchors = split.unlabeled
    trace = []
    step_grads: list[tuple[Var, Var]] | None = [] if keep_step_grads else None
    for step in range(cfg.steps):
        try:
            xw1 = x @ w1
            probs = softmax_rows(a_hat @ ((a_hat @ xw1) @ w2))
            loss = loss_ce(probs, labels, split.train)
            if contrastive:
                if cfg.resample == "per_train_step":
                    a_aug = augment_drop_edges(a, edge_list, cfg.drop_ratio,
                                               aug_rng)
                    ah = gcn_normalize(a_aug) if a_aug is not a else a_hat
                else:
                    ah = ah_fixed
                probs_aug = softmax_rows(ah @ ((ah @ xw1) @ w2))
                if cfg.objective == "ce_scon":
                    con = loss_sample_contrastive(probs, probs_aug, anchors,
                                                  cfg.temperature,
                                                  cfg.negatives,
                                                  split.unlabeled)
                else:
                    con = loss_dim_contrastive(probs, probs_aug, cfg.mu1,
                                               cfg.mu2, cfg.gamma, cfg.hinge)
                loss = loss + con * cfg.lam
            if not np.isfinite(loss.value[0, 0]):
                raise NonFiniteError("surrogate loss is not finite")
            g1, g2 = grad(loss, [w1, w2], create_graph=True)
            if step_grads is not None:
                step_grads.append((g1, g2))
            w1 = w1 - g1 * cfg.alpha
            w2 = w2 - g2 * cfg.alpha
        except NonFiniteError as exc:
            raise NonFiniteError(
                f"surrogate training diverged at step {step}: {exc}") from exc
        trace.append(float(loss.value[0, 0]))
    return TrainedSurrogate(a_hat, w1, w2, trace, step_grads)


# ---------------------------------------------------------------------------
# pseudo-labels (self-training targets for the attack loss)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PseudoLabels:
    """Predicted labels (true labels kept on training nodes) plus the frozen
    pretrained parameters that produced them.  ``predicted`` marks the nodes
    whose label came from the model rather than from the ground truth."""

    labels: np.ndarray
    predicted: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    val_accuracy: float


def _normalized_product(adj: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Plain numpy A_hat (A_hat X) used by pretraining and frozen forwards."""
    ai = adj + np.eye(adj.shape[0], dtype=adj.dtype)
    inv_sqrt = 1.0 / np.sqrt(ai.sum(axis=1))
    a_hat = ai * np.outer(inv_sqrt, inv_sqrt)
    return a_hat @ (a_hat @ x)


def pseudo_labels(ds: GraphDataset, cfg: SurrogateConfig | None = None,
                  seed: int = 0, pretrain_steps: int = 200) -> PseudoLabels:
    """Pretrain a cross-entropy surrogate on the clean graph and self-label.

    Plain gradient descent for ``pretrain_steps`` steps at the configured
    step size; the parameters with the best validation accuracy are kept.
    Training nodes keep their true labels; all other nodes receive the
    argmax prediction of the selected parameters.
    """
    cfg = cfg or SurrogateConfig()
    rng = np.random.default_rng([seed, 2])
    d, h, k = ds.features.shape[1], cfg.hidden, ds.num_classes
    w1, w2 = glorot((d, h), rng), glorot((h, k), rng)
    m = _normalized_product(ds.adj, ds.features)
    tr, va = ds.split.train, ds.split.val
    y = ds.labels
    best = (-1.0, w1, w2)
    for _ in range(pretrain_steps):
        logits = (m @ w1) @ w2
        shifted = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=1, keepdims=True)
        if va.size:
            acc = float((logits[va].argmax(axis=1) == y[va]).mean())
            if acc > best[0]:
                best = (acc, w1.copy(), w2.copy())
        gl = p.copy()
        gl[tr, y[tr]] -= 1.0
        gl /= tr.size
        mask = np.zeros((ds.n, 1))
        mask[tr] = 1.0
        gl *= mask
        gw1 = m.T @ (gl @ w2.T)
        gw2 = (m @ w1).T @ gl
        w1 = w1 - cfg.alpha * gw1
        w2 = w2 - cfg.alpha * gw2
    acc = best[0]
    if va.size:
        _, w1, w2 = best
    preds = ((m @ w1) @ w2).argmax(axis=1)
    out = preds.astype(np.int64)
    out[tr] = y[tr]
    predicted = np.ones(ds.n, dtype=bool)
    predicted[tr] = False
    return PseudoLabels(out, predicted, w1, w2, acc)


def contrastive_bound_diagnostic(ds: GraphDataset, cfg: SurrogateConfig | None = None,
                                 seed: int = 0, steps: int = 20) -> float:
    """Monitor how often the per-anchor sample-contrastive value sits above
    the per-node training cross-entropy along a CE training run with an
    identity augmentation (both views equal).  Returns the fraction of steps
    where it does.  This tracks a claimed upper-bound relationship under
    idealized assumptions; it is reported, never asserted.
    """
    cfg = replace(cfg or SurrogateConfig(), objective="ce", steps=steps)
    t = Tape()
    a = t.input(ds.adj, diff=False)
    x = t.input(ds.features, diff=False)
    d, h, k = ds.features.shape[1], cfg.hidden, ds.num_classes
    rng = np.random.default_rng([seed, 0])
    w1 = t.constant(glorot((d, h), rng))
    w2 = t.constant(glorot((h, k), rng))
    a_hat = gcn_normalize(a)
    anchors = ds.split.unlabeled
    above = 0
    for _ in range(cfg.steps):
        probs = softmax_rows(forward_surrogate(a_hat, x, w1, w2))
        ce = loss_ce(probs, ds.labels, ds.split.train)
        scon = loss_sample_contrastive(probs, probs, anchors)
        if scon.value[0, 0] / anchors.size >= ce.value[0, 0]:
            above += 1
        g1, g2 = grad(ce, [w1, w2], create_graph=True)
        w1 = w1 - g1 * cfg.alpha
        w2 = w2 - g2 * cfg.alpha
    return above / cfg.steps
