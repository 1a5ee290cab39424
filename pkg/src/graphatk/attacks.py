"""Budgeted graph-structure poisoning attacks.

The meta-gradient family differentiates the attack loss through the
surrogate's whole unrolled training run with respect to the adjacency
matrix, then greedily flips the edge with the best first-order score,
retraining the surrogate from scratch between flips.  The adjacency enters
the tape through a strictly upper-triangular free leaf ``U`` with
``A = U + U^T``, so each undirected pair owns exactly one variable and the
resulting gradient is symmetric by construction.

The meta-gradient is reported in three parts: ``total``, the ``fixed_term``
obtained by detaching the trained parameters (the attack loss seen as a
function of the adjacency at fixed weights), and the ``bias_term`` — the
training-procedure pathway that concentrates gradient mass on edges
incident to labeled nodes.  The frozen-surrogate mode (``metattack_no``)
skips unrolled training entirely, so its bias term is identically zero.

Non-meta baselines: projected-gradient attacks on a frozen surrogate with
cross-entropy or Carlini-Wagner objectives, uniform random flipping, and
DICE (delete internally, connect externally).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .graphs import GraphDataset, gcn_normalize
from .surrogate import (
    PseudoLabels,
    SurrogateConfig,
    forward_surrogate,
    loss_attack,
    loss_ce,
    pseudo_labels,
    train_surrogate,
)
from .tape import Tape, Var, gather_rows, grad, softmax_rows

METHODS = ("metattack", "metacon_s", "metacon_d", "metattack_no",
           "pgd_ce", "pgd_cw", "random", "dice")
META_VARIANTS = ("metattack", "metacon_s", "metacon_d", "metattack_no")
VARIANT_OBJECTIVES = {"metattack": "ce", "metacon_s": "ce_scon",
                      "metacon_d": "ce_dcon", "metattack_no": "ce"}


class AttackError(RuntimeError):
    """An attack could not proceed (infeasible budget, failed projection)."""


def budget_from_rate(num_edges: int, ptb_rate: float) -> int:
    """Undirected flip budget: floor(edge count x perturbation rate)."""
    delta = int(np.floor(num_edges * ptb_rate))
    if delta < 1:
        raise AttackError(
            f"budget floor({num_edges} x {ptb_rate}) = {delta} < 1")
    return delta


def attack_streams(seed: int, flip_index: int):
    """Independent init / augmentation generators per (seed, greedy step)."""
    return (np.random.default_rng([seed, 0, flip_index]),
            np.random.default_rng([seed, 1, flip_index]))


# ---------------------------------------------------------------------------
# results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Flip:
    u: int
    v: int
    step: int
    score: float
    direction: str  # "add" | "remove"

    def to_dict(self) -> dict:
        return {"u": self.u, "v": self.v, "step": self.step,
                "score": self.score, "direction": self.direction}

    @staticmethod
    def from_dict(d: dict) -> "Flip":
        return Flip(int(d["u"]), int(d["v"]), int(d["step"]),
                    float(d["score"]), str(d["direction"]))


@dataclass
class AttackResult:
    """An ordered sequence of undirected edge flips within a budget."""

    method: str
    seed: int
    budget: int
    ptb_rate: float
    flips: list[Flip]
    config: dict
    adj: np.ndarray | None = None  # poisoned adjacency (not serialized)

    def to_dict(self) -> dict:
        return {"method": self.method, "seed": self.seed,
                "budget": self.budget, "ptb_rate": self.ptb_rate,
                "flips": [f.to_dict() for f in self.flips],
                "config": self.config}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @staticmethod
    def load(path) -> "AttackResult":
        with open(path) as fh:
            d = json.load(fh)
        return AttackResult(method=str(d["method"]), seed=int(d["seed"]),
                            budget=int(d["budget"]),
                            ptb_rate=float(d["ptb_rate"]),
                            flips=[Flip.from_dict(f) for f in d["flips"]],
                            config=dict(d["config"]))

    def apply_to(self, ds: GraphDataset) -> GraphDataset:
        """Reconstruct the poisoned dataset from the clean one."""
        return ds.with_adjacency(apply_flips(ds.adj, self.flips))


def apply_flips(adj: np.ndarray, flips) -> np.ndarray:
    """Symmetrically toggle each flipped pair of a copied adjacency."""
    out = adj.copy()
    n = out.shape[0]
    seen = set()
    for f in flips:
        u, v = f.u, f.v
        if not (0 <= u < n and 0 <= v < n) or u == v:
            raise AttackError(f"flip ({u},{v}) out of range for n={n}")
        if (u, v) in seen:
            raise AttackError(f"pair ({u},{v}) flipped twice")
        seen.add((u, v))
        out[u, v] = out[v, u] = 1.0 - out[u, v]
    return out


# ---------------------------------------------------------------------------
# meta-gradient
# ---------------------------------------------------------------------------

@dataclass
class MetaGradient:
    """Adjacency gradient of the attack loss, decomposed by pathway."""

    total: np.ndarray
    fixed_term: np.ndarray
    bias_term: np.ndarray
    attack_loss: float


def meta_gradient(ds: GraphDataset, pseudo: PseudoLabels,
                  cfg: SurrogateConfig, *,
                  init_rng: np.random.Generator | None = None,
                  aug_rng: np.random.Generator | None = None,
                  seed: int = 0, flip_index: int = 0, frozen: bool = False,
                  precision: str = "f64") -> MetaGradient:
    """Gradient of the attack loss w.r.t. the adjacency of ``ds``.

    With ``frozen=True`` the pretrained parameters carried by ``pseudo``
    are used as constants (no training on the tape) and the bias term is
    exactly zero.  Otherwise the surrogate is trained on the tape and the
    fixed term is recovered by re-evaluating the attack loss with the final
    parameters detached.
    """
    if init_rng is None or aug_rng is None:
        init_rng, aug_rng = attack_streams(seed, flip_index)
    t = Tape(precision=precision)
    u = t.input(np.triu(ds.adj, 1))
    a = u + u.T
    x = t.input(ds.features, diff=False)
    unl = ds.split.unlabeled

    if frozen:
        probs = softmax_rows(forward_surrogate(
            gcn_normalize(a), x, t.constant(pseudo.w1), t.constant(pseudo.w2)))
        l_atk = loss_attack(probs, pseudo.labels, unl)
        total = grad(l_atk, u, create_graph=False)
        return MetaGradient(total, total.copy(), np.zeros_like(total),
                            float(l_atk.value[0, 0]))

    trained = train_surrogate(t, a, x, ds, cfg, init_rng, aug_rng)
    probs = softmax_rows(forward_surrogate(trained.a_hat, x,
                                           trained.w1, trained.w2))
    l_atk = loss_attack(probs, pseudo.labels, unl)
    total = grad(l_atk, u, create_graph=False)
    probs_fixed = softmax_rows(forward_surrogate(
        trained.a_hat, x, trained.w1.detach(), trained.w2.detach()))
    l_fixed = loss_attack(probs_fixed, pseudo.labels, unl)
    fixed = grad(l_fixed, u, create_graph=False)
    return MetaGradient(total, fixed, total - fixed, float(l_atk.value[0, 0]))


def flip_score(metagrad, adj: np.ndarray, flipped=frozenset()):
    """First-order improvement score per undirected pair, plus its argmax.

    ``S_uv = -(1 - 2 A_uv) g_uv``: positive where the admissible move
    (adding a non-edge, removing an edge) decreases the attack loss.  The
    diagonal, the lower triangle, and already-flipped pairs are masked;
    ties resolve to the lexicographically smallest (u, v) pair.
    """
    g = metagrad.total if isinstance(metagrad, MetaGradient) else metagrad
    n = adj.shape[0]
    scores = -(1.0 - 2.0 * adj) * g
    scores[np.tril_indices(n)] = -np.inf
    for (fu, fv) in flipped:
        scores[fu, fv] = -np.inf
    flat = int(np.argmax(scores))
    u, v = divmod(flat, n)
    if not np.isfinite(scores[u, v]):
        raise AttackError("every candidate pair is masked (budget too large)")
    return scores, (u, v)


def _snapshot(method: str, cfg: SurrogateConfig, precision: str,
              extra: dict | None = None) -> dict:
    snap = {"method": method, "surrogate": asdict(cfg),
            "precision": precision}
    if extra:
        snap.update(extra)
    return snap


def comparable_config(config: dict) -> dict:
    """The part of an attack config that identifies the run: diagnostics
    and CLI run snapshots accumulate per-run data and are excluded."""
    return {k: v for k, v in config.items()
            if k not in ("diagnostics", "run")}


def attack_meta(ds: GraphDataset, ptb_rate: float, variant: str,
                cfg: SurrogateConfig | None = None, seed: int = 0, *,
                precision: str = "f64", budget: int | None = None,
                warm_start: AttackResult | None = None,
                progress=None) -> AttackResult:
    """Greedy meta-gradient attack: Delta rounds of retrain-score-flip.

    The surrogate restarts from a fresh seed-derived initialization before
    every flip; the objective follows the variant (plain CE, CE plus the
    sample or dimension contrastive term, or the frozen pretrained
    surrogate).  ``warm_start`` continues a shorter run of the same
    configuration — greedy runs extend prefix-exactly, so a larger-budget
    result contains every smaller-budget result of the same seed.
    """
    if variant not in META_VARIANTS:
        raise ValueError(f"unknown meta variant {variant!r}")
    cfg = replace(cfg or SurrogateConfig(),
                  objective=VARIANT_OBJECTIVES[variant])
    delta = budget if budget is not None else budget_from_rate(ds.num_edges,
                                                               ptb_rate)
    config = _snapshot(variant, cfg, precision)
    pl = pseudo_labels(ds, cfg, seed=seed)

    adj = ds.adj.copy()
    flips: list[Flip] = []
    bias_linf = 0.0
    if warm_start is not None:
        if (warm_start.method, warm_start.seed) != (variant, seed) or \
                comparable_config(warm_start.config) != config:
            raise AttackError("warm start differs in method, seed, or config")
        if warm_start.budget > delta:
            raise AttackError("warm start already exceeds the budget")
        flips = list(warm_start.flips)
        adj = apply_flips(ds.adj, flips)
        bias_linf = (warm_start.config.get("diagnostics", {})
                     .get("bias_term_linf", 0.0))

    flipped = {(f.u, f.v) for f in flips}
    frozen = variant == "metattack_no"
    for k in range(len(flips), delta):
        init_rng, aug_rng = attack_streams(seed, k)
        mg = meta_gradient(ds.with_adjacency(adj), pl, cfg,
                           init_rng=init_rng, aug_rng=aug_rng, frozen=frozen,
                           precision=precision)
        bias_linf = max(bias_linf, float(np.abs(mg.bias_term).max()))
        _, (u, v) = flip_score(mg, adj, flipped)
        score = float(-(1.0 - 2.0 * adj[u, v]) * mg.total[u, v])
        if score <= 0.0:
            warnings.warn(f"non-positive flip score {score:.3e} at step {k}",
                          RuntimeWarning, stacklevel=2)
        direction = "remove" if adj[u, v] == 1.0 else "add"
        adj[u, v] = adj[v, u] = 1.0 - adj[u, v]
        flip = Flip(u, v, k, score, direction)
        flips.append(flip)
        flipped.add((u, v))
        if progress is not None:
            progress(flip)
    config = dict(config, diagnostics={"bias_term_linf": bias_linf})
    return AttackResult(variant, seed, delta, ptb_rate, flips, config, adj)


# ---------------------------------------------------------------------------
# projected gradient attack on the frozen surrogate
# ---------------------------------------------------------------------------

def project_budget(s: np.ndarray, delta: float) -> np.ndarray:
    """Euclidean projection onto {0 <= s <= 1, sum(s) <= delta}.

    If box clipping alone satisfies the budget it is the projection;
    otherwise the budget is active and the shifted clip ``clip01(s - mu)``
    is driven to sum exactly delta by bisection on mu.
    """
    clipped = np.clip(s, 0.0, 1.0)
    if clipped.sum() <= delta:
        return clipped
    lo, hi = float(s.min() - 1.0), float(s.max())

    def mass(mu):
        return float(np.clip(s - mu, 0.0, 1.0).sum())

    if mass(lo) < delta or mass(hi) > delta:
        raise AttackError(
            f"projection failed to bracket: mass({lo:.3e})={mass(lo):.3e}, "
            f"mass({hi:.3e})={mass(hi):.3e}, delta={delta}")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if mass(mid) > delta:
            lo = mid
        else:
            hi = mid
    return np.clip(s - hi, 0.0, 1.0)


def _cw_objective(logits: Var, pseudo: np.ndarray, unl: np.ndarray,
                  kappa: float) -> Var:
    """Negated Carlini-Wagner margin (so that ascent misclassifies).

    margin_u = z[u, y_u] - z[u, c*_u] hinged at -kappa, with c* the
    strongest competing class held constant during the step's backward.
    """
    t = logits.tape
    n, k = logits.shape
    z = logits.value
    rows = np.arange(n)
    competitors = z.copy()
    competitors[rows, pseudo] = -np.inf
    cstar = competitors.argmax(axis=1)
    oh_y = np.zeros((n, k))
    oh_y[rows, pseudo] = 1.0
    oh_c = np.zeros((n, k))
    oh_c[rows, cstar] = 1.0
    margin = ((logits * t.constant(oh_y)).sum(axis=1)
              - (logits * t.constant(oh_c)).sum(axis=1))
    hinged = margin.clip_min(-kappa)
    return -gather_rows(hinged, unl).sum()


def _pgd_forward(ds: GraphDataset, pl: PseudoLabels, s_vec: np.ndarray,
                 loss: str, kappa: float, precision: str):
    """Tape for the relaxed poisoned graph; returns (objective, leaf)."""
    n = ds.n
    iu = np.triu_indices(n, 1)
    t = Tape(precision=precision)
    s_mat = np.zeros((n, n))
    s_mat[iu] = s_vec
    su = t.input(s_mat)
    sv = su + su.T
    a0 = t.constant(ds.adj)
    direction = t.constant(1.0 - 2.0 * ds.adj)
    a_hat = gcn_normalize(a0 + direction * sv)
    logits = forward_surrogate(a_hat, t.input(ds.features, diff=False),
                               t.constant(pl.w1), t.constant(pl.w2))
    unl = ds.split.unlabeled
    if loss == "ce":
        obj = loss_ce(softmax_rows(logits), pl.labels, unl)
    else:
        obj = _cw_objective(logits, pl.labels, unl, kappa)
    return obj, su, iu


def _discrete_objective(ds: GraphDataset, pl: PseudoLabels,
                        adj: np.ndarray, loss: str, kappa: float) -> float:
    """Plain numpy objective value of a discretized candidate."""
    ai = adj + np.eye(adj.shape[0])
    inv = 1.0 / np.sqrt(ai.sum(axis=1))
    ah = ai * np.outer(inv, inv)
    z = (ah @ (ah @ (ds.features @ pl.w1))) @ pl.w2
    unl = ds.split.unlabeled
    if loss == "ce":
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        p = e / e.sum(axis=1, keepdims=True)
        picked = np.clip(p[unl, pl.labels[unl]], 1e-12, None)
        return float(-np.log(picked).mean())
    rows = np.arange(ds.n)
    competitors = z.copy()
    competitors[rows, pl.labels] = -np.inf
    margin = z[rows, pl.labels] - competitors.max(axis=1)
    return float(-np.maximum(margin[unl], -kappa).sum())


def attack_pgd(ds: GraphDataset, ptb_rate: float, loss: str = "ce",
               cfg: SurrogateConfig | None = None, seed: int = 0, *,
               steps: int = 200, n_samples: int = 20, kappa: float = 0.0,
               precision: str = "f64", budget: int | None = None,
               progress=None) -> AttackResult:
    """Projected gradient attack with continuous flip variables.

    One relaxation variable per undirected pair drives the effective
    adjacency ``A + (1-2A) o S``; ascent steps of size
    ``0.01 delta / ||g||_inf`` are projected back onto the budget polytope,
    and the final point is discretized by Bernoulli sampling (best feasible
    sample wins, deterministically padded to exactly Delta flips).
    """
    if loss not in ("ce", "cw"):
        raise ValueError(f"unknown pgd loss {loss!r}")
    cfg = replace(cfg or SurrogateConfig(), objective="ce")
    delta = budget if budget is not None else budget_from_rate(ds.num_edges,
                                                               ptb_rate)
    method = f"pgd_{loss}"
    config = _snapshot(method, cfg, precision,
                       {"pgd": {"steps": steps, "n_samples": n_samples,
                                "kappa": kappa}})
    pl = pseudo_labels(ds, cfg, seed=seed)
    n = ds.n
    iu = np.triu_indices(n, 1)
    npairs = iu[0].size
    if delta > npairs:
        raise AttackError(f"budget {delta} exceeds {npairs} candidate pairs")

    s = np.zeros(npairs)
    for step in range(steps):
        obj, su, _ = _pgd_forward(ds, pl, s, loss, kappa, precision)
        g_mat = grad(obj, su, create_graph=False)
        g = g_mat[iu]
        gmax = float(np.abs(g).max())
        if gmax > 0.0:
            s = s + (0.01 * delta / gmax) * g
        s = project_budget(s, delta)
        if progress is not None and (step + 1) % 50 == 0:
            progress({"step": step + 1, "objective": float(obj.value[0, 0])})

    rng = np.random.default_rng([seed, 3])
    best_mask, best_val = None, -np.inf
    for _ in range(n_samples):
        mask = rng.random(npairs) < s
        if int(mask.sum()) > delta:
            continue
        cand = ds.adj.copy()
        uu, vv = iu[0][mask], iu[1][mask]
        cand[uu, vv] = cand[vv, uu] = 1.0 - cand[uu, vv]
        val = _discrete_objective(ds, pl, cand, loss, kappa)
        if val > best_val:
            best_mask, best_val = mask, val
    if best_mask is None:
        best_mask = np.zeros(npairs, dtype=bool)

    # Deterministic top-up to exactly Delta flips by descending relaxation
    # weight (row-major ties).
    chosen = np.flatnonzero(best_mask)[np.argsort(-s[best_mask],
                                                  kind="stable")].tolist()
    if len(chosen) > delta:
        chosen = chosen[:delta]
    remaining = np.flatnonzero(~best_mask)
    for idx in remaining[np.argsort(-s[remaining], kind="stable")]:
        if len(chosen) >= delta:
            break
        chosen.append(int(idx))

    flips = []
    for step, idx in enumerate(chosen):
        u, v = int(iu[0][idx]), int(iu[1][idx])
        direction = "remove" if ds.adj[u, v] == 1.0 else "add"
        flips.append(Flip(u, v, step, float(s[idx]), direction))
    result = AttackResult(method, seed, delta, ptb_rate, flips, config)
    result.adj = apply_flips(ds.adj, flips)
    return result


# ---------------------------------------------------------------------------
# random and DICE baselines
# ---------------------------------------------------------------------------

def attack_random(ds: GraphDataset, ptb_rate: float, seed: int = 0, *,
                  budget: int | None = None) -> AttackResult:
    """Delta uniformly random flips over distinct unordered pairs."""
    delta = budget if budget is not None else budget_from_rate(ds.num_edges,
                                                               ptb_rate)
    n = ds.n
    if delta > n * (n - 1) // 2:
        raise AttackError(f"budget {delta} exceeds available pairs")
    rng = np.random.default_rng([seed, 4])
    adj = ds.adj.copy()
    flips, seen = [], set()
    while len(flips) < delta:
        u, v = int(rng.integers(n)), int(rng.integers(n))
        if u == v:
            continue
        u, v = min(u, v), max(u, v)
        if (u, v) in seen:
            continue
        direction = "remove" if adj[u, v] == 1.0 else "add"
        adj[u, v] = adj[v, u] = 1.0 - adj[u, v]
        flips.append(Flip(u, v, len(flips), 0.0, direction))
        seen.add((u, v))
    config = {"method": "random"}
    return AttackResult("random", seed, delta, ptb_rate, flips, config, adj)


def attack_dice(ds: GraphDataset, ptb_rate: float, seed: int = 0, *,
                labels: np.ndarray | None = None,
                budget: int | None = None) -> AttackResult:
    """DICE: delete same-label edges, add different-label non-edges.

    Targets an even add/delete mix; if the same-label edge pool is smaller
    than half the budget, the shortfall becomes extra additions.
    """
    delta = budget if budget is not None else budget_from_rate(ds.num_edges,
                                                               ptb_rate)
    y = ds.labels if labels is None else np.asarray(labels)
    rng = np.random.default_rng([seed, 4])
    n = ds.n
    edges = ds.edge_list
    same = edges[y[edges[:, 0]] == y[edges[:, 1]]]
    n_del = min(delta // 2, len(same))
    deleted = same[rng.choice(len(same), size=n_del, replace=False)] \
        if n_del else np.empty((0, 2), dtype=int)

    adj = ds.adj.copy()
    flips, seen = [], set()
    for u, v in deleted:
        u, v = int(u), int(v)
        adj[u, v] = adj[v, u] = 0.0
        flips.append(Flip(u, v, len(flips), 0.0, "remove"))
        seen.add((u, v))

    n_add = delta - len(flips)
    attempts = 0
    while n_add > 0:
        attempts += 1
        if attempts > 500 * delta + 1000:
            raise AttackError("not enough eligible different-label pairs")
        u, v = int(rng.integers(n)), int(rng.integers(n))
        if u == v or y[u] == y[v]:
            continue
        u, v = min(u, v), max(u, v)
        if (u, v) in seen or adj[u, v] == 1.0:
            continue
        adj[u, v] = adj[v, u] = 1.0
        flips.append(Flip(u, v, len(flips), 0.0, "add"))
        seen.add((u, v))
        n_add -= 1
    config = {"method": "dice"}
    return AttackResult("dice", seed, delta, ptb_rate, flips, config, adj)


# ---------------------------------------------------------------------------
# dispatcher
# ---------------------------------------------------------------------------

def run_attack(ds: GraphDataset, method: str, ptb_rate: float, seed: int = 0,
               cfg: SurrogateConfig | None = None, *, precision: str = "f64",
               budget: int | None = None, progress=None,
               **pgd_kwargs) -> AttackResult:
    """Run any named attack method with shared conventions."""
    if method in META_VARIANTS:
        return attack_meta(ds, ptb_rate, method, cfg, seed,
                           precision=precision, budget=budget,
                           progress=progress)
    if method in ("pgd_ce", "pgd_cw"):
        return attack_pgd(ds, ptb_rate, method.split("_")[1], cfg, seed,
                          precision=precision, budget=budget,
                          progress=progress, **pgd_kwargs)
    if method == "random":
        return attack_random(ds, ptb_rate, seed, budget=budget)
    if method == "dice":
        return attack_dice(ds, ptb_rate, seed, budget=budget)
    raise ValueError(f"unknown attack method {method!r}; "
                     f"choose from {METHODS}")
