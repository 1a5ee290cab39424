"""Graph datasets: loading, saving, splits, normalization, augmentation,
edge classification and synthetic generators.

A dataset directory holds five files::

    edges.tsv      one undirected edge per line, "u<TAB>v" with u < v, 0-indexed
    features.csv   one comma-separated row of reals per node (optional; identity
                   features are substituted for featureless graphs)
    labels.txt     one integer class id per node
    split.json     {"train": [...], "val": [...], "test": [...]} (optional)
    meta.json      {"name": ..., "num_classes": ...}

Loading restricts the graph to its largest connected component and
re-indexes nodes densely.  Edge classes are defined against the training
set only: L-L joins two training nodes, U-U joins two nodes outside the
training set (validation and test both count as unlabeled), L-U is mixed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .tape import Var, outer


class DatasetError(ValueError):
    """Raised for malformed dataset directories or invalid dataset contents."""


@dataclass(frozen=True)
class SplitAssignment:
    """Disjoint train/val/test node index arrays covering all nodes."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def to_dict(self) -> dict:
        return {
            "train": self.train.tolist(),
            "val": self.val.tolist(),
            "test": self.test.tolist(),
        }

    @property
    def unlabeled(self) -> np.ndarray:
        """Nodes outside the training set, in ascending order."""
        return np.sort(np.concatenate([self.val, self.test]))


@dataclass(frozen=True)
class GraphDataset:
    """Dense undirected graph with node features, labels and a fixed split."""

    name: str
    adj: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: SplitAssignment

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def num_edges(self) -> int:
        return int(np.triu(self.adj, 1).sum())

    @property
    def edge_list(self) -> np.ndarray:
        """(m, 2) array of edges with u < v, in row-major order."""
        return np.argwhere(np.triu(self.adj, 1) > 0)

    def with_adjacency(self, adj: np.ndarray) -> "GraphDataset":
        return GraphDataset(self.name, adj, self.features, self.labels,
                            self.num_classes, self.split)


def validate_dataset(ds: GraphDataset) -> None:
    n = ds.labels.shape[0]
    if ds.adj.shape != (n, n):
        raise DatasetError(f"adjacency shape {ds.adj.shape} does not match {n} labels")
    if not np.array_equal(ds.adj, ds.adj.T):
        raise DatasetError("adjacency is not symmetric")
    if np.trace(ds.adj) != 0:
        raise DatasetError("adjacency has self-loops")
    if not np.isin(ds.adj, (0.0, 1.0)).all():
        raise DatasetError("adjacency entries must be 0 or 1")
    if ds.features.shape[0] != n:
        raise DatasetError(f"{ds.features.shape[0]} feature rows for {n} nodes")
    if not np.isfinite(ds.features).all():
        raise DatasetError("features contain non-finite values")
    if ds.labels.min() < 0 or ds.labels.max() >= ds.num_classes:
        raise DatasetError(f"label outside [0, {ds.num_classes})")
    parts = np.concatenate([ds.split.train, ds.split.val, ds.split.test])
    if len(np.unique(parts)) != len(parts) or len(parts) != n:
        raise DatasetError("split is not a partition of the node set")
    if parts.min() < 0 or parts.max() >= n:
        raise DatasetError("split index out of range")


# ---------------------------------------------------------------------------
# directory format
# ---------------------------------------------------------------------------

def load_dataset(path: str | Path, split_seed: int = 0) -> GraphDataset:
    """Read a dataset directory, restrict to the largest connected component,
    re-index densely, and attach (or generate) a split."""
    path = Path(path)
    meta_file = path / "meta.json"
    if not meta_file.exists():
        raise DatasetError(f"missing meta.json in {path}")
    meta = json.loads(meta_file.read_text())
    name = meta["name"]
    num_classes = int(meta["num_classes"])

    labels = np.loadtxt(path / "labels.txt", dtype=np.int64, ndmin=1)
    n = labels.shape[0]
    if n == 0:
        raise DatasetError("labels.txt is empty")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise DatasetError(f"label outside [0, {num_classes}) in labels.txt")

    edges = np.loadtxt(path / "edges.tsv", dtype=np.int64, delimiter="\t", ndmin=2)
    if edges.size == 0:
        raise DatasetError("edges.tsv is empty")
    if edges.shape[1] != 2:
        raise DatasetError("edges.tsv rows must be 'u<TAB>v'")
    if (edges[:, 0] >= edges[:, 1]).any():
        raise DatasetError("edges must satisfy u < v (no self-loops, no reversed rows)")
    if edges.max() >= n or edges.min() < 0:
        raise DatasetError("edge endpoint out of range")
    if len(np.unique(edges[:, 0] * n + edges[:, 1])) != len(edges):
        raise DatasetError("duplicate edges in edges.tsv")

    feat_file = path / "features.csv"
    features = None
    if feat_file.exists():
        features = np.loadtxt(feat_file, dtype=np.float64, delimiter=",", ndmin=2)
        if features.shape[0] != n:
            raise DatasetError(f"{features.shape[0]} feature rows for {n} nodes")

    # largest connected component, densely re-indexed
    g = sp.csr_matrix(
        (np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n)
    )
    ncomp, comp = connected_components(g, directed=False)
    largest = np.argmax(np.bincount(comp))
    keep = np.flatnonzero(comp == largest)
    remap = -np.ones(n, dtype=np.int64)
    remap[keep] = np.arange(len(keep))

    mask = remap[edges[:, 0]] >= 0
    e = remap[edges[mask]]
    nn = len(keep)
    adj = np.zeros((nn, nn), dtype=np.float64)
    adj[e[:, 0], e[:, 1]] = 1.0
    adj[e[:, 1], e[:, 0]] = 1.0
    labels = labels[keep]
    if features is None:
        features = np.eye(nn, dtype=np.float64)  # featureless graphs use identity
    else:
        features = features[keep]

    split_file = path / "split.json"
    if split_file.exists():
        raw = json.loads(split_file.read_text())
        for part in ("train", "val", "test"):
            if part not in raw:
                raise DatasetError(f"split.json missing {part!r}")
        parts = {}
        for part in ("train", "val", "test"):
            ids = np.asarray(raw[part], dtype=np.int64)
            if ids.size and (ids.min() < 0 or ids.max() >= n):
                raise DatasetError(f"split {part} index out of range")
            kept = remap[ids]
            parts[part] = np.sort(kept[kept >= 0])
        split = SplitAssignment(parts["train"], parts["val"], parts["test"])
        if split.train.size == 0:
            raise DatasetError("split.json train set is empty after LCC restriction")
    else:
        split = make_split(labels, seed=split_seed)

    ds = GraphDataset(name, adj, features, labels, num_classes, split)
    validate_dataset(ds)
    return ds


def save_dataset(ds: GraphDataset, path: str | Path) -> None:
    """Write the dataset directory; floats are kept at full round-trip precision."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    np.savetxt(path / "edges.tsv", ds.edge_list, fmt="%d", delimiter="\t")
    np.savetxt(path / "features.csv", ds.features, fmt="%.17g", delimiter=",")
    np.savetxt(path / "labels.txt", ds.labels, fmt="%d")
    (path / "split.json").write_text(json.dumps(ds.split.to_dict()))
    (path / "meta.json").write_text(
        json.dumps({"name": ds.name, "num_classes": ds.num_classes})
    )


# ---------------------------------------------------------------------------
# splits and edge classes
# ---------------------------------------------------------------------------

def make_split(labels: np.ndarray, train_frac: float = 0.1, val_frac: float = 0.1,
               seed: int = 0) -> SplitAssignment:
    """Stratified split: every class contributes at least one training node,
    train/val sizes are proportional per class, the remainder is test."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for c in range(labels.max() + 1):
        ids = np.flatnonzero(labels == c)
        rng.shuffle(ids)
        n_c = len(ids)
        n_tr = max(1, int(round(train_frac * n_c)))
        n_va = min(int(round(val_frac * n_c)), n_c - n_tr)
        train.append(ids[:n_tr])
        val.append(ids[n_tr:n_tr + n_va])
        test.append(ids[n_tr + n_va:])
    return SplitAssignment(
        np.sort(np.concatenate(train)),
        np.sort(np.concatenate(val)),
        np.sort(np.concatenate(test)),
    )


EDGE_CLASSES = ("LL", "LU", "UU")


def classify_edge(u: int, v: int, split: SplitAssignment) -> str:
    """Edge class against the training set: LL, LU or UU."""
    labeled = int(u in split.train) + int(v in split.train)
    return ("UU", "LU", "LL")[labeled]


def edge_class_indices(pairs: np.ndarray, split: SplitAssignment, n: int) -> np.ndarray:
    """Vectorized edge classes for an (m, 2) pair array: 2=LL, 1=LU, 0=UU."""
    is_train = np.zeros(n, dtype=np.int64)
    is_train[split.train] = 1
    return is_train[pairs[:, 0]] + is_train[pairs[:, 1]]


# ---------------------------------------------------------------------------
# tape operations
# ---------------------------------------------------------------------------

def gcn_normalize(a: Var) -> Var:
    """Symmetric degree normalization with self-loops, recorded on the tape:
    D^{-1/2} (A + I) D^{-1/2} with D the self-loop-augmented degrees.

    Gradients flow through the degree terms as well as the adjacency
    entries; relaxed (non-binary) adjacency values are permitted.
    """
    n = a.shape[0]
    eye = a.tape.constant(np.eye(n), key=("eye", n))
    ai = a + eye
    inv_sqrt = ai.sum(axis=1).sqrt().recip()
    return ai * outer(inv_sqrt, inv_sqrt)


def sample_drop_mask(edge_list: np.ndarray, n: int, ratio: float,
                     rng: np.random.Generator) -> np.ndarray:
    """Constant 0/1 mask that removes floor(ratio * m) distinct undirected
    edges of the given edge list (both triangles zeroed)."""
    m = len(edge_list)
    k = int(np.floor(ratio * m))
    mask = np.ones((n, n), dtype=np.float64)
    if k > 0:
        chosen = rng.choice(m, size=k, replace=False)
        uu, vv = edge_list[chosen, 0], edge_list[chosen, 1]
        mask[uu, vv] = 0.0
        mask[vv, uu] = 0.0
    return mask


def augment_drop_edges(a: Var, edge_list: np.ndarray, ratio: float,
                       rng: np.random.Generator) -> Var:
    """Stochastic edge-drop view of the adjacency.

    The dropped-edge mask is sampled from the current (binary) edge list and
    enters the tape as a constant, so it is held fixed under differentiation;
    gradients flow through the surviving entries only.
    """
    if ratio == 0.0:
        return a
    mask = sample_drop_mask(edge_list, a.shape[0], ratio, rng)
    return a * a.tape.constant(mask)


# ---------------------------------------------------------------------------
# synthetic generators
# ---------------------------------------------------------------------------

def _class_features(labels: np.ndarray, dim: int, num_classes: int, noise: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Class-mean Gaussian features: means have unit expected norm, ``noise``
    is the ratio of noise magnitude to mean magnitude."""
    means = rng.normal(0.0, 1.0, (num_classes, dim)) / np.sqrt(dim)
    return means[labels] + noise * rng.normal(0.0, 1.0, (labels.size, dim)) / np.sqrt(dim)


def generate_csbm(n: int, num_classes: int, p_in: float, p_out: float, dim: int,
                  noise: float = 0.5, seed: int = 0, train_frac: float = 0.1,
                  val_frac: float = 0.1, name: str | None = None) -> GraphDataset:
    """Contextual stochastic block model: balanced classes, intra-class edge
    probability ``p_in``, inter-class ``p_out``, Gaussian class-mean features."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % num_classes
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, p_in, p_out)
    draw = rng.uniform(size=(n, n))
    upper = np.triu(draw < prob, 1)
    adj = (upper | upper.T).astype(np.float64)
    features = _class_features(labels, dim, num_classes, noise, rng)
    split = make_split(labels, train_frac, val_frac, seed)
    ds = GraphDataset(name or f"csbm-n{n}-k{num_classes}-s{seed}", adj, features,
                      labels, num_classes, split)
    validate_dataset(ds)
    return ds


def generate_citation_graph(n: int, m: int, dim: int, num_classes: int,
                            homophily: float = 0.8, noise: float = 0.5,
                            seed: int = 0, train_frac: float = 0.1,
                            val_frac: float = 0.1,
                            name: str | None = None) -> GraphDataset:
    """Connected homophilous graph with an exact edge count.

    Construction: a random spanning tree inside every class, a tree over the
    classes (guaranteeing one connected component), then random extra edges,
    intra-class with probability ``homophily``.  Useful for building datasets
    that match the node/edge/feature statistics of citation benchmarks.
    """
    if m < n - 1:
        raise DatasetError(f"need at least n-1={n - 1} edges for connectivity, got {m}")
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % num_classes
    edges = set()

    def add(u, v):
        if u == v:
            return False
        key = (min(u, v), max(u, v))
        if key in edges:
            return False
        edges.add(key)
        return True

    class_nodes = [np.flatnonzero(labels == c) for c in range(num_classes)]
    for ids in class_nodes:
        order = rng.permutation(ids)
        for i in range(1, len(order)):  # random recursive tree inside the class
            add(order[i], order[rng.integers(i)])
    for c in range(1, num_classes):  # connect the class trees
        other = rng.integers(c)
        add(rng.choice(class_nodes[c]), rng.choice(class_nodes[other]))

    attempts = 0
    while len(edges) < m:
        attempts += 1
        if attempts > 200 * m:
            raise DatasetError("edge sampling failed; graph too dense for parameters")
        if rng.uniform() < homophily:
            c = rng.integers(num_classes)
            ids = class_nodes[c]
            if len(ids) < 2:
                continue
            u, v = rng.choice(ids, size=2, replace=False)
        else:
            u = rng.integers(n)
            v = rng.integers(n)
        add(int(u), int(v))

    pair = np.array(sorted(edges), dtype=np.int64)
    adj = np.zeros((n, n), dtype=np.float64)
    adj[pair[:, 0], pair[:, 1]] = 1.0
    adj[pair[:, 1], pair[:, 0]] = 1.0
    features = _class_features(labels, dim, num_classes, noise, rng)
    split = make_split(labels, train_frac, val_frac, seed)
    ds = GraphDataset(name or f"citation-n{n}-m{m}-s{seed}", adj, features, labels,
                      num_classes, split)
    validate_dataset(ds)
    return ds


def induced_subgraph(ds: GraphDataset, max_nodes: int, seed: int = 0,
                     train_frac: float = 0.1, val_frac: float = 0.1) -> GraphDataset:
    """Connected induced subgraph of up to ``max_nodes`` nodes (breadth-first
    ball around a random start), with a fresh stratified split."""
    rng = np.random.default_rng(seed)
    start = int(rng.integers(ds.n))
    seen = {start}
    queue = [start]
    order = []
    while queue and len(order) < max_nodes:
        u = queue.pop(0)
        order.append(u)
        for v in np.flatnonzero(ds.adj[u]):
            if v not in seen:
                seen.add(int(v))
                queue.append(int(v))
    keep = np.sort(np.array(order[:max_nodes]))
    adj = ds.adj[np.ix_(keep, keep)]

    # restrict to the largest component of the induced graph
    g = sp.csr_matrix(adj)
    _, comp = connected_components(g, directed=False)
    largest = np.argmax(np.bincount(comp))
    inner = np.flatnonzero(comp == largest)
    keep = keep[inner]
    adj = ds.adj[np.ix_(keep, keep)]

    labels = ds.labels[keep]
    split = make_split(labels, train_frac, val_frac, seed)
    sub = GraphDataset(f"{ds.name}-sub{len(keep)}", adj, ds.features[keep],
                       labels, ds.num_classes, split)
    validate_dataset(sub)
    return sub
