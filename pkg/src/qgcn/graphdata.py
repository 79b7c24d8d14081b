"""Graph datasets: citation-file loading, adjacency normalization, amplitude
encoding, and synthetic grid/demo graph generators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .statevector import StateVector, from_amplitudes


def next_power_of_two(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


@dataclass
class GraphDataset:
    """Undirected graph with node features, labels and train/test masks.

    Self-loops are never stored as edges; normalization adds them.
    Labels are class ids, -1 for unknown.
    """

    num_nodes: int
    edges: list[tuple[int, int]]
    features: np.ndarray  # (N, D)
    labels: np.ndarray    # (N,) int
    train_mask: np.ndarray
    test_mask: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = self.num_nodes
        if self.features.shape[0] != n:
            raise ValueError("feature row count must equal num_nodes")
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a},{b}) out of range")
            if a == b:
                raise ValueError("self-loops must not be stored explicitly")
        if np.any(self.train_mask & self.test_mask):
            raise ValueError("train and test masks must be disjoint")
        if np.any(self.labels[self.train_mask] < 0):
            raise ValueError("every train node needs a label")

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def adjacency(self) -> np.ndarray:
        """0/1 adjacency without self-loops, shape (N, N)."""
        a = np.zeros((self.num_nodes, self.num_nodes))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a


@dataclass
class NormalizedAdjacency:
    """Symmetric degree-normalized adjacency, zero-padded to a power of two.

    Padded phantom nodes carry a lone self-loop (diagonal 1) so the degree
    matrix stays invertible; they never couple to real nodes.
    """

    matrix: np.ndarray
    pad_count: int

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_real(self) -> int:
        return self.size - self.pad_count

    def real_block(self) -> np.ndarray:
        n = self.num_real
        return self.matrix[:n, :n]


def load_cora(content_path, cites_path) -> GraphDataset:
    """Load a citation dataset in the tab-separated .content/.cites layout.

    .content lines: <id> <f_0> ... <f_{D-1}> <label>; .cites lines:
    <cited-id> <citing-id>. Citation direction is discarded. The train mask
    selects the first 20 labeled nodes of each class in file order.
    """
    ids: dict[str, int] = {}
    rows = []
    label_names = []
    labels_raw = []
    with open(content_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 3:
                raise ValueError(f"{content_path}:{lineno}: expected id, features, label")
            node_id, feats, label = parts[0], parts[1:-1], parts[-1]
            if node_id in ids:
                raise ValueError(f"{content_path}:{lineno}: duplicate node id {node_id!r}")
            ids[node_id] = len(rows)
            try:
                rows.append([float(v) for v in feats])
            except ValueError as exc:
                raise ValueError(f"{content_path}:{lineno}: bad feature value") from exc
            labels_raw.append(label)
            if label not in label_names:
                label_names.append(label)
    if not rows:
        raise ValueError(f"{content_path}: no nodes")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{content_path}: inconsistent feature widths {sorted(widths)}")

    class_names = sorted(label_names)
    class_id = {name: i for i, name in enumerate(class_names)}
    labels = np.array([class_id[l] for l in labels_raw], dtype=int)

    edge_set = set()
    with open(cites_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise ValueError(f"{cites_path}:{lineno}: expected two node ids")
            cited, citing = parts
            for node_id in (cited, citing):
                if node_id not in ids:
                    raise ValueError(f"{cites_path}:{lineno}: unknown node id {node_id!r}")
            a, b = ids[cited], ids[citing]
            if a == b:
                continue
            edge_set.add((min(a, b), max(a, b)))

    n = len(rows)
    train_mask = np.zeros(n, dtype=bool)
    per_class = {c: 0 for c in range(len(class_names))}
    for i in range(n):
        c = labels[i]
        if per_class[c] < 20:
            per_class[c] += 1
            train_mask[i] = True
    test_mask = ~train_mask

    return GraphDataset(
        num_nodes=n,
        edges=sorted(edge_set),
        features=np.array(rows),
        labels=labels,
        train_mask=train_mask,
        test_mask=test_mask,
        class_names=class_names,
    )


def normalize_adjacency(dataset: GraphDataset) -> NormalizedAdjacency:
    """D^{-1/2} (A + I) D^{-1/2}, padded to the next power of two."""
    return normalize_adjacency_matrix(dataset.adjacency())


def normalize_adjacency_matrix(adjacency: np.ndarray) -> NormalizedAdjacency:
    """Normalize an explicit 0/1 adjacency (no self-loops) and pad."""
    n = adjacency.shape[0]
    a_tilde = adjacency + np.eye(n)
    deg = a_tilde.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    a_hat = inv_sqrt[:, None] * a_tilde * inv_sqrt[None, :]
    size = next_power_of_two(n)
    out = np.zeros((size, size))
    out[:n, :n] = a_hat
    for i in range(n, size):
        out[i, i] = 1.0
    return NormalizedAdjacency(matrix=out, pad_count=size - n)


def amplitude_encode(features: np.ndarray) -> StateVector:
    """Encode a (N_pad, D_pad) matrix as amplitudes, node index major.

    Amplitudes are X / ||X||_F; both dimensions must be powers of two.
    """
    feats = np.asarray(features, dtype=float)
    n, d = feats.shape
    if next_power_of_two(n) != n or next_power_of_two(d) != d:
        raise ValueError("matrix dimensions must be powers of two")
    norm = np.linalg.norm(feats)
    if norm == 0:
        raise ValueError("cannot amplitude-encode an all-zero matrix")
    return from_amplitudes((feats / norm).reshape(-1))


def pad_features(features: np.ndarray, num_nodes_pad: int | None = None,
                 num_dims_pad: int | None = None) -> np.ndarray:
    """Zero-pad a feature matrix to power-of-two dimensions."""
    n, d = features.shape
    np_ = num_nodes_pad or next_power_of_two(n)
    dp = num_dims_pad or next_power_of_two(d)
    out = np.zeros((np_, dp))
    out[:n, :d] = features
    return out


def grid_adjacency_1d(n: int) -> np.ndarray:
    """Tridiagonal self-plus-neighbors adjacency of an n-frame chain."""
    if n < 1:
        raise ValueError("n must be >= 1")
    m = np.eye(n)
    idx = np.arange(n - 1)
    m[idx, idx + 1] = 1.0
    m[idx + 1, idx] = 1.0
    return m


def _grid_band_block(n: int, corners: bool) -> np.ndarray:
    """n x n block with tridiagonal 1-bands on interior rows only; corner
    diagonal entries are 1 when `corners` is set and 0 otherwise."""
    v = np.zeros((n, n))
    for i in range(1, n - 1):
        v[i, i - 1:i + 2] = 1.0
    if corners and n >= 1:
        v[0, 0] = 1.0
        v[n - 1, n - 1] = 1.0
    return v


def grid_adjacency_2d(n: int) -> np.ndarray:
    """Block-tridiagonal n^2 x n^2 image adjacency.

    Block rows 0 and n-1 hold identity blocks on the diagonal; interior block
    row i carries the band (V1, V2, V3) at block columns (i-1, i, i+1), with
    V1 = V3 the open-cornered tridiagonal block and V2 its closed-corner
    variant. Note the source construction is asymmetric for n >= 3: interior
    rows list boundary neighbors that boundary rows do not list back.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    v_open = _grid_band_block(n, corners=False)
    v_closed = _grid_band_block(n, corners=True)
    m = np.zeros((n * n, n * n))
    eye = np.eye(n)

    def put(bi, bj, block):
        m[bi * n:(bi + 1) * n, bj * n:(bj + 1) * n] = block

    put(0, 0, eye)
    if n >= 2:
        put(n - 1, n - 1, eye)
    for i in range(1, n - 1):
        put(i, i - 1, v_open)
        put(i, i, v_closed)
        put(i, i + 1, v_open)
    return m


# The 8-node worked example: edges derived from the four signed-permutation
# terms whose sum gives the self-connected adjacency.
DEMO_EDGES = [(0, 1), (0, 2), (0, 5), (1, 3), (1, 4),
              (2, 4), (2, 6), (3, 5), (3, 7), (4, 5)]


def demo_graph() -> GraphDataset:
    """Fixed 8-node, 2-class toy dataset over the worked-example topology."""
    labels = np.array([0, 0, 1, 0, 1, 0, 1, 1])
    rng = np.random.default_rng(7)
    features = np.zeros((8, 4))
    for i, c in enumerate(labels):
        features[i, c] = 1.0
        features[i] += 0.15 * rng.random(4)
    mask = np.ones(8, dtype=bool)
    return GraphDataset(
        num_nodes=8,
        edges=list(DEMO_EDGES),
        features=features,
        labels=labels,
        train_mask=mask,
        test_mask=~mask,
    )


def demo_adjacency_tilde() -> np.ndarray:
    """Self-connected 0/1 adjacency of the 8-node worked example."""
    m = np.eye(8)
    for i, j in DEMO_EDGES:
        m[i, j] = m[j, i] = 1.0
    return m


def synthetic_citation(num_nodes: int = 512, num_features: int = 64,
                       num_classes: int = 7, train_per_class: int = 20,
                       intra_degree: float = 3.0, inter_degree: float = 0.6,
                       feature_noise: float = 0.35,
                       seed: int = 0) -> GraphDataset:
    """Random homophilous citation-style dataset (stochastic block model with
    bag-of-words features) for experiments when no real corpus is on disk."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, size=num_nodes)
    p_intra = min(1.0, intra_degree / max(1, num_nodes / num_classes))
    p_inter = min(1.0, inter_degree / max(1, num_nodes))
    edges = []
    for i in range(num_nodes):
        for j in range(i + 1, num_nodes):
            p = p_intra if labels[i] == labels[j] else p_inter
            if rng.random() < p:
                edges.append((i, j))
    words_per_class = num_features // num_classes
    features = np.zeros((num_nodes, num_features))
    for i in range(num_nodes):
        lo = labels[i] * words_per_class
        topical = rng.random(words_per_class) < 0.6
        features[i, lo:lo + words_per_class] = topical
        noise = rng.random(num_features) < feature_noise / num_features * 8
        features[i] = np.maximum(features[i], noise)
        if features[i].sum() == 0:
            features[i, lo] = 1.0
    train_mask = np.zeros(num_nodes, dtype=bool)
    counts = {c: 0 for c in range(num_classes)}
    for i in range(num_nodes):
        if counts[labels[i]] < train_per_class:
            counts[labels[i]] += 1
            train_mask[i] = True
    return GraphDataset(
        num_nodes=num_nodes,
        edges=edges,
        features=features,
        labels=labels,
        train_mask=train_mask,
        test_mask=~train_mask,
    )
