import numpy as np
import pytest

from qgcn import graphdata as gd


@pytest.fixture
def tiny_cora(tmp_path):
    content = tmp_path / "tiny.content"
    cites = tmp_path / "tiny.cites"
    content.write_text(
        "p1\t1\t0\t1\tgenetic\n"
        "p2\t0\t1\t0\tneural\n"
        "p3\t1\t1\t0\tgenetic\n",
        encoding="utf-8")
    cites.write_text("p1\tp2\np3\tp1\np1\tp2\n", encoding="utf-8")
    return str(content), str(cites)


def test_load_tiny_dataset(tiny_cora):
    ds = gd.load_cora(*tiny_cora)
    assert ds.num_nodes == 3
    assert ds.num_features == 3
    assert ds.num_classes == 2
    assert sorted(ds.edges) == [(0, 1), (0, 2)]  # duplicates collapsed
    assert ds.train_mask.sum() == 3  # fewer than 20 per class: all train
    assert ds.class_names == ["genetic", "neural"]


def test_load_two_node_single_citation(tmp_path):
    content = tmp_path / "two.content"
    cites = tmp_path / "two.cites"
    content.write_text("a\t1\t0\tx\nb\t0\t1\ty\n", encoding="utf-8")
    cites.write_text("a\tb\n", encoding="utf-8")
    ds = gd.load_cora(str(content), str(cites))
    assert ds.num_nodes == 2
    assert ds.edges == [(0, 1)]
    assert ds.num_features == 2


def test_load_unknown_cite_id_raises(tmp_path):
    content = tmp_path / "bad.content"
    cites = tmp_path / "bad.cites"
    content.write_text("a\t1\tx\n", encoding="utf-8")
    cites.write_text("a\tmissing\n", encoding="utf-8")
    with pytest.raises(ValueError, match="unknown node id"):
        gd.load_cora(str(content), str(cites))


def test_load_duplicate_id_raises(tmp_path):
    content = tmp_path / "dup.content"
    cites = tmp_path / "dup.cites"
    content.write_text("a\t1\tx\na\t0\ty\n", encoding="utf-8")
    cites.write_text("", encoding="utf-8")
    with pytest.raises(ValueError, match="duplicate node id"):
        gd.load_cora(str(content), str(cites))


def test_load_malformed_line_raises(tmp_path):
    content = tmp_path / "mal.content"
    cites = tmp_path / "mal.cites"
    content.write_text("justone\n", encoding="utf-8")
    cites.write_text("", encoding="utf-8")
    with pytest.raises(ValueError, match="expected id"):
        gd.load_cora(str(content), str(cites))


def test_train_mask_first_twenty_per_class(tmp_path):
    lines = []
    cite_lines = []
    for i in range(60):
        label = "a" if i % 2 == 0 else "b"
        lines.append(f"n{i}\t1\t{label}")
        if i:
            cite_lines.append(f"n{i-1}\tn{i}")
    (tmp_path / "c.content").write_text("\n".join(lines) + "\n")
    (tmp_path / "c.cites").write_text("\n".join(cite_lines) + "\n")
    ds = gd.load_cora(str(tmp_path / "c.content"), str(tmp_path / "c.cites"))
    assert ds.train_mask.sum() == 40
    # first 20 of each class in file order: nodes 0..39 inclusive
    assert ds.train_mask[:40].all()
    assert not ds.train_mask[40:].any()
    assert not (ds.train_mask & ds.test_mask).any()


def test_normalize_single_node():
    ds = gd.GraphDataset(1, [], np.ones((1, 1)), np.array([0]),
                         np.array([True]), np.array([False]))
    adj = gd.normalize_adjacency(ds)
    np.testing.assert_allclose(adj.matrix, [[1.0]])
    assert adj.pad_count == 0


def test_normalize_two_connected_nodes():
    ds = gd.GraphDataset(2, [(0, 1)], np.ones((2, 1)), np.array([0, 1]),
                         np.array([True, True]), np.array([False, False]))
    adj = gd.normalize_adjacency(ds)
    np.testing.assert_allclose(adj.matrix, [[0.5, 0.5], [0.5, 0.5]], atol=1e-12)


def test_normalize_demo_graph_against_dense_oracle():
    a_tilde = gd.demo_adjacency_tilde()
    deg = a_tilde.sum(axis=1)
    oracle = a_tilde / np.sqrt(np.outer(deg, deg))
    ds = gd.demo_graph()
    adj = gd.normalize_adjacency(ds)
    np.testing.assert_allclose(adj.matrix, oracle, atol=1e-12)


def test_normalize_pads_to_power_of_two():
    edges = [(0, 1), (1, 2)]
    ds = gd.GraphDataset(3, edges, np.ones((3, 1)), np.zeros(3, dtype=int),
                         np.ones(3, dtype=bool), np.zeros(3, dtype=bool))
    adj = gd.normalize_adjacency(ds)
    assert adj.size == 4
    assert adj.pad_count == 1
    assert adj.matrix[3, 3] == 1.0
    assert np.all(adj.matrix[3, :3] == 0)
    np.testing.assert_allclose(adj.matrix, adj.matrix.T, atol=1e-12)


def test_normalized_symmetric_and_spectral_radius_bounded():
    rng = np.random.default_rng(0)
    for trial in range(10):
        n = int(rng.integers(2, 65))
        edges = sorted({(min(a, b), max(a, b))
                        for a, b in rng.integers(0, n, size=(2 * n, 2))
                        if a != b})
        ds = gd.GraphDataset(n, edges, np.ones((n, 1)), np.zeros(n, dtype=int),
                             np.ones(n, dtype=bool), np.zeros(n, dtype=bool))
        adj = gd.normalize_adjacency(ds)
        np.testing.assert_allclose(adj.matrix, adj.matrix.T, atol=1e-12)
        # power iteration for the spectral radius
        v = rng.random(adj.size)
        v /= np.linalg.norm(v)
        for _ in range(200):
            v = adj.matrix @ v
            v /= np.linalg.norm(v)
        radius = float(v @ adj.matrix @ v)
        assert radius <= 1.0 + 1e-9


def test_offdiagonal_nonzeros_equal_twice_edge_count(tiny_cora):
    ds = gd.load_cora(*tiny_cora)
    adj = gd.normalize_adjacency(ds)
    block = adj.real_block()
    off = np.count_nonzero(block) - np.count_nonzero(np.diag(block))
    assert off == 2 * len(ds.edges)


def test_amplitude_encode_single_entry():
    state = gd.amplitude_encode(np.array([[1.0]]))
    np.testing.assert_allclose(state.amplitudes, [1.0])


def test_amplitude_encode_uniform():
    state = gd.amplitude_encode(np.ones((2, 2)))
    np.testing.assert_allclose(state.amplitudes, [0.5] * 4)


def test_amplitude_encode_matches_frobenius_oracle():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 4))
    state = gd.amplitude_encode(x)
    np.testing.assert_allclose(state.amplitudes,
                               (x / np.linalg.norm(x)).reshape(-1), atol=1e-12)
    assert state.norm() == pytest.approx(1.0, abs=1e-12)


def test_amplitude_encode_rejects_zero_and_nonpow2():
    with pytest.raises(ValueError, match="all-zero"):
        gd.amplitude_encode(np.zeros((2, 2)))
    with pytest.raises(ValueError, match="powers of two"):
        gd.amplitude_encode(np.ones((3, 2)))


def test_grid_1d_small_cases():
    np.testing.assert_allclose(gd.grid_adjacency_1d(1), [[1.0]])
    np.testing.assert_allclose(gd.grid_adjacency_1d(3),
                               [[1, 1, 0], [1, 1, 1], [0, 1, 1]])


def test_grid_1d_row_sums():
    sums = gd.grid_adjacency_1d(8).sum(axis=1)
    np.testing.assert_allclose(sums, [2, 3, 3, 3, 3, 3, 3, 2])


def test_grid_1d_matches_path_graph_construction():
    n = 6
    path_edges = [(i, i + 1) for i in range(n - 1)]
    a = np.zeros((n, n))
    for i, j in path_edges:
        a[i, j] = a[j, i] = 1.0
    np.testing.assert_allclose(gd.grid_adjacency_1d(n), a + np.eye(n))


def test_grid_2d_trivial():
    np.testing.assert_allclose(gd.grid_adjacency_2d(1), [[1.0]])


def test_grid_2d_n2_block_assembly_oracle():
    # direct block assembly: border block rows carry identity; no interior
    # rows exist at n=2, so the matrix is I4
    np.testing.assert_allclose(gd.grid_adjacency_2d(2), np.eye(4))


def test_grid_2d_n3_block_structure():
    n = 3
    m = gd.grid_adjacency_2d(n)
    assert m.shape == (9, 9)
    eye = np.eye(3)
    v_open = np.array([[0, 0, 0], [1, 1, 1], [0, 0, 0]])
    v_closed = np.array([[1, 0, 0], [1, 1, 1], [0, 0, 1]])
    oracle = np.zeros((9, 9))
    oracle[0:3, 0:3] = eye
    oracle[6:9, 6:9] = eye
    oracle[3:6, 0:3] = v_open
    oracle[3:6, 3:6] = v_closed
    oracle[3:6, 6:9] = v_open
    np.testing.assert_allclose(m, oracle)


def test_grid_rejects_zero():
    with pytest.raises(ValueError):
        gd.grid_adjacency_1d(0)
    with pytest.raises(ValueError):
        gd.grid_adjacency_2d(0)


def test_demo_graph_matches_worked_adjacency():
    ds = gd.demo_graph()
    np.testing.assert_allclose(ds.adjacency() + np.eye(8),
                               gd.demo_adjacency_tilde())


def test_synthetic_citation_shape_and_masks():
    ds = gd.synthetic_citation(num_nodes=64, num_features=16, num_classes=4,
                               train_per_class=3, seed=5)
    assert ds.num_nodes == 64
    assert ds.features.shape == (64, 16)
    assert ds.train_mask.sum() <= 12
    assert not (ds.train_mask & ds.test_mask).any()
    # deterministic under seed
    ds2 = gd.synthetic_citation(num_nodes=64, num_features=16, num_classes=4,
                                train_per_class=3, seed=5)
    np.testing.assert_array_equal(ds.features, ds2.features)
    assert ds.edges == ds2.edges
