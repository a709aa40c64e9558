import numpy as np
import pytest

from gnnjed.channel import ChannelModel, bpsk_map, pad_boundary, apply_isi, toeplitz
from gnnjed.code import Interleaver, LdpcCode, load_code
from gnnjed.factor_graph import FnKind, UngerboeckData, build_ffg, build_joint, build_tanner, build_ufg


def _edge_set(g):
    return set(zip(g.edge_fn.tolist(), g.edge_vn.tolist()))


def test_ffg_memoryless():
    g = build_ffg(4, 0)
    assert (g.num_vn, g.num_fn, g.num_edges) == (4, 4, 4)
    assert g.size() == 12 == 4 * 3


def test_ffg_windows():
    g = build_ffg(6, 2)
    assert g.neighbors_of_fn(0).tolist() == [0]
    assert g.neighbors_of_fn(4).tolist() == [2, 3, 4]
    assert g.neighbors_of_fn(7).tolist() == [5]
    for k in range(8):
        expected = [i for i in range(k - 2, k + 1) if 0 <= i < 6]
        assert g.neighbors_of_fn(k).tolist() == expected
    # role = tap offset
    assert all(g.edge_role[e] == g.edge_fn[e] - g.edge_vn[e] for e in range(g.num_edges))


def test_ffg_count_formula_132_4():
    g = build_ffg(132, 4)
    assert g.accumulated_size() == 132 * 7 + 4 * 8 == 956
    # pruning removes the 2L virtual VNs and their L(L+1) edges
    assert g.size() == 956 - 2 * 4 - 4 * 5


def test_ffg_count_formula_exhaustive():
    for n in range(1, 257):
        for L in range(7):
            assert build_ffg(n, L).accumulated_size() == n * (L + 3) + L * (L + 4)


def test_ufg_small():
    g = build_ufg(3, 1)
    assert len(g.fn_ids(FnKind.UFG_SELF)) == 3
    assert len(g.fn_ids(FnKind.UFG_PAIR)) == 2
    assert g.num_edges == 7
    assert all(d == 1 for d in g.fn_degree()[g.fn_ids(FnKind.UFG_SELF)])
    assert all(d == 2 for d in g.fn_degree()[g.fn_ids(FnKind.UFG_PAIR)])


def test_ufg_enumeration():
    for n in (1, 2, 5, 40):
        for L in range(5):
            g = build_ufg(n, L)
            pairs = {(i, j) for i in range(n) for j in range(i + 1, n) if j - i <= L}
            assert {tuple(p) for p in g.pairs.tolist()} == pairs
            assert g.num_fn == n + len(pairs)
            assert g.num_edges == n + 2 * len(pairs)


def test_ufg_memoryless_has_no_pairs():
    g = build_ufg(5, 0)
    assert g.kinds() == [FnKind.UFG_SELF]


def test_no_duplicate_edges_rejected():
    g = build_ffg(4, 1)
    from gnnjed.factor_graph import FactorGraph

    with pytest.raises(ValueError):
        FactorGraph(2, [0], [0], [0, 0], [1, 1], [0, 0], [0, 1])
    assert len(_edge_set(g)) == g.num_edges


def test_adjacency_consistent():
    g = build_joint(build_ffg(32, 2), load_code("ldpc32"), Interleaver.random(32, 0))
    for j in range(g.num_fn):
        assert sorted(g.edge_vn[g.fn_edges(j)].tolist()) == g.neighbors_of_fn(j).tolist()
    for i in range(g.num_vn):
        assert sorted(g.edge_fn[g.vn_edges(i)].tolist()) == g.neighbors_of_vn(i).tolist()
    tab = g.vn_table(g.kinds())
    order = np.concatenate([g.edge_ids(k) for k in g.kinds()])
    for i in range(g.num_vn):
        row = order[tab[i][tab[i] >= 0]]
        assert np.all(g.edge_vn[row] == i)
        assert len(row) == g.vn_degree()[i]


def test_joint_repetition_toy():
    code = LdpcCode(np.array([[1, 1]]))
    g = build_joint(build_ffg(2, 0), code, Interleaver.identity(2))
    assert g.num_vn == 2
    assert len(g.fn_ids(FnKind.FFG_OBS)) == 2 and len(g.fn_ids(FnKind.CHECK)) == 1
    # two observation edges plus the two check edges; five is the node count
    assert g.num_edges == 4
    assert g.num_vn + g.num_fn == 5
    assert _edge_set(g) == {(0, 0), (1, 1), (2, 0), (2, 1)}


def test_joint_bundled_code_additivity_and_puncturing():
    code = load_code("ldpc132")
    il = Interleaver.random(132, 3)
    eq = build_ffg(132, 4)
    g = build_joint(eq, code, il)
    assert g.num_edges == eq.num_edges + int(code.pcm.sum())
    eq_deg = g.vn_degree([FnKind.FFG_OBS])
    assert np.all(eq_deg[code.punctured_positions] == 0)
    assert np.all(eq_deg[code.transmitted_positions] >= 1)
    assert np.all(g.vn_degree([FnKind.CHECK]) >= 1)


def test_joint_interleaver_mapping():
    code = load_code("ldpc32")
    il = Interleaver.random(32, 5)
    g = build_joint(build_ffg(32, 0), code, il)
    # memoryless: observation FN k sees symbol k = code bit tx_pos[perm[k]]
    for k in range(32):
        assert g.neighbors_of_fn(k).tolist() == [code.transmitted_positions[il.perm[k]]]
    assert np.array_equal(g.vn_symbol[code.transmitted_positions[il.perm]], np.arange(32))


def test_joint_size_mismatch():
    with pytest.raises(ValueError):
        build_joint(build_ffg(10, 1), load_code("ldpc32"))


def test_tanner_graph_is_code():
    code = load_code("hamming74")
    g = build_tanner(code)
    assert g.kinds() == [FnKind.CHECK]
    dense = np.zeros((code.m, code.n), dtype=int)
    dense[g.edge_fn, g.edge_vn] = 1
    assert np.array_equal(dense, code.pcm)


def test_ungerboeck_statistics():
    rng = np.random.default_rng(1)
    taps = rng.normal(size=3)
    n, L = 9, 2
    m = ChannelModel(taps)
    H = toeplitz(m, n)
    x = pad_boundary(bpsk_map(rng.integers(0, 2, n)), L)
    y = apply_isi(m, x) + rng.normal(size=n + L)
    d = UngerboeckData.from_observations(taps, y, n)
    G = d.gram
    assert np.allclose(G, G.T)
    assert all(G[i, j] == 0 for i in range(n) for j in range(n) if abs(i - j) > L)
    # the data-symbol part of ||y - Hx||^2 equals x^T G x - 2 chi^T x + const for every x
    xs = [pad_boundary(bpsk_map(rng.integers(0, 2, n)), L) for _ in range(5)]
    lhs = [np.sum((y - H @ xx) ** 2) for xx in xs]
    rhs = [xx[L:L + n] @ G @ xx[L:L + n] - 2 * d.chi @ xx[L:L + n] for xx in xs]
    assert np.allclose(np.diff(lhs), np.diff(rhs))


def test_shuffled_graph_same_structure():
    g = build_ufg(10, 2)
    s = g.shuffled(np.random.default_rng(0))
    assert _edge_set(g) == _edge_set(s)
