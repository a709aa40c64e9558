import numpy as np
import pytest

from gnnjed.channel import Transmitter
from gnnjed.code import Interleaver, LdpcCode, load_code
from gnnjed.factor_graph import FnKind, UngerboeckData, build_ffg, build_joint, build_ufg
from gnnjed.gnn import GnnParams, GnnReceiver, ScheduleSpec, gnn_inputs, logits_to_llr, run_equalizer, run_jed

from gradcheck import gnn_gradient_errors

TAPS = [0.6, 0.8]


def _frames(n, taps=TAPS, b=3, snr=6.0, seed=0):
    return Transmitter(taps, n_symbols=n).generate(b, snr, seed=seed)


def _logits(outs):
    return [o.data for o in outs]


def test_init_state_projection_and_linearity():
    g = build_ffg(5, 1)
    p = GnnParams.for_graph(g, feature_size=4, dtype=np.float64)
    rx = GnnReceiver(g, p)
    w = p.vectors["w/ffg_obs"].data
    y = np.zeros((6, 2))
    y[2, 0] = 1.0
    s = rx.init_state({FnKind.FFG_OBS: y}).fn[FnKind.FFG_OBS].data
    assert np.array_equal(s[2, 0], w) and not s[[0, 1, 3, 4, 5]].any() and not s[:, 1].any()
    y = np.random.default_rng(0).normal(size=(6, 2))
    a = rx.init_state({FnKind.FFG_OBS: y}).fn[FnKind.FFG_OBS].data
    b = rx.init_state({FnKind.FFG_OBS: 2.5 * y}).fn[FnKind.FFG_OBS].data
    np.testing.assert_allclose(b, 2.5 * a, rtol=1e-12)
    state = rx.init_state({FnKind.FFG_OBS: y})
    assert not state.vn.data.any() and not state.v2f[FnKind.FFG_OBS].data.any()
    with pytest.raises(ValueError):
        rx.init_state({FnKind.FFG_OBS: np.zeros((5, 2))})


def test_zero_iterations_and_zero_networks():
    g = build_ffg(6, 1)
    fb = _frames(6)
    p = GnnParams.for_graph(g, feature_size=8)
    out = run_equalizer(g, fb.observations, p, 0)
    assert len(out) == 1 and not out[0].data.any()
    z = GnnParams.for_graph(g, feature_size=8, zero=True)
    for o in run_equalizer(g, fb.observations, z, 4):
        assert np.all(1 / (1 + np.exp(-o.data)) == 0.5)


def test_readout_is_dot_product():
    g = build_ffg(3, 0)
    p = GnnParams.for_graph(g, feature_size=5, dtype=np.float64)
    rx = GnnReceiver(g, p)
    state = rx.init_state({FnKind.FFG_OBS: np.zeros((3, 1))})
    v = p.vectors["v"].data
    state.vn.data = np.tile(v / (v @ v), (3, 1, 1))
    np.testing.assert_allclose(rx.readout(state).data, 1.0)
    state.vn.data = 3 * state.vn.data
    np.testing.assert_allclose(rx.readout(state).data, 3.0)


def _set_linear(mlp, coeffs):
    """Make a 3-input, 1-output ReLU MLP compute sum(coeffs * inputs) exactly.

    Hidden unit 0 carries the positive part and unit 1 the negative part.
    """
    for w in mlp.weights:
        w.data[...] = 0
    for b in mlp.biases:
        b.data[...] = 0
    mlp.weights[0].data[:, 0] = coeffs
    mlp.weights[0].data[:, 1] = -np.asarray(coeffs)
    for w in mlp.weights[1:-1]:
        w.data[0, 0] = 1
        w.data[1, 1] = 1
    mlp.weights[-1].data[0, 0] = 1
    mlp.weights[-1].data[1, 0] = -1


def test_hand_trace_d1():
    # FFG with N=2, L=1: FN0-{V0}, FN1-{V0 (role 1), V1 (role 0)}, FN2-{V1 (role 1)}
    g = build_ffg(2, 1)
    p = GnnParams.for_graph(g, feature_size=1, dtype=np.float64)
    c = {"vn": (0.5, 1.0, 1.0), "fn/ffg_obs": (0.9, -0.3, 1.0), "f2v/ffg_obs": (1.0, 0.25, 1.0),
         "v2f/ffg_obs": (0.7, 0.2, 1.0)}
    for k, v in c.items():
        _set_linear(p.mlps[k], v)
    p.vectors["w/ffg_obs"].data[:] = [2.0]
    p.vectors["v"].data[:] = [-1.5]
    p.vectors["g/vn"].data[:] = [0.1]
    p.vectors["g/fn/ffg_obs"].data[:] = [-0.2]
    p.vectors["g/f2v/ffg_obs"].data[:] = [[0.3], [-0.4]]
    p.vectors["g/v2f/ffg_obs"].data[:] = [[0.05], [0.6]]
    y = np.array([0.4, -1.1, 0.8])

    # hand-written recursion with plain floats
    edges = [(0, 0, 0), (1, 0, 1), (1, 1, 0), (2, 1, 1)]  # (fn, vn, role)
    lin = lambda k, a, b, gg: c[k][0] * a + c[k][1] * b + c[k][2] * gg
    f = [2.0 * yi for yi in y]
    v = [0.0, 0.0]
    m_vf = {e: 0.0 for e in edges}
    gf2v, gv2f = [0.3, -0.4], [0.05, 0.6]
    trace = []
    for _ in range(2):
        f = [lin("fn/ffg_obs", f[j], np.mean([m_vf[e] for e in edges if e[0] == j]), -0.2) for j in range(3)]
        m_fv = {e: lin("f2v/ffg_obs", f[e[0]], v[e[1]], gf2v[e[2]]) for e in edges}
        v = [lin("vn", v[i], np.mean([m_fv[e] for e in edges if e[1] == i]), 0.1) for i in range(2)]
        m_vf = {e: lin("v2f/ffg_obs", v[e[1]], f[e[0]], gv2f[e[2]]) for e in edges}
        trace.append([-1.5 * vi for vi in v])

    got = run_equalizer(g, y, p, 2)
    np.testing.assert_allclose(np.array([o.data[:, 0] for o in got]), trace, rtol=1e-12, atol=1e-14)


def test_deterministic_and_no_lookahead():
    g = build_ffg(12, 2)
    fb = _frames(12, [0.5, 0.7, 0.5])
    p = GnnParams.for_graph(g, feature_size=8)
    a = _logits(run_equalizer(g, fb.observations, p, 3))
    b = _logits(run_equalizer(g, fb.observations, p, 6))
    c = _logits(run_equalizer(g, fb.observations, p, 3))
    assert all(np.array_equal(x, y) for x, y in zip(a, b[:3]))
    assert all(np.array_equal(x, y) for x, y in zip(a, c))


@pytest.mark.parametrize("builder", [build_ffg, build_ufg])
def test_permutation_invariance(builder):
    taps = [0.4, 0.8, 0.45]
    g = builder(20, 2)
    fb = _frames(20, taps)
    p = GnnParams.for_graph(g, feature_size=8)
    base = _logits(run_equalizer(g, fb.observations, p, 3, taps))
    for seed in range(3):
        s = g.shuffled(np.random.default_rng(seed))
        assert all(np.array_equal(x, y) for x, y in zip(base, _logits(run_equalizer(s, fb.observations, p, 3, taps))))


def test_ufg_inputs():
    taps = [0.4, 0.8, 0.45]
    g = build_ufg(7, 2)
    fb = _frames(7, taps)
    d = UngerboeckData.from_observations(taps, fb.observations, 7)
    inp = gnn_inputs(g, fb.observations, taps)
    np.testing.assert_allclose(inp[FnKind.UFG_SELF], d.chi.T)
    assert inp[FnKind.UFG_PAIR].shape == (len(g.fn_ids(FnKind.UFG_PAIR)), 3)
    assert np.all(inp[FnKind.UFG_PAIR] == inp[FnKind.UFG_PAIR][:, :1])


def test_edge_updates_weight_sharing_and_isolation():
    g = build_ffg(6, 1)
    p = GnnParams.for_graph(g, feature_size=4, dtype=np.float64)
    q = p.copy()
    q.vectors["g/f2v/ffg_obs"].data += 1.0
    ys = {FnKind.FFG_OBS: np.ones((7, 1))}
    outs = []
    for params in (p, q):
        rx = GnnReceiver(g, params)
        st = rx.init_state(ys)
        rx.update_f2v(st, FnKind.FFG_OBS)
        rx.update_v2f(st, FnKind.FFG_OBS)
        outs.append((st.f2v[FnKind.FFG_OBS].data, st.v2f[FnKind.FFG_OBS].data))
    assert not np.array_equal(outs[0][0], outs[1][0])
    assert np.array_equal(outs[0][1], outs[1][1])
    f2v = outs[0][0]
    roles = g.edge_role[g.edge_ids(FnKind.FFG_OBS)]
    # constant inputs + zero VN states: all edges of one role carry the same message
    for r in (0, 1):
        rows = f2v[roles == r]
        assert np.all(rows == rows[0])


def test_vn_without_active_neighbours_gets_zero_aggregate():
    code = load_code("ldpc132")
    joint = build_joint(build_ffg(132, 4), code, Interleaver.random(132, 0))
    p = GnnParams.for_graph(joint, feature_size=4, dtype=np.float64)
    rx = GnnReceiver(joint, p)
    fb = Transmitter([1.0, 0.3, 0.2, 0.1, 0.05], code=code, interleaver=Interleaver.random(132, 0)).generate(2, 5.0, 0)
    st = rx.init_state(gnn_inputs(joint, fb.observations))
    before = st.vn.data.copy()
    for k in rx.eq_kinds:
        rx.update_fn(st, k)
        rx.update_f2v(st, k)
    rx.update_vn(st, rx.eq_kinds)
    punct = code.punctured_positions
    expect = p.mlps["vn"](before[punct], np.zeros_like(before[punct]), p.vectors["g/vn"]).data
    np.testing.assert_allclose(st.vn.data[punct], expect, rtol=1e-12)


def test_jed_with_empty_check_side_equals_equalizer():
    n = 16
    eq = build_ffg(n, 1)
    joint = build_joint(eq, LdpcCode.empty(n), Interleaver.identity(n))
    assert FnKind.CHECK not in joint.kinds()
    p = GnnParams.for_graph(eq, feature_size=8)
    fb = _frames(n)
    a = _logits(run_equalizer(eq, fb.observations, p, 5))
    b = _logits(run_jed(joint, fb.observations, p, ScheduleSpec(5)))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def _jed_setup(seed=0):
    code = load_code("ldpc32")
    il = Interleaver.random(32, seed)
    joint = build_joint(build_ffg(32, 1), code, il)
    p = GnnParams.for_graph(joint, feature_size=6)
    fb = Transmitter(TAPS, code=code, interleaver=il).generate(2, 6.0, seed)
    return joint, p, fb


def test_sequential_eq_only_schedule_matches_manual_iterations():
    joint, p, fb = _jed_setup()
    rx = GnnReceiver(joint, p)
    inputs = gnn_inputs(joint, fb.observations)
    got = _logits(rx.run(inputs, ScheduleSpec(1, (3, 0))))
    st = rx.init_state(inputs)
    ref = [rx.iteration(st, [FnKind.FFG_OBS]).data for _ in range(3)]
    assert all(np.array_equal(x, y) for x, y in zip(got, ref))


def test_schedule_readout_counts():
    joint, p, fb = _jed_setup()
    assert len(run_jed(joint, fb.observations, p, ScheduleSpec.parse("(10,1)"))) == 10
    seq = ScheduleSpec.parse("(3,[3,5])")
    assert seq.num_readouts == 24 and not seq.flooding
    assert len(run_jed(joint, fb.observations, p, seq)) == 24


def test_schedule_parse_and_validation():
    assert ScheduleSpec.parse("10,1") == ScheduleSpec(10, (1,))
    assert str(ScheduleSpec.parse("3, [3, 5]")) == "(3,[3,5])"
    for bad in ("(10,2)", "1", "1,2,3,4"):
        with pytest.raises(ValueError):
            ScheduleSpec.parse(bad)
    with pytest.raises(ValueError):
        ScheduleSpec(2, (0, 0))


def test_params_isolated_by_name_and_checked():
    g = build_ffg(8, 1)
    joint = build_joint(build_ffg(32, 1), load_code("ldpc32"), Interleaver.random(32, 0))
    a = GnnParams.for_graph(g, feature_size=4, seed=3)
    b = GnnParams.for_graph(joint, feature_size=4, seed=3)
    for k, t in a.tensors().items():
        assert np.array_equal(t.data, b.tensors()[k].data)
    with pytest.raises(ValueError):
        GnnReceiver(joint, a)
    with pytest.raises(KeyError):
        a.load_state_dict(b.state_dict())
    assert a.tensors()["vn.0.weight"].shape == (12, 64)
    assert a.vectors["g/f2v/ffg_obs"].shape == (2, 4)


def test_llr_sign_convention():
    logits = np.array([[2.0, -1.0]])
    assert logits_to_llr(logits).tolist() == [[-2.0], [1.0]]


def test_gnn_gradient_finite_differences():
    errs = gnn_gradient_errors(seed=1, per_tensor=4)
    assert max(errs.values()) < 1e-3, errs
