import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikesparse import tape
from spikesparse.snn import (
    LifConfig,
    LifLayer,
    Network,
    Readout,
    SpikeRecord,
    SpikeTrain,
    build_network,
    count_spikes,
    encode_poisson,
    forward,
    lif_step,
    parse_architecture,
)
from spikesparse.tape import Tensor


def dense_layer(w, **cfg):
    return LifLayer("dense", Tensor(np.asarray(w, dtype=float), requires_grad=True), LifConfig(**cfg))


# ---------------------------------------------------------------- lif_step

def test_lif_step_direct_formula():
    layer = dense_layer([[1.0]], beta=0.9, theta=1.0)
    layer.membrane = Tensor([[0.5]])
    spikes, v = lif_step(layer, Tensor([[0.6]]))
    assert spikes.data.item() == 1.0
    assert v.data.item() == pytest.approx(0.05, abs=1e-15)


def test_subthreshold_decay_never_spikes():
    layer = dense_layer([[1.0]], beta=0.9)
    layer.membrane = Tensor([[0.5]])
    trace = []
    for _ in range(30):
        s, v = lif_step(layer, Tensor([[0.0]]))
        assert s.data.item() == 0.0
        trace.append(v.data.item())
    np.testing.assert_allclose(trace[:3], [0.45, 0.405, 0.3645], rtol=1e-15)


def _scalar_lif(drive, beta, theta, reset="subtract"):
    v, spikes, mem = 0.0, [], []
    for i in drive:
        v = beta * v + i
        s = 1 if v >= theta else 0
        v = v - s * theta if reset == "subtract" else (0.0 if s else v)
        spikes.append(s)
        mem.append(v)
    return spikes, mem


def test_constant_drive_spike_times_match_scalar_simulation():
    # oracle: independent scalar loop -> spikes at t = 3, 5, 8, 10, 13, 15
    oracle, _ = _scalar_lif([0.4] * 15, 1.0, 1.0)
    assert [t + 1 for t, s in enumerate(oracle) if s] == [3, 5, 8, 10, 13, 15]
    layer = dense_layer([[1.0]], beta=1.0, theta=1.0)
    got = [lif_step(layer, Tensor([[0.4]]))[0].data.item() for _ in range(15)]
    assert got == oracle


@pytest.mark.parametrize("reset", ["subtract", "zero"])
def test_reset_modes_match_scalar_simulation(reset):
    drive = list(np.random.default_rng(5).uniform(0, 0.8, 40))
    spikes, mem = _scalar_lif(drive, 0.8, 1.0, reset)
    layer = dense_layer([[1.0]], beta=0.8, theta=1.0, reset=reset)
    for i, (s, m) in enumerate(zip(spikes, mem)):
        got, v = lif_step(layer, Tensor([[drive[i]]]))
        assert got.data.item() == s
        assert v.data.item() == pytest.approx(m, abs=1e-12)
        if reset == "zero" and s:
            assert v.data.item() == 0.0


def test_lif_config_validation():
    for bad in ({"beta": 0.0}, {"beta": 1.5}, {"theta": 0.0}, {"gamma": -1.0}, {"reset": "hard"}):
        with pytest.raises(ValueError):
            LifConfig(**bad)


# ---------------------------------------------------------------- forward

def hand_net(w_hidden, w_out, T=3, beta=0.9, beta_readout=0.8):
    layer = dense_layer(w_hidden, beta=beta, theta=1.0, gamma=1.0)
    readout = Readout(Tensor(np.asarray(w_out, dtype=float), requires_grad=True), beta_readout)
    return Network([layer], readout, T, (2,))


def scalar_network(x, w_hidden, w_out, beta=0.9, beta_readout=0.8, theta=1.0):
    """Independent reference: explicit per-neuron loops, time-major."""
    T, n_in = len(x), len(x[0])
    n_hid, n_out = len(w_hidden[0]), len(w_out[0])
    v = [0.0] * n_hid
    u = [0.0] * n_out
    peak = [None] * n_out
    count = 0
    for t in range(T):
        s = [0] * n_hid
        for j in range(n_hid):
            drive = sum(x[t][i] * w_hidden[i][j] for i in range(n_in))
            v[j] = beta * v[j] + drive
            s[j] = 1 if v[j] >= theta else 0
            v[j] -= s[j] * theta
            count += s[j]
        for k in range(n_out):
            drive = sum(s[j] * w_out[j][k] for j in range(n_hid))
            u[k] = drive if t == 0 else beta_readout * u[k] + drive
            peak[k] = u[k] if peak[k] is None else max(peak[k], u[k])
    return count, peak


def test_forward_two_neuron_net_matches_scalar_simulation():
    x = [[1, 0], [1, 1], [0, 1]]
    w_hidden = [[0.7, 0.3], [0.5, 1.2]]
    w_out = [[1.0, -0.5], [0.25, 2.0]]
    net = hand_net(w_hidden, w_out)
    readout, record = forward(net, SpikeTrain(np.array(x, dtype=float)[:, None, :]))
    count, peak = scalar_network(x, w_hidden, w_out)
    assert record.total_count == count
    np.testing.assert_allclose(readout.data[0], peak, rtol=0, atol=1e-12)
    assert round(count_spikes(record)[0].item()) == record.total_count


def test_zero_input_is_a_dead_network():
    net = build_network(parse_architecture("dense:16,dense:8"), (1, 4, 4), 3, seed=0, timesteps=5)
    readout, record = forward(net, SpikeTrain(np.zeros((5, 2, 1, 4, 4))))
    assert record.total_count == 0 and record.layer_counts == [0, 0]
    assert np.all(readout.data == 0.0)


def test_forward_rejects_wrong_timesteps():
    net = build_network(parse_architecture("dense:4"), (3,), 2, timesteps=5)
    with pytest.raises(ValueError):
        forward(net, SpikeTrain(np.zeros((4, 1, 3))))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_appending_silence_never_decreases_count(seed, T):
    rng = np.random.default_rng(seed)
    specs = parse_architecture("dense:12")
    x = (rng.random((T, 3, 10)) < 0.4).astype(float)
    short = build_network(specs, (10,), 4, timesteps=T, seed=seed, init_gain=3.0)
    long = build_network(specs, (10,), 4, timesteps=2 * T, seed=seed, init_gain=3.0)
    _, r1 = forward(short, SpikeTrain(x))
    _, r2 = forward(long, SpikeTrain(np.concatenate([x, np.zeros_like(x)])))
    assert r2.total_count >= r1.total_count


def test_conv_network_shapes_compose():
    net = build_network(parse_architecture("conv:4:3:1:1,pool,conv:6:3,pool,dense:10"),
                        (3, 12, 12), 5, timesteps=4, seed=1, init_gain=2.0)
    x = encode_poisson(np.random.default_rng(0).random((2, 3, 12, 12)), 4, 1.0, seed=0)
    readout, record = forward(net, x)
    assert readout.shape == (2, 5) and len(record.layer_counts) == 3
    assert record.sample_counts.sum() == record.total_count


def test_architecture_errors():
    with pytest.raises(ValueError):
        parse_architecture("dense:0")
    with pytest.raises(ValueError):
        parse_architecture("lstm:4")
    with pytest.raises(Exception):
        build_network(parse_architecture("pool"), (1, 5, 5), 2)


# ---------------------------------------------------------------- properties

def random_net_and_input(seed, reset="subtract"):
    rng = np.random.default_rng(seed)
    lif = LifConfig(beta=0.9, theta=1.0, gamma=1.0, reset=reset)
    net = build_network(parse_architecture("dense:20,dense:10"), (15,), 4, lif, timesteps=6,
                        seed=seed, init_gain=2.5)
    return net, encode_poisson(rng.random((5, 15)), 6, 1.0, seed=seed)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["subtract", "zero"]))
def test_spike_binarity_and_count_consistency(seed, reset):
    net, x = random_net_and_input(seed, reset)
    _, record = forward(net, x)
    total, count = count_spikes(record)
    assert round(total.item()) == count == record.total_count
    for s, c in zip(record.layer_sums, record.layer_counts):
        assert s.item() == c


@pytest.mark.parametrize("seed", range(5))
def test_subtract_reset_soundness(seed):
    # the bound needs drive <= theta: one subtraction per step removes only theta
    rng = np.random.default_rng(seed)
    layer = dense_layer(rng.uniform(-0.3, 1.0 / 6, (6, 5)), beta=0.9)
    max_drive = 0.0
    for _ in range(50):
        x = Tensor((rng.random((4, 6)) < 0.5).astype(float))
        drive = layer.drive(x).data
        max_drive = max(max_drive, drive.max())
        _, v = lif_step(layer, x)
        assert np.all(v.data < 1.0 + max_drive)


def test_readout_argmax_invariant_to_positive_rescaling():
    net, x = random_net_and_input(9)
    readout, _ = forward(net, x)
    net.readout.weights.data = net.readout.weights.data * 3.7
    scaled, _ = forward(net, x)
    assert np.array_equal(readout.data.argmax(1), scaled.data.argmax(1))


def test_forward_is_deterministic():
    net, x = random_net_and_input(4)
    (r1, rec1), (r2, rec2) = forward(net, x), forward(net, x)
    assert r1.data.tobytes() == r2.data.tobytes()
    assert rec1.layer_counts == rec2.layer_counts


# ---------------------------------------------------------------- encoding

def test_poisson_endpoints():
    img = np.array([[0.0, 1.0]])
    train = encode_poisson(img, 50, 1.0, seed=0)
    assert train.values.shape == (50, 1, 2)
    assert train.values[:, 0, 0].sum() == 0
    assert train.values[:, 0, 1].sum() == 50


@pytest.mark.parametrize("seed", range(5))
def test_poisson_rate_monte_carlo(seed):
    count = encode_poisson(np.array([[0.5]]), 1000, 1.0, seed=seed).values.sum()
    assert abs(count - 500) <= 3 * np.sqrt(1000 * 0.25)


def test_poisson_deterministic_and_validated():
    img = np.random.default_rng(0).random((3, 4))
    a = encode_poisson(img, 10, 0.5, seed=42).values
    assert np.array_equal(a, encode_poisson(img, 10, 0.5, seed=42).values)
    assert set(np.unique(a)) <= {0.0, 1.0}
    with pytest.raises(ValueError):
        encode_poisson(np.array([1.2]), 5, 1.0, seed=0)
    with pytest.raises(ValueError):
        encode_poisson(np.array([0.2]), 5, 0.0, seed=0)


# ---------------------------------------------------------------- count_spikes

def test_count_spikes_examples():
    total, count = count_spikes(SpikeRecord())
    assert total.item() == 0.0 and count == 0
    rec = SpikeRecord([Tensor(12.0), Tensor(30.0)], [12, 30])
    total, count = count_spikes(rec)
    assert total.item() == 42.0 and count == 42


def test_total_sum_gradient_matches_hand_surrogate_chain():
    # 2 inputs -> 2 LIF neurons, 3 steps.  With the reset detached,
    # dV_t/dw_ij = beta * dV_{t-1}/dw_ij + x_{t,i}, and
    # d(total)/dw_ij = sum_t g(V_t,j) * dV_t/dw_ij.
    x = [[1, 0], [1, 1], [0, 1]]
    w = [[0.6, 0.3], [0.45, 0.9]]
    beta, theta, gamma = 0.9, 1.0, 1.0
    net = hand_net(w, [[1.0], [1.0]], beta=beta)
    _, record = forward(net, SpikeTrain(np.array(x, dtype=float)[:, None, :]))
    total, _ = count_spikes(record)
    tape.backward(total)

    expected = np.zeros((2, 2))
    for j in range(2):
        v, dv = 0.0, [0.0, 0.0]
        for t in range(3):
            v = beta * v + sum(x[t][i] * w[i][j] for i in range(2))
            dv = [beta * dv[i] + x[t][i] for i in range(2)]
            g = max(0.0, 1 - abs(v - theta) / gamma) / gamma
            for i in range(2):
                expected[i, j] += g * dv[i]
            v -= theta if v >= theta else 0.0
    np.testing.assert_allclose(net.layers[0].weights.grad, expected, rtol=1e-13)
    assert np.any(expected != 0)
