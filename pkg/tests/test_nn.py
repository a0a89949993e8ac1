"""Numerics: gradients vs. finite differences, determinism, kernel parity."""
import numpy as np
import pytest

from gridsynth.nn import _kernel_py
from gridsynth.nn.backend import forward as kernel_forward
from gridsynth.nn.net import (
    DenseNet,
    DimensionError,
    TrainConfig,
    TrainingDiverged,
    batch_loss,
    chain_backward,
    chain_forward,
    init_dense,
    load_net,
    mse_loss,
    save_net,
    segmented_nll_loss,
    train_chain,
)

REL_TOL = 1e-5


def _rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def _fd_grad(f, arr: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar f with respect to arr, in place."""
    g = np.zeros_like(arr)
    flat, gflat = arr.ravel(), g.ravel()
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + eps
        up = f()
        flat[i] = keep - eps
        down = f()
        flat[i] = keep
        gflat[i] = (up - down) / (2 * eps)
    return g


def _chain_fixture(seed: int):
    """Two small nets (first trainable, second frozen decoder-style) and a
    batch placed away from relu kinks so finite differences are clean."""
    rng = np.random.default_rng(seed)
    a = init_dense((5, 7, 4), rng)
    b = init_dense((4, 6, 8), rng)
    X = rng.uniform(0.2, 1.0, size=(3, 5))
    T = np.zeros((3, 8))
    T[np.arange(3), rng.integers(0, 3, size=3)] = 1.0
    T[np.arange(3), 3 + rng.integers(0, 5, size=3)] = 1.0
    return a, b, X, T


@pytest.mark.parametrize("kind,segments", [("mse", None), ("segmented-nll", (3, 5))])
def test_chain_gradients_match_finite_differences(kind, segments):
    a, b, X, T = _chain_fixture(0)

    def loss_value():
        Y, _ = chain_forward([a, b], X)
        return batch_loss(kind, Y, T, segments)[0]

    Y, caches = chain_forward([a, b], X)
    # keep the check honest: no pre-activation may sit on a relu kink
    for inputs, zs in caches:
        for z in zs[:-1]:
            assert np.abs(z).min() > 1e-4
    _, dY = batch_loss(kind, Y, T, segments)
    grads, dX = chain_backward([a, b], caches, dY, [True, True])
    for net, g in zip((a, b), grads):
        dWs, dbs = g
        for l, (W, bias) in enumerate(zip(net.Ws, net.bs)):
            assert _rel_err(dWs[l], _fd_grad(loss_value, W)) < REL_TOL
            assert _rel_err(dbs[l], _fd_grad(loss_value, bias)) < REL_TOL
    assert _rel_err(dX, _fd_grad(loss_value, X)) < REL_TOL


def test_frozen_net_gets_no_gradients_and_dx_unchanged():
    a, b, X, T = _chain_fixture(1)
    Y, caches = chain_forward([a, b], X)
    _, dY = batch_loss("mse", Y, T)
    grads_full, dX_full = chain_backward([a, b], caches, dY, [True, True])
    grads_frozen, dX_frozen = chain_backward([a, b], caches, dY, [True, False])
    assert grads_frozen[1] is None
    assert np.allclose(dX_full, dX_frozen)
    for l in range(len(a.Ws)):
        assert np.allclose(grads_full[0][0][l], grads_frozen[0][0][l])


def test_single_vector_losses_agree_with_batch():
    rng = np.random.default_rng(2)
    g = rng.normal(size=6)
    t = np.zeros(6)
    t[1], t[4] = 1.0, 1.0
    l1, g1 = segmented_nll_loss(g, t, (3, 3))
    l2, g2 = batch_loss("segmented-nll", g[None, :], t[None, :], (3, 3))
    assert np.isclose(l1, l2) and np.allclose(g1, g2[0])
    l3, g3 = mse_loss(g, t)
    l4, g4 = batch_loss("mse", g[None, :], t[None, :])
    assert np.isclose(l3, l4) and np.allclose(g3, g4[0])


def test_nll_is_tiny_on_confident_correct_logits():
    t = np.zeros(6)
    t[0], t[3] = 1.0, 1.0
    g = np.where(t > 0, 50.0, -50.0)
    loss, _ = segmented_nll_loss(g, t, (3, 3))
    assert loss < 1e-12


def test_segment_mismatch_raises():
    with pytest.raises(DimensionError):
        segmented_nll_loss(np.zeros(5), np.zeros(5), (3, 3))


def test_init_dense_deterministic_per_seed():
    one = init_dense((4, 3, 2), np.random.default_rng(7))
    two = init_dense((4, 3, 2), np.random.default_rng(7))
    assert one.params_equal(two)
    assert not one.params_equal(init_dense((4, 3, 2), np.random.default_rng(8)))


def test_train_chain_bit_reproducible():
    def fit():
        rng = np.random.default_rng(3)
        net = init_dense((4, 8, 4), rng)
        X = rng.normal(size=(16, 4))
        cfg = TrainConfig(learning_rate=0.05, epochs=30, seed=11, loss_kind="mse")
        curve = train_chain([net], [True], X, X, cfg)
        return net, curve

    one, curve1 = fit()
    two, curve2 = fit()
    assert one.params_equal(two)
    assert curve1 == curve2


@pytest.mark.filterwarnings("ignore:(overflow|invalid value)")
def test_training_diverges_loudly():
    rng = np.random.default_rng(4)
    net = init_dense((3, 8, 3), rng)
    X = rng.normal(size=(8, 3))
    cfg = TrainConfig(learning_rate=1e9, epochs=50, seed=0, loss_kind="mse")
    with pytest.raises(TrainingDiverged):
        train_chain([net], [True], X, X, cfg)


def test_compiled_and_python_kernels_agree():
    rng = np.random.default_rng(5)
    net = init_dense((9, 17, 6), rng)
    for _ in range(20):
        x = rng.normal(size=9)
        got = kernel_forward(net.Ws, net.bs, x)
        ref = _kernel_py.forward(net.Ws, net.bs, x)
        assert np.allclose(got, ref, rtol=1e-12, atol=1e-12)


def test_forward_batch_matches_forward():
    rng = np.random.default_rng(6)
    net = init_dense((5, 9, 3), rng)
    X = rng.normal(size=(7, 5))
    assert np.allclose(net.forward_batch(X), np.stack([net.forward(x) for x in X]))


def test_forward_checks_input_width():
    net = init_dense((5, 4), np.random.default_rng(0))
    with pytest.raises(DimensionError):
        net.forward(np.zeros(6))


def test_save_load_roundtrip_bit_exact(tmp_path):
    net = init_dense((6, 11, 2), np.random.default_rng(9))
    save_net(tmp_path / "n.bin", net, meta={"note": "x"})
    back, meta = load_net(tmp_path / "n.bin")
    assert back.params_equal(net)
    assert meta["note"] == "x"
