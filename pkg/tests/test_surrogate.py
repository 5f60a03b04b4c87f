import numpy as np
import pytest

from gradcheck import module_grad_error
from metasurf import autodiff as ad
from metasurf.errors import ConfigError, DimensionError, ModelStateError
from metasurf.oracle import simulate
from metasurf.pattern import assemble_full, random_quadrant
from metasurf.surrogate import FResNet, FResNetConfig, as_input, l1_loss, predict, train_surrogate

TOY = FResNetConfig(image_size=8, channels=(2, 3), heads=2, token_dim=4, out_dim=5)


def toy_patterns(n, seed=0):
    return assemble_full(random_quadrant(np.random.default_rng(seed), n=4, batch=n))


def test_toy_network_gradients():
    with ad.precision(np.float64):
        model = FResNet(TOY, seed=1)
        x = as_input(toy_patterns(3))
        target = np.random.default_rng(2).normal(size=(3, 5))
        err = module_grad_error(model.parameters(), lambda: l1_loss(model(x), target) * 10.0)
    assert err < 1e-3


def test_zeroed_head_predicts_zero():
    model = FResNet()
    model.head.weight.data[:] = 0
    model.head.bias.data[:] = 0
    out = predict(model, assemble_full(random_quadrant(np.random.default_rng(0), batch=3)))
    assert out.shape == (3, 100) and not out.any()


def test_eval_forward_is_pure():
    model = FResNet(seed=3)
    p = assemble_full(random_quadrant(np.random.default_rng(5), batch=4))
    a, b = predict(model, p), predict(model, p.copy())
    assert a.tobytes() == b.tobytes()
    np.testing.assert_allclose(predict(model, p[0]), a[0], atol=1e-5)


def test_state_and_shape_errors():
    model = FResNet()
    with pytest.raises(DimensionError):
        model(as_input(np.zeros((2, 16, 16))))
    model.head = None
    with pytest.raises(ModelStateError):
        model(as_input(np.zeros((1, 32, 32))))
    with pytest.raises(ConfigError):
        FResNet(FResNetConfig(image_size=30))


def test_l1_matches_scalar_loop(rng):
    pred, target = rng.normal(size=(4, 7)), rng.normal(size=(4, 7))
    loop = sum(abs(pred[i, j] - target[i, j]) for i in range(4) for j in range(7)) / 28
    with ad.precision(np.float64):
        assert l1_loss(ad.Tensor(pred), target).item() == pytest.approx(loop, abs=1e-6)


def test_overfits_a_single_repeated_sample():
    p = np.repeat(assemble_full(random_quadrant(np.random.default_rng(9)))[None], 8, axis=0)
    r = simulate(p)
    _, rep = train_surrogate(p, r, p[:1], r[:1], epochs=200, batch=8, lr=1e-3, seed=0, max_steps=200)
    assert all(np.isfinite(rep.step_l1))
    assert min(rep.step_l1[-10:]) < 0.01
    assert rep.acc_ave == pytest.approx(1 - rep.mae_ave / 2)


def test_empty_sets_rejected():
    with pytest.raises(ConfigError):
        train_surrogate(np.zeros((0, 32, 32)), np.zeros((0, 100)), np.zeros((1, 32, 32)), np.zeros((1, 100)))
