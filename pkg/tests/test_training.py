import numpy as np
import pytest

from cnneq.channels import ProakisBConfig
from cnneq.equalizers import CnnConfig, CnnModel, FirConfig, FirModel, VolterraModel
from cnneq.errors import TrainingError
from cnneq.signals import make_rng
from cnneq.training import (
    AdamState,
    TrainConfig,
    adam_step,
    adapter_for,
    backward,
    evaluate,
    mse_loss,
    train,
    train_worst_of_n,
    write_train_log,
)
from oracles import central_diff


def _check_grads(model, x, t, skip, tol=1e-4):
    ad = adapter_for(model)
    params = ad.params()
    _, grads = backward(model, x, t, skip)

    def f():
        if hasattr(ad, "sync"):
            ad.sync(params)
        return backward(model, x, t, skip)[0]

    for name, p in params.items():
        num = central_diff(f, p, 1e-5)
        if hasattr(ad, "sync"):
            ad.sync(params)
        scale = max(1.0, np.max(np.abs(num)))
        assert np.max(np.abs(grads[name] - num)) <= tol * scale, name


def test_mse_loss():
    assert mse_loss(np.array([1.0, 2.0]), np.array([0.0, 0.0])) == 2.5


def test_fir_gradient():
    rng = make_rng(0)
    x = rng.normal(size=80)
    t = rng.choice([-1.0, 1.0], 40)
    _check_grads(FirModel(rng.normal(size=7) * 0.3), x, t, 3)


def test_volterra_gradient():
    rng = make_rng(1)
    x = rng.normal(size=60)
    t = rng.choice([-1.0, 1.0], 30)
    m = VolterraModel(0.1, rng.normal(size=5), rng.normal(size=(3, 3)) * 0.1, rng.normal(size=(2, 2, 2)) * 0.1)
    _check_grads(m, x, t, 2)


@pytest.mark.parametrize("bias", [False, True])
def test_cnn_gradient_with_batch_norm(bias):
    rng = make_rng(2)
    cfg = CnnConfig(v_p=2, layers=3, kernel=3, channels=3, n_os=2, bias=bias)
    m = CnnModel.init(cfg, rng)
    for l in range(cfg.layers - 1):
        m.bn_gamma[l] = rng.uniform(0.5, 1.5, cfg.channels)
        m.bn_beta[l] = rng.normal(0, 0.3, cfg.channels)
    x = rng.normal(size=48)
    t = rng.choice([-1.0, 1.0], 24)
    _check_grads(m, x, t, 2)


def test_nonfinite_loss_raises():
    m = FirModel(np.array([np.nan, 1.0, 0.0]))
    with pytest.raises(TrainingError):
        backward(m, np.ones(8), np.ones(4))


def test_adam_first_step_is_lr_sign():
    p = {"a": np.array([1.0, -2.0, 0.5])}
    g = {"a": np.array([0.3, -4.0, 0.0])}
    adam_step(p, g, AdamState(), 0.01)
    np.testing.assert_allclose(p["a"], [0.99, -1.99, 0.5], atol=1e-9)


def test_adam_matches_reference_sequence():
    rng = make_rng(3)
    p = {"w": rng.normal(size=4)}
    ref = p["w"].copy()
    m = np.zeros(4)
    v = np.zeros(4)
    st = AdamState()
    for t in range(1, 20):
        g = rng.normal(size=4)
        adam_step(p, {"w": g}, st, 1e-2)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 1e-2 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p["w"], ref, rtol=1e-12)


def test_fir_learns_proakis_b():
    cfg = TrainConfig(iterations=300, eval_symbols=20000, seeds=(1,))
    r = train(FirConfig(17), ProakisBConfig(snr_db=20), cfg, 1)
    assert r.ber < 0.05
    assert r.losses[-1] < r.losses[0]


def test_training_is_deterministic(tmp_path):
    cfg = TrainConfig(iterations=30, eval_symbols=4000, seeds=(1,))
    ch = ProakisBConfig(snr_db=20)
    a = train(CnnConfig(v_p=2, channels=2), ch, cfg, 7)
    b = train(CnnConfig(v_p=2, channels=2), ch, cfg, 7)
    assert a.ber == b.ber and np.array_equal(a.losses, b.losses)
    write_train_log(tmp_path / "a.csv", a)
    write_train_log(tmp_path / "b.csv", b)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_worst_of_n_reports_maximum():
    cfg = TrainConfig(iterations=40, eval_symbols=4000, seeds=(1, 2, 3))
    w = train_worst_of_n(FirConfig(9), ProakisBConfig(snr_db=20), cfg)
    assert w.worst_ber == max(w.bers)
    assert len(w.bers) == 3


def test_evaluate_uses_independent_split():
    m = FirModel.init(5)
    b1 = evaluate(m, ProakisBConfig(snr_db=20), 5000, 11)
    b2 = evaluate(m, ProakisBConfig(snr_db=20), 5000, 11)
    assert b1 == b2 and 0 <= b1 <= 0.5


def test_mse_examples():
    x = make_rng(4).normal(size=50)
    assert mse_loss(x, x) == 0.0
    assert mse_loss(x + 1.0, x) == pytest.approx(1.0, abs=1e-12)


def test_zero_loss_gives_zero_gradients():
    m = FirModel.init(5, 2)
    x = make_rng(5).normal(size=40)
    loss, g = backward(m, x, x[::2])
    assert loss == 0.0 and not g["weights"].any()


def test_fir_gradient_closed_form():
    rng = make_rng(6)
    w = rng.normal(size=5)
    x = rng.normal(size=40)
    t = rng.normal(size=20)
    m = FirModel(w, 2)
    _, g = backward(m, x, t)
    y = np.array([sum(w[j] * (x[2 * i + j - 2] if 0 <= 2 * i + j - 2 < 40 else 0.0) for j in range(5)) for i in range(20)])
    r = y - t
    ref = [2.0 / 20 * sum(r[i] * (x[2 * i + j - 2] if 0 <= 2 * i + j - 2 < 40 else 0.0) for i in range(20)) for j in range(5)]
    np.testing.assert_allclose(g["weights"], ref, rtol=1e-12)


def test_adam_zero_gradient_is_noop():
    p = {"a": np.array([1.0, 2.0])}
    adam_step(p, {"a": np.zeros(2)}, AdamState(), 0.1)
    np.testing.assert_array_equal(p["a"], [1.0, 2.0])


def test_worst_of_one_equals_train():
    cfg = TrainConfig(iterations=20, eval_symbols=3000, seeds=(4,))
    ch = ProakisBConfig()
    assert train_worst_of_n(FirConfig(5), ch, cfg).worst_ber == train(FirConfig(5), ch, cfg, 4).ber


def test_loss_falls_over_training():
    cfg = TrainConfig(iterations=200, eval_symbols=3000, seeds=(1,))
    r = train(CnnConfig(v_p=4, channels=3), ProakisBConfig(), cfg, 2)
    k = len(r.losses) // 10
    assert np.median(r.losses[-k:]) < np.median(r.losses[:k])
