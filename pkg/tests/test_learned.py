import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctmar.learned import layers as L
from ctmar.learned.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ctmar.learned.networks import (
    DiscriminatorSpec,
    GeneratorSpec,
    check_input_shape,
    discriminator_forward,
    generator_forward,
    init_discriminator,
    init_generator,
)
from ctmar.learned.optim import AdamState, adam_step
from ctmar.learned.training import (
    D_CLAMP,
    LossLog,
    TrainingError,
    TrainSchedule,
    _adv_g,
    _l2,
    _loss_d,
    cgan_losses,
    infer,
    train,
)

import gradcheck

SMALL_G = GeneratorSpec(widths=(4, 8))
SMALL_D = DiscriminatorSpec(widths=(4, 8))


def _nets(hw=(16, 16), seed=0, dtype=np.float32):
    rng = np.random.default_rng(seed)
    return init_generator(SMALL_G, hw, rng, dtype), init_discriminator(SMALL_D, hw, rng, dtype)


def test_identity_1x1_conv():
    x = np.random.default_rng(0).random((2, 1, 5, 6))
    out, _ = L.conv_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1), stride=1, pad=0)
    np.testing.assert_array_equal(out, x)


def test_leaky_relu_values():
    out, _ = L.leaky_relu_forward(np.array([-1.0, 2.0]), 0.2)
    np.testing.assert_allclose(out, [-0.2, 2.0])


def test_tconv_is_adjoint_of_conv():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 8, 8))
    w = rng.standard_normal((4, 3, 5, 5))
    y = rng.standard_normal((2, 4, 4, 4))
    cx, _ = L.conv_forward(x, w, np.zeros(4), 2, 2)
    ty, _ = L.tconv_forward(y, w, np.zeros(3), 2, 2)
    assert np.sum(cx * y) == pytest.approx(np.sum(x * ty), rel=1e-10)


def test_layer_shape_errors():
    with pytest.raises(ValueError):
        L.conv_forward(np.zeros((1, 2, 4, 4)), np.zeros((3, 3, 5, 5)), np.zeros(3))
    with pytest.raises(ValueError):
        L.tconv_forward(np.zeros((1, 2, 4, 4)), np.zeros((3, 3, 5, 5)), np.zeros(3))
    with pytest.raises(ValueError):
        L.batchnorm_forward(np.zeros((1, 2, 1, 1)), np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), True)
    with pytest.raises(ValueError):
        L.avgpool2_forward(np.zeros((1, 1, 3, 4)))


def test_batchnorm_running_stats():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 2, 3, 3)) * 2 + 1
    rm, rv = np.zeros(2), np.ones(2)
    L.batchnorm_forward(x, np.ones(2), np.zeros(2), rm, rv, True)
    n = 4 * 9
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2, 3)) * n / (n - 1))


def test_dropout_eval_identity_and_scaling():
    x = np.ones((2, 3, 4, 4))
    out, _ = L.dropout_forward(x, 0.5, False)
    assert out is x
    out, _ = L.dropout_forward(x, 0.5, True, np.random.default_rng(0))
    assert set(np.unique(out)) <= {0.0, 2.0}


def test_sigmoid_stable_extremes():
    out, _ = L.sigmoid_forward(np.array([-800.0, 0.0, 800.0]))
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0])


@pytest.mark.parametrize("name", list(gradcheck.layer_errors().keys()))
def test_layer_gradients(name, layer_errs={}):
    if not layer_errs:
        layer_errs.update(gradcheck.layer_errors())
    assert layer_errs[name] < 1e-3


@pytest.mark.parametrize("variant", ["non_saturating", "minimax_literal"])
@pytest.mark.parametrize("reduction", ["sum", "mean"])
def test_end_to_end_gradients(variant, reduction):
    errs = gradcheck.e2e_errors(seed=3, variant=variant, reduction=reduction)
    assert errs["loss_D"] < 1e-3 and errs["loss_G"] < 1e-3
    assert errs["loss_D_bn_bias_abs"] < 1e-6 and errs["loss_G_bn_bias_abs"] < 1e-6


def test_input_shape_divisibility():
    with pytest.raises(ValueError):
        check_input_shape(GeneratorSpec(), (64, 50))
    check_input_shape(GeneratorSpec(), (64, 48))


def test_generator_mask_shape_mismatch():
    gen, _ = _nets()
    with pytest.raises(ValueError):
        generator_forward(np.zeros((1, 1, 16, 16), np.float32), np.zeros((1, 1, 16, 8), bool), gen)


def test_generator_mask_all_false_identity():
    gen, _ = _nets()
    x = np.random.default_rng(0).random((2, 1, 16, 16)).astype(np.float32)
    out, _ = generator_forward(x, np.zeros_like(x, bool), gen, train=True, rng=np.random.default_rng(1))
    np.testing.assert_array_equal(out, x)


def test_generator_mask_all_true_is_xd1():
    gen, _ = _nets()
    x = np.zeros((2, 1, 16, 16), np.float32)
    out, cache = generator_forward(x, np.ones_like(x, bool), gen)
    np.testing.assert_array_equal(out, cache["x_d1"])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_generator_preserves_unmasked(seed):
    rng = np.random.default_rng(seed)
    gen, _ = _nets(seed=seed % 1000)
    for v in gen.params.values():
        v[...] = rng.standard_normal(v.shape).astype(v.dtype)
    x = rng.random((2, 1, 16, 16)).astype(np.float32)
    m = rng.random(x.shape) < 0.3
    x = np.where(m, 0, x).astype(np.float32)
    out, _ = generator_forward(x, m, gen, train=bool(seed % 2), rng=rng)
    np.testing.assert_array_equal(out[~m], x[~m])


def test_full_scale_generator_builds():
    spec = GeneratorSpec(widths=(64, 128, 256, 512, 512, 512))
    check_input_shape(spec, (768, 1024))
    with pytest.raises(ValueError):
        check_input_shape(spec, (720, 1024))


def test_discriminator_output_in_unit_interval():
    gen, disc = _nets()
    x = np.random.default_rng(0).random((3, 1, 16, 16)).astype(np.float32)
    p, _ = discriminator_forward(x, x, disc, train=True)
    assert p.shape == (3, 1)
    assert np.all((p > 0) & (p < 1))


def test_loss_d_half_is_two_ln2():
    gen, disc = _nets()
    disc.params["head.w"][...] = 0
    disc.params["head.b"][...] = 0
    x = np.random.default_rng(0).random((2, 1, 16, 16)).astype(np.float32)
    m = np.zeros_like(x, bool)
    m[:, :, 4:8] = True
    parts = cgan_losses(np.where(m, 0, x), x, m, gen, disc, train=False)
    assert parts.loss_d == pytest.approx(2 * np.log(2), abs=1e-6)
    assert parts.adv == pytest.approx(np.log(2), abs=1e-6)


def test_l2_zero_when_generator_exact():
    gen, disc = _nets()
    x = np.random.default_rng(0).random((2, 1, 16, 16)).astype(np.float32)
    m = np.zeros_like(x, bool)
    m[:, :, 3:9, 2:5] = True
    xin = np.where(m, 0, x).astype(np.float32)
    y, _ = generator_forward(xin, m, gen, train=False)
    assert cgan_losses(xin, y, m, gen, disc, train=False).l2 == 0.0


def test_one_pixel_hand_losses():
    p_real = np.array([[0.8]])
    p_fake = np.array([[0.3]])
    loss_d, _, _ = _loss_d(p_real, p_fake)
    assert loss_d == pytest.approx(-(np.log(0.8) + np.log(0.7)))
    assert _adv_g(p_fake, "non_saturating")[0] == pytest.approx(-np.log(0.3))
    assert _adv_g(p_fake, "minimax_literal")[0] == pytest.approx(np.log(0.7))
    y = np.full((1, 1, 1, 1), 2.0)
    g = np.full((1, 1, 1, 1), 1.5)
    assert _l2(y, g, 10.0, "sum")[0] == pytest.approx(2.5)
    assert _l2(y, g, 10.0, "mean")[0] == pytest.approx(2.5)
    y2 = np.zeros((2, 1, 2, 2))
    g2 = np.ones((2, 1, 2, 2))
    assert _l2(y2, g2, 10.0, "sum")[0] == pytest.approx(40.0)  # lambda * 8 / batch 2
    assert _l2(y2, g2, 10.0, "mean")[0] == pytest.approx(10.0)


def test_clamp_keeps_losses_finite():
    loss, _, _ = _loss_d(np.array([[0.0]]), np.array([[1.0]]))
    assert loss == pytest.approx(-2 * np.log(D_CLAMP))


def test_l2_mask_locality():
    gen, disc = _nets()
    rng = np.random.default_rng(5)
    y = rng.random((2, 1, 16, 16)).astype(np.float32)
    m = rng.random(y.shape) < 0.25
    x = np.where(m, 0, y).astype(np.float32)
    g, _ = generator_forward(x, m, gen, train=False)
    assert not np.any((y - g)[~m])
    # perturbing the reference off the mask must not move the l2 term
    y2 = np.where(m, y, y + 1.0)
    g2 = np.where(m, g, y2)
    assert _l2(y, g, 10.0, "sum")[0] == _l2(y2, g2, 10.0, "sum")[0]


def test_adam_zero_gradient_no_change():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_sign():
    p = {"w": np.array([0.0, 0.0])}
    st_ = AdamState()
    adam_step(p, {"w": np.array([3.0, -0.5])}, st_)
    np.testing.assert_allclose(p["w"], [-2e-4 * 3 / (3 + 1e-8), 2e-4 * 0.5 / (0.5 + 1e-8)])
    assert st_.t == 1


def test_adam_two_steps_hand():
    p = {"w": np.array([1.0])}
    s = AdamState()
    adam_step(p, {"w": np.array([1.0])}, s)
    adam_step(p, {"w": np.array([1.0])}, s)
    m1, v1 = 0.1, 0.001
    th1 = 1.0 - 2e-4 * (m1 / 0.1) / (np.sqrt(v1 / 0.001) + 1e-8)
    m2, v2 = 0.9 * m1 + 0.1, 0.999 * v1 + 0.001
    th2 = th1 - 2e-4 * (m2 / (1 - 0.81)) / (np.sqrt(v2 / (1 - 0.999**2)) + 1e-8)
    assert s.m["w"][0] == pytest.approx(m2) and s.v["w"][0] == pytest.approx(v2)
    assert p["w"][0] == pytest.approx(th2, rel=1e-12)


def test_adam_rejects_nonfinite():
    with pytest.raises(FloatingPointError):
        adam_step({"w": np.zeros(1)}, {"w": np.array([np.nan])}, AdamState())


def test_schedule_warmup():
    s = TrainSchedule()
    assert [s.d_steps(k) for k in range(1, 8)] == [5, 4, 3, 2, 1, 1, 1]
    with pytest.raises(ValueError):
        TrainSchedule(epochs=0)
    with pytest.raises(ValueError):
        TrainSchedule(lam=-1)
    with pytest.raises(ValueError):
        TrainSchedule(g_adv_variant="wgan")


def _toy_data(n=8, hw=(16, 16), seed=0):
    rng = np.random.default_rng(seed)
    c = np.linspace(-1, 1, hw[1])
    y = np.stack([np.tile(1 - c**2 * rng.uniform(0.5, 1.5), (hw[0], 1)) for _ in range(n)]).astype(np.float32)
    m = np.zeros_like(y, bool)
    for i in range(n):
        a = rng.integers(2, hw[1] - 6)
        m[i, :, a : a + 4] = True
    return np.where(m, 0, y).astype(np.float32), y, m


def test_train_epoch_one_runs_five_d_steps():
    x, y, m = _toy_data(12)
    res = train(x, y, m, TrainSchedule(epochs=1, batch_size=6), SMALL_G, SMALL_D)
    assert res.iterations == 2
    assert list(res.log.column("d_steps")) == [5, 5]


def test_train_epoch_five_single_d_step():
    x, y, m = _toy_data(6)
    res = train(x, y, m, TrainSchedule(epochs=5, batch_size=6), SMALL_G, SMALL_D)
    assert list(res.log.column("d_steps")) == [5, 4, 3, 2, 1]


def test_train_deterministic(tmp_path):
    x, y, m = _toy_data(12)
    sched = TrainSchedule(epochs=2, batch_size=4, seed=9)
    a = train(x, y, m, sched, SMALL_G, SMALL_D)
    b = train(x, y, m, sched, SMALL_G, SMALL_D)
    assert a.log.rows == b.log.rows
    for k in a.generator.params:
        np.testing.assert_array_equal(a.generator.params[k], b.generator.params[k])
    a.log.write_csv(tmp_path / "log.csv")
    header = (tmp_path / "log.csv").read_text().splitlines()[0]
    assert header == "iter,loss_d,loss_g_adv,loss_g_l2"


def test_train_rejects_small_dataset_and_bad_shapes():
    x, y, m = _toy_data(3)
    with pytest.raises(ValueError):
        train(x, y, m, TrainSchedule(batch_size=6), SMALL_G, SMALL_D)
    with pytest.raises(ValueError):
        train(x, y[:, :8], m, TrainSchedule(batch_size=2), SMALL_G, SMALL_D)


def test_train_nonfinite_aborts():
    x, y, m = _toy_data(6)
    y = y.copy()
    y[0, 0, 0] = np.inf
    with pytest.raises(TrainingError):
        train(x, y, m, TrainSchedule(epochs=1, batch_size=6), SMALL_G, SMALL_D)


def test_infer_deterministic_and_preserving():
    gen, _ = _nets()
    rng = np.random.default_rng(0)
    x = rng.random((16, 16)).astype(np.float32)
    m = rng.random((16, 16)) < 0.3
    x = np.where(m, 0, x).astype(np.float32)
    a, b = infer(x, m, gen), infer(x, m, gen)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(a[~m], x[~m])
    np.testing.assert_array_equal(infer(x, np.zeros_like(m), gen), x)
    with pytest.raises(ValueError):
        infer(x, m[:8], gen)


def test_loss_log_columns():
    log = LossLog()
    log.append(iter=0, loss_d=1.0, loss_g_adv=0.5, loss_g_l2=2.0)
    assert list(log.column("loss_g_l2")) == [2.0]


def test_checkpoint_round_trip(tmp_path):
    gen, disc = _nets(seed=4)
    sched = TrainSchedule(epochs=3, seed=17)
    p = tmp_path / "c.ckpt"
    save_checkpoint(p, gen, disc, sched, iteration=42)
    assert p.read_bytes().startswith(b"DMARW1\n")
    g2, d2, header = load_checkpoint(p)
    assert header["iteration"] == 42 and header["seed"] == 17
    assert g2.spec == gen.spec and d2.spec == disc.spec and g2.input_hw == gen.input_hw
    for a, b in ((gen, g2), (disc, d2)):
        assert list(a.params) == list(b.params)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k], b.params[k])
        for k in a.buffers:
            np.testing.assert_array_equal(a.buffers[k], b.buffers[k])


def test_checkpoint_generator_only(tmp_path):
    gen, _ = _nets()
    p = tmp_path / "g.ckpt"
    save_checkpoint(p, gen)
    g2, d2, _ = load_checkpoint(p)
    assert d2 is None
    x = np.zeros((16, 16), np.float32)
    m = np.ones((16, 16), bool)
    np.testing.assert_array_equal(infer(x, m, gen), infer(x, m, g2))


def test_checkpoint_corruption(tmp_path):
    gen, disc = _nets()
    p = tmp_path / "c.ckpt"
    save_checkpoint(p, gen, disc)
    data = p.read_bytes()
    (tmp_path / "bad").write_bytes(b"XXXXXX\n" + data[7:])
    (tmp_path / "short").write_bytes(data[:-4])
    (tmp_path / "long").write_bytes(data + b"\0\0\0\0")
    for name in ("bad", "short", "long"):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / name)


def test_training_reduces_held_out_error():
    x, y, m = _toy_data(24, seed=1)
    xt, yt, mt = _toy_data(8, seed=2)
    sched = TrainSchedule(epochs=100, batch_size=6, seed=3, max_g_steps=200)
    res = train(x, y, m, sched, SMALL_G, SMALL_D)
    assert res.iterations == 200

    def err(gen):
        out = infer(xt[:, None], mt[:, None], gen)[:, 0]
        return np.mean((out[mt] - yt[mt]) ** 2)

    init_gen = init_generator(SMALL_G, (16, 16), np.random.default_rng(np.random.SeedSequence(3).spawn(3)[0]))
    assert err(res.generator) < err(init_gen)
