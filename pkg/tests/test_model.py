import numpy as np
import pytest

import oracles
from dccrnplus import autodiff as ad
from dccrnplus.autodiff.gradcheck import check_gradients, numerical_grad
from dccrnplus.complex_blocks import ComplexTensor
from dccrnplus.model import (
    DCCRNPlus,
    ModelConfig,
    StreamStateError,
    apply_deep_filter,
    count_params,
)
from dccrnplus.module import Module

BN_EPS = 1e-5


def tiny(seed=0, randomize=True):
    with ad.default_dtype(np.float64):
        m = DCCRNPlus(ModelConfig.tiny(), seed=seed)
    if randomize:
        # move BN/affine/slopes away from their trivial initial values
        rng = np.random.default_rng(seed + 100)
        for name, t in list(m.named_parameters()) + list(m.named_buffers()):
            if name.endswith(("g_re", "g_im", "var_re", "var_im")):
                t.data[...] = rng.uniform(0.5, 1.5, t.shape)
            elif name.endswith(("b_re", "b_im", "mean_re", "mean_im", "slope")):
                t.data[...] += rng.uniform(-0.3, 0.3, t.shape)
    return m.eval()


def spec(rng, t, bins, batch=None):
    shape = (t, bins) if batch is None else (batch, t, bins)
    return oracles.crandn(rng, *shape)


def ct(z):
    return ComplexTensor.from_complex(z, np.float64)


# -------------------------------------------------------------------- oracle
def _bn(x, bn):
    def plane(v, g, b, m, var):
        s = (-1, 1, 1)
        return (v - m.data.reshape(s)) / np.sqrt(var.data.reshape(s) + BN_EPS) * g.data.reshape(s) + b.data.reshape(s)
    return (plane(x.real, bn.g_re, bn.b_re, bn.mean_re, bn.var_re)
            + 1j * plane(x.imag, bn.g_im, bn.b_im, bn.mean_im, bn.var_im))


def _prelu(x, act):
    a = act.slope.data[0]
    f = lambda v: np.where(v > 0, v, a * v)  # noqa: E731
    return f(x.real) + 1j * f(x.imag)


def _causal_norm(x, sb):
    b, k, t, w = x.shape
    out = np.zeros_like(x)
    for part, g, beta in ((0, sb.g_re, sb.b_re), (1, sb.g_im, sb.b_im)):
        v = x.real if part == 0 else x.imag
        res = np.zeros_like(v)
        for tt in range(t):
            hist = v[:, :, :tt + 1]
            mu = hist.mean(axis=(2, 3), keepdims=True)
            var = hist.var(axis=(2, 3), keepdims=True)
            res[:, :, tt:tt + 1] = (v[:, :, tt:tt + 1] - mu) / np.sqrt(var + BN_EPS)
        res = res * g.data + beta.data
        out = out + (res if part == 0 else 1j * res)
    return out


def _w(layer):
    return layer.w_re.data + 1j * layer.w_im.data


def _b(layer):
    return layer.b_re.data + 1j * layer.b_im.data


def forward_oracle(m: DCCRNPlus, y):
    """Straight-line numpy composition of every stage (eval mode)."""
    cfg = m.cfg
    sb = m.subband
    a = sb.a_re.data + 1j * sb.a_im.data
    s = sb.s_re.data + 1j * sb.s_im.data
    bands = oracles_split(y[:, :, 1:], a)
    x = _causal_norm(bands, sb)
    skips = []
    for conv, bn, act in zip(m.enc, m.enc_bn, m.enc_act):
        x = _prelu(_bn(oracles.complex_conv(x, _w(conv), _b(conv), cfg.stride, (1, 0), (2, 2)), bn), act)
        skips.append(x)
    d = oracles.tf_lstm(m.tf_lstm, x)
    n = len(m.dec)
    for l in range(n):
        sk = _bn(oracles.complex_conv(skips[n - 1 - l], _w(m.skip[l]), _b(m.skip[l]), (1, 1), (0, 0), (0, 0)), m.skip_bn[l])
        d = np.concatenate([d, sk], axis=1)
        zero = np.zeros_like(d[:, :, :1])
        if l < n - 1:
            xh = np.concatenate([zero, d], axis=2)
            d = oracles.complex_deconv(xh, _w(m.dec[l]), _b(m.dec[l]), cfg.stride, (1, 1), (2, 1))
            d = _prelu(_bn(d, m.dec_bn[l]), m.dec_act[l])
        else:
            # one frame of look-ahead: output for frame t reads features t and t+1
            xh = np.concatenate([zero, d, zero], axis=2)
            d = oracles.complex_deconv(xh, _w(m.dec[l]), _b(m.dec[l]), cfg.stride, (1, 1), (2, 1))[:, :, 1:]
    b, _, t, w = d.shape
    mask = d.reshape(b, cfg.n_bands, cfg.df_taps_time, cfg.df_taps_freq, t, w)
    xf = oracles.deep_filter(mask, bands, cfg.df_taps_freq)
    cat = np.concatenate([xf[:, k] for k in range(cfg.n_bands)], axis=-1)
    merged = cat @ s
    return np.concatenate([np.zeros((b, t, 1)), merged], axis=-1)


def oracles_split(y, a):
    k, w, _ = a.shape
    return np.stack([y[:, :, i * w:(i + 1) * w] @ a[i] for i in range(k)], axis=1)


# --------------------------------------------------------------------- tests
def test_forward_matches_composition_oracle():
    m = tiny()
    y = spec(np.random.default_rng(0), 5, 17, batch=2)
    out, snr = m.forward(y)
    assert out.shape == (2, 5, 17) and snr.shape == (2, 5)
    assert oracles.rel(out.numpy(), forward_oracle(m, y)) < 1e-10


def test_full_config_shapes():
    m = DCCRNPlus(ModelConfig.full())
    assert ModelConfig.full().bottleneck_bins == 4
    probe = m.probe = {}
    m.eval()
    out = m.enhance(np.zeros((3, 257), complex))
    assert out.shape == (3, 257)
    assert [k for k in probe if k.startswith("enc")] == ["enc.0", "enc.1", "enc.2", "enc.3"]


def test_encoder_frequency_sizes():
    m = DCCRNPlus(ModelConfig.full())
    x = ComplexTensor.zeros((1, 4, 2, 64))
    sizes = []
    for conv in m.enc:
        x, _ = conv(x)
        sizes.append(x.shape[-1])
    assert sizes == [32, 16, 8, 4]
    assert x.shape[1] * 2 * x.shape[-1] == 1024  # real+imag channels x bins


def test_param_count_band():
    n = DCCRNPlus(ModelConfig.full()).num_parameters()
    assert 0.85 * 3.3e6 <= n <= 1.15 * 3.3e6


def test_count_params_trivial():
    assert count_params(Module()) == 0
    assert count_params({}) == 0
    assert count_params({"w": np.zeros((2, 3)), "b": np.zeros(3)}) == 9


def test_zero_in_zero_out():
    m = tiny()
    np.testing.assert_array_equal(m.enhance(np.zeros((6, 17), complex)), 0)


def test_dc_bin_zero():
    m = tiny()
    out = m.enhance(spec(np.random.default_rng(1), 4, 17))
    np.testing.assert_array_equal(out[:, 0], 0)


def test_input_shape_error():
    with pytest.raises(ad.ShapeError):
        tiny().enhance(np.zeros((4, 16), complex))


class TestDeepFilter:
    def test_identity_and_rotation(self):
        rng = np.random.default_rng(2)
        y = oracles.crandn(rng, 1, 2, 4, 5)
        mask = np.zeros((1, 2, 2, 3, 4, 5), complex)
        mask[:, :, 0, 1] = 1.0
        prev = np.concatenate([np.zeros((1, 2, 1, 5)), y[:, :, :-1]], axis=2)
        np.testing.assert_allclose(apply_deep_filter(ct(mask), ct(y), ct(prev)).numpy(), y)
        mask[:, :, 0, 1] = 1j
        np.testing.assert_allclose(apply_deep_filter(ct(mask), ct(y), ct(prev)).numpy(), 1j * y)

    def test_matches_double_sum(self):
        rng = np.random.default_rng(3)
        y = oracles.crandn(rng, 2, 3, 5, 6)
        mask = oracles.crandn(rng, 2, 3, 2, 3, 5, 6)
        prev = np.concatenate([np.zeros((2, 3, 1, 6)), y[:, :, :-1]], axis=2)
        got = apply_deep_filter(ct(mask), ct(y), ct(prev)).numpy()
        assert oracles.rel(got, oracles.deep_filter(mask, y)) < 1e-10

    def test_initial_model_is_pass_through_filter(self):
        m = DCCRNPlus(ModelConfig.tiny())
        b = m.dec[-1].b_re.data.reshape(2, 2, 3)
        assert np.all(b[:, 0, 1] == 1) and np.count_nonzero(b) == 2


class TestStreaming:
    def test_frame_accounting(self):
        m = tiny()
        st = m.new_stream()
        y = spec(np.random.default_rng(4), 6, 17)
        outs = [m.stream_process(st, y[t], t) for t in range(6)]
        assert outs[0] is None and all(o is not None for o in outs[1:])
        assert m.stream_flush(st) is not None

    def test_matches_offline(self):
        m = tiny()
        y = spec(np.random.default_rng(5), 12, 17)
        st = m.new_stream()
        outs = [m.stream_process(st, f) for f in y][1:] + [m.stream_flush(st)]
        np.testing.assert_allclose(np.array(outs), m.enhance(y), atol=1e-12)

    def test_batched_stream(self):
        m = tiny()
        y = spec(np.random.default_rng(6), 5, 17, batch=3)
        st = m.new_stream()
        outs = [m.stream_process(st, y[:, t]) for t in range(5)][1:] + [m.stream_flush(st)]
        np.testing.assert_allclose(np.stack(outs, axis=1), m.enhance(y), atol=1e-12)

    def test_reset_replay(self):
        m = tiny()
        y = spec(np.random.default_rng(7), 5, 17)
        st = m.new_stream()
        first = [m.stream_process(st, f) for f in y][1:] + [m.stream_flush(st)]
        st.reset()
        second = [m.stream_process(st, f) for f in y][1:] + [m.stream_flush(st)]
        np.testing.assert_array_equal(np.array(first), np.array(second))

    def test_out_of_order_and_after_flush(self):
        m = tiny()
        st = m.new_stream()
        m.stream_process(st, np.zeros(17), 0)
        with pytest.raises(StreamStateError):
            m.stream_process(st, np.zeros(17), 2)
        m.stream_flush(st)
        with pytest.raises(StreamStateError):
            m.stream_process(st, np.zeros(17))


def test_causality_one_frame_lookahead():
    m = tiny()
    rng = np.random.default_rng(8)
    y = spec(rng, 10, 17)
    base = m.enhance(y)
    for k in range(1, 10):
        y2 = y.copy()
        y2[k:] += oracles.crandn(rng, 10 - k, 17)
        out = m.enhance(y2)
        np.testing.assert_array_equal(out[:k - 1], base[:k - 1])
        assert not np.allclose(out[k - 1], base[k - 1])


def test_finite_for_large_weights():
    m = tiny()
    for p in m.parameters().values():
        p.data *= 20
    out = m.enhance(100 * spec(np.random.default_rng(9), 6, 17))
    assert np.all(np.isfinite(out))


def test_every_parameter_receives_gradient():
    m = tiny().train()
    y = spec(np.random.default_rng(10), 6, 17, batch=2)
    out, snr = m.forward(y)
    loss = ad.tsum(out.re * out.re) + ad.tsum(out.im) + ad.tsum(snr)
    loss.backward()
    dead = [n for n, p in m.named_parameters() if p.grad is None or not np.any(p.grad)]
    assert dead == []


@pytest.mark.parametrize("mode", ["eval", "train"])
def test_model_gradients_sampled(mode):
    m = tiny()
    m.train(mode == "train")
    rng = np.random.default_rng(13)
    y = spec(rng, 5, 17, batch=2)
    w1, w2, w3 = rng.standard_normal((2, 5, 17)), rng.standard_normal((2, 5, 17)), rng.standard_normal((2, 5))

    def fn():
        out, snr = m.forward(y)
        return ad.tsum(out.re * w1) + ad.tsum(out.im * w2) + ad.tsum(snr * w3)

    params = [p for _, p in m.named_parameters()]
    errs = check_gradients(fn, params, max_entries=3, zero_tol=1e-8)
    assert max(errs) < 1e-4


def test_last_frame_gradient_reaches_encoder():
    # the final mask is flushed from stored decoder history, which must stay on the graph
    m = tiny()
    y = spec(np.random.default_rng(14), 4, 17)
    w = m.enc[0].w_re
    for t in range(4):
        m.zero_grad()
        out, _ = m.forward(y, with_snr=False)
        ad.tsum(out.re[:, t] * out.re[:, t]).backward()
        num = numerical_grad(lambda: ad.tsum(m.forward(y, with_snr=False)[0].re[:, t] ** 2), w, index=[0, 5, 17])
        np.testing.assert_allclose(w.grad.ravel()[[0, 5, 17]], num.ravel()[[0, 5, 17]], rtol=1e-5, atol=1e-9)


def test_snr_head_range_and_zero_weights():
    m = tiny()
    _, snr = m.forward(spec(np.random.default_rng(11), 7, 17))
    assert np.all((snr.data > 0) & (snr.data < 1))
    m.snr.w.data[...] = 0
    m.snr.b.data[...] = 0
    _, snr = m.forward(spec(np.random.default_rng(11), 7, 17))
    np.testing.assert_array_equal(snr.data, 0.5)


def test_snr_head_causal():
    m = tiny()
    y = spec(np.random.default_rng(12), 8, 17)
    a = m.forward(y)[1].data
    y[5:] += 1.0
    b = m.forward(y)[1].data
    np.testing.assert_array_equal(a[:, :5], b[:, :5])


def test_config_round_trip_and_validation():
    cfg = ModelConfig.toy()
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        ModelConfig(channels=(31, 64))
    with pytest.raises(ValueError):
        ModelConfig(lookahead_frames=2)
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"bogus": 1})
