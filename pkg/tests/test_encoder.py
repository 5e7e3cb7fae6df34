"""Feature encoder: output shape law, branch wiring, gradient flow, and the
weight-inizialization symmetry that the fusion relies on."""

import numpy as np
import pytest
from scipy import stats

from modgraph import autodiff as ad
from modgraph import dsp
from modgraph.autodiff import Tensor
from modgraph.encoder import FeatureEncoder


def make_inputs(rng, batch, n, n_dft, dtype=np.float64):
    frames = rng.standard_normal((batch, 2, n)).astype(dtype)
    specs = dsp.dstft_batch(frames[:, 0], frames[:, 1], n_dft=n_dft,
                            win_len=min(8, n_dft)).astype(dtype)
    return frames, specs


def test_shape_law_full_size():
    rng = np.random.default_rng(0)
    enc = FeatureEncoder(n_dft=128, out_channels=16, node_feat=16,
                         rng=np.random.default_rng(1), dtype=np.float32)
    frames, specs = make_inputs(rng, batch=2, n=128, n_dft=128, dtype=np.float32)
    with ad.no_grad():
        nodes = enc(Tensor(frames), Tensor(specs))
    # one output node per input sample; feature halving comes from the
    # stride-2 pool over the doubled BiLSTM channel width
    assert nodes.shape == (2, 128, 16)


def test_shape_law_miniature():
    rng = np.random.default_rng(2)
    enc = FeatureEncoder(n_dft=16, out_channels=4, node_feat=2,
                         rng=np.random.default_rng(3), dtype=np.float32)
    frames, specs = make_inputs(rng, batch=3, n=16, n_dft=16, dtype=np.float32)
    with ad.no_grad():
        nodes = enc(Tensor(frames), Tensor(specs))
    assert nodes.shape == (3, 16, 2)


def test_branch_shapes():
    rng = np.random.default_rng(4)
    enc = FeatureEncoder(n_dft=16, out_channels=4, node_feat=2,
                         rng=np.random.default_rng(5), dtype=np.float32)
    frames, specs = make_inputs(rng, batch=2, n=20, n_dft=16, dtype=np.float32)
    with ad.no_grad():
        x_sd, x_fd = enc.preprocess(Tensor(frames), Tensor(specs))
    # both branches deliver one length-preserving feature lane per channel
    assert x_sd.shape == (2, 4, 20)
    assert x_fd.shape == (2, 4, 20)


def test_input_validation():
    enc = FeatureEncoder(n_dft=16, out_channels=4, node_feat=2,
                         rng=np.random.default_rng(0), dtype=np.float32)
    frames = Tensor(np.zeros((2, 2, 20), dtype=np.float32))
    bad_specs = Tensor(np.zeros((2, 8, 20), dtype=np.float32))   # wrong n_dft
    with pytest.raises(ad.ShapeError):
        enc.preprocess(frames, bad_specs)
    with pytest.raises(ad.ShapeError):
        enc.preprocess(Tensor(np.zeros((2, 3, 20), dtype=np.float32)),
                       Tensor(np.zeros((2, 16, 20), dtype=np.float32)))


def test_zero_weights_give_zero_nodes():
    enc = FeatureEncoder(n_dft=16, out_channels=4, node_feat=2,
                         rng=np.random.default_rng(6), dtype=np.float64)
    for _, p in enc.params():
        p.data[...] = 0.0
    rng = np.random.default_rng(7)
    frames, specs = make_inputs(rng, batch=2, n=16, n_dft=16)
    with ad.no_grad():
        nodes = enc(Tensor(frames), Tensor(specs))
    np.testing.assert_array_equal(nodes.data, 0.0)


def test_gradients_flow_to_every_parameter():
    enc = FeatureEncoder(n_dft=8, out_channels=2, node_feat=2,
                         rng=np.random.default_rng(8), dtype=np.float64)
    rng = np.random.default_rng(9)
    frames, specs = make_inputs(rng, batch=2, n=8, n_dft=8)
    loss = ad.reduce_sum(ad.power(enc(Tensor(frames), Tensor(specs)), 2.0))
    loss.backward()
    for name, p in enc.params():
        assert p.grad is not None, f"no gradient reached {name}"
        assert np.any(p.grad != 0) or "bias" in name, f"all-zero gradient at {name}"


def test_gradient_check_miniature():
    enc = FeatureEncoder(n_dft=8, out_channels=2, node_feat=2,
                         rng=np.random.default_rng(10), dtype=np.float64)
    rng = np.random.default_rng(11)
    frames, specs = make_inputs(rng, batch=2, n=8, n_dft=8)
    ft = Tensor(frames, requires_grad=True)
    st = Tensor(specs, requires_grad=True)
    checked = [ft, st] + [p for _, p in enc.params()][:6]

    def loss(*_):
        enc.train()
        out = enc(ft, st)
        return ad.reduce_mean(ad.power(out, 2.0))

    result = ad.grad_check(loss, checked, tol=1e-4,
                           names=["frames", "specs"] + [n for n, _ in enc.params()][:6])
    assert result.passed, str(result)


def test_initial_weights_treat_both_branches_alike():
    # The two fusion lanes should start statistically interchangeable: the
    # time-domain conv weights and the spectral conv weights are drawn from
    # fan-in-scaled uniforms, so after scaling by sqrt(fan_in) their samples
    # come from the same distribution.
    enc = FeatureEncoder(n_dft=128, out_channels=16, node_feat=16,
                         rng=np.random.default_rng(12), dtype=np.float64)
    named = dict(enc.params())
    w_iq = named["conv_iq.weight"].data
    w_spec = named["conv_spec.weight"].data
    iq_scaled = (w_iq * np.sqrt(w_iq[0].size)).ravel()
    spec_scaled = (w_spec * np.sqrt(w_spec[0].size)).ravel()
    stat = stats.ks_2samp(iq_scaled, spec_scaled)
    assert stat.pvalue > 0.01


def test_train_eval_toggle_running_stats():
    enc = FeatureEncoder(n_dft=8, out_channels=2, node_feat=2,
                         rng=np.random.default_rng(13), dtype=np.float64)
    rng = np.random.default_rng(14)
    frames, specs = make_inputs(rng, batch=4, n=8, n_dft=8)
    before = enc.bn_iq.running_mean.copy()
    enc.train()
    with ad.no_grad():
        enc(Tensor(frames), Tensor(specs))
    assert not np.array_equal(enc.bn_iq.running_mean, before)
    frozen = enc.bn_iq.running_mean.copy()
    enc.eval()
    with ad.no_grad():
        enc(Tensor(frames), Tensor(specs))
    np.testing.assert_array_equal(enc.bn_iq.running_mean, frozen)
