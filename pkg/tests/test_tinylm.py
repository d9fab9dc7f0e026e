import math

import numpy as np
import pytest

from tokenspectrum.exceptions import ConfigError, InputError
from tokenspectrum.objective import LossSpec
from tokenspectrum.tinylm import (
    ModelConfig,
    SamplingConfig,
    TokenBatch,
    forward,
    init_params,
    log_softmax,
    loss_grad,
    loss_value,
    n_params,
    param_layout,
    per_token_grads,
    response_stats,
    sample,
    sample_batch,
)

CFG_A = ModelConfig(vocab_size=32, d_model=16, n_layers=2, n_heads=2, max_seq_len=16)


def _perturbed(cfg, seed=3, scale=0.3):
    p = init_params(cfg, seed)
    return p.with_theta(p.theta + np.random.default_rng(seed).normal(0, scale, p.theta.size))


def _batch(cfg, rng, lens=((4, 5), (3, 4), (2, 6)), weights=None):
    toks, pls, olds, advs, ws = [], [], [], [], []
    for P, T in lens:
        toks.append(rng.integers(0, cfg.vocab_size, P + T))
        pls.append(P)
        olds.append(rng.normal(-math.log(cfg.vocab_size), 0.3, T))
        advs.append(np.full(T, rng.normal()))
        ws.append(rng.random(T) if weights is None else np.full(T, weights))
    return TokenBatch(toks, pls, olds, advs, ws)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(d_model=10, n_heads=3)
    with pytest.raises(ConfigError):
        ModelConfig(n_layers=2, probe_layer=2)
    assert ModelConfig(n_layers=4).probe_layer == 2


def test_layout_is_contiguous():
    layout = param_layout(CFG_A)
    offset = 0
    for off, shape in layout.values():
        assert off == offset
        offset += int(np.prod(shape))
    assert offset == n_params(CFG_A)


def test_init_determinism_and_gains():
    a, b, c = init_params(CFG_A, 7), init_params(CFG_A, 7), init_params(CFG_A, 8)
    assert np.array_equal(a.theta, b.theta)
    assert np.any(a.theta != c.theta)
    for name in param_layout(CFG_A):
        if name.endswith(".g"):
            assert np.all(a.view(name) == 1.0)


def test_forward_shapes_and_rows():
    p = init_params(CFG_A, 0)
    tr = forward(p, [1, 5, 9, 2, 7])
    assert tr.logits.shape == (5, 32)
    for t in range(5):
        row = tr.attention_capture.row(t)
        assert row.shape == (t + 1,)
        assert np.all(row >= 0) and abs(row.sum() - 1) < 1e-9


def test_causality_exact():
    p = _perturbed(CFG_A)
    x = np.array([1, 5, 9, 2, 7, 3])
    y = x.copy()
    y[4] = 11
    a, b = forward(p, x).logits, forward(p, y).logits
    assert np.array_equal(a[:4], b[:4])
    assert not np.array_equal(a[4:], b[4:])


def test_padding_does_not_leak():
    p = _perturbed(CFG_A)
    short = np.array([3, 4, 5])
    stats = response_stats(p, [short, np.array([1, 2, 3, 4, 5, 6, 7])], [1, 2])
    alone = response_stats(p, [short], [1])
    assert np.array_equal(stats.logp[0], alone.logp[0])


def test_input_validation():
    p = init_params(CFG_A, 0)
    with pytest.raises(InputError):
        forward(p, [40])
    with pytest.raises(InputError):
        forward(p, list(range(17)))
    with pytest.raises(InputError):
        forward(p, [])


def _fd_grad(p, batch, spec, h=1e-5):
    g = np.empty(p.theta.size)
    for i in range(p.theta.size):
        tp = p.theta.copy()
        tp[i] += h
        up = loss_value(p.with_theta(tp), batch, spec)
        tp[i] -= 2 * h
        down = loss_value(p.with_theta(tp), batch, spec)
        g[i] = (up - down) / (2 * h)
    return g


@pytest.mark.parametrize("norm", ["selected-mean", "all-token-mean", "all-token-weighted"])
def test_gradient_matches_finite_differences(norm):
    cfg = ModelConfig(vocab_size=9, d_model=8, n_layers=2, n_heads=2, max_seq_len=10)
    p = _perturbed(cfg)
    batch = _batch(cfg, np.random.default_rng(1), lens=((3, 4), (2, 3)))
    spec = LossSpec(norm)
    _, g = loss_grad(p, batch, spec)
    fd = _fd_grad(p, batch, spec)
    m = np.abs(g) > 1e-8
    assert np.max(np.abs(g - fd)[m] / np.abs(g)[m]) < 1e-4


def test_gradient_through_clip_branch():
    cfg = ModelConfig(vocab_size=9, d_model=8, n_layers=1, n_heads=2, max_seq_len=10)
    p = _perturbed(cfg)
    rng = np.random.default_rng(5)
    batch = _batch(cfg, rng, lens=((3, 5),))
    # push some ratios far outside the clip band
    stats = response_stats(p, batch.tokens, batch.prompt_lens)
    old = stats.logp[0] + np.array([1.0, -1.0, 0.0, 2.0, -0.5])
    batch = TokenBatch(batch.tokens, batch.prompt_lens, [old], [np.array([1.0, -1.0, 1.0, -1.0, 1.0])],
                       batch.weights)
    spec = LossSpec("all-token-mean")
    _, g = loss_grad(p, batch, spec)
    fd = _fd_grad(p, batch, spec)
    m = np.abs(g) > 1e-8
    assert np.max(np.abs(g - fd)[m] / np.abs(g)[m]) < 1e-4


def test_loss_value_matches_loss_grad():
    p = _perturbed(CFG_A)
    batch = _batch(CFG_A, np.random.default_rng(6))
    for norm in ("selected-mean", "all-token-mean"):
        assert loss_value(p, batch, LossSpec(norm)) == loss_grad(p, batch, LossSpec(norm))[0]


def test_selected_mean_scale_invariance():
    p = _perturbed(CFG_A)
    rng = np.random.default_rng(2)
    b1 = _batch(CFG_A, rng, weights=1.0)
    b2 = b1.with_weights([w * 0.5 for w in b1.weights])
    l1, g1 = loss_grad(p, b1, LossSpec("selected-mean"))
    l2, g2 = loss_grad(p, b2, LossSpec("selected-mean"))
    assert l1 == pytest.approx(l2, abs=1e-14)
    assert np.allclose(g1, g2, atol=1e-14)


def test_disjoint_masks_sum_to_full_gradient():
    p = _perturbed(CFG_A)
    rng = np.random.default_rng(3)
    batch = _batch(CFG_A, rng, weights=1.0)
    spec = LossSpec("all-token-mean")
    _, g_full = loss_grad(p, batch, spec)
    labels = [rng.integers(0, 10, len(w)) for w in batch.weights]
    total = sum(
        loss_grad(p, batch.with_weights([(lab == d).astype(float) for lab in labels]), spec)[1]
        for d in range(10)
    )
    assert np.max(np.abs(total - g_full)) < 1e-9


def test_per_token_grads_sum():
    p = _perturbed(CFG_A)
    batch = _batch(CFG_A, np.random.default_rng(4), weights=1.0)
    spec = LossSpec("all-token-mean")
    G = per_token_grads(p, batch, spec)
    _, g_full = loss_grad(p, batch, spec)
    assert G.shape == (sum(len(w) for w in batch.weights), p.theta.size)
    assert np.allclose(G.mean(axis=0), g_full, atol=1e-12)


def test_weights_validated():
    rng = np.random.default_rng(0)
    b = _batch(CFG_A, rng)
    with pytest.raises(InputError):
        b.with_weights([-w for w in b.weights])
    with pytest.raises(InputError):
        TokenBatch(b.tokens, b.prompt_lens, b.old_logp[:1], b.advantages, b.weights)


def test_sampling_determinism_and_stop():
    p = _perturbed(CFG_A)
    s = SamplingConfig(top_p=0.9, max_new=8, stop_token=3)
    a = sample(p, [1, 2], s, np.random.default_rng(11))
    b = sample(p, [1, 2], s, np.random.default_rng(11))
    assert np.array_equal(a.response, b.response)
    assert np.array_equal(a.logprobs, b.logprobs)
    assert 1 <= len(a.response) <= 8
    assert 3 not in a.response[:-1]
    assert a.capture.length == 2 + len(a.response)


def test_greedy_is_argmax():
    p = _perturbed(CFG_A)
    s = SamplingConfig(max_new=5, greedy=True)
    out = sample(p, [4, 6], s, np.random.default_rng(0))
    seq = [4, 6]
    for tok in out.response:
        assert tok == int(np.argmax(forward(p, seq).logits[-1]))
        seq.append(int(tok))
    again = sample(p, [4, 6], s, np.random.default_rng(99))
    assert np.array_equal(out.response, again.response)


def test_untruncated_logprobs_match_softmax():
    p = _perturbed(CFG_A)
    s = SamplingConfig(top_p=1.0, temperature=1.0, max_new=6)
    out = sample(p, [1, 2, 3], s, np.random.default_rng(2))
    full = np.concatenate([[1, 2, 3], out.response])
    expected = log_softmax(forward(p, full).logits)[np.arange(2, 2 + len(out.response)), out.response]
    assert np.allclose(out.logprobs, expected, atol=1e-12)


def test_nucleus_restricts_support():
    p = _perturbed(CFG_A, scale=1.0)
    s = SamplingConfig(top_p=0.3, max_new=1)
    logits = forward(p, [5]).logits[-1]
    probs = np.exp(log_softmax(logits))
    order = np.argsort(-probs, kind="stable")
    keep = order[(np.cumsum(probs[order]) - probs[order]) < 0.3]
    seen = {int(sample(p, [5], s, np.random.default_rng(i)).response[0]) for i in range(200)}
    assert seen <= set(keep.tolist())


def test_batched_sampling_matches_single():
    p = _perturbed(CFG_A)
    s = SamplingConfig(max_new=6, stop_token=0)
    prompts = [[1, 2], [3, 4, 5], [6]]
    batch = sample_batch(p, prompts, s, [np.random.default_rng(i) for i in range(3)])
    for i, pr in enumerate(prompts):
        single = sample(p, pr, s, np.random.default_rng(i))
        assert np.array_equal(single.response, batch[i].response)


def test_sampling_validation():
    with pytest.raises(ConfigError):
        SamplingConfig(top_p=0.0)
    with pytest.raises(ConfigError):
        SamplingConfig(temperature=0.0)
    with pytest.raises(InputError):
        sample_batch(init_params(CFG_A, 0), [[1]], SamplingConfig(), [])
