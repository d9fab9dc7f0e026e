import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tokenspectrum.exceptions import DegenerateError, InputError
from tokenspectrum.probes import (
    CollapseThresholds,
    band_shares,
    classify_runs,
    decile_decomposition,
    decile_masks,
    detect_collapse,
    entropy_dynamics,
    gradient_geometry,
    group_entropy_stats,
    online_cv,
    span_stats,
    sparse_check,
    support_size,
    support_stats,
)
from tokenspectrum.selection import entropy_partition

# -- geometry -------------------------------------------------------------------


def test_geometry_cases():
    g = np.array([1.0, -2.0, 0.5])
    r = gradient_geometry(g, g)
    assert (r.norm_ratio, r.cosine, r.proj_ratio) == pytest.approx((1, 1, 1), abs=1e-12)
    r = gradient_geometry(2 * g, g)
    assert (r.norm_ratio, r.cosine, r.proj_ratio) == pytest.approx((2, 1, 2), abs=1e-12)
    r = gradient_geometry([2.0, 1.0, 0.0], [-1.0, 2.0, 7.0])
    assert r.cosine == pytest.approx(0, abs=1e-12)
    assert r.proj_ratio == pytest.approx(0, abs=1e-12)


def test_geometry_degenerate():
    r = gradient_geometry(np.zeros(3), [1.0, 0, 0])
    assert r.zero_subset and math.isnan(r.cosine) and r.norm_ratio == 0 and r.proj_ratio == 0
    with pytest.raises(DegenerateError):
        gradient_geometry([1.0, 0], [0.0, 0])
    with pytest.raises(InputError):
        gradient_geometry([1.0], [1.0, 2.0])


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 30).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(-10, 10)), arrays(np.float64, n, elements=st.floats(-10, 10)))))
def test_projection_identity(pair):
    gs, gf = pair
    if np.linalg.norm(gf) < 1e-3 or np.linalg.norm(gs) < 1e-3:
        return
    r = gradient_geometry(gs, gf)
    assert r.proj_ratio == pytest.approx(r.cosine * r.norm_ratio, abs=1e-9)


# -- deciles ----------------------------------------------------------------------


def _linear_oracle(G_list):
    # toy "model": per-token gradients fixed; all-token-mean over every token
    total = sum(len(g) for g in G_list)

    def oracle(weights):
        return sum(w @ g for w, g in zip(weights, G_list)) / total
    return oracle


def test_decile_sum_and_bands():
    rng = np.random.default_rng(0)
    lens = [12, 25, 7, 40]
    G = [rng.normal(size=(T, 6)) + 0.3 for T in lens]
    H = [rng.random(T) for T in lens]
    rep = decile_decomposition(H, _linear_oracle(G))
    assert rep.proj_ratios.sum() == pytest.approx(1.0, abs=1e-9)
    assert sum(rep.band_shares.values()) == pytest.approx(1.0, abs=1e-9)
    assert rep.excluded == 1


def test_identical_gradients_give_tenth_each():
    G = [np.tile([1.0, 2.0, -1.0], (30, 1)), np.tile([1.0, 2.0, -1.0], (20, 1))]
    rep = decile_decomposition([np.linspace(0, 1, 30), np.linspace(1, 0, 20)], _linear_oracle(G))
    assert np.allclose(rep.proj_ratios, 0.1, atol=1e-12)
    assert rep.band_shares == pytest.approx({"low": 0.3, "mid": 0.4, "high": 0.3}, abs=1e-12)


def test_decile_masks_partition():
    masks, included = decile_masks([np.random.default_rng(1).random(23), np.ones(4)])
    assert included == [True, False]
    stacked = np.array(masks[0])
    assert np.array_equal(stacked.sum(axis=0), np.ones(23))
    assert sorted(stacked.sum(axis=1)) == [2] * 7 + [3] * 3
    assert not np.any(masks[1])
    with pytest.raises(DegenerateError):
        decile_decomposition([np.ones(5)], lambda w: np.ones(2))


def test_band_shares_degenerate():
    with pytest.raises(DegenerateError):
        band_shares(np.zeros(10))


# -- online statistics -----------------------------------------------------------------


def test_online_cv_cases():
    s = online_cv([1, 1, 1])
    assert list(s.std) == [0, 0, 0] and list(s.cv) == [0, 0, 0]
    s = online_cv([0, 2])
    assert s.mean[1] == 1 and s.std[1] == 1 and s.cv[1] == pytest.approx(1.0, abs=1e-7)
    assert s.std[0] == 0 and s.cv[0] == 0
    s = online_cv([np.nan, 3.0, np.nan, 5.0])
    assert np.isnan(s.mean[0]) and s.mean[3] == 4.0 and s.std[3] == 1.0


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-100, 100)))
def test_online_matches_batch(x):
    s = online_cv(x)
    for i in range(x.size):
        assert s.mean[i] == pytest.approx(x[: i + 1].mean(), abs=1e-8)
        assert s.std[i] == pytest.approx(x[: i + 1].std(), abs=1e-5)


# -- support and span ---------------------------------------------------------------


def test_support_size_cases():
    assert support_size([0.6, 0.3, 0.1], 0.5) == 1
    assert support_size([0.6, 0.3, 0.1], 0.9) == 2
    assert support_size(np.full(10, 0.1), 0.5) == 5
    assert support_size([0, 0, 1.0], 1.0) == 1
    assert support_size([0.3, 0.1, 0.6], 0.7) == 2


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 1)).filter(lambda a: a.sum() > 1e-3))
def test_support_monotone(row):
    row = row / row.sum()
    sizes = [support_size(row, th) for th in (0.1, 0.5, 0.7, 0.9, 1.0)]
    assert sizes == sorted(sizes)
    assert sizes[-1] <= row.size


def test_span_cases():
    t = 9
    row = np.zeros(10)
    row[t] = 1
    assert span_stats(row, t, 4) == pytest.approx((0, 1, 0))
    row = np.zeros(10)
    row[t - 1] = row[t - 9] = 0.5
    assert span_stats(row, t, 4) == pytest.approx((5.0, 0.5, 0.5))
    assert span_stats(np.full(11, 1 / 11), 10)[0] == pytest.approx(5.0)
    with pytest.raises(InputError):
        span_stats(np.full(4, 0.25), 5)


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(0, 1)).filter(lambda a: a.sum() > 1e-3),
       st.integers(0, 20))
def test_span_invariants(row, w):
    row = row / row.sum()
    t = row.size - 1
    md, lm, nl = span_stats(row, t, w)
    assert lm + nl == pytest.approx(1.0, abs=1e-12)
    assert -1e-12 <= md <= t + 1e-9


def test_support_stats_aggregate():
    rows = [(np.array([1.0]), 0), (np.array([0.5, 0.5]), 1)]
    st_ = support_stats(rows, thresholds=(0.5, 1.0), window=16)
    assert st_.support_size == {0.5: 1.0, 1.0: 1.5}
    assert st_.mean_distance == pytest.approx(0.25)
    assert st_.n_tokens == 2
    empty = support_stats([])
    assert empty.n_tokens == 0 and math.isnan(empty.mean_distance)


# -- sparse estimability --------------------------------------------------------------


def _exact_moments(G, p):
    """Exact E[||g_rand - g_full||^2] by enumerating every nonempty mask."""
    T = G.shape[0]
    g_full = G.mean(axis=0)
    p_empty = (1 - p) ** T
    mse = 0.0
    for bits in itertools.product((0, 1), repeat=T):
        m = np.array(bits, dtype=float)
        k = m.sum()
        if k == 0:
            continue
        prob = p ** k * (1 - p) ** (T - k) / (1 - p_empty)
        err = (m @ G) / k - g_full
        mse += prob * (err @ err)
    return mse


@pytest.mark.parametrize("P", [3, 40])
def test_sparse_check_matches_exact_enumeration(P):
    # P=3 uses the direct route, P=40 > T the Gram route
    rng = np.random.default_rng(4)
    G = rng.normal(size=(10, P)) + 0.5
    rep = sparse_check(G, 0.4, 20_000, np.random.default_rng(9))
    exact = _exact_moments(G, 0.4)
    assert rep.empirical_mse == pytest.approx(exact, rel=0.05)
    assert rep.mean_error_max_abs_z < 5.0


def test_sparse_routes_agree():
    rng = np.random.default_rng(2)
    G = rng.normal(size=(12, 12)) + 0.2
    direct = sparse_check(G, 0.3, 5000, np.random.default_rng(1))
    gram = sparse_check(np.hstack([G, np.zeros((12, 1))]), 0.3, 5000, np.random.default_rng(1))
    assert gram.empirical_mse == pytest.approx(direct.empirical_mse, rel=1e-9)
    assert gram.empirical_mean_cosine == pytest.approx(direct.empirical_mean_cosine, rel=1e-9)
    assert np.allclose(gram.mean_error[:12], direct.mean_error, atol=1e-12)


def test_sparse_limit_p_near_one():
    rng = np.random.default_rng(0)
    G = rng.normal(size=(200, 8)) + 1.0
    low = sparse_check(G, 0.2, 5000, np.random.default_rng(1))
    high = sparse_check(G, 0.999, 5000, np.random.default_rng(1))
    assert high.empirical_mse < 0.01 * low.empirical_mse
    assert high.empirical_mean_cosine > 0.999


def test_sparse_validation():
    with pytest.raises(InputError):
        sparse_check(np.ones((5, 2)), 0.2, 2000, np.random.default_rng(0))
    with pytest.raises(InputError):
        sparse_check(np.ones((20, 2)), 0.2, 10, np.random.default_rng(0))
    rep = sparse_check(np.vstack([np.ones((10, 2)), -np.ones((10, 2))]), 0.5, 1000, np.random.default_rng(0))
    assert rep.cosine_skipped and math.isnan(rep.formula_cosine)


def test_sparse_summary_has_both_formulas():
    rep = sparse_check(np.random.default_rng(0).normal(size=(30, 4)), 0.2, 1000, np.random.default_rng(0))
    s = rep.summary()
    assert {"formula_mse", "formula_mse_centered", "v_bar", "v_bar_centered"} <= set(s)
    assert "mean_error" not in s


# -- entropy dynamics --------------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(st.lists(arrays(np.float64, st.integers(1, 30), elements=st.floats(0, 1)), min_size=1, max_size=6))
def test_group_bracketing(responses):
    g = group_entropy_stats(responses, 0.2)
    if math.isnan(g.mean["full"]):
        return
    assert g.mean["anchor"] <= g.mean["full"] + 1e-12
    assert g.mean["full"] <= g.mean["explorer"] + 1e-12


def test_single_response_group_means():
    h = np.array([0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 0.0])
    a, e = entropy_partition(h, 0.2)
    g = group_entropy_stats([h])
    assert g.mean["anchor"] == pytest.approx(h[a.mask].mean())
    assert g.mean["explorer"] == pytest.approx(h[e.mask].mean())
    assert g.mean["anchor"] == pytest.approx(0.05) and g.mean["explorer"] == pytest.approx(0.85)


def test_constant_entropies_equal_means():
    d = entropy_dynamics([[np.full(10, 0.3), np.full(6, 0.3)], [np.full(12, 0.7)]])
    assert np.allclose(d["anchor_mean"], d["full_mean"]) and np.allclose(d["explorer_mean"], d["full_mean"])
    assert np.allclose(d["full_mean"], [0.3, 0.7])


def test_short_responses_excluded():
    g = group_entropy_stats([np.array([0.1]), np.linspace(0, 1, 10)])
    assert g.excluded == 1


# -- collapse detection ------------------------------------------------------------------


def _trace_ma(x, w):
    return [sum(x[max(0, i - w + 1): i + 1]) / len(x[max(0, i - w + 1): i + 1]) for i in range(len(x))]


def test_no_flags_for_stable_run():
    s = detect_collapse([50.0] * 40, list(np.linspace(-1, 1, 40)))
    assert not s.collapsed and s.first_collapse_step is None


def test_short_collapse_step():
    lengths = [100.0] * 10 + [20.0] * 10
    ma = _trace_ma(lengths, 5)
    expected = next(i for i in range(4, 20) if ma[i] < 0.3 * ma[4])
    assert expected == 14
    s = detect_collapse(lengths, [0.0] * 20, CollapseThresholds(short_frac=0.3))
    assert s.flags() == {"short_response_collapse": True, "length_instability": False,
                         "reasoning_degeneration": False}
    assert s.first_trigger_step["short_response_collapse"] == expected


def test_length_spike():
    lengths = [10.0] * 12 + [50.0] + [10.0] * 7
    s = detect_collapse(lengths, [0.0] * 20, CollapseThresholds(spike_mult=2.0))
    assert s.flags() == {"short_response_collapse": False, "length_instability": True,
                         "reasoning_degeneration": False}
    assert s.first_trigger_step["length_instability"] == 12


def test_reasoning_degeneration():
    rewards = [0.0] * 5 + [1.0] * 10 + [0.0] * 20
    ma = _trace_ma(rewards, 5)
    peak, streak, expected = -np.inf, 0, None
    for i in range(4, len(rewards)):
        peak = max(peak, ma[i])
        streak = streak + 1 if peak - ma[i] > 0.2 else 0
        if streak >= 10 and expected is None:
            expected = i
    s = detect_collapse([30.0] * 35, rewards)
    assert s.flags() == {"short_response_collapse": False, "length_instability": False,
                         "reasoning_degeneration": True}
    assert s.first_trigger_step["reasoning_degeneration"] == expected == 25


def test_classify_runs():
    good = ([30.0] * 20, [0.0] * 20)
    bad = ([100.0] * 10 + [10.0] * 10, [0.0] * 20)
    out = classify_runs([good, bad, good])
    assert out["collapsed"] == [1] and out["successful"] == [0, 2]
    assert out["success_rate"] == pytest.approx(2 / 3)
