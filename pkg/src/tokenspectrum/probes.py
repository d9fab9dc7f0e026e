"""Gradient-geometry, sparse-estimability and attention-support diagnostics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._validation import check_fraction, check_probability_row, check_vector
from .exceptions import DegenerateError, InputError
from .selection import PartitionError, entropy_partition

CV_EPS = 1e-8
SUPPORT_THRESHOLDS = (0.5, 0.7, 0.9)
DEFAULT_LOCAL_WINDOW = 16
BANDS = {"low": range(0, 3), "mid": range(3, 7), "high": range(7, 10)}


# ---------------------------------------------------------------------------
# Gradient geometry
# ---------------------------------------------------------------------------


@dataclass
class GeometryReport:
    norm_ratio: float
    cosine: float
    proj_ratio: float
    zero_subset: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def gradient_geometry(g_subset, g_full) -> GeometryReport:
    """Norm ratio, cosine and projection ratio of a subset gradient against the full one.

    A zero subset gradient gives ``cosine = nan`` with ``zero_subset`` set.
    """
    gs = np.asarray(g_subset, dtype=np.float64).reshape(-1)
    gf = np.asarray(g_full, dtype=np.float64).reshape(-1)
    if gs.shape != gf.shape:
        raise InputError("gradient vectors must have equal length")
    full_norm = math.sqrt(gf @ gf)
    if full_norm == 0:
        raise DegenerateError("geometry undefined for a zero full-token gradient")
    sub_norm = math.sqrt(gs @ gs)
    dot = float(gs @ gf)
    if sub_norm == 0:
        return GeometryReport(0.0, float("nan"), 0.0, zero_subset=True)
    cosine = float(np.clip(dot / (sub_norm * full_norm), -1.0, 1.0))
    return GeometryReport(sub_norm / full_norm, cosine, dot / (full_norm * full_norm))


@dataclass
class DecileReport:
    proj_ratios: np.ndarray
    band_shares: dict[str, float]
    excluded: int


def decile_masks(entropies: Sequence[np.ndarray]) -> tuple[list[list[np.ndarray]], list[bool]]:
    """Ten within-response entropy deciles per response.

    Tokens are ranked by a stable sort and split with ``np.array_split`` so
    decile sizes differ by at most one. Responses shorter than ten tokens are
    flagged as excluded and receive all-zero masks.
    """
    masks, included = [], []
    for h in entropies:
        h = np.asarray(h, dtype=np.float64)
        T = h.size
        rows = [np.zeros(T) for _ in range(10)]
        if T < 10:
            masks.append(rows)
            included.append(False)
            continue
        for d, idx in enumerate(np.array_split(np.argsort(h, kind="stable"), 10)):
            rows[d][idx] = 1.0
        masks.append(rows)
        included.append(True)
    return masks, included


def band_shares(proj_ratios) -> dict[str, float]:
    pr = np.asarray(proj_ratios, dtype=np.float64)
    sums = {name: float(pr[list(idx)].sum()) for name, idx in BANDS.items()}
    total = sum(sums.values())
    if total == 0:
        raise DegenerateError("band shares undefined when all projection ratios are zero")
    return {name: s / total for name, s in sums.items()}


def decile_decomposition(entropies: Sequence[np.ndarray],
                         gradient_oracle: Callable[[list[np.ndarray]], np.ndarray]) -> DecileReport:
    """Projection ratio of each entropy decile's gradient onto the full gradient.

    ``gradient_oracle(weights)`` must return the all-token-mean gradient for the
    given per-response weight vectors. The full gradient is taken over the same
    included responses, so under a fixed denominator the ten decile gradients
    sum to it exactly.
    """
    masks, included = decile_masks(entropies)
    if not any(included):
        raise DegenerateError("no response long enough for a decile decomposition")
    full_w = [np.ones(len(h)) if ok else np.zeros(len(h)) for h, ok in zip(entropies, included)]
    g_full = gradient_oracle(full_w)
    ratios = np.array([
        gradient_geometry(gradient_oracle([m[d] for m in masks]), g_full).proj_ratio
        for d in range(10)
    ])
    return DecileReport(ratios, band_shares(ratios), excluded=included.count(False))


# ---------------------------------------------------------------------------
# Online statistics
# ---------------------------------------------------------------------------


@dataclass
class OnlineStat:
    mean: np.ndarray
    std: np.ndarray
    cv: np.ndarray


def online_cv(series, eps: float = CV_EPS) -> OnlineStat:
    """Running mean, population std and ``std / (|mean| + eps)`` over each prefix.

    ``nan`` entries (e.g. cosines of zero subset gradients) are skipped.
    """
    x = np.asarray(series, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise InputError("online_cv needs a nonempty series")
    means, stds = np.empty(x.size), np.empty(x.size)
    n = 0
    total = total_sq = 0.0
    for i, v in enumerate(x):
        if not np.isnan(v):
            n += 1
            total += v
            total_sq += v * v
        if n == 0:
            means[i] = stds[i] = np.nan
            continue
        mu = total / n
        means[i] = mu
        stds[i] = math.sqrt(max(total_sq / n - mu * mu, 0.0))
    std_clean = np.where(stds < 1e-15, 0.0, stds)
    return OnlineStat(means, std_clean, std_clean / (np.abs(means) + eps))


# ---------------------------------------------------------------------------
# Attention support statistics
# ---------------------------------------------------------------------------


def support_size(row, threshold: float) -> int:
    """Fewest positions, in descending attention order, whose mass reaches ``threshold``."""
    p = check_probability_row(row)
    check_fraction(threshold, name="threshold", closed_right=True)
    order = np.argsort(-p, kind="stable")
    cum = np.cumsum(p[order])
    # tolerate float shortfall when threshold == 1
    return int(min(np.searchsorted(cum, threshold - 1e-12, side="left") + 1, p.size))


def span_stats(row, t: int, window: int = DEFAULT_LOCAL_WINDOW) -> tuple[float, float, float]:
    """``(mean distance, local mass, non-local mass)`` of the row at position ``t``."""
    p = check_probability_row(row)
    if p.size != t + 1:
        raise InputError(f"row at position {t} must have {t + 1} entries, got {p.size}")
    dist = t - np.arange(t + 1)
    local = float(p[dist <= window].sum())
    return float(p @ dist), local, 1.0 - local


@dataclass
class SupportStats:
    support_size: dict[float, float]
    mean_distance: float
    local_mass: float
    nonlocal_mass: float
    window: int
    n_tokens: int

    def as_dict(self, prefix: str = "") -> dict:
        out = {f"{prefix}support_{th}": v for th, v in self.support_size.items()}
        out.update({
            f"{prefix}mean_distance": self.mean_distance,
            f"{prefix}local_mass": self.local_mass,
            f"{prefix}nonlocal_mass": self.nonlocal_mass,
            f"{prefix}window": self.window,
            f"{prefix}n_tokens": self.n_tokens,
        })
        return out


def support_stats(rows_with_pos: Sequence[tuple[np.ndarray, int]],
                  thresholds: Sequence[float] = SUPPORT_THRESHOLDS,
                  window: int = DEFAULT_LOCAL_WINDOW) -> SupportStats:
    """Average support sizes and span statistics over a set of attention rows."""
    if not rows_with_pos:
        nan = float("nan")
        return SupportStats({th: nan for th in thresholds}, nan, nan, nan, window, 0)
    sizes = {th: float(np.mean([support_size(r, th) for r, _ in rows_with_pos])) for th in thresholds}
    spans = np.array([span_stats(r, t, window) for r, t in rows_with_pos])
    md, lm, nl = spans.mean(axis=0)
    return SupportStats(sizes, float(md), float(lm), float(nl), window, len(rows_with_pos))


# ---------------------------------------------------------------------------
# Sparse estimability
# ---------------------------------------------------------------------------


@dataclass
class SparseCheckReport:
    p: float
    T: int
    trials: int
    empty_redraws: int
    mean_error_max_abs_z: float
    mean_error_norm: float
    empirical_mse: float
    formula_mse: float
    formula_mse_centered: float
    v_bar: float
    v_bar_centered: float
    empirical_mean_cosine: float
    formula_cosine: float
    cosine_skipped: bool = False
    mean_error: np.ndarray = field(default=None, repr=False)
    mean_error_se: np.ndarray = field(default=None, repr=False)

    def summary(self) -> dict:
        out = asdict(self)
        out.pop("mean_error")
        out.pop("mean_error_se")
        return out


def _draw_masks(rng, n, T, p):
    masks = rng.random((n, T)) < p
    redraws = 0
    empty = ~masks.any(axis=1)
    while empty.any():
        redraws += int(empty.sum())
        masks[empty] = rng.random((int(empty.sum()), T)) < p
        empty = ~masks.any(axis=1)
    return masks, redraws


def sparse_check(token_grads, p: float, trials: int, rng: np.random.Generator,
                 chunk: int = 2000) -> SparseCheckReport:
    """Monte Carlo of the random-subset gradient ``sum(m g) / sum(m)`` against ``g_full``.

    Token gradients are fixed; only the Bernoulli(p) masks are random. Empty masks
    are redrawn and counted. Returns the empirical bias (with per-coordinate
    standard errors), MSE and mean cosine alongside the large-T approximations
    ``(1-p)/(pT) * Vbar`` (uncentered and centered ``Vbar``) and
    ``1/sqrt(1 + (1-p) Vbar / (p T ||g_full||^2))``.
    """
    G = np.asarray(token_grads, dtype=np.float64)
    if G.ndim != 2:
        raise InputError("token_grads must be a (T, P) array")
    T, P = G.shape
    if T < 10:
        raise InputError("sparse_check needs T >= 10")
    if trials < 1000:
        raise InputError("sparse_check needs at least 1000 trials")
    check_fraction(p, name="p")
    g_full = G.mean(axis=0)
    D = G - g_full
    full_sq = float(g_full @ g_full)
    skip_cos = full_sq == 0.0

    use_gram = P > T
    if use_gram:
        gram_d = D @ D.T
        gram_g = G @ G.T
        proj = G @ g_full
    sum_c = np.zeros(T)
    second = np.zeros((T, T)) if use_gram else None
    sum_y = np.zeros(P) if not use_gram else None
    sum_y2 = np.zeros(P) if not use_gram else None
    sq_err_total = 0.0
    cos_total = 0.0
    redraws = 0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        masks, r = _draw_masks(rng, n, T, p)
        redraws += r
        C = masks / masks.sum(axis=1, keepdims=True)
        sum_c += C.sum(axis=0)
        if use_gram:
            second += C.T @ C
            sq_err_total += float(np.einsum("ij,jk,ik->", C, gram_d, C))
            if not skip_cos:
                norms = np.sqrt(np.einsum("ij,jk,ik->i", C, gram_g, C))
                cos_total += float(((C @ proj) / (norms * math.sqrt(full_sq))).sum())
        else:
            Y = C @ D                       # g_rand - g_full per trial
            sum_y += Y.sum(axis=0)
            sum_y2 += (Y * Y).sum(axis=0)
            sq_err_total += float((Y * Y).sum())
            if not skip_cos:
                R = Y + g_full
                cos_total += float(((R @ g_full) / (np.linalg.norm(R, axis=1) * math.sqrt(full_sq))).sum())
        done += n

    if use_gram:
        mean_err = (sum_c / trials) @ D
        second_moment = np.einsum("tp,tp->p", D, (second / trials) @ D)
    else:
        mean_err = sum_y / trials
        second_moment = sum_y2 / trials
    var = np.maximum(second_moment - mean_err ** 2, 0.0)
    se = np.sqrt(var / trials)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(mean_err) / se, 0.0)

    v_bar = float((G * G).sum(axis=1).mean())
    v_bar_c = float((D * D).sum(axis=1).mean())
    factor = (1.0 - p) / (p * T)
    formula_cos = float("nan") if skip_cos else 1.0 / math.sqrt(1.0 + factor * v_bar / full_sq)
    return SparseCheckReport(
        p=p, T=T, trials=trials, empty_redraws=redraws,
        mean_error_max_abs_z=float(z.max()), mean_error_norm=float(np.linalg.norm(mean_err)),
        empirical_mse=sq_err_total / trials,
        formula_mse=factor * v_bar, formula_mse_centered=factor * v_bar_c,
        v_bar=v_bar, v_bar_centered=v_bar_c,
        empirical_mean_cosine=float("nan") if skip_cos else cos_total / trials,
        formula_cosine=formula_cos, cosine_skipped=skip_cos,
        mean_error=mean_err, mean_error_se=se,
    )


# ---------------------------------------------------------------------------
# Entropy dynamics
# ---------------------------------------------------------------------------


@dataclass
class GroupDynamics:
    mean: dict[str, float]
    std: dict[str, float]
    excluded: int


def group_entropy_stats(entropies: Sequence[np.ndarray], fraction: float = 0.2) -> GroupDynamics:
    """Full/anchor/explorer entropy summary for one step's responses.

    Group means average the per-response group means, so
    ``anchor <= full <= explorer`` holds exactly; stds are pooled within group.
    """
    pools = {"full": [], "anchor": [], "explorer": []}
    means = {"full": [], "anchor": [], "explorer": []}
    excluded = 0
    for h in entropies:
        h = np.asarray(h, dtype=np.float64)
        try:
            anchor, explorer = entropy_partition(h, fraction)
        except PartitionError:
            excluded += 1
            continue
        for name, vals in (("full", h), ("anchor", h[anchor.mask]), ("explorer", h[explorer.mask])):
            pools[name].append(vals)
            means[name].append(vals.mean())
    nan = float("nan")
    mean = {k: float(np.mean(v)) if v else nan for k, v in means.items()}
    std = {k: float(np.concatenate(v).std()) if v else nan for k, v in pools.items()}
    return GroupDynamics(mean, std, excluded)


def entropy_dynamics(steps: Sequence[Sequence[np.ndarray]], fraction: float = 0.2) -> dict[str, np.ndarray]:
    """Per-step group means and stds: keys like ``anchor_mean`` / ``explorer_std``."""
    rows = [group_entropy_stats(s, fraction) for s in steps]
    out = {}
    for g in ("full", "anchor", "explorer"):
        out[f"{g}_mean"] = np.array([r.mean[g] for r in rows])
        out[f"{g}_std"] = np.array([r.std[g] for r in rows])
    return out


# ---------------------------------------------------------------------------
# Collapse detection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CollapseThresholds:
    short_frac: float = 0.3
    spike_mult: float = 2.0
    degrade_drop: float = 0.2
    patience: int = 10
    window: int = 5


@dataclass
class CollapseStatus:
    short_response_collapse: bool = False
    length_instability: bool = False
    reasoning_degeneration: bool = False
    first_trigger_step: dict[str, int | None] = field(default_factory=lambda: {
        "short_response_collapse": None, "length_instability": None, "reasoning_degeneration": None,
    })

    @property
    def collapsed(self) -> bool:
        return self.short_response_collapse or self.length_instability or self.reasoning_degeneration

    @property
    def first_collapse_step(self) -> int | None:
        steps = [s for s in self.first_trigger_step.values() if s is not None]
        return min(steps) if steps else None

    def flags(self) -> dict[str, bool]:
        return {k: getattr(self, k) for k in self.first_trigger_step}


def _trailing_mean(x: np.ndarray, window: int) -> np.ndarray:
    return np.array([x[max(0, i - window + 1): i + 1].mean() for i in range(x.size)])


def detect_collapse(lengths, rewards, thresholds: CollapseThresholds = CollapseThresholds()) -> CollapseStatus:
    """Scan a run history for the three explorer-style failure modes.

    * short-response collapse: the ``window``-step trailing length average drops
      below ``short_frac`` times its value at the first full window;
    * length instability: a step's length exceeds ``spike_mult`` times the mean of
      the preceding ``window`` steps;
    * reasoning degeneration: the trailing reward average stays more than
      ``degrade_drop`` below its running peak for ``patience`` consecutive steps
      (trigger step is the last step of that streak).

    Flags are sticky; each records the step (0-indexed) it first fired.
    """
    L = check_vector(lengths, name="lengths")
    R = check_vector(rewards, name="rewards")
    if L.shape != R.shape:
        raise InputError("lengths and rewards must have equal length")
    w = thresholds.window
    status = CollapseStatus()
    len_ma = _trailing_mean(L, w)
    rew_ma = _trailing_mean(R, w)
    initial = len_ma[min(w, L.size) - 1]
    peak = -np.inf
    streak = 0

    def fire(name, step):
        if not getattr(status, name):
            setattr(status, name, True)
            status.first_trigger_step[name] = step

    for s in range(L.size):
        if s >= w - 1 and len_ma[s] < thresholds.short_frac * initial:
            fire("short_response_collapse", s)
        if s >= w and L[s] > thresholds.spike_mult * L[s - w: s].mean():
            fire("length_instability", s)
        if s >= w - 1:
            peak = max(peak, rew_ma[s])
            streak = streak + 1 if peak - rew_ma[s] > thresholds.degrade_drop else 0
            if streak >= thresholds.patience:
                fire("reasoning_degeneration", s)
    return status


def classify_runs(histories: Sequence[tuple[Sequence[float], Sequence[float]]],
                  thresholds: CollapseThresholds = CollapseThresholds()) -> dict:
    """Split runs into collapsed vs. successful (bimodal explorer-style outcome)."""
    statuses = [detect_collapse(l, r, thresholds) for l, r in histories]
    collapsed = [i for i, s in enumerate(statuses) if s.collapsed]
    first = [s.first_collapse_step for s in statuses if s.collapsed]
    return {
        "n_runs": len(statuses),
        "collapsed": collapsed,
        "successful": [i for i in range(len(statuses)) if i not in collapsed],
        "success_rate": 1.0 - len(collapsed) / len(statuses) if statuses else float("nan"),
        "first_collapse_step_mean": float(np.mean(first)) if first else float("nan"),
        "first_collapse_step_std": float(np.std(first)) if first else float("nan"),
        "statuses": statuses,
    }
