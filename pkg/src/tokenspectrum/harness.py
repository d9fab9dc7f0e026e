"""RLVR training loop, frozen-checkpoint probes and the sparse-estimability runner."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, dump_config
from .entropy import EntropyRecord, decision_positions, entropy_record
from .exceptions import CheckpointError, DegenerateError
from .objective import extract_boxed, group_advantages, per_token_clip_loss, verify_reward
from .probes import (
    CollapseThresholds,
    decile_decomposition,
    detect_collapse,
    gradient_geometry,
    group_entropy_stats,
    online_cv,
    sparse_check,
    support_stats,
)
from .selection import random_mask
from .tasks import ProblemInstance, encode, generate_problem, problem_seed, response_text
from .tinylm import (
    Parameters,
    TokenBatch,
    init_params,
    loss_grad,
    per_token_grads,
    response_stats,
    sample_batch,
)
from .weighting import TokenWeighter, anchor_explorer_weights

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CHECKPOINT_VERSION = 1

METRIC_COLUMNS = (
    "schema_version", "step", "rule", "normalization",
    "mean_reward", "accuracy", "boxed_rate", "mean_response_len",
    "loss", "grad_norm", "lr", "n_tokens", "weight_sum", "excluded_responses", "skipped",
    "w_low", "w_high",
    "ent_full_mean", "ent_full_std", "ent_anchor_mean", "ent_anchor_std",
    "ent_explorer_mean", "ent_explorer_std",
    "geo_norm_ratio", "geo_cosine", "geo_proj_ratio",
    "short_response_collapse", "length_instability", "reasoning_degeneration",
    "val_mean_at_k",
)

# stream tags keep every random draw in its own SeedSequence branch
_TAG_PROBLEM, _TAG_SAMPLE, _TAG_MASK, _TAG_INIT, _TAG_EVAL, _TAG_PROBE = range(6)


def _rng(seed: int, *index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *index]))


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------


@dataclass
class RolloutBatch:
    problems: list[ProblemInstance]
    group_index: np.ndarray
    tokens: list[np.ndarray]
    prompt_lens: list[int]
    responses: list[np.ndarray]
    rewards: np.ndarray
    correct: np.ndarray
    boxed: np.ndarray
    advantages: list[np.ndarray]
    old_logp: list[np.ndarray]
    records: list[EntropyRecord]
    captures: list = field(repr=False, default_factory=list)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([len(r) for r in self.responses])

    def entropies(self, variant: str = "norm") -> list[np.ndarray]:
        key = {"raw": "h_raw", "norm": "h_norm", "topk": "h_topk", "fixed": "h_fix"}[variant]
        return [getattr(r, key) for r in self.records]

    def token_batch(self, weights: list[np.ndarray]) -> TokenBatch:
        return TokenBatch(self.tokens, self.prompt_lens, self.old_logp, self.advantages, weights)


def collect_rollouts(params: Parameters, config: ExperimentConfig, problems: list[ProblemInstance],
                     stream: tuple[int, ...], n_responses: int | None = None,
                     validation: bool = False) -> RolloutBatch:
    """Sample ``n_responses`` per problem, score them and record entropies.

    Every response has its own rng stream ``(seed, *stream, problem, response)``.
    Old log-probabilities are recomputed by a forward pass at ``params``.
    """
    seed = config.run.seed
    n = n_responses or config.rollout.n_responses
    sampling = config.rollout.sampling(validation)
    prompts, rngs, gidx = [], [], []
    for i, prob in enumerate(problems):
        ids = encode(prob.prompt)
        for j in range(n):
            prompts.append(ids)
            rngs.append(_rng(seed, *stream, i, j))
            gidx.append(i)
    samples = sample_batch(params, prompts, sampling, rngs)
    responses = [s.response for s in samples]
    tokens = [np.concatenate([p, r]) for p, r in zip(prompts, responses)]
    prompt_lens = [len(p) for p in prompts]
    gidx = np.array(gidx)

    rewards, correct, boxed = [], [], []
    for r, g in zip(responses, gidx):
        text = response_text(r)
        value = verify_reward(text, problems[g].answer, len(r), config.reward)
        boxed_answer = extract_boxed(text)
        has_box = boxed_answer is not None
        ok = has_box and boxed_answer == problems[g].answer.strip()
        rewards.append(value)
        correct.append(ok)
        boxed.append(has_box)
    rewards = np.array(rewards)

    adv = np.empty(len(responses))
    for g in range(len(problems)):
        sel = gidx == g
        adv[sel] = group_advantages(rewards[sel], config.loss.eps_std)

    stats = response_stats(params, tokens, prompt_lens)
    records = [
        entropy_record(cap, P, len(r), h_pred, k=config.probe.topk, K=config.probe.fixed_k)
        for cap, P, r, h_pred in zip(stats.captures, prompt_lens, responses, stats.pred_entropy)
    ]
    return RolloutBatch(
        problems=list(problems), group_index=gidx, tokens=tokens, prompt_lens=prompt_lens,
        responses=responses, rewards=rewards, correct=np.array(correct), boxed=np.array(boxed),
        advantages=[np.full(len(r), a) for r, a in zip(responses, adv)],
        old_logp=stats.logp, records=records, captures=stats.captures,
    )


def training_problems(config: ExperimentConfig, step: int) -> list[ProblemInstance]:
    return [
        generate_problem(config.task.difficulty, problem_seed(config.run.seed, _TAG_PROBLEM, step, i))
        for i in range(config.rollout.n_prompts)
    ]


def eval_problems(config: ExperimentConfig) -> list[ProblemInstance]:
    return [
        generate_problem(config.task.difficulty, problem_seed(config.run.seed, _TAG_EVAL, i))
        for i in range(config.task.eval_problems)
    ]


def mean_at_k(params: Parameters, config: ExperimentConfig, problems=None) -> float:
    """Average correctness over ``val_responses`` samples per held-out problem."""
    problems = eval_problems(config) if problems is None else problems
    batch = collect_rollouts(params, config, problems, (_TAG_EVAL, 1),
                             n_responses=config.rollout.val_responses, validation=True)
    per_problem = [batch.correct[batch.group_index == g].mean() for g in range(len(problems))]
    return float(np.mean(per_problem))


# ---------------------------------------------------------------------------
# Optimizer and checkpoints
# ---------------------------------------------------------------------------


class AdamW:
    """Adam with decoupled weight decay applied to weight matrices only."""

    def __init__(self, params: Parameters, lr, beta1, beta2, eps, weight_decay):
        self.lr, self.beta1, self.beta2, self.eps, self.weight_decay = lr, beta1, beta2, eps, weight_decay
        self.m = np.zeros_like(params.theta)
        self.v = np.zeros_like(params.theta)
        self.t = 0
        self.decay_mask = np.zeros_like(params.theta)
        for name, (offset, shape) in params.layout.items():
            if len(shape) == 2 and not name.endswith("_emb"):
                self.decay_mask[offset:offset + int(np.prod(shape))] = 1.0

    def step(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return theta - lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * self.decay_mask * theta)


def save_checkpoint(path, params: Parameters, config: ExperimentConfig, step: int) -> None:
    layout = {k: [off, list(shape)] for k, (off, shape) in params.layout.items()}
    np.savez(
        path, theta=params.theta,
        meta=np.array(json.dumps({
            "version": CHECKPOINT_VERSION, "step": step, "layout": layout,
            "model": config.model.to_dict(), "config": dump_config(config),
        })),
    )


def load_checkpoint(path, config: ExperimentConfig) -> tuple[Parameters, dict]:
    try:
        with np.load(path, allow_pickle=False) as data:
            theta = data["theta"]
            meta = json.loads(str(data["meta"]))
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"cannot load checkpoint {path}: {exc}") from exc
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {meta.get('version')!r}")
    if meta["model"] != config.model.to_dict():
        raise CheckpointError("checkpoint model config does not match the experiment config")
    params = Parameters(config.model, theta)
    stored = {k: (off, tuple(shape)) for k, (off, shape) in meta["layout"].items()}
    if stored != params.layout:
        raise CheckpointError("checkpoint parameter layout does not match the model")
    return params, meta


# ---------------------------------------------------------------------------
# CSV helpers
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "" if math.isnan(value) else repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(c)) for c in columns])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class TrainingResult:
    params: Parameters
    metrics: list[dict]
    out_dir: Path | None


def _trace_records(batch: RolloutBatch, weights, step: int, limit: int) -> list[dict]:
    out = []
    for i in range(min(limit, len(batch.responses))):
        rec = batch.records[i]
        prob = batch.problems[batch.group_index[i]]
        out.append({
            "step": step, "prompt": prob.prompt, "answer": prob.answer,
            "response": response_text(batch.responses[i]),
            "tokens": [int(t) for t in batch.responses[i]],
            "reward": float(batch.rewards[i]),
            "h_raw": rec.h_raw.tolist(), "h_norm": rec.h_norm.tolist(),
            "h_topk": rec.h_topk.tolist(), "h_fix": rec.h_fix.tolist(),
            "h_pred": rec.h_pred.tolist(),
            "weight": np.asarray(weights[i]).tolist(),
            "advantage": batch.advantages[i].tolist(),
        })
    return out


def _score_for_rule(rule: str, batch: RolloutBatch, loss_spec):
    if rule.startswith("pred-"):
        return [r.h_pred for r in batch.records]
    if rule.startswith("loss-"):
        # ratios are 1 at rollout time, so magnitudes tie within a response
        return [np.abs(per_token_clip_loss(np.ones(len(a)), a, loss_spec)) for a in batch.advantages]
    return None


def run_training(config: ExperimentConfig, out_dir=None, progress: bool = False) -> TrainingResult:
    """Train with the configured selection rule; optionally persist metrics and checkpoints."""
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        dump_config(config, out / "config.toml")
        (out / "run_meta.json").write_text(json.dumps(run_metadata(config), indent=2) + "\n")
        trace_fh = open(out / "traces.jsonl", "w", encoding="utf-8")
    else:
        trace_fh = None

    seed = config.run.seed
    params = init_params(config.model, problem_seed(seed, _TAG_INIT))
    opt_cfg = config.optim
    opt = AdamW(params, opt_cfg.lr, opt_cfg.beta1, opt_cfg.beta2, opt_cfg.eps, opt_cfg.weight_decay)
    sel = config.selection
    weighter = TokenWeighter(sel.rule, sel.fraction, config.reweight).fit()
    loss_spec = config.loss.spec(sel.normalization)
    full_spec = config.loss.spec("all-token-mean")
    thresholds = CollapseThresholds()
    metrics: list[dict] = []
    lengths_hist, reward_hist = [], []

    try:
        for step in range(config.run.steps):
            problems = training_problems(config, step)
            batch = collect_rollouts(params, config, problems, (_TAG_SAMPLE, step))
            ent = batch.entropies(sel.entropy_variant)
            scores = _score_for_rule(sel.rule, batch, loss_spec)
            wres = weighter.weigh(ent, step=step, scores=scores, rng=_rng(seed, _TAG_MASK, step))
            w_low, w_high = weighter.endpoint_state(step)
            groups = group_entropy_stats(ent, sel.fraction)
            row = {
                "schema_version": SCHEMA_VERSION, "step": step, "rule": sel.rule,
                "normalization": loss_spec.normalization,
                "mean_reward": float(batch.rewards.mean()),
                "accuracy": float(batch.correct.mean()),
                "boxed_rate": float(batch.boxed.mean()),
                "mean_response_len": float(batch.lengths.mean()),
                "n_tokens": int(batch.lengths.sum()),
                "weight_sum": float(sum(w.sum() for w in wres.weights)),
                "excluded_responses": wres.excluded,
                "w_low": w_low, "w_high": w_high,
                "lr": opt_cfg.lr * min(1.0, (step + 1) / max(opt_cfg.warmup_steps, 1)),
            }
            for g in ("full", "anchor", "explorer"):
                row[f"ent_{g}_mean"] = groups.mean[g]
                row[f"ent_{g}_std"] = groups.std[g]

            tb = batch.token_batch(wres.weights)
            try:
                loss, grad = loss_grad(params, tb, loss_spec)
            except DegenerateError:
                logger.info("step %d: no selected tokens, update skipped", step)
                loss, grad = float("nan"), None
            row["skipped"] = int(grad is None)
            row["loss"] = loss
            if grad is not None:
                gnorm = float(np.linalg.norm(grad))
                row["grad_norm"] = gnorm
                if config.probe.every and step % config.probe.every == 0:
                    row.update(_step_geometry(params, batch, grad, full_spec, sel.rule))
                if gnorm > opt_cfg.grad_clip:
                    grad = grad * (opt_cfg.grad_clip / gnorm)
                params = params.with_theta(opt.step(params.theta, grad, row["lr"]))

            lengths_hist.append(row["mean_response_len"])
            reward_hist.append(row["mean_reward"])
            status = detect_collapse(lengths_hist, reward_hist, thresholds)
            row.update({k: int(v) for k, v in status.flags().items()})
            if config.run.eval_every and (step + 1) % config.run.eval_every == 0:
                row["val_mean_at_k"] = mean_at_k(params, config)
            metrics.append(row)

            if trace_fh is not None and config.run.trace_every and step % config.run.trace_every == 0:
                for rec in _trace_records(batch, wres.weights, step, config.run.traces_per_step):
                    trace_fh.write(json.dumps(rec) + "\n")
            if out is not None and config.run.checkpoint_every and (step + 1) % config.run.checkpoint_every == 0:
                save_checkpoint(out / f"checkpoint_step{step + 1}.npz", params, config, step + 1)
            if progress and step % 10 == 0:
                logger.info("step %d reward %.3f len %.1f", step, row["mean_reward"], row["mean_response_len"])
    finally:
        if trace_fh is not None:
            trace_fh.close()

    if out is not None:
        write_csv(out / "metrics.csv", METRIC_COLUMNS, metrics)
        save_checkpoint(out / "checkpoint.npz", params, config, config.run.steps)
    return TrainingResult(params, metrics, out)


def _step_geometry(params, batch: RolloutBatch, grad, full_spec, rule) -> dict:
    if rule == "full":
        return {"geo_norm_ratio": 1.0, "geo_cosine": 1.0, "geo_proj_ratio": 1.0}
    _, g_full = loss_grad(params, batch.token_batch([np.ones(len(r)) for r in batch.responses]), full_spec)
    try:
        geo = gradient_geometry(grad, g_full)
    except DegenerateError:
        return {}
    return {"geo_norm_ratio": geo.norm_ratio, "geo_cosine": geo.cosine, "geo_proj_ratio": geo.proj_ratio}


def run_metadata(config: ExperimentConfig) -> dict:
    return {
        "package_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "metric_columns": list(METRIC_COLUMNS),
        "selection_rule": config.selection.rule,
        "normalization": config.selection.normalization,
        "notes": [
            f"toy batch: {config.rollout.n_prompts} prompts x {config.rollout.n_responses} responses per step",
            f"toy learning rate {config.optim.lr} (large-model setting is 1e-6)",
            "one optimizer step per rollout batch; importance ratios start at 1",
        ],
    }


# ---------------------------------------------------------------------------
# Frozen-checkpoint probes
# ---------------------------------------------------------------------------

PROBE_SUBSETS = ("anchor", "explorer", "random")
GEOMETRY_COLUMNS = ("batch", "subset", "norm_ratio", "cosine", "proj_ratio", "zero_subset")
DECILE_COLUMNS = ("batch", *[f"d{i}" for i in range(10)], "decile_sum",
                  "band_low", "band_mid", "band_high", "excluded")
SUPPORT_GROUPS = ("full", "anchor", "explorer", "random")


@dataclass
class ProbeResult:
    geometry: list[dict]
    deciles: list[dict]
    support: list[dict]
    dynamics: list[dict]
    summary: dict


def _decision_rows(batch: RolloutBatch, weights) -> list[tuple[np.ndarray, int]]:
    rows = []
    for cap, P, r, w in zip(batch.captures, batch.prompt_lens, batch.responses, weights):
        for t, pos in enumerate(decision_positions(P, len(r))):
            if w[t] > 0:
                rows.append((cap.row(pos), int(pos)))
    return rows


def run_probe(config: ExperimentConfig, checkpoint=None, out_dir=None,
              params: Parameters | None = None) -> ProbeResult:
    """Geometry, decile, support and dynamics reports on frozen parameters."""
    if params is None:
        if checkpoint is None:
            raise CheckpointError("run_probe needs a checkpoint or parameters")
        params, _ = load_checkpoint(checkpoint, config)
    seed = config.run.seed
    sel = config.selection
    hard = config.loss.spec("selected-mean")
    fixed = config.loss.spec("all-token-mean")
    geometry, deciles, support, dynamics = [], [], [], []
    skipped = 0
    for b in range(config.probe.batches):
        problems = [generate_problem(config.task.difficulty, problem_seed(seed, _TAG_PROBE, b, i))
                    for i in range(config.rollout.n_prompts)]
        batch = collect_rollouts(params, config, problems, (_TAG_PROBE, b))
        ent = batch.entropies(sel.entropy_variant)
        ones = [np.ones(len(h)) for h in ent]
        anchors, explorers = anchor_explorer_weights(ent, sel.fraction)
        mask_rng = _rng(seed, _TAG_PROBE, b, 99)
        randoms = [random_mask(len(h), sel.fraction, mask_rng).weights() for h in ent]
        subsets = {"anchor": anchors, "explorer": explorers, "random": randoms}

        _, g_full = loss_grad(params, batch.token_batch(ones), hard)
        if not np.any(g_full):
            skipped += 1
            continue
        for name, w in subsets.items():
            try:
                _, g_s = loss_grad(params, batch.token_batch(w), hard)
            except DegenerateError:
                continue
            geo = gradient_geometry(g_s, g_full)
            geometry.append({"batch": b, "subset": name, **geo.as_dict()})

        def oracle(weights, batch=batch):
            return loss_grad(params, batch.token_batch(weights), fixed)[1]

        try:
            dec = decile_decomposition(ent, oracle)
            drow = {"batch": b, **{f"d{i}": v for i, v in enumerate(dec.proj_ratios)},
                    "decile_sum": float(dec.proj_ratios.sum()), "excluded": dec.excluded}
            drow.update({f"band_{k}": v for k, v in dec.band_shares.items()})
            deciles.append(drow)
        except DegenerateError as exc:
            logger.info("batch %d: decile probe skipped (%s)", b, exc)

        for name, w in (("full", ones), *subsets.items()):
            st = support_stats(_decision_rows(batch, w), window=config.probe.window)
            support.append({"batch": b, "group": name, **st.as_dict()})
        groups = group_entropy_stats(ent, sel.fraction)
        dynamics.append({"batch": b, **{f"{g}_mean": groups.mean[g] for g in groups.mean},
                         **{f"{g}_std": groups.std[g] for g in groups.std}})

    summary = _probe_summary(geometry, deciles, skipped)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "probe_geometry.csv", GEOMETRY_COLUMNS, geometry)
        write_csv(out / "probe_deciles.csv", DECILE_COLUMNS, deciles)
        if support:
            write_csv(out / "probe_support.csv", list(support[0]), support)
        if dynamics:
            write_csv(out / "probe_dynamics.csv", list(dynamics[0]), dynamics)
        (out / "probe_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        dump_config(config, out / "config.toml")
    return ProbeResult(geometry, deciles, support, dynamics, summary)


def _probe_summary(geometry, deciles, skipped) -> dict:
    summary = {"skipped_batches": skipped, "subsets": {}}
    for name in PROBE_SUBSETS:
        rows = [r for r in geometry if r["subset"] == name]
        if not rows:
            continue
        cos = np.array([r["cosine"] for r in rows])
        stat = online_cv(cos)
        summary["subsets"][name] = {
            "n": len(rows),
            "mean_cosine": float(np.nanmean(cos)) if np.any(~np.isnan(cos)) else None,
            "mean_norm_ratio": float(np.mean([r["norm_ratio"] for r in rows])),
            "mean_proj_ratio": float(np.mean([r["proj_ratio"] for r in rows])),
            "cosine_std": float(stat.std[-1]),
            "cosine_cv": float(stat.cv[-1]),
        }
    means = {k: v["mean_cosine"] for k, v in summary["subsets"].items() if v["mean_cosine"] is not None}
    if means:
        summary["most_aligned_subset"] = max(means, key=means.get)
    if deciles:
        summary["mean_decile_proj_ratio"] = [float(np.mean([d[f"d{i}"] for d in deciles])) for i in range(10)]
        summary["max_decile_sum_error"] = float(max(abs(d["decile_sum"] - 1.0) for d in deciles))
    return summary


# ---------------------------------------------------------------------------
# Sparse-estimability check on real per-token gradients
# ---------------------------------------------------------------------------

LIMIT_P = 0.999


def sparse_token_batch(params: Parameters, config: ExperimentConfig) -> tuple[TokenBatch, bool]:
    """A small rollout batch (at most ``probe.sparse_max_tokens`` response tokens).

    Groups whose rewards are all equal carry zero advantage; if every group does,
    advantages are replaced by ones so token gradients are nonzero.
    """
    seed = config.run.seed
    problems = [generate_problem(config.task.difficulty, problem_seed(seed, _TAG_PROBE, 10**6, i))
                for i in range(config.probe.sparse_prompts)]
    batch = collect_rollouts(params, config, problems, (_TAG_PROBE, 10**6))
    keep, total = [], 0
    for i, r in enumerate(batch.responses):
        if total + len(r) <= config.probe.sparse_max_tokens:
            keep.append(i)
            total += len(r)
    adv = [batch.advantages[i] for i in keep]
    unit = not any(np.any(a) for a in adv)
    if unit:
        adv = [np.ones_like(a) for a in adv]
    tb = TokenBatch([batch.tokens[i] for i in keep], [batch.prompt_lens[i] for i in keep],
                    [batch.old_logp[i] for i in keep], adv, [np.ones(len(a)) for a in adv])
    return tb, unit


def run_sparse_check(config: ExperimentConfig, out_dir=None, checkpoint=None) -> dict:
    """Per-token gradients of a real batch, then Monte Carlo over random subsets."""
    if checkpoint is not None:
        params, _ = load_checkpoint(checkpoint, config)
    else:
        params = init_params(config.model, problem_seed(config.run.seed, _TAG_INIT))
    tb, unit = sparse_token_batch(params, config)
    G = per_token_grads(params, tb, config.loss.spec("all-token-mean"))
    pc = config.probe
    main = sparse_check(G, pc.sparse_p, pc.sparse_trials, _rng(config.run.seed, _TAG_PROBE, 7))
    limit = sparse_check(G, LIMIT_P, pc.sparse_trials, _rng(config.run.seed, _TAG_PROBE, 8))
    report = {
        "schema_version": SCHEMA_VERSION,
        "n_tokens": int(G.shape[0]),
        "n_params": int(G.shape[1]),
        "unit_advantages": unit,
        "main": main.summary(),
        "limit": limit.summary(),
        "limit_to_main_mse_ratio": limit.empirical_mse / main.empirical_mse if main.empirical_mse else None,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sparse_check.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        dump_config(config, out / "config.toml")
    return report
