"""Experiment configuration: nested dataclasses stored as flat dotted keys.

A config file is a sequence of ``section.key = value`` lines, which is valid
TOML. Every field has a default; :func:`dump_config` writes all of them so an
output directory always records the fully resolved configuration.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .exceptions import ConfigError
from .objective import NORMALIZATIONS, LossSpec, RewardSpec
from .reweight import ReweightConfig
from .tasks import VOCAB
from .tinylm import ModelConfig, SamplingConfig

SELECTION_RULES = (
    "full", "random", "anchor", "explorer", "front", "back",
    "pred-low", "pred-high", "loss-low", "loss-high", "soft",
)
HARD_RULES = tuple(r for r in SELECTION_RULES if r not in ("full", "soft"))


@dataclass(frozen=True)
class TaskConfig:
    difficulty: int = 2
    eval_problems: int = 32

    def __post_init__(self):
        if self.difficulty < 1:
            raise ConfigError("task.difficulty must be at least 1")


@dataclass(frozen=True)
class RolloutConfig:
    n_prompts: int = 16
    n_responses: int = 8
    temperature: float = 1.0
    top_p: float = 0.95
    max_new: int = 16
    val_top_p: float = 0.7
    val_responses: int = 8

    def __post_init__(self):
        if self.n_responses < 2:
            raise ConfigError("rollout.n_responses must be at least 2 for group advantages")
        if self.n_prompts < 1:
            raise ConfigError("rollout.n_prompts must be positive")

    def sampling(self, validation: bool = False) -> SamplingConfig:
        return SamplingConfig(
            temperature=self.temperature,
            top_p=self.val_top_p if validation else self.top_p,
            max_new=self.max_new,
            stop_token=VOCAB.end_id,
        )


@dataclass(frozen=True)
class SelectionConfig:
    rule: str = "full"
    fraction: float = 0.2
    hard_normalization: str = "selected-mean"
    entropy_variant: str = "norm"

    def __post_init__(self):
        if self.rule not in SELECTION_RULES:
            raise ConfigError(f"selection.rule must be one of {SELECTION_RULES}, got {self.rule!r}")
        if self.hard_normalization not in ("selected-mean", "all-token-mean"):
            raise ConfigError("selection.hard_normalization must be selected-mean or all-token-mean")
        if not 0 < self.fraction < 1:
            raise ConfigError("selection.fraction must lie in (0, 1)")
        if self.entropy_variant not in ("raw", "norm", "topk", "fixed"):
            raise ConfigError(f"unknown selection.entropy_variant {self.entropy_variant!r}")

    @property
    def normalization(self) -> str:
        if self.rule == "soft":
            return "all-token-weighted"
        if self.rule == "full":
            return "all-token-mean"
        return self.hard_normalization


@dataclass(frozen=True)
class LossConfig:
    clip_low: float = 0.2
    clip_high: float = 0.28
    eps_std: float = 1e-6

    def spec(self, normalization: str) -> LossSpec:
        if normalization not in NORMALIZATIONS:
            raise ConfigError(f"unknown normalization {normalization!r}")
        return LossSpec(normalization, self.clip_low, self.clip_high)


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.1
    grad_clip: float = 1.0
    warmup_steps: int = 10


@dataclass(frozen=True)
class ProbeConfig:
    every: int = 10
    batches: int = 10
    window: int = 16
    topk: int = 256
    fixed_k: int = 256
    sparse_p: float = 0.2
    sparse_trials: int = 100_000
    sparse_prompts: int = 2
    sparse_max_tokens: int = 256


@dataclass(frozen=True)
class RunConfig:
    steps: int = 300
    seed: int = 0
    out: str = "runs/default"
    trace_every: int = 10
    traces_per_step: int = 3
    eval_every: int = 0
    checkpoint_every: int = 0


def _default_model() -> ModelConfig:
    return ModelConfig(vocab_size=len(VOCAB), d_model=32, n_layers=2, n_heads=2, max_seq_len=48)


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=_default_model)
    task: TaskConfig = field(default_factory=TaskConfig)
    rollout: RolloutConfig = field(default_factory=RolloutConfig)
    reward: RewardSpec = field(default_factory=RewardSpec)
    loss: LossConfig = field(default_factory=LossConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    reweight: ReweightConfig = field(default_factory=ReweightConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def __post_init__(self):
        if self.model.vocab_size < len(VOCAB):
            raise ConfigError(f"model.vocab_size must be at least the tokenizer size {len(VOCAB)}")
        if self.reward.max_response_len != self.rollout.max_new:
            raise ConfigError("reward.max_response_len must equal rollout.max_new")

    def replace(self, **sections) -> "ExperimentConfig":
        """Copy with whole sections or dotted ``section__key`` overrides replaced."""
        updates = {}
        for key, value in sections.items():
            if "__" in key:
                sec, name = key.split("__", 1)
                base = updates.get(sec, getattr(self, sec))
                updates[sec] = dataclasses.replace(base, **{name: value})
            else:
                updates[key] = value
        return dataclasses.replace(self, **updates)

    def to_flat(self) -> dict[str, object]:
        flat = {}
        for f in dataclasses.fields(self):
            section = getattr(self, f.name)
            for sf in dataclasses.fields(section):
                flat[f"{f.name}.{sf.name}"] = getattr(section, sf.name)
        return flat


_SECTION_TYPES = {f.name: f.default_factory for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(nested: dict) -> ExperimentConfig:
    sections = {}
    for name, values in nested.items():
        if name not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section {name!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"config key {name!r} must name a section field (section.key = value)")
        cls = type(_SECTION_TYPES[name]())
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown keys in section {name!r}: {sorted(unknown)}")
        try:
            if name == "model":
                base = dataclasses.asdict(_default_model())
                # an unset probe layer follows n_layers rather than the default depth
                base.pop("probe_layer")
                values = {**base, **values}
            sections[name] = cls(**values)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    return ExperimentConfig(**sections)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        nested = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(nested)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)
    raise ConfigError(f"cannot serialize config value {value!r}")


def dump_config(config: ExperimentConfig, path=None) -> str:
    text = "".join(f"{k} = {_format_value(v)}\n" for k, v in config.to_flat().items())
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
