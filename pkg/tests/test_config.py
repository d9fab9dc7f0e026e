import pytest

from tokenspectrum.config import ExperimentConfig, config_from_dict, dump_config, load_config
from tokenspectrum.exceptions import ConfigError


def test_defaults_valid():
    cfg = ExperimentConfig()
    assert cfg.selection.normalization == "all-token-mean"
    assert cfg.optim.lr == 3e-4
    assert cfg.rollout.n_prompts == 16 and cfg.rollout.n_responses == 8
    assert cfg.reweight.tau == 0.8 and cfg.reweight.warmup_steps == 80


@pytest.mark.parametrize("rule,norm", [("soft", "all-token-weighted"), ("full", "all-token-mean"),
                                       ("anchor", "selected-mean"), ("random", "selected-mean")])
def test_normalization_by_rule(rule, norm):
    assert ExperimentConfig().replace(selection__rule=rule).selection.normalization == norm


def test_hard_normalization_flag():
    cfg = ExperimentConfig().replace(selection__rule="explorer", selection__hard_normalization="all-token-mean")
    assert cfg.selection.normalization == "all-token-mean"


def test_dump_load_round_trip(tmp_path):
    cfg = ExperimentConfig().replace(selection__rule="soft", reweight__schedule="high2low", run__seed=5,
                                     run__out="x y/z")
    path = tmp_path / "c.toml"
    dump_config(cfg, path)
    assert load_config(path) == cfg


def test_every_field_written():
    text = dump_config(ExperimentConfig())
    assert "reweight.w_low_start = 1.0" in text
    assert "model.probe_layer = 1" in text
    assert len(text.splitlines()) == len(ExperimentConfig().to_flat())


def test_partial_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("run.steps = 7\nselection.rule = \"anchor\"\nmodel.d_model = 16\n")
    cfg = load_config(path)
    assert cfg.run.steps == 7 and cfg.selection.rule == "anchor" and cfg.model.d_model == 16
    assert cfg.model.n_layers == 2


@pytest.mark.parametrize("text", [
    "bogus.x = 1", "run.nope = 1", "selection.rule = \"middle\"", "rollout.n_responses = 1",
    "rollout.max_new = 20", "model.vocab_size = 10", "steps = 3", "run.steps = [",
])
def test_bad_files(tmp_path, text):
    path = tmp_path / "c.toml"
    path.write_text(text + "\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_nested_sections_accepted():
    cfg = config_from_dict({"run": {"steps": 3}, "reward": {"max_response_len": 16}})
    assert cfg.run.steps == 3
