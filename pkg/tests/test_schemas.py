import pytest

from dpmn.schemas.config import (
    ConfigError,
    NetConfig,
    RunConfig,
    config_hash,
    dump_config_text,
    load_run_config,
    merge_nested,
    parse_config_text,
)

CONFIG_TEXT = """
# small run
epochs = 3
lr = 0.0005
net.window_sizes = 2,4
net.heads = 4
net.embed_dim = 16
weights.lambda_g = 0.5
eval_alphas = 0,1
single_branch = none
"""


def test_parse_dotted_keys_and_comments():
    data = parse_config_text(CONFIG_TEXT)
    assert data["epochs"] == "3"
    assert data["net"] == {"window_sizes": "2,4", "heads": "4", "embed_dim": "16"}
    assert data["single_branch"] is None


def test_parse_errors():
    with pytest.raises(ConfigError):
        parse_config_text("epochs 3")
    with pytest.raises(ConfigError):
        parse_config_text(" = 3")
    with pytest.raises(ConfigError):
        parse_config_text("net = 1\nnet.heads = 2")


def test_load_file_then_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(CONFIG_TEXT)
    config = load_run_config(path, {"seed": 9, "net.heads": 2, "out": None})
    assert config.epochs == 3 and config.seed == 9
    assert config.net.window_sizes == (2, 4)
    assert config.net.heads == 2
    assert config.weights.lambda_g == 0.5
    assert config.eval_alphas == (0.0, 1.0)
    assert config.out is None


def test_dumped_config_loads_back(tmp_path):
    config = load_run_config(None, {"epochs": 2, "net.n_pgrm": 1, "oracle_priors": True})
    path = tmp_path / "echo.cfg"
    path.write_text(dump_config_text(config))
    assert load_run_config(path) == config


@pytest.mark.parametrize("overrides", [
    {"epochs": 0},
    {"net.heads": 5},  # not divisible by three window groups
    {"net.embed_dim": 50},
    {"net.grid": "16,60"},
    {"eval_alphas": "0.5,1.5"},
    {"log_level": "LOUD"},
    {"unknown_key": 1},
    {"fixed_window": 3},
])
def test_invalid_configs_are_config_errors(overrides):
    with pytest.raises(ConfigError):
        load_run_config(None, overrides)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "nope.cfg")


def test_non_frozen_strategies_need_ablation():
    with pytest.raises(ConfigError):
        load_run_config(None, {"train_strategy": "finetune"})
    assert load_run_config(None, {"train_strategy": "standalone", "ablation": True}).ablation


def test_hash_ignores_runtime_only_fields(tmp_path):
    base = RunConfig()
    assert config_hash(base) == config_hash(RunConfig(threads=8, out=tmp_path, log_level="debug"))
    assert config_hash(base) != config_hash(RunConfig(seed=1))
    assert len(config_hash(base)) == 16


def test_effective_net_folds_ablation_flags():
    config = RunConfig(fixed_window=4, cmm_variant="no_ca")
    net = config.effective_net()
    assert net.window_sizes == (4,) and not net.gated
    assert net.cmm_variant == "no_ca"
    plain = RunConfig()
    assert plain.effective_net() is plain.net


def test_net_derived_sizes():
    net = NetConfig()
    assert net.image_hw == (32, 128) and net.lr_hw == (16, 64)
    assert net.heads_per_group == 2 and net.group_dim == 16 and net.head_dim == 8
    assert net.gated


def test_merge_nested_keeps_sibling_keys():
    merged = merge_nested({"net": {"heads": 6, "patch": 2}, "seed": 0}, {"net": {"heads": 3}})
    assert merged == {"net": {"heads": 3, "patch": 2}, "seed": 0}
