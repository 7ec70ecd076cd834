import pytest

from kae.config import ConfigError, ExperimentConfig, ModelSpec, load_config, parse_config_text, parse_seeds


def test_model_spec_tokens():
    assert ModelSpec.parse("kae:2") == ModelSpec("kae", 2)
    assert ModelSpec.parse(" KAE ") == ModelSpec("kae", 3)
    assert ModelSpec.parse("wavkan").label == "wavkan"
    assert ModelSpec("kae", 1).label == "kae-p1" and ModelSpec("kae", 1).token == "kae:1"
    for bad in ("mlp", "ae:2", "kae:x"):
        with pytest.raises(ConfigError):
            ModelSpec.parse(bad)


def test_parse_seeds():
    assert parse_seeds("2024..2026") == (2024, 2025, 2026)
    assert parse_seeds("1, 5,7..8") == (1, 5, 7, 8)


def test_full_grammar(tmp_path):
    text = """
# experiment
dataset = fashion_mnist
models = ae, kae:2 , kae:3   # trailing comment
lr_grid = 1e-4
wd_grid = 1e-4, 1e-5
seeds = 1..3
tasks = reconstruction, retrieval
epochs = 2
latent_sigmoid = yes
gaussian_sigma = 0.2
"""
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.dataset == "fashion_mnist"
    assert cfg.models == (ModelSpec("ae"), ModelSpec("kae", 2), ModelSpec("kae", 3))
    assert cfg.lr_grid == (1e-4,) and cfg.wd_grid == (1e-4, 1e-5)
    assert cfg.seeds == (1, 2, 3) and cfg.epochs == 2 and cfg.latent_sigmoid is True
    assert cfg.gaussian_sigma == 0.2 and cfg.tasks == ("reconstruction", "retrieval")
    assert cfg.batch_size == ExperimentConfig().batch_size


@pytest.mark.parametrize("text, line, fragment", [
    ("dataset = mnist\nbogus = 1\n", 2, "unknown key"),
    ("\n\nepochs = ten\n", 3, "bad value"),
    ("dataset mnist\n", 1, "expected 'key = value'"),
    ("latent_sigmoid = maybe\n", 1, "boolean"),
    ("models = ae, mlp\n", 1, "unknown model family"),
])
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError, match=rf"<config>:{line}: .*{fragment}"):
        parse_config_text(text)


def test_validation():
    with pytest.raises(ConfigError, match="distinct"):
        ExperimentConfig(seeds=(1, 1))
    with pytest.raises(ConfigError):
        ExperimentConfig(lr_grid=())
    with pytest.raises(ConfigError):
        ExperimentConfig(tasks=("bogus",))
    with pytest.raises(ConfigError):
        ExperimentConfig(selection_metric="best")


def test_data_dir_resolution(monkeypatch, tmp_path):
    monkeypatch.delenv("KAE_DATA_DIR", raising=False)
    with pytest.raises(ConfigError):
        ExperimentConfig().resolved_data_dir()
    monkeypatch.setenv("KAE_DATA_DIR", str(tmp_path))
    assert ExperimentConfig().resolved_data_dir() == tmp_path
    assert ExperimentConfig(data_dir="/x").resolved_data_dir().as_posix() == "/x"
