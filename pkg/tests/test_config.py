import pytest

from coughlab.config import SCHEMA, RunConfig, parse_assignment, parse_value, read_config_file
from coughlab.errors import ConfigError


def test_defaults_match_components():
    cfg = RunConfig()
    net = cfg.network(2)
    assert (net.input_dim, net.hidden_units, net.num_bilstm_layers, net.dropout_rate) == (42, 50, 2, 0.3)
    tr = cfg.training()
    assert (tr.learning_rate, tr.batch_size, tr.max_epochs, tr.gradient_clip_norm) == (1e-3, 16, 100, 5.0)
    p = cfg.pipeline()
    assert p.conditioning.target_rate == 11025
    assert (p.frame.frame_len, p.frame.hop_len) == (0.1, 0.05)


@pytest.mark.parametrize("key,raw,expected", [
    ("seed", " 7 ", 7),
    ("net.dropout_rate", "0.5", 0.5),
    ("mfcc.include_c0", "False", False),
    ("mfcc.include_c0", "yes", True),
    ("frame.fft_size", "none", None),
    ("frame.fft_size", "4096", 4096),
    ("task", "4class", "4class"),
])
def test_parse_value(key, raw, expected):
    assert parse_value(key, raw) == expected


def test_parse_errors():
    with pytest.raises(ConfigError):
        parse_value("seed", "seven")
    with pytest.raises(ConfigError):
        parse_value("no.such.key", "1")
    with pytest.raises(ConfigError):
        parse_value("seed", "none")
    with pytest.raises(ConfigError):
        parse_assignment("seed")


def test_file_then_override_precedence(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nseed = 3\nnet.hidden_units = 8  # small\n\ntrain.max_epochs = 4\n")
    cfg = RunConfig.resolve(p, {"seed": 9})
    assert cfg["seed"] == 9
    assert cfg["net.hidden_units"] == 8
    assert cfg["train.max_epochs"] == 4
    assert cfg["mfcc.n_mfcc"] == 14


def test_file_errors_name_line(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("seed = 1\nbogus.key = 3\n")
    with pytest.raises(ConfigError, match=":2:"):
        read_config_file(p)
    p.write_text("seed 1\n")
    with pytest.raises(ConfigError, match=":1:"):
        read_config_file(p)


def test_validation_runs_component_checks():
    with pytest.raises(ConfigError):
        RunConfig.resolve(None, {"split.train_fraction": 1.5})
    with pytest.raises(ConfigError):
        RunConfig.resolve(None, {"frame.hop_len": 0.5})
    with pytest.raises(ConfigError):
        RunConfig({"nope": 1})


def test_dump_round_trip(tmp_path):
    cfg = RunConfig.resolve(None, {"seed": 5, "frame.fft_size": 4096, "mfcc.fmax": None})
    cfg.write(tmp_path / "c.txt")
    again = RunConfig.resolve(tmp_path / "c.txt")
    assert again.values == cfg.values
    assert len([l for l in cfg.dumps().splitlines() if "=" in l]) == len(SCHEMA)
