import pytest

from stmbp.config import PRESETS, RunConfig, apply_overrides, load_config, parse_config_text, preset
from stmbp.errors import ConfigError


def test_text_round_trip():
    cfg = apply_overrides(RunConfig(), ["model.channels=4,8", "train.oversample=false", "run.seed=9", "synth.freq_weights=1,2"])
    back = parse_config_text(cfg.to_text())
    assert back == cfg and back.to_text() == cfg.to_text()
    assert back.model.channels == (4, 8) and back.synth.freq_weights == (1.0, 2.0)


def test_text_sorted_and_complete():
    lines = RunConfig().to_text().splitlines()
    assert lines == sorted(lines)
    assert "run.seed=0" in lines and "train.lr=0.003" in lines and "model.sbp_refs=100.0,115.0,130.0,150.0" in lines


@pytest.mark.parametrize("item", ["model.nope=1", "nosection=1", "model.hidden=abc", "train.oversample=maybe", "bogus"])
def test_bad_items(item):
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), [item])


def test_invariants_rechecked_after_override():
    with pytest.raises(ConfigError, match="sum to 1"):
        apply_overrides(RunConfig(), ["model.alpha=0.7"])
    with pytest.raises(ConfigError, match="divisible by 4"):
        apply_overrides(RunConfig(), ["train.batch_size=6"])
    assert apply_overrides(RunConfig(), ["train.batch_size=6", "train.oversample=false"]).train.batch_size == 6


def test_presets():
    for name in PRESETS:
        preset(name)
    tiny = preset("tiny")
    assert (tiny.model.alpha, tiny.model.beta) == (0.0, 1.0)
    with pytest.raises(ConfigError, match="unknown preset"):
        preset("huge")


def test_load_config_file(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("# comment\n\nrun.target=SBP\ntrain.steps=7\n")
    cfg = load_config(p)
    assert cfg.targets == ("SBP",) and cfg.train.steps == 7
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.txt")
