import pytest

from fedn.config import apply_setting, dump_config, load_config, save_config, tiny_config
from fedn.training import TrainConfig


def test_defaults():
    cfg = load_config()
    assert cfg == TrainConfig()
    assert (cfg.learning_rate, cfg.weight_decay, cfg.epochs) == (1e-4, 1e-4, 30)


def test_overrides_each_section():
    cfg = load_config(overrides=[
        "train.epochs=3", "network.d=64", "data.feature_dim=64", "detect.nms_threshold=0.4",
        "network.use_window_attention=false", "data.frames=900, 1000", "train.train_hop=8", "seed=5",
    ])
    assert cfg.epochs == 3 and cfg.seed == 5 and cfg.train_hop == 8
    assert cfg.network.d == 64 and cfg.network.use_window_attention is False
    assert cfg.data.frames == (900, 1000) and cfg.data.feature_dim == 64
    assert cfg.detect.nms_threshold == 0.4


@pytest.mark.parametrize("item", ["network.nope=1", "bogus.d=1", "network.d=abc", "epochs",
                                  "network.use_window_attention=maybe", "network.s=40"])
def test_bad_overrides(item):
    with pytest.raises(ValueError):
        load_config(overrides=[item])


def test_file_roundtrip(tmp_path):
    cfg = tiny_config(seed=3)
    path = tmp_path / "c.ini"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert dump_config(load_config(path)) == path.read_text()


def test_file_with_override(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[train]\nepochs = 4\n[network]\nloss_variant = giou\n")
    cfg = load_config(path, ["train.epochs=6"])
    assert cfg.epochs == 6 and cfg.network.loss_variant == "giou"


def test_unknown_key_in_file(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[network]\nwidth = 3\n")
    with pytest.raises(ValueError, match="network.width"):
        load_config(path)


def test_apply_setting_is_pure():
    cfg = TrainConfig()
    new = apply_setting(cfg, "network.alpha", "0.5")
    assert cfg.network.alpha == 1.0 and new.network.alpha == 0.5
