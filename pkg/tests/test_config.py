import pytest

from diffstyle.config import ENV_PREFIX, build_config, known_keys, load_config
from diffstyle.denoiser import DESK, PAPER_SCALE


def test_defaults_are_desk():
    cfg = build_config(env={})
    assert cfg.model == DESK and cfg.profile == "desk" and cfg.mode == "multitask"
    assert cfg.schedule.diffusion_steps == 2000 and cfg.schedule.beta_start == 1e-4 and cfg.schedule.beta_end == 0.02
    assert cfg.train.lr == 1e-4 and cfg.train.clip_norm == 1.0


def test_paper_profile_preset():
    assert build_config({"profile": "paper"}, env={}).model == PAPER_SCALE


@pytest.mark.parametrize("file_v, env_v, cli_v, expected", [
    (None, None, None, 16),
    ("32", None, None, 32),
    ("32", "48", None, 48),
    ("32", "48", "64", 64),
    (None, "48", None, 48),
    (None, None, "64", 64),
    ("32", None, "64", 64),
])
def test_precedence(tmp_path, file_v, env_v, cli_v, expected):
    path = tmp_path / "run.cfg"
    path.write_text(f"batch_size = {file_v}\n" if file_v else "# nothing\n")
    env = {ENV_PREFIX + "BATCH_SIZE": env_v} if env_v else {}
    overrides = {"batch_size": cli_v} if cli_v else {}
    assert load_config(path, overrides, env).train.batch_size == expected


def test_preset_then_key_override():
    cfg = build_config({"profile": "paper", "layers": "2"}, env={})
    assert cfg.model.layers == 2 and cfg.model.dim == PAPER_SCALE.dim


def test_unknown_key_rejected():
    with pytest.raises(KeyError, match="bogus"):
        build_config({"bogus": "1"}, env={})


def test_bad_values_rejected():
    with pytest.raises(ValueError):
        build_config({"mask_pad": "maybe"}, env={})
    with pytest.raises(ValueError):
        build_config({"batch_size": "0"}, env={})
    with pytest.raises(ValueError):
        build_config({"profile": "huge"}, env={})


def test_save_round_trip(tmp_path):
    cfg = build_config({"lr": "3e-4", "mask_pad": "true", "mode": "single:ToPast"}, env={})
    cfg.save(tmp_path / "c.txt")
    assert load_config(tmp_path / "c.txt", env={}) == cfg


def test_comments_and_missing_file(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# header\nlr = 0.5  # inline\n\n")
    assert load_config(path, env={}).train.lr == 0.5
    with pytest.raises(FileNotFoundError, match="nope"):
        load_config(tmp_path / "nope.txt", env={})


def test_every_key_has_an_env_var():
    env = {ENV_PREFIX + "SEED": "9", ENV_PREFIX + "CLAMP": "1"}
    cfg = build_config(env=env)
    assert cfg.train.seed == 9 and cfg.sample.clamp is True
    assert len(known_keys()) == len(set(known_keys()))
