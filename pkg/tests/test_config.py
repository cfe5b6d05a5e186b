import json

import pytest

from bilingual_gan.config import ConfigError, RunConfig, apply_overrides, from_dict, load_config


def test_defaults_carry_reference_hyperparameters():
    cfg = load_config(None)
    assert cfg.nmt.mtf_epoch == 5
    assert cfg.gan.lam == 10.0
    assert (cfg.nmt.noise.sigma, cfg.nmt.noise.p_drop, cfg.nmt.noise.k_shuffle) == (0.3, 0.1, 3)
    assert (cfg.nmt.lr, cfg.nmt.disc_lr, cfg.gan.lr) == (3e-4, 5e-4, 1e-4)
    assert (cfg.nmt.beta1, cfg.nmt.beta2, cfg.gan.beta1, cfg.gan.beta2) == (0.5, 0.999, 0.5, 0.999)
    assert cfg.gan.critic_per_gen == 1
    assert (cfg.nmt.emb_dim, cfg.nmt.hidden, cfg.nmt.max_len) == (300, 256, 20)
    assert cfg.mode == "unsupervised" and not cfg.nmt.supervised


def test_mode_drives_supervision_flag():
    assert from_dict({"mode": "supervised"}).nmt.supervised
    with pytest.raises(ConfigError, match="disagrees"):
        from_dict({"mode": "supervised", "nmt": {"supervised": False}})


def test_overrides_parse_json_then_strings():
    vals = apply_overrides({}, ["nmt.hidden=64", "gan.lam=2.5", "output_dir=out/x", "nmt.noise.sigma=0"])
    assert vals == {"nmt": {"hidden": 64, "noise": {"sigma": 0}}, "gan": {"lam": 2.5}, "output_dir": "out/x"}
    cfg = from_dict(vals)
    assert cfg.nmt.hidden == 64 and cfg.nmt.noise.sigma == 0 and cfg.output_dir == "out/x"
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_file_plus_override(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seed": 3, "nmt": {"hidden": 32}}))
    cfg = load_config(str(p), ["nmt.hidden=16"])
    assert cfg.seed == 3 and cfg.nmt.hidden == 16


@pytest.mark.parametrize(
    "values, match",
    [
        ({"mode": "semi"}, "mode"),
        ({"bogus": 1}, "unknown"),
        ({"nmt": {"hidden_size": 3}}, "unknown"),
        ({"gan": {"lam": -1}}, "lambda"),
        ({"nmt": {"noise": {"p_drop": 1.5}}}, "NoiseConfig"),
        ({"data": {"source": "web"}}, "source"),
        ({"data": {"source": "text"}}, "required"),
        ({"data": {"test_size": 0}}, "test_size"),
        ({"n_samples": -1}, "n_samples"),
        ({"nmt": {"max_len": 5}}, "max_len"),
    ],
)
def test_validation_errors(values, match):
    with pytest.raises(ConfigError, match=match):
        from_dict(values)


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(str(tmp_path / "nope.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        load_config(str(bad))


def test_round_trip_through_dict():
    cfg = from_dict({"seed": 4, "gan": {"steps": 7}})
    assert from_dict(cfg.to_dict()) == cfg
    assert isinstance(cfg, RunConfig)
