import json

import pytest

from bilingual_gan import cli as cli_mod
from bilingual_gan import pipeline
from bilingual_gan.checkpoint import load
from bilingual_gan.cli import main
from bilingual_gan.nmt import TrainingDiverged

TINY = {
    "mode": "supervised",
    "n_samples": 12,
    "data": {"cipher_pairs": 120, "valid_size": 12, "test_size": 12},
    "nmt": {"max_len": 8, "emb_dim": 8, "hidden": 8, "attn_dim": 8, "epochs": 1, "lr": 0.01},
    "gan": {"steps": 2, "eval_every": 1, "noise_dim": 8},
}


def write_config(path, out, **changes):
    cfg = json.loads(json.dumps(TINY))
    cfg["output_dir"] = str(out)
    cfg.update(changes)
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    conf = write_config(base / "c.json", base / "run")
    assert main(["--config", conf, "run"]) == 0
    return base, conf


def test_run_writes_every_artifact(run_dir):
    base, _ = run_dir
    out = base / "run"
    for name in ("nmt.ckpt", "gan.ckpt", "nmt_log.jsonl", "gan_log.jsonl", "samples.l0", "samples.l1", "report.txt"):
        assert (out / name).exists(), name
    assert "parallelism" in (out / "report.txt").read_text()
    assert load(out / "nmt.ckpt").config["output_dir"] == str(out)
    n0 = (out / "samples.l0").read_text().count("\n")
    assert n0 == (out / "samples.l1").read_text().count("\n") == 12


def test_generate_zero_gives_empty_files(run_dir, tmp_path):
    _, conf = run_dir
    prefix = tmp_path / "empty"
    assert main(["--config", conf, "generate", "-n", "0", "--prefix", str(prefix)]) == 0
    assert (tmp_path / "empty.l0").read_text() == ""
    assert (tmp_path / "empty.l1").read_text() == ""


def test_generate_single_language(run_dir, tmp_path):
    _, conf = run_dir
    assert main(["--config", conf, "generate", "-n", "3", "--lang", "l1", "--prefix", str(tmp_path / "s")]) == 0
    assert not (tmp_path / "s.l0").exists()
    assert len((tmp_path / "s.l1").read_text().splitlines()) == 3


def test_generate_is_repeatable(run_dir, tmp_path):
    _, conf = run_dir
    for tag in "ab":
        assert main(["--config", conf, "generate", "--prefix", str(tmp_path / tag)]) == 0
    assert (tmp_path / "a.l0").read_bytes() == (tmp_path / "b.l0").read_bytes()


def test_translate_and_evaluate(run_dir, tmp_path, capsys):
    base, conf = run_dir
    data = base / "run" / "data"
    hyp = tmp_path / "hyp.l1"
    assert main(["translate", "--nmt", str(base / "run" / "nmt.ckpt"), "--input", str(data / "test.l0"), "--output", str(hyp)]) == 0
    assert len(hyp.read_text().splitlines()) == len((data / "test.l0").read_text().splitlines())
    capsys.readouterr()
    assert main(["evaluate", "--mode", "trans-bleu", str(hyp), str(data / "test.l1")]) == 0
    assert capsys.readouterr().out.startswith("BLEU-4\t")
    assert main(["evaluate", "--mode", "gen-bleu", str(data / "test.l0"), str(data / "test.l0")]) == 0
    assert "B-2\t100.00" in capsys.readouterr().out


def test_invalid_inputs_exit_1(run_dir, tmp_path):
    base, conf = run_dir
    assert main(["--set", "mode=semi", "show-config"]) == 1
    assert main(["--config", str(tmp_path / "missing.json"), "show-config"]) == 1
    assert main(["translate", "--nmt", str(tmp_path / "none.ckpt"), "--input", "x", "--output", "y"]) == 1
    bad = tmp_path / "bad.ckpt"
    raw = (base / "run" / "nmt.ckpt").read_bytes()
    bad.write_bytes(raw[:8] + b"\x09" + raw[9:])
    assert main(["translate", "--nmt", str(bad), "--input", "x", "--output", "y"]) == 1
    assert main(["--config", conf, "generate", "-n", "-1"]) == 1
    assert main(["evaluate", "--mode", "gen-bleu", str(bad)]) == 1
    assert main(["no-such-command"]) == 1
    # a GAN checkpoint is not a translator
    assert main(["translate", "--nmt", str(base / "run" / "gan.ckpt"), "--input", "x", "--output", "y"]) == 1


def test_runtime_failure_exit_2(monkeypatch):
    def boom(cfg):
        raise TrainingDiverged("non-finite loss")

    monkeypatch.setattr(pipeline, "train_nmt", boom)
    assert main(["train-nmt"]) == 2


def test_show_config_applies_overrides(capsys):
    assert main(["--set", "nmt.hidden=12", "--set", "gan.lam=3", "show-config"]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["nmt"]["hidden"] == 12 and shown["gan"]["lam"] == 3


def test_grad_check_command(capsys):
    assert main(["grad-check", "--seeds", "1"]) == 0
    out = capsys.readouterr().out
    assert "matmul" in out and "FAIL" not in out


def test_exit_code_constants():
    assert (cli_mod.EXIT_OK, cli_mod.EXIT_INVALID, cli_mod.EXIT_RUNTIME) == (0, 1, 2)
