"""``bilingual-gan`` command line.

Exit codes: 0 success, 1 invalid input (config, missing file, bad
checkpoint), 2 runtime failure (divergence, broken invariant).
"""

from __future__ import annotations

import logging
import sys

import click

from . import pipeline
from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .gan import GanDiverged
from .nmt import TrainingDiverged
from .xlingual import EmbeddingFormatError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

_INVALID = (ConfigError, CheckpointError, EmbeddingFormatError, FileNotFoundError, pipeline.PipelineError)
_RUNTIME = (TrainingDiverged, GanDiverged, FloatingPointError, RuntimeError)


def _config(ctx):
    return load_config(ctx.obj["config"], ctx.obj["overrides"])


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="JSON run configuration.")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a config field, e.g. nmt.epochs=3.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def cli(ctx, config_path, overrides, verbose):
    """Bilingual latent-code GAN: translator pre-training, GAN training and sampling."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
    )
    ctx.obj = {"config": config_path, "overrides": list(overrides)}


@cli.command("show-config")
@click.pass_context
def show_config(ctx):
    """Print the validated configuration with all defaults filled in."""
    import json

    click.echo(json.dumps(_config(ctx).to_dict(), indent=2, sort_keys=True))


@cli.command("prepare-data")
@click.pass_context
def prepare_data(ctx):
    """Tokenize, filter and split the corpora; build vocabularies."""
    click.echo(pipeline.prepare_data(_config(ctx)))


@cli.command("train-nmt")
@click.pass_context
def train_nmt(ctx):
    """Pre-train the shared translator."""
    click.echo(pipeline.train_nmt(_config(ctx)))


@cli.command("train-gan")
@click.option("--nmt", "nmt_path", type=click.Path(), default=None, help="Translator checkpoint (default: <output_dir>/nmt.ckpt).")
@click.pass_context
def train_gan(ctx, nmt_path):
    """Train the code generator and critic over the frozen translator."""
    click.echo(pipeline.train_gan(_config(ctx), nmt_path))


@cli.command("translate")
@click.option("--nmt", "nmt_path", type=click.Path(), required=True)
@click.option("--input", "src", type=click.Path(), required=True)
@click.option("--output", "dst", type=click.Path(), required=True)
@click.option("--direction", type=click.Choice(["l0-l1", "l1-l0"]), default="l0-l1")
def translate(nmt_path, src, dst, direction):
    """Translate a text file line by line."""
    n = pipeline.translate_file(nmt_path, src, dst, direction)
    click.echo(f"translated {n} lines -> {dst}")


@cli.command("generate")
@click.option("-n", "n", type=int, default=None, help="Number of samples (default: n_samples).")
@click.option("--lang", type=click.Choice(["l0", "l1", "both"]), default="both")
@click.option("--prefix", type=click.Path(), default=None, help="Output prefix; files get .l0/.l1 suffixes.")
@click.option("--nmt", "nmt_path", type=click.Path(), default=None)
@click.option("--gan", "gan_path", type=click.Path(), default=None)
@click.pass_context
def generate(ctx, n, lang, prefix, nmt_path, gan_path):
    """Sample codes and decode them; --lang both writes line-aligned pair files."""
    if n is not None and n < 0:
        raise pipeline.PipelineError("-n must be >= 0")
    for path in pipeline.generate(_config(ctx), n, lang, prefix, nmt_path, gan_path):
        click.echo(path)


@cli.command("evaluate")
@click.option("--mode", type=click.Choice(pipeline.EVAL_MODES), required=True)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Also write the report here.")
@click.argument("files", nargs=-1, required=True)
@click.pass_context
def evaluate(ctx, mode, out_path, files):
    """Metric report.

    \b
    gen-bleu     CANDIDATES REFERENCES
    trans-bleu   HYPOTHESES REFERENCES
    ppl          REAL_TRAIN REAL_TEST SYNTHETIC
    parallelism  SAMPLES_L0 SAMPLES_L1 CIPHER_JSON
    """
    cfg = _config(ctx) if mode == "ppl" else None
    report = pipeline.evaluate(mode, list(files), cfg)
    click.echo(report, nl=False)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(report)


@cli.command("grad-check")
@click.option("--seeds", type=int, default=10)
def grad_check(seeds):
    """Finite-difference check of every differentiable op."""
    ok, table = pipeline.grad_check(seeds)
    click.echo(table, nl=False)
    if not ok:
        raise RuntimeError("gradient check failed")


@cli.command("run")
@click.pass_context
def run(ctx):
    """Whole pipeline: prepare, train translator, train GAN, sample, report."""
    for name, report in pipeline.run_pipeline(_config(ctx)).items():
        click.echo(f"[{name}]\n{report}", nl=False)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return EXIT_INVALID
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_INVALID
    except _INVALID as e:
        click.echo(f"error: {e}", err=True)
        return EXIT_INVALID
    except _RUNTIME as e:
        click.echo(f"runtime failure: {e}", err=True)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
