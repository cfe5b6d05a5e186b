"""Run the cipher-pair pipeline end to end and print a short summary.

    python scripts/run_toy_pipeline.py --config scripts/configs/toy_supervised.json
    python scripts/run_toy_pipeline.py --config scripts/configs/toy_unsupervised.json --set gan.steps=200
"""

import argparse
import json
import logging
import time
from pathlib import Path

from bilingual_gan import pipeline
from bilingual_gan.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", required=True)
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--skip-gan", action="store_true", help="stop after translator training")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config, args.overrides)
    out = Path(cfg.output_dir)
    t0 = time.time()
    pipeline.prepare_data(cfg)
    pipeline.train_nmt(cfg)
    for row in pipeline.read_jsonl(out / "nmt_log.jsonl"):
        print(f"epoch {row['epoch']} {row['translator']:>13} recon {row['loss_recon']:.3f} "
              f"cd {row['loss_cd']:.3f} bleu {row['val_bleu_0to1']:.2f}/{row['val_bleu_1to0']:.2f} "
              f"code-dist {row['code_distance']:.4f}")
    print("word-by-word baseline", json.dumps(pipeline.wbw_bleu(cfg)))
    print(f"translator done in {time.time() - t0:.0f}s")
    if args.skip_gan:
        return

    pipeline.train_gan(cfg)
    curve = pipeline.wasserstein_curve(cfg)
    peak = max(w for _, w in curve)
    print("held-out W:", " ".join(f"{s}:{w:.2f}" for s, w in curve))
    print(f"W max {peak:.3f} final {curve[-1][1]:.3f} drop {1 - curve[-1][1] / peak:.1%}")
    pipeline.generate(cfg, lang="both")
    par, base = pipeline.sample_parallelism(cfg)
    print(f"parallelism {par:.4f} (shuffled {base:.4f})")
    for lang in pipeline.LANGS:
        real, gen = pipeline.sample_perplexity(cfg, lang)
        print(f"{lang} PPL real-test {real:.3f} samples {gen:.3f} ratio {gen / real:.3f}")
    print(f"total {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
