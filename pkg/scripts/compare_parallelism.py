"""Parallelism of generated pairs for finished supervised and unsupervised runs.

    python scripts/compare_parallelism.py runs/toy_supervised runs/toy_unsupervised
"""

import json
import sys
from pathlib import Path

from bilingual_gan import pipeline
from bilingual_gan.config import from_dict


def run_config(run_dir):
    # the translator checkpoint carries the config it was trained with
    from bilingual_gan.checkpoint import load

    cfg = load(Path(run_dir) / "nmt.ckpt").config
    cfg["output_dir"] = str(run_dir)
    return from_dict(cfg)


def main(dirs):
    rows = {}
    for d in dirs:
        cfg = run_config(d)
        score, shuffled = pipeline.sample_parallelism(cfg)
        rows[d] = {"mode": cfg.mode, "parallelism": score, "shuffled": shuffled}
        print(f"{d}: {cfg.mode:>12}  parallelism {score:.4f}  shuffled {shuffled:.4f}")
    json.dump(rows, sys.stderr, indent=1)


if __name__ == "__main__":
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    main(sys.argv[1:])
