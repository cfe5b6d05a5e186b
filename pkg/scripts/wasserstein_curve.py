"""Print the held-out critic gap logged during GAN training.

    python scripts/wasserstein_curve.py runs/toy_supervised/gan_log.jsonl [--csv out.csv]
"""

import argparse
import csv

from bilingual_gan.pipeline import read_jsonl


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("log")
    ap.add_argument("--csv", default=None)
    ap.add_argument("--width", type=int, default=50)
    args = ap.parse_args()

    rows = [r for r in read_jsonl(args.log) if "heldout_wasserstein" in r]
    if not rows:
        raise SystemExit("no held-out points in log")
    peak = max(abs(r["heldout_wasserstein"]) for r in rows)
    for r in rows:
        w = abs(r["heldout_wasserstein"])
        bar = "#" * round(args.width * w / peak) if peak else ""
        print(f"{r['step']:>6} {w:8.3f} {bar}")
    final = abs(rows[-1]["heldout_wasserstein"])
    print(f"max {peak:.3f} final {final:.3f} drop {1 - final / peak:.1%}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["step", "heldout_wasserstein", "train_wasserstein", "penalty"])
            for r in rows:
                out.writerow([r["step"], r["heldout_wasserstein"], r["wasserstein"], r["penalty"]])


if __name__ == "__main__":
    main()
