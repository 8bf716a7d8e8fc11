#!/usr/bin/env python3
"""Build a class-balanced MNIST subset as gzipped CSV (784 pixels, then label).

Source: the `mnist` npm package (MIT), which ships 10000 digits as
src/digits/<d>.json with pixel intensities scaled to [0, 1].

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_subset.py package/src/digits out.csv.gz --per-class 500
"""

import argparse
import gzip
import json
import random
from pathlib import Path

PIXELS = 784


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--per-class", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rows = []
    for label in range(10):
        flat = json.loads((args.digits_dir / f"{label}.json").read_text())["data"]
        count = len(flat) // PIXELS
        if count < args.per_class:
            raise SystemExit(f"digit {label}: only {count} images")
        for k in range(args.per_class):
            rows.append((flat[k * PIXELS:(k + 1) * PIXELS], label))
    random.Random(args.seed).shuffle(rows)

    with gzip.GzipFile(args.out, "wb", mtime=0) as f:
        for pixels, label in rows:
            line = ",".join(format(v, "g") for v in pixels) + f",{label}\n"
            f.write(line.encode())
    print(f"wrote {len(rows)} rows to {args.out}")


if __name__ == "__main__":
    main()
