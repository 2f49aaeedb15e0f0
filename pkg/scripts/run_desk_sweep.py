#!/usr/bin/env python3
"""End-to-end desk-scale experiment: generate, train both variants, evaluate.

Equivalent to `cwpower sweep --variants dc_cnn,sine_cnn`; takes a few
minutes on a laptop and leaves every artifact plus a manifest in --output-dir.
"""

import argparse
import sys

from cwpower import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--output-dir", default="out/desk_sweep")
    parser.add_argument("--master-seed", type=int, default=2026)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--variants", default="dc_cnn,sine_cnn")
    args = parser.parse_args()
    return cli.main([
        "sweep",
        "--output-dir", args.output_dir,
        "--master-seed", str(args.master_seed),
        "--seed", str(args.seed),
        "--variants", args.variants,
    ])


if __name__ == "__main__":
    sys.exit(main())
