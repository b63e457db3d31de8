"""Train model variants on synthetic corpora and print the findplace/QVEC table.

    python scripts/run_synthetic_table.py --epochs 80 --seeds 0 1 2 --out synthetic_report.txt
    python scripts/run_synthetic_table.py --variants all --epochs 40
"""

from __future__ import annotations

import argparse
import logging
import tempfile
from dataclasses import replace

from glyphfactor.experiment import VARIANTS, ExperimentConfig, run_synthetic
from glyphfactor.report import emit_report


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--variants", nargs="+", default=None, help=f"'all' or any of: {', '.join(VARIANTS)}")
    p.add_argument("--images-per-pair", type=int, default=1)
    p.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    p.add_argument("--work-dir", default=None, help="where synthetic corpora are rendered (default: temporary)")
    p.add_argument("--out", default=None, help="report path")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = ExperimentConfig(seeds=tuple(args.seeds), images_per_pair=args.images_per_pair)
    if args.variants:
        cfg.variants = tuple(VARIANTS) if args.variants == ["all"] else tuple(args.variants)
    cfg.train = replace(cfg.train, epochs=args.epochs, dtype=args.dtype)

    def progress(seed, variant, res):
        logging.info("seed %d %-22s F1 %.3f  QVEC %.3f  (%.0fs)", seed, variant, res.f1[variant],
                     res.qvec[variant], res.seconds[variant])

    with tempfile.TemporaryDirectory() as tmp:
        result = run_synthetic(cfg, args.work_dir or tmp, progress)
    meta = {"epochs": args.epochs, "seeds": list(args.seeds), "dtype": args.dtype,
            "images_per_pair": args.images_per_pair, "minutes": round(result.seconds / 60, 2)}
    text = emit_report(result.fragments(), args.out, meta)
    print(text.split("[table]\n", 1)[1])


if __name__ == "__main__":
    main()
