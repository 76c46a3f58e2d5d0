"""Cold vs warm-started solves using a trained checkpoint.

Example::

    python3 scripts/run_warmstart.py results/table1/unsupervised-seed0.ckpt
"""

import argparse
from pathlib import Path

from pdqpnet import bench
from pdqpnet.checkpoint import load_checkpoint
from pdqpnet.generator import GeneratorConfig, generate_synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("checkpoint")
    ap.add_argument("--first-seed", type=int, default=40, help="first instance seed (40..44 is the test split)")
    ap.add_argument("--count", type=int, default=25)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--m", type=int, default=6)
    ap.add_argument("--tol", type=float, default=1e-4)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/warmstart")
    args = ap.parse_args()

    params = load_checkpoint(args.checkpoint)
    insts = [generate_synthetic(GeneratorConfig(n=args.n, m=args.m, seed=s), name=f"syn-{s}")
             for s in range(args.first_seed, args.first_seed + args.count)]
    rep = bench.warmstart_bench(insts, params, args.tol, args.repeats, args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{out}.rows.csv").write_text(rep.rows_csv())
    Path(f"{out}.summary.csv").write_text(rep.summary_csv())
    Path(f"{out}.json").write_text(rep.to_json())
    print(rep.summary_csv(), end="")


if __name__ == "__main__":
    main()
