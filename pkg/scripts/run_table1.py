"""Unsupervised vs supervised training on a synthetic dataset.

Writes ``table1.csv`` (median test residuals per method and seed) and one
training history CSV per run into ``--out``.
"""

import argparse
from pathlib import Path

from pdqpnet import bench
from pdqpnet.checkpoint import save_checkpoint
from pdqpnet.generator import GeneratorConfig, generate_synthetic
from pdqpnet.net import NetConfig
from pdqpnet.train import SUPERVISED, UNSUPERVISED, TrainConfig, history_csv, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=45)
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--m", type=int, default=6)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=1000)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/table1")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    insts = [generate_synthetic(GeneratorConfig(n=args.n, m=args.m, seed=s), name=f"syn-{s}")
             for s in range(args.count)]
    n_train, _ = bench.split_counts(len(insts))
    train_set, test_set = insts[:n_train], insts[n_train:]
    labels = bench.oracle_labels(train_set, args.workers)

    rows = [bench.evaluate_points(test_set, bench.oracle_labels(test_set, args.workers), "syn", "oracle")]
    for seed in range(args.seeds):
        for mode in (UNSUPERVISED, SUPERVISED):
            cfg = TrainConfig(seed=seed, loss_mode=mode, max_steps=args.steps)
            params, hist = train(train_set, cfg, NetConfig(), labels if mode == SUPERVISED else None)
            tag = f"{mode}-seed{seed}"
            save_checkpoint(params, out / f"{tag}.ckpt")
            (out / f"{tag}.history.csv").write_text(history_csv(hist))
            rows.append(bench.evaluate_params(test_set, params, "syn", tag))
            print(bench.eval_csv([rows[-1]]).splitlines()[1], flush=True)
    (out / "table1.csv").write_text(bench.eval_csv(rows))
    print(f"wrote {out / 'table1.csv'}")


if __name__ == "__main__":
    main()
