"""Command-line front end.

Exit codes: 0 success, 1 usage or parse error, 2 a solve that hit MaxIter.

CSV schemas (fixed headers, fixed column order):

  train history     step,total,r_primal,r_dual,r_gap
  eval              dataset,method,r_primal,r_dual,r_gap
  warmstart-bench   name,n,m,nnz,cold_status,warm_status,cold_iterations,
                    warm_iterations,improv_iters,cold_seconds,warm_seconds,
                    inference_seconds,improv_time,inf_sol_ratio,error
  bench summary     statistic,improv_iters,improv_time,inf_sol_ratio
  perturb           distance,gap
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import bench
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .formats import FormatError, load_instance, load_point, parse_qps
from .kkt import perturbation_csv, perturbation_study
from .net import NetConfig
from .solver import SolverConfig, solve
from .train import SUPERVISED, TrainConfig, TrainingDiverged, gradcheck, history_csv, train
from .generator import GeneratorConfig, generate_synthetic

log = logging.getLogger("pdqpnet")

EXIT_OK, EXIT_USAGE, EXIT_MAXITER = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read_json_file(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON in {path}: {exc}") from exc


def _dataclass_from_file(cls, path, **overrides):
    d = _read_json_file(path) if path else {}
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise UsageError(f"{path}: unknown keys {sorted(unknown)}")
    d.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _load_any_instance(path):
    p = Path(path)
    try:
        if p.suffix.lower() in (".qps", ".mps"):
            return parse_qps(p.read_text())
        return load_instance(p)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except (FormatError, ValueError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args):
    cfg = bench.generator_config_from_dict(_read_json_file(args.config))
    path = bench.generate_dataset(cfg, args.count, args.out, args.seed)
    log.info("wrote %d instances and %s", args.count, path)
    return EXIT_OK


def cmd_solve(args):
    inst = _load_any_instance(args.instance)
    warm = None
    if args.warm_start:
        try:
            warm = load_point(args.warm_start)
        except (OSError, FormatError, ValueError) as exc:
            raise UsageError(f"{args.warm_start}: {exc}") from exc
    cfg = SolverConfig(tol=args.tol if args.tol is not None else 1e-6, max_outer=args.max_outer,
                       warm_start=warm, restart_len=args.restart_len, seed=args.seed or 0)
    try:
        rep = solve(inst, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sys.stdout.write(json.dumps(rep.to_dict(), indent=1) + "\n")
    return EXIT_OK if rep.converged else EXIT_MAXITER


def cmd_train(args):
    man = _load_manifest(args.manifest)
    net_cfg = _dataclass_from_file(NetConfig, args.net_config)
    tcfg = _dataclass_from_file(TrainConfig, args.train_config, seed=args.seed, loss_mode=args.mode)
    instances = man.load(bench.TRAIN)
    labels = bench.oracle_labels(instances, args.workers) if tcfg.loss_mode == SUPERVISED else None
    try:
        params, history = train(instances, tcfg, net_cfg, labels)
    except TrainingDiverged as exc:
        log.error("training diverged at step %d", exc.step)
        return EXIT_USAGE
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    save_checkpoint(params, args.out)
    hist = args.history or str(Path(args.out).with_suffix(".history.csv"))
    Path(hist).write_text(history_csv(history))
    log.info("trained %d steps; checkpoint %s, history %s", len(history), args.out, hist)
    return EXIT_OK


def _load_manifest(path):
    try:
        return bench.load_manifest(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _load_ckpt(path):
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except CheckpointError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def cmd_eval(args):
    man = _load_manifest(args.manifest)
    instances = man.load(bench.TEST)
    dataset = args.dataset or Path(args.manifest).parent.name
    rows = []
    if args.oracle_stub:
        rows.append(bench.evaluate_points(instances, bench.oracle_labels(instances, args.workers),
                                          dataset, "oracle-stub"))
    for entry in args.checkpoint or []:
        method, _, path = entry.rpartition("=")
        params = _load_ckpt(path)
        try:
            rows.append(bench.evaluate_params(instances, params, dataset, method or Path(path).stem))
        except ValueError as exc:
            raise UsageError(f"{path}: {exc}") from exc
    if not rows:
        raise UsageError("give at least one --checkpoint or --oracle-stub")
    if args.format == "json":
        _emit(json.dumps([asdict(r) for r in rows], indent=1) + "\n", args.out)
    else:
        _emit(bench.eval_csv(rows), args.out)
    return EXIT_OK


def cmd_warmstart_bench(args):
    man = _load_manifest(args.manifest)
    instances = man.load(bench.TEST)
    params = _load_ckpt(args.checkpoint)
    tol = args.tol if args.tol is not None else 1e-4
    report = bench.warmstart_bench(instances, params, tol, args.repeats, args.workers)
    if args.out_prefix:
        prefix = Path(args.out_prefix)
        Path(f"{prefix}.rows.csv").write_text(report.rows_csv())
        Path(f"{prefix}.summary.csv").write_text(report.summary_csv())
        Path(f"{prefix}.json").write_text(report.to_json())
    elif args.format == "json":
        sys.stdout.write(report.to_json())
    else:
        sys.stdout.write(report.rows_csv())
        sys.stdout.write(report.summary_csv())
    return EXIT_OK


def cmd_perturb(args):
    inst = _load_any_instance(args.instance)
    if not args.oracle:
        raise UsageError("perturb needs --oracle")
    try:
        oracle = load_point(args.oracle)
        oracle.check(inst)
    except (OSError, FormatError, ValueError) as exc:
        raise UsageError(f"{args.oracle}: {exc}") from exc
    rows = perturbation_study(inst, oracle, args.samples, args.max_radius, args.seed or 0)
    if args.format == "json":
        _emit(json.dumps([{"distance": d, "gap": g} for d, g in rows]) + "\n", args.out)
    else:
        _emit(perturbation_csv(rows), args.out)
    return EXIT_OK


def cmd_gradcheck(args):
    net_cfg = _dataclass_from_file(NetConfig, args.net_config) if args.net_config else \
        NetConfig(layers=3, width=4, mlp_hidden=4)
    if args.instance:
        inst = _load_any_instance(args.instance)
    else:
        inst = generate_synthetic(GeneratorConfig(n=6, m=4, seed=args.seed or 0))
    err = gradcheck(net_cfg, inst, seed=args.seed or 0, h=args.h, num_coords=args.coords)
    sys.stdout.write(f"max_relative_error {err:.6e}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pdqpnet", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--seed", type=int, default=None, help="base random seed")
    p.add_argument("--workers", type=int, default=1, help="instance-level worker processes")
    p.add_argument("--tol", type=float, default=None, help="solver tolerance on the max normalized residual")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="table output format")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    raw = argparse.RawDescriptionHelpFormatter

    g = sub.add_parser("generate", formatter_class=raw, help="write synthetic instances and a 9:1 train/test manifest")
    g.add_argument("config", help='generator JSON, e.g. {"n": 8, "m": 6} or {"preset": "syn-small"}')
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", formatter_class=raw, help="run the solver; SolveReport JSON on stdout")
    s.add_argument("instance", help="instance JSON or .qps file")
    s.add_argument("--warm-start", help="point JSON with x and y")
    s.add_argument("--max-outer", type=int, default=1000)
    s.add_argument("--restart-len", type=int, default=None)
    s.set_defaults(func=cmd_solve)

    t = sub.add_parser("train", formatter_class=raw, help="train on the manifest's train split",
                       description="History CSV: step,total,r_primal,r_dual,r_gap")
    t.add_argument("manifest")
    t.add_argument("--net-config", help="NetConfig JSON")
    t.add_argument("--train-config", help="TrainConfig JSON")
    t.add_argument("--mode", choices=("unsupervised", "supervised"), default=None)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--history", help="history CSV path (default next to the checkpoint)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", formatter_class=raw, help="median residuals on the test split",
                       description="CSV: dataset,method,r_primal,r_dual,r_gap")
    e.add_argument("manifest")
    e.add_argument("--checkpoint", action="append", help="[method=]path, repeatable")
    e.add_argument("--oracle-stub", action="store_true", help="also evaluate solver-optimal points")
    e.add_argument("--dataset", default=None)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("warmstart-bench", formatter_class=raw, help="cold vs warm-started solves on the test split",
                       description="Rows CSV: " + ",".join(bench.BENCH_HEADER)
                       + "\nSummary CSV: " + ",".join(bench.SUMMARY_HEADER))
    w.add_argument("manifest")
    w.add_argument("--checkpoint", required=True)
    w.add_argument("--repeats", type=int, default=bench.TIMING_REPEATS)
    w.add_argument("--out-prefix", default=None, help="write PREFIX.rows.csv, PREFIX.summary.csv, PREFIX.json")
    w.set_defaults(func=cmd_warmstart_bench)

    q = sub.add_parser("perturb", formatter_class=raw, help="gap versus distance around an optimum",
                       description="CSV: distance,gap")
    q.add_argument("instance")
    q.add_argument("--oracle", help="optimal point JSON")
    q.add_argument("--samples", type=int, default=200)
    q.add_argument("--max-radius", type=float, default=1.0)
    q.add_argument("--out", default=None)
    q.set_defaults(func=cmd_perturb)

    c = sub.add_parser("gradcheck", formatter_class=raw, help="compare backward with central differences")
    c.add_argument("--net-config", default=None)
    c.add_argument("--instance", default=None)
    c.add_argument("--h", type=float, default=1e-5)
    c.add_argument("--coords", type=int, default=20)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"pdqpnet {args.command}: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
