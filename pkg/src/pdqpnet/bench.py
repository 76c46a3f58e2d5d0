"""Experiment harness: datasets with manifests, evaluation tables and warm-start benchmarks."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .formats import load_instance, save_instance
from .generator import PRESETS, GeneratorConfig, generate_synthetic
from .instance import PrimalDualPoint, QpInstance
from .kkt import full_residuals
from .net import NetParams, predict
from .solver import SolveReport, SolverConfig, solve

MANIFEST_TAG = "pdqp-manifest"
TRAIN, TEST = "train", "test"
LABEL_TOL = 1e-9
TIMING_REPEATS = 3


# ---------------------------------------------------------------------------
# datasets


def split_counts(count: int):
    """``(train, test)`` sizes for a 9:1 split; the test share is rounded up."""
    test = math.ceil(count / 10)
    return count - test, test


def generator_config_from_dict(d: dict) -> GeneratorConfig:
    """Accept either ``{"preset": name, ...overrides}`` or explicit fields."""
    d = dict(d)
    preset = d.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        base = dict(PRESETS[preset])
        base.update(d)
        d = base
    return GeneratorConfig.from_dict(d)


def generate_dataset(cfg: GeneratorConfig, count: int, out_dir, seed: int | None = None) -> Path:
    """Write ``count`` instances and ``manifest.json`` into ``out_dir``.

    Instance i uses seed ``seed + i`` (``cfg.seed`` when ``seed`` is None);
    the first 90% in seed order form the train split.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = cfg.seed if seed is None else seed
    n_train, _ = split_counts(count)
    entries = []
    for i in range(count):
        icfg = GeneratorConfig.from_dict({**cfg.to_dict(), "seed": base + i})
        fname = f"inst_{i:04d}.json"
        save_instance(generate_synthetic(icfg), out / fname)
        entries.append({"path": fname, "seed": base + i, "split": TRAIN if i < n_train else TEST})
    manifest = {"format": MANIFEST_TAG, "version": 1,
                "generator": {**cfg.to_dict(), "seed": base}, "instances": entries}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


@dataclass
class Manifest:
    path: Path
    entries: list

    def paths(self, split: str):
        return [self.path.parent / e["path"] for e in self.entries if e["split"] == split]

    def load(self, split: str):
        return [load_instance(p) for p in self.paths(split)]


def load_manifest(path) -> Manifest:
    path = Path(path)
    d = json.loads(path.read_text())
    if d.get("format") != MANIFEST_TAG:
        raise ValueError(f"{path}: not a dataset manifest")
    for e in d["instances"]:
        if e.get("split") not in (TRAIN, TEST):
            raise ValueError(f"{path}: bad split {e.get('split')!r}")
    return Manifest(path, d["instances"])


def _label_one(inst):
    rep = solve(inst, SolverConfig(tol=LABEL_TOL, max_outer=1_000_000))
    return rep.point


def oracle_labels(instances, workers: int = 1):
    """Supervised targets from the solver at tolerance 1e-9."""
    return parallel_map(_label_one, instances, workers)


def parallel_map(fn, items, workers: int = 1):
    """Map preserving input order; ``workers > 1`` uses processes."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# evaluation table


EVAL_HEADER = ("dataset", "method", "r_primal", "r_dual", "r_gap")


@dataclass(frozen=True)
class EvalRow:
    dataset: str
    method: str
    r_primal: float
    r_dual: float
    r_gap: float

    def values(self):
        return (self.dataset, self.method, self.r_primal, self.r_dual, self.r_gap)


def evaluate_points(instances, points, dataset: str, method: str) -> EvalRow:
    """Median normalized residuals of ``points`` over ``instances``."""
    res = [full_residuals(i, p) for i, p in zip(instances, points, strict=True)]
    if not res:
        return EvalRow(dataset, method, float("nan"), float("nan"), float("nan"))
    return EvalRow(dataset, method,
                   float(np.median([r.r_primal_hat for r in res])),
                   float(np.median([r.r_dual_hat for r in res])),
                   float(np.median([r.r_gap_hat for r in res])))


def evaluate_params(instances, params: NetParams, dataset: str, method: str) -> EvalRow:
    return evaluate_points(instances, [predict(i, params) for i in instances], dataset, method)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def rows_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def eval_csv(rows) -> str:
    return rows_csv(EVAL_HEADER, [r.values() for r in rows])


# ---------------------------------------------------------------------------
# warm-start benchmark


BENCH_HEADER = ("name", "n", "m", "nnz", "cold_status", "warm_status", "cold_iterations",
                "warm_iterations", "improv_iters", "cold_seconds", "warm_seconds",
                "inference_seconds", "improv_time", "inf_sol_ratio", "error")
TIMING_COLUMNS = ("cold_seconds", "warm_seconds", "inference_seconds", "improv_time", "inf_sol_ratio")
SUMMARY_HEADER = ("statistic", "improv_iters", "improv_time", "inf_sol_ratio")


def _ratio(base, ours):
    return (base - ours) / base if base else float("nan")


@dataclass
class BenchRow:
    name: str
    n: int
    m: int
    nnz: int
    cold: SolveReport | None = None
    warm: SolveReport | None = None
    cold_seconds: float = float("nan")
    warm_seconds: float = float("nan")
    inference_seconds: float = float("nan")
    error: str = ""

    @property
    def ok(self) -> bool:
        return self.cold is not None and self.warm is not None

    # improvement fields are derived from the stored reports and timings
    @property
    def improv_iters(self) -> float:
        return _ratio(self.cold.iterations, self.warm.iterations) if self.ok else float("nan")

    @property
    def improv_time(self) -> float:
        return _ratio(self.cold_seconds, self.warm_seconds) if self.ok else float("nan")

    @property
    def inf_sol_ratio(self) -> float:
        return self.inference_seconds / self.cold_seconds if self.ok and self.cold_seconds else float("nan")

    def values(self):
        return (self.name, self.n, self.m, self.nnz,
                self.cold.termination.value if self.cold else "",
                self.warm.termination.value if self.warm else "",
                self.cold.iterations if self.cold else "",
                self.warm.iterations if self.warm else "",
                self.improv_iters, self.cold_seconds, self.warm_seconds,
                self.inference_seconds, self.improv_time, self.inf_sol_ratio, self.error)

    def to_dict(self) -> dict:
        return dict(zip(BENCH_HEADER, self.values()))


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    def ok_rows(self):
        return [r for r in self.rows if r.ok]

    def summary(self):
        """Per-metric mean and median of per-instance ratios, plus ratio of means."""
        ok = self.ok_rows()
        out = []
        if not ok:
            return out
        for stat, agg in (("mean_of_ratios", statistics.fmean), ("median_of_ratios", statistics.median)):
            out.append((stat, agg([r.improv_iters for r in ok]), agg([r.improv_time for r in ok]),
                        agg([r.inf_sol_ratio for r in ok])))
        cold_it = statistics.fmean(r.cold.iterations for r in ok)
        warm_it = statistics.fmean(r.warm.iterations for r in ok)
        cold_t = statistics.fmean(r.cold_seconds for r in ok)
        warm_t = statistics.fmean(r.warm_seconds for r in ok)
        inf_t = statistics.fmean(r.inference_seconds for r in ok)
        out.append(("ratio_of_means", _ratio(cold_it, warm_it), _ratio(cold_t, warm_t),
                    inf_t / cold_t if cold_t else float("nan")))
        return out

    def rows_csv(self, drop_timing: bool = False) -> str:
        keep = [i for i, h in enumerate(BENCH_HEADER) if not (drop_timing and h in TIMING_COLUMNS)]
        return rows_csv([BENCH_HEADER[i] for i in keep],
                        [[r.values()[i] for i in keep] for r in self.rows])

    def summary_csv(self) -> str:
        return rows_csv(SUMMARY_HEADER, self.summary())

    def to_json(self) -> str:
        doc = {"rows": [r.to_dict() for r in self.rows],
               "summary": [dict(zip(SUMMARY_HEADER, s)) for s in self.summary()]}
        return json.dumps(doc, indent=1, allow_nan=True) + "\n"


def _median_time(fn, repeats: int):
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


def bench_instance(inst: QpInstance, params: NetParams | None, tol: float,
                   repeats: int = TIMING_REPEATS, warm_point: PrimalDualPoint | None = None) -> BenchRow:
    """Cold and warm solves of one instance; failures are recorded in the row.

    The warm start is the net's prediction, or ``warm_point`` when given.
    Wall times are medians over ``repeats`` runs; the solves are
    deterministic so iteration counts do not depend on the repetition.
    """
    row = BenchRow(inst.name, inst.n, inst.m, inst.Q.nnz + inst.A.nnz)
    try:
        if warm_point is None:
            warm_point, row.inference_seconds = _median_time(lambda: predict(inst, params), repeats)
        else:
            row.inference_seconds = 0.0
        row.cold, row.cold_seconds = _median_time(lambda: solve(inst, SolverConfig(tol=tol)), repeats)
        row.warm, row.warm_seconds = _median_time(
            lambda: solve(inst, SolverConfig(tol=tol, warm_start=warm_point)), repeats)
    except Exception as exc:  # recorded in-row, the run continues
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def _bench_task(args):
    return bench_instance(*args)


def warmstart_bench(instances, params: NetParams | None, tol: float = 1e-4,
                    repeats: int = TIMING_REPEATS, workers: int = 1, warm_points=None) -> BenchReport:
    warm_points = warm_points or [None] * len(instances)
    tasks = [(i, params, tol, repeats, w) for i, w in zip(instances, warm_points, strict=True)]
    return BenchReport(parallel_map(_bench_task, tasks, workers))
