"""Command-line front end: train, eval, sweep and validate-prototype.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import itertools
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import lsh_train, pcah_train
from .datasets import DatasetSpec, database_and_queries, load_dataset
from .errors import FormatError, NumericError
from .hashing import TrainConfig, encode_batch, train
from .metrics import evaluate, euclidean_ground_truth, label_ground_truth
from .modelio import load_model, save_codes, save_model
from .prototype import default_instances, format_report, validate_estimator
from .supervised import SupervisedConfig, imhs_train
from .types import BACKENDS, FeatureMatrix

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
BASELINES = ("pcah", "lsh")
ALL_BACKENDS = BACKENDS + BASELINES
TIMING_KEYS = ("base_selection", "embedding", "rotation", "extension")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass(frozen=True)
class RunConfig:
    data: DatasetSpec
    backend: str = "tsne"
    m: int = 400
    k: int = 5
    bits: int = 64
    lam: float = 2.0
    sigma: Optional[float] = None
    base_method: str = "kmeans"
    rotation: bool = False
    supervised: bool = False
    m_per_class: int = 100
    embed_dim: Optional[int] = None
    queries: int = 500
    sample: Optional[int] = None
    kmeans_seed: int = 0
    tsne_seed: int = 0
    itq_seed: int = 0
    lsh_seed: int = 0
    split_seed: int = 0
    perplexity: float = 30.0
    tsne_iters: int = 1000
    itq_iters: int = 50

    def __post_init__(self):
        if self.backend not in ALL_BACKENDS:
            raise ValueError(f"backend must be one of {', '.join(ALL_BACKENDS)}, got {self.backend!r}")
        if self.supervised and self.backend in BASELINES:
            raise ValueError("supervised training needs an inductive backend")
        if self.m_per_class < 1:
            raise ValueError(f"m_per_class must be >= 1, got {self.m_per_class}")
        if self.backend not in BASELINES:
            self.train_config()  # surfaces invalid m/k/bits/sigma combinations

    def train_config(self) -> TrainConfig:
        # the supervised base size is per class; k is checked against it
        m = self.m_per_class if self.supervised else self.m
        return TrainConfig(
            backend=self.backend, m=m, k=self.k, bits=self.bits, base_method=self.base_method,
            sigma=self.sigma, lam=self.lam, rotation=self.rotation, itq_iters=self.itq_iters,
            kmeans_seed=self.kmeans_seed, tsne_seed=self.tsne_seed, itq_seed=self.itq_seed,
            perplexity=self.perplexity, tsne_iters=self.tsne_iters,
        )

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, kmeans_seed=seed, tsne_seed=seed, itq_seed=seed, lsh_seed=seed)


def fit_model(X: FeatureMatrix, rc: RunConfig, timings: Optional[Dict[str, float]] = None):
    """Train the model described by ``rc``; stage durations go into ``timings``."""
    clock = {} if timings is None else timings
    for key in ("base_selection", "embedding", "rotation"):
        clock[key] = 0.0
    t0 = time.perf_counter()
    if rc.backend == "pcah":
        model = pcah_train(X, rc.bits)
        clock["embedding"] = time.perf_counter() - t0
        return model
    if rc.backend == "lsh":
        model = lsh_train(X.d, rc.bits, rc.lsh_seed)
        clock["embedding"] = time.perf_counter() - t0
        return model
    stages: Dict[str, float] = {}
    if rc.supervised:
        scfg = SupervisedConfig(m_per_class=rc.m_per_class, bits=rc.bits, r_in=rc.embed_dim)
        model = imhs_train(X, scfg, rc.train_config(), stages)
    else:
        model = train(X, rc.train_config(), stages)
    clock["base_selection"] = stages.get("base", 0.0)
    clock["embedding"] = stages.get("embedding", 0.0)
    clock["rotation"] = stages.get("rotation", 0.0)
    return model


# ---------------------------------------------------------------- argument parsing


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _str_list(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("--seed", type=int, default=None, help="default for every named seed")
    p.add_argument("--ci", action="store_true", help="require an explicit --seed")
    p.add_argument("--threads", type=int, default=1)


def _data_args(p: argparse.ArgumentParser):
    p.add_argument("--data", nargs="+", required=True, metavar="PATH",
                   help="dataset file(s); for idx give images then labels")
    p.add_argument("--format", default="idx", choices=["idx", "fvecs", "bvecs", "csv"])
    p.add_argument("--limit", type=int, default=None, help="keep only the first N rows")
    p.add_argument("--has-labels", action="store_true", help="csv: last column is the label")
    p.add_argument("--sample", type=int, default=None, help="seeded subset of N rows")
    p.add_argument("--queries", type=int, default=500, help="held-out query rows")
    p.add_argument("--split-seed", type=int, default=None)


def _model_args(p: argparse.ArgumentParser, grid: bool = False):
    if grid:
        p.add_argument("--backend", type=_str_list, default=["tsne"])
        p.add_argument("--m", type=_int_list, default=[400])
        p.add_argument("--k", type=_int_list, default=[5])
        p.add_argument("--bits", type=_int_list, default=[64])
    else:
        p.add_argument("--backend", default="tsne", choices=list(ALL_BACKENDS))
        p.add_argument("--m", type=int, default=400)
        p.add_argument("--k", type=int, default=5)
        p.add_argument("--bits", type=int, default=64)
    p.add_argument("--lam", type=float, default=2.0)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--base-method", default="kmeans", choices=["kmeans", "kmedians", "random"])
    p.add_argument("--rotation", action="store_true", help="apply an ITQ rotation")
    p.add_argument("--supervised", action="store_true", help="per-class base set plus LDA")
    p.add_argument("--m-per-class", type=int, default=100)
    p.add_argument("--embed-dim", type=int, default=None, help="supervised embedding width")
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--tsne-iters", type=int, default=1000)
    p.add_argument("--itq-iters", type=int, default=50)
    for name in ("kmeans", "tsne", "itq", "lsh"):
        p.add_argument(f"--{name}-seed", type=int, default=None)


def _eval_args(p: argparse.ArgumentParser):
    p.add_argument("--gt", default="labels", choices=["labels", "euclidean"])
    p.add_argument("--fraction", type=float, default=0.02, help="euclidean ground-truth fraction")
    p.add_argument("--radius", type=int, default=2)


def build_parser() -> Tuple[argparse.ArgumentParser, Dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="imhash", description="Inductive manifold hashing")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    subs = {}

    p = sub.add_parser("train", help="fit a model and encode the database")
    _common(p)
    _data_args(p)
    _model_args(p)
    p.add_argument("--model", required=True, help="output model file")
    p.add_argument("--codes", default=None, help="output database code file")
    p.add_argument("--timing-log", default=None, help="output key=value timing file")
    p.set_defaults(func=cmd_train)
    subs["train"] = p

    p = sub.add_parser("eval", help="evaluate a model on held-out queries")
    _common(p)
    _data_args(p)
    _eval_args(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default="-", help="metrics file, '-' for stdout")
    p.set_defaults(func=cmd_eval)
    subs["eval"] = p

    p = sub.add_parser("sweep", help="train and evaluate over a parameter grid")
    _common(p)
    _data_args(p)
    _model_args(p, grid=True)
    _eval_args(p)
    p.add_argument("--seeds", type=_int_list, default=None, help="one row per seed per grid point")
    p.add_argument("--out", default="-", help="TSV file, '-' for stdout")
    p.add_argument("--timing-log", default=None, help="TSV of per-row stage durations")
    p.set_defaults(func=cmd_sweep)
    subs["sweep"] = p

    p = sub.add_parser("validate-prototype", help="Monte-Carlo check of the prototype estimator")
    _common(p)
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--m", type=int, default=20)
    p.add_argument("--r", type=int, default=8)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_validate_prototype)
    subs["validate-prototype"] = p
    return parser, subs


def read_config_file(path: str) -> Dict[str, str]:
    """``key = value`` lines; blank lines and ``#`` comments are skipped; quotes are stripped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line or line.startswith("["):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
                value = value[1:-1]
            out[key.replace("-", "_")] = value
    return out


def _config_defaults(p: argparse.ArgumentParser, pairs: Dict[str, str]) -> Dict[str, object]:
    actions = {a.dest: a for a in p._actions}
    out = {}
    for key, value in pairs.items():
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        try:
            if act.nargs == 0:
                out[key] = _bool(value)
            elif act.nargs in ("+", "*"):
                out[key] = value.split()
            else:
                out[key] = act.type(value) if act.type else value
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"config key {key!r}: {exc}")
        if act.choices is not None and out[key] not in act.choices:
            raise UsageError(f"config key {key!r}: {value!r} is not one of {list(act.choices)}")
    return out


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # required flags may be supplied by the config file, so peek at --config first
    peek = argparse.ArgumentParser(add_help=False)
    peek.add_argument("command", nargs="?")
    peek.add_argument("--config")
    known, _ = peek.parse_known_args(argv)
    if known.config and known.command in subs:
        p = subs[known.command]
        defaults = _config_defaults(p, read_config_file(known.config))
        for act in p._actions:
            if act.dest in defaults:
                act.required = False
        p.set_defaults(**defaults)
    args = parser.parse_args(argv)
    if args.ci and args.seed is None:
        raise UsageError("--seed is mandatory with --ci")
    if args.threads < 1:
        raise UsageError(f"--threads must be >= 1, got {args.threads}")
    base = 0 if args.seed is None else args.seed
    for name in ("kmeans_seed", "tsne_seed", "itq_seed", "lsh_seed", "split_seed"):
        if hasattr(args, name) and getattr(args, name) is None:
            setattr(args, name, base)
    return args


# ---------------------------------------------------------------- commands


def _dataset_spec(args) -> DatasetSpec:
    return DatasetSpec(tuple(args.data), args.format, args.limit, args.has_labels)


def _load_split(args) -> Tuple[FeatureMatrix, FeatureMatrix]:
    X = load_dataset(_dataset_spec(args))
    return database_and_queries(X, args.queries, args.split_seed, args.sample)


def _run_config(args, **grid) -> RunConfig:
    fields = dict(
        backend=args.backend, m=args.m, k=args.k, bits=args.bits, lam=args.lam, sigma=args.sigma,
        base_method=args.base_method, rotation=args.rotation, supervised=args.supervised,
        m_per_class=args.m_per_class, embed_dim=args.embed_dim, queries=args.queries,
        sample=args.sample, kmeans_seed=args.kmeans_seed, tsne_seed=args.tsne_seed,
        itq_seed=args.itq_seed, lsh_seed=args.lsh_seed, split_seed=args.split_seed,
        perplexity=args.perplexity, tsne_iters=args.tsne_iters, itq_iters=args.itq_iters,
    )
    fields.update(grid)
    return RunConfig(_dataset_spec(args), **fields)


def _write_text(path: str, text: str):
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_train(args) -> int:
    rc = _run_config(args)
    db, _ = _load_split(args)
    timings: Dict[str, float] = {}
    t0 = time.perf_counter()
    model = fit_model(db, rc, timings)
    t1 = time.perf_counter()
    codes = encode_batch(db, model)
    t2 = time.perf_counter()
    timings["extension"] = t2 - t1
    save_model(model, args.model)
    if args.codes:
        save_codes(codes, args.codes)
    if args.timing_log:
        lines = [f"{key}={timings[key]:.6f}" for key in TIMING_KEYS]
        lines.append(f"total={t2 - t0:.6f}")
        _write_text(args.timing_log, "\n".join(lines) + "\n")
    return EXIT_OK


def _ground_truth(args, db: FeatureMatrix, queries: FeatureMatrix):
    if args.gt == "labels":
        if db.labels is None:
            raise FormatError("label ground truth needs a labelled dataset")
        return label_ground_truth(db, queries)
    return euclidean_ground_truth(db, queries, args.fraction)


def cmd_eval(args) -> int:
    model = load_model(args.model)
    db, queries = _load_split(args)
    if db.d != model.d:
        raise FormatError(f"model expects dimension {model.d}, dataset has {db.d}")
    gt = _ground_truth(args, db, queries)
    report = evaluate(encode_batch(db, model), encode_batch(queries, model), gt, radius=args.radius)
    _write_text(args.out, report.to_text())
    return EXIT_OK


def _clean(msg: str) -> str:
    return " ".join(str(msg).split())


def _sweep_point(db, queries, gt, rc: RunConfig, radius: int):
    timings: Dict[str, float] = {}
    try:
        t0 = time.perf_counter()
        model = fit_model(db, rc, timings)
        t1 = time.perf_counter()
        db_codes = encode_batch(db, model)
        timings["extension"] = time.perf_counter() - t1
        timings["total"] = time.perf_counter() - t0
        report = evaluate(db_codes, encode_batch(queries, model), gt, radius=radius)
        return report, timings, "ok"
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return None, timings, f"error: {type(exc).__name__}: {_clean(exc)}"


def cmd_sweep(args) -> int:
    seeds = args.seeds if args.seeds is not None else [args.kmeans_seed]
    axes = {"backend": args.backend, "m": args.m, "k": args.k, "bits": args.bits, "seeds": seeds}
    for name, values in axes.items():
        if not values:
            raise UsageError(f"sweep grid axis --{name} is empty")
    for b in args.backend:
        if b not in ALL_BACKENDS:
            raise UsageError(f"unknown backend {b!r}")
    db, queries = _load_split(args)
    gt = _ground_truth(args, db, queries)
    grid = list(itertools.product(args.backend, args.m, args.k, args.bits, seeds))
    points = []
    for backend, m, k, bits, seed in grid:
        try:
            rc = _run_config(args, backend=backend, m=m, k=k, bits=bits).with_seed(seed)
            points.append(rc)
        except ValueError as exc:
            points.append(f"error: ValueError: {_clean(exc)}")

    def run(item):
        if isinstance(item, str):
            return None, {}, item
        return _sweep_point(db, queries, gt, item, args.radius)

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        results = list(pool.map(run, points))

    metric_keys = ["map", f"precision_r{args.radius}", f"recall_r{args.radius}", f"f1_r{args.radius}"]
    head = ["backend", "m", "k", "bits", "seed"]
    rows = ["#" + "\t".join(head + metric_keys + ["status"])]
    trows = ["#" + "\t".join(head + list(TIMING_KEYS) + ["total"])]
    for (backend, m, k, bits, seed), (report, timings, status) in zip(grid, results):
        key = [backend, str(m), str(k), str(bits), str(seed)]
        if report is None:
            vals = ["nan"] * len(metric_keys)
        else:
            summary = dict(report.summary())
            vals = [summary[mk] for mk in metric_keys]
        rows.append("\t".join(key + vals + [status]))
        trows.append("\t".join(key + [f"{timings.get(t, float('nan')):.6f}" for t in TIMING_KEYS + ("total",)]))
    _write_text(args.out, "\n".join(rows) + "\n")
    if args.timing_log:
        _write_text(args.timing_log, "\n".join(trows) + "\n")
    return EXIT_OK


def cmd_validate_prototype(args) -> int:
    seed = 0 if args.seed is None else args.seed
    instances = default_instances(args.instances, args.n, args.m, args.r, seed)
    rows = validate_estimator(instances, trials=args.trials, seed=seed)
    _write_text(args.out, format_report(rows))
    ok = all(r.var_ok and r.bias_ok and r.tail_ok for r in rows)
    return EXIT_OK if ok else EXIT_NUMERIC


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
