"""Command-line orchestration: attacks, evaluation, analysis, benchmarks.

Commands: ``attack``, ``evaluate``, ``analyze {bias|terms|sweep}``,
``bench``, ``gen-csbm``.  Configuration is a single JSON document
(``--config``) plus flag overrides, with flags winning; the resolved
snapshot is embedded in every JSON output and written as a ``.config.json``
sidecar next to every CSV so runs can be reproduced exactly.  All outputs
are byte-identical across reruns in f64 mode.  ``GATK_THREADS`` caps the
worker pool used to fan out independent (method, rate, seed) cells.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import tracemalloc
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from .analysis import (bias_report, term_norms, training_portion_sweep,
                       write_bias_csv, write_sweep_csv, write_terms_csv)
from .attacks import (METHODS, VARIANT_OBJECTIVES, AttackError, AttackResult,
                      attack_streams, flip_score, meta_gradient, run_attack)
from .graphs import (DatasetError, GraphDataset, classify_edge, generate_csbm,
                     load_dataset, save_dataset)
from .surrogate import SurrogateConfig, pseudo_labels
from .victim import VictimConfig, evaluate_methods, write_eval_csv

log = logging.getLogger("graphatk")


class CLIError(RuntimeError):
    """User-facing command failure; message goes to stderr, exit 1."""


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------

def parse_seeds(text: str) -> list[int]:
    """Seed list syntax: ``3``, ``0,2,5``, or the inclusive range ``0..4``."""
    text = text.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        lo, hi = int(lo), int(hi)
        if hi < lo:
            raise CLIError(f"empty seed range {text!r}")
        return list(range(lo, hi + 1))
    return [int(part) for part in text.split(",") if part.strip()]


def parse_floats(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def worker_count(cells: int) -> int:
    cap = os.environ.get("GATK_THREADS")
    if cap is not None:
        return max(1, min(int(cap), cells))
    return max(1, min(4, cells))


def load_config_doc(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise CLIError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise CLIError(f"config file {p} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise CLIError(f"config file {p} must hold a JSON object")
    return doc


def _build(cls, section: dict, label: str):
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise CLIError(f"unknown {label} config keys: {sorted(unknown)}")
    if cls is VictimConfig and "seeds" in section:
        section = dict(section, seeds=tuple(section["seeds"]))
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise CLIError(f"bad {label} config: {exc}") from None


def surrogate_config(doc: dict) -> SurrogateConfig:
    return _build(SurrogateConfig, doc.get("surrogate", {}), "surrogate")


def victim_config(doc: dict) -> VictimConfig:
    return _build(VictimConfig, doc.get("victim", {}), "victim")


def resolve(args, flag: str, doc: dict, key: str, default=None):
    """Flag value if given, else config-document value, else default."""
    value = getattr(args, flag, None)
    if value is not None:
        return value
    return doc.get(key, default)


def snapshot(args, doc: dict, **extra) -> dict:
    """The resolved run configuration embedded in every output."""
    snap = {"command": args.command, "config_document": doc}
    snap.update(extra)
    return snap


def write_sidecar(out_path: Path, snap: dict) -> None:
    side = out_path.with_suffix(out_path.suffix + ".config.json")
    side.write_text(json.dumps(snap, indent=1, sort_keys=True) + "\n")


def load_graph(path: str | None, doc: dict, split_seed: int = 0) -> GraphDataset:
    path = path or doc.get("dataset")
    if path is None:
        raise CLIError("no dataset given (flag --dataset or config key)")
    p = Path(path)
    if not p.exists():
        raise CLIError(f"dataset path does not exist: {p}")
    return load_dataset(p, split_seed=split_seed)


def check_rate(rate: float) -> float:
    if not 0.0 < rate < 1.0:
        raise CLIError(f"ptb_rate must lie in (0, 1), got {rate}")
    return rate


def load_attack_files(paths) -> list[tuple[Path, AttackResult]]:
    paths = [Path(p) for p in paths]
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise CLIError("missing attack files: " + ", ".join(missing))
    loaded = []
    for p in paths:
        try:
            loaded.append((p, AttackResult.load(p)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CLIError(f"corrupted attack file {p}: {exc}") from None
    return loaded


# ---------------------------------------------------------------------------
# attack
# ---------------------------------------------------------------------------

def _attack_cell(ds, method, rate, seed, cfg, precision, out_dir, snap):
    tallies = dict.fromkeys(("LL", "LU", "UU"), 0)

    def progress(event):
        if isinstance(event, dict):  # PGD ascent step
            log.info("%s r=%g s=%d step %d: objective=%.3e", method, rate,
                     seed, event["step"], event["objective"])
            return
        flip = event
        tallies[classify_edge(flip.u, flip.v, ds.split)] += 1
        log.info("%s r=%g s=%d flip %d: (%d,%d) %s score=%.3e "
                 "LL=%d LU=%d UU=%d", method, rate, seed, flip.step,
                 flip.u, flip.v, flip.direction, flip.score,
                 tallies["LL"], tallies["LU"], tallies["UU"])

    result = run_attack(ds, method, rate, seed=seed, cfg=cfg,
                        precision=precision, progress=progress)
    result.config = dict(result.config, run=snap)
    path = out_dir / f"attack_{method}_r{rate:g}_s{seed}.json"
    result.save(path)
    log.info("wrote %s", path)
    return path


def cmd_attack(args) -> int:
    doc = load_config_doc(args.config)
    ds = load_graph(args.dataset, doc)
    methods = (args.method.split(",") if args.method
               else list(doc.get("methods", [])))
    if not methods:
        raise CLIError("no attack method given")
    for m in methods:
        if m not in METHODS:
            raise CLIError(f"unknown method {m!r}; choose from {METHODS}")
    rates = [check_rate(r) for r in
             (parse_floats(args.ptb_rate) if args.ptb_rate
              else doc.get("ptb_rates", [0.05]))]
    seeds = (parse_seeds(args.seeds) if args.seeds
             else list(doc.get("seeds", [0])))
    precision = resolve(args, "precision", doc, "precision", "f64")
    cfg = surrogate_config(doc)
    out_dir = Path(resolve(args, "out", doc, "out", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    snap = snapshot(args, doc, dataset=ds.name, precision=precision)

    cells = [(m, r, s) for m in methods for r in rates for s in seeds]
    with ThreadPoolExecutor(max_workers=worker_count(len(cells))) as pool:
        futures = [pool.submit(_attack_cell, ds, m, r, s, cfg, precision,
                               out_dir, snap) for m, r, s in cells]
        for future in futures:
            future.result()
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    doc = load_config_doc(args.config)
    ds = load_graph(args.dataset, doc)
    loaded = load_attack_files(args.attacks or doc.get("attacks", []))
    groups: dict[tuple[str, float], list[AttackResult]] = {}
    for _, res in loaded:
        groups.setdefault((res.method, res.ptb_rate), []).append(res)
    labels = {}
    for (method, rate), results in groups.items():
        label = (method if sum(m == method for m, _ in groups) == 1
                 else f"{method}@{rate:g}")
        labels[label] = results
    cfg = victim_config(doc)
    precision = resolve(args, "precision", doc, "precision", "f64")
    report = evaluate_methods(ds, labels, cfg, precision=precision,
                              progress=lambda row: log.info(
                                  "%s: %.2f +- %.2f over %d runs", row.method,
                                  row.acc_mean, row.acc_std, row.seed_count))
    out = Path(resolve(args, "out", doc, "out", "eval.csv"))
    write_eval_csv(report, out)
    write_sidecar(out, snapshot(args, doc, dataset=ds.name,
                                precision=precision,
                                attack_files=[str(p) for p, _ in loaded],
                                victim=asdict(cfg)))
    log.info("wrote %s", out)
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def cmd_analyze_bias(args) -> int:
    doc = load_config_doc(args.config)
    ds = load_graph(args.dataset, doc)
    loaded = load_attack_files(args.attacks or doc.get("attacks", []))
    reports = [bias_report(res, ds) for _, res in loaded]
    out = Path(resolve(args, "out", doc, "out", "bias.csv"))
    write_bias_csv(reports, out)
    write_sidecar(out, snapshot(args, doc, dataset=ds.name,
                                attack_files=[str(p) for p, _ in loaded]))
    log.info("wrote %s", out)
    return 0


def cmd_analyze_terms(args) -> int:
    doc = load_config_doc(args.config)
    if args.n is not None:
        ds = generate_csbm(n=args.n, num_classes=2, p_in=0.4, p_out=0.1,
                           dim=5, noise=0.3, seed=args.gen_seed,
                           train_frac=0.1)
    else:
        ds = load_graph(args.dataset, doc)
    cfg = surrogate_config(doc)
    if args.n is not None and "surrogate" not in doc:
        # Desk-scale default keeps the exact path inside its T <= 10 guard.
        cfg = SurrogateConfig(steps=5, hidden=4)
    if args.method:
        if args.method not in VARIANT_OBJECTIVES:
            raise CLIError(f"terms analysis needs a meta variant, "
                           f"got {args.method!r}")
        cfg = replace(cfg, objective=VARIANT_OBJECTIVES[args.method])
    precision = resolve(args, "precision", doc, "precision", "f64")
    report = term_norms(ds, cfg, exact=args.exact,
                        frozen=args.method == "metattack_no",
                        precision=precision)
    out = Path(resolve(args, "out", doc, "out", "terms.csv"))
    write_terms_csv(report, out)
    write_sidecar(out, snapshot(args, doc, dataset=ds.name, exact=args.exact,
                                surrogate=asdict(cfg)))
    log.info("wrote %s", out)
    return 0


def cmd_analyze_sweep(args) -> int:
    doc = load_config_doc(args.config)
    ds = load_graph(args.dataset, doc)
    portions = (parse_floats(args.portions) if args.portions
                else doc.get("portions", [0.1, 0.3, 0.5]))
    rate = check_rate(float(args.ptb_rate) if args.ptb_rate
                      else doc.get("ptb_rates", [0.05])[0])
    seeds = (parse_seeds(args.seeds) if args.seeds
             else list(doc.get("seeds", [0])))
    method = args.method or doc.get("methods", ["metattack"])[0]
    precision = resolve(args, "precision", doc, "precision", "f64")
    cfg = surrogate_config(doc)
    rows, _ = training_portion_sweep(
        ds, portions, method=method, ptb_rate=rate, seeds=seeds, cfg=cfg,
        precision=precision,
        progress=lambda info: log.info("portion %g seed %d: %s",
                                       info["portion"], info["seed"],
                                       info["counts"]))
    out = Path(resolve(args, "out", doc, "out", "sweep.csv"))
    write_sweep_csv(rows, out)
    write_sidecar(out, snapshot(args, doc, dataset=ds.name, method=method,
                                portions=portions, seeds=seeds,
                                ptb_rate=rate, surrogate=asdict(cfg)))
    log.info("wrote %s", out)
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

BENCH_METHODS = ("metattack", "metacon_s", "metacon_d")


def measure_flip(ds: GraphDataset, variant: str, cfg: SurrogateConfig,
                 precision: str, repeats: int = 1) -> dict:
    """Wall time and allocation peak of one greedy flip's work.

    Pseudo-label pretraining is shared across all flips of a run, so it
    stays outside the measured section; what is timed is exactly what every
    additional flip costs: one unrolled training plus the meta-gradient
    backward pass and the flip scoring.
    """
    cfg = replace(cfg, objective=VARIANT_OBJECTIVES[variant])
    pl = pseudo_labels(ds, cfg, seed=0)

    def one_flip():
        init_rng, aug_rng = attack_streams(0, 0)
        mg = meta_gradient(ds, pl, cfg, init_rng=init_rng, aug_rng=aug_rng,
                           frozen=variant == "metattack_no",
                           precision=precision)
        flip_score(mg, ds.adj)

    # Timing and allocation peaks are measured in separate passes:
    # tracemalloc instruments every allocation and would distort the clock.
    best_dt = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        one_flip()
        best_dt = min(best_dt, time.perf_counter() - t0)
    tracemalloc.start()
    one_flip()
    _, peak_bytes = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    return {"seconds": best_dt, "peak_mb": peak_bytes / 2**20}


def cmd_bench(args) -> int:
    doc = load_config_doc(args.config)
    cfg = surrogate_config(doc)
    precision = resolve(args, "precision", doc, "precision", "f64")
    out = Path(resolve(args, "out", doc, "out", "bench.json"))
    payload = {"config": snapshot(args, doc, precision=precision,
                                  surrogate=asdict(cfg))}

    if args.dataset or doc.get("dataset"):
        ds = load_graph(args.dataset, doc)
        per_method = {}
        for m in BENCH_METHODS:
            per_method[m] = measure_flip(ds, m, cfg, precision,
                                         repeats=args.repeats)
            log.info("%s: %.3fs %.1f MiB", m, per_method[m]["seconds"],
                     per_method[m]["peak_mb"])
        base = per_method["metattack"]
        payload["dataset"] = ds.name
        payload["methods"] = per_method
        payload["ratios"] = {
            m: {"time": per_method[m]["seconds"] / base["seconds"],
                "memory": per_method[m]["peak_mb"] / base["peak_mb"]}
            for m in BENCH_METHODS}

    if args.sizes:
        sizes = [int(v) for v in parse_floats(args.sizes)]
        scaling = {m: [] for m in ("metacon_s", "metacon_d")}
        for n in sizes:
            g = generate_csbm(n=n, num_classes=2, p_in=min(1.0, 8.0 / n),
                              p_out=min(1.0, 2.0 / n), dim=16, noise=0.5,
                              seed=0)
            for m in scaling:
                res = measure_flip(g, m, cfg, precision, repeats=args.repeats)
                scaling[m].append(res["seconds"])
                log.info("n=%d %s: %.3fs", n, m, res["seconds"])
        slopes = {m: float(np.polyfit(np.log(sizes), np.log(ts), 1)[0])
                  for m, ts in scaling.items()}
        payload["scaling"] = {"sizes": sizes, "seconds": scaling,
                              "loglog_slopes": slopes}

    if "methods" not in payload and "scaling" not in payload:
        raise CLIError("bench needs --dataset and/or --sizes")
    out.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    log.info("wrote %s", out)
    return 0


# ---------------------------------------------------------------------------
# gen-csbm
# ---------------------------------------------------------------------------

def cmd_gen_csbm(args) -> int:
    ds = generate_csbm(n=args.n, num_classes=args.classes, p_in=args.p_in,
                       p_out=args.p_out, dim=args.dim, noise=args.noise,
                       seed=args.seed, train_frac=args.train_frac)
    out = Path(args.out or f"csbm_n{args.n}")
    save_dataset(ds, out)
    log.info("wrote %s (n=%d, m=%d)", out, ds.n, ds.num_edges)
    return 0


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, *names: str) -> None:
    flags = {
        "dataset": (("--dataset",), {"help": "dataset directory"}),
        "method": (("--method",), {"help": "attack method name(s), "
                                           "comma separated"}),
        "ptb_rate": (("--ptb-rate",), {"dest": "ptb_rate",
                                       "help": "edge flip budget as a "
                                               "fraction of clean edges"}),
        "seeds": (("--seeds",), {"help": "seed list: 3 | 0,2,5 | 0..4"}),
        "config": (("--config",), {"help": "JSON config document; flags "
                                           "override its values"}),
        "out": (("--out",), {"help": "output file or directory"}),
        "precision": (("--precision",), {"choices": ("f32", "f64"),
                                         "help": "float width "
                                                 "(default f64)"}),
        "exact": (("--exact",), {"action": "store_true",
                                 "help": "add exact mixed-partial column "
                                         "(n <= 64, T <= 10)"}),
    }
    for name in names:
        args, kwargs = flags[name]
        p.add_argument(*args, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphatk",
        description="Graph-structure poisoning attacks via meta-gradients, "
                    "with bias analysis and victim evaluation.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="per-flip progress on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="generate attack.json files")
    _common(p, "dataset", "method", "ptb_rate", "seeds", "config", "out",
            "precision")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="train victims, write eval.csv")
    p.add_argument("attacks", nargs="*", help="attack.json files")
    _common(p, "dataset", "config", "out", "precision")
    p.set_defaults(func=cmd_evaluate)

    pa = sub.add_parser("analyze", help="bias / terms / sweep reports")
    asub = pa.add_subparsers(dest="analysis", required=True)

    p = asub.add_parser("bias", help="edge-class flip ratios -> bias.csv")
    p.add_argument("attacks", nargs="*", help="attack.json files")
    _common(p, "dataset", "config", "out")
    p.set_defaults(func=cmd_analyze_bias)

    p = asub.add_parser("terms", help="meta-gradient term norms -> terms.csv")
    _common(p, "dataset", "method", "config", "out", "precision", "exact")
    p.add_argument("--n", type=int, help="generate a desk-scale cSBM of "
                                         "this size instead of --dataset")
    p.add_argument("--gen-seed", type=int, default=0,
                   help="seed for the generated cSBM")
    p.set_defaults(func=cmd_analyze_terms)

    p = asub.add_parser("sweep", help="training-portion sweep -> sweep.csv")
    _common(p, "dataset", "method", "ptb_rate", "seeds", "config", "out",
            "precision")
    p.add_argument("--portions", help="training fractions, e.g. 0.1,0.3,0.5")
    p.set_defaults(func=cmd_analyze_sweep)

    p = sub.add_parser("bench", help="per-flip cost -> bench.json")
    _common(p, "dataset", "config", "out", "precision")
    p.add_argument("--sizes", help="cSBM sizes for the scaling study, "
                                   "e.g. 200,400,800")
    p.add_argument("--repeats", type=int, default=1,
                   help="measurement repeats (best time, worst memory)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-csbm", help="generate a synthetic dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--p-in", type=float, default=0.1, dest="p_in")
    p.add_argument("--p-out", type=float, default=0.01, dest="p_out")
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-frac", type=float, default=0.1,
                   dest="train_frac")
    p.add_argument("--out", help="output dataset directory")
    p.set_defaults(func=cmd_gen_csbm)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(message)s",
                        level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (CLIError, AttackError, DatasetError, ValueError, OSError) as exc:
        print(f"graphatk: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
