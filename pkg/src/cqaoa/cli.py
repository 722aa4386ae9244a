"""Batch front end: ``cqaoa generate|compile|run|report``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from . import bitcost, instances, metrics, pipeline, qaoa
from .problem import validate
from .sim import DEFAULT_MEM_CAP, MemoryCapExceeded

__all__ = [
    "ExperimentConfig",
    "SUMMARY_COLUMNS",
    "generate_instances",
    "compile_instance",
    "run_experiment",
    "build_report",
    "read_summary",
    "main",
]

logger = logging.getLogger("cqaoa")

WORKERS_ENV = "CQAOA_WORKERS"
EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2

# (csv header, row key); wall-clock times live only in reports.jsonl so reruns give identical CSVs
SUMMARY_COLUMNS = [
    ("instance", "instance"), ("method", "method"), ("p", "p"), ("expectation", "expectation"),
    ("RAAR", "raar"), ("P*", "p_opt"), ("P90", "p90"), ("L(p)", "layers"), ("TTS_p", "tts"),
    ("TTS*", "tts_star"), ("S", "search_space"),
]


# ---------------------------------------------------------------------------
# generate


def _spec_entries(spec: dict) -> list[dict]:
    entries = spec.get("instances")
    if not isinstance(entries, list) or not entries:
        raise ValueError("generator config needs a non-empty 'instances' list")
    return entries


def generate_instances(spec: dict, out_dir, seed: int | None = None) -> list[Path]:
    """Write one instance file per entry and price pattern; deterministic per seed.

    PP entries: ``{"family": "pp", "name", "taus", "horizon", "patterns",
    "seed", "max_draw", "capacity", "noise"}``. MKS entries: ``{"family":
    "mks", "name", "n", "m", "seed"}``. ``seed`` offsets every entry seed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base = int(seed or 0)
    written = []
    for k, entry in enumerate(_spec_entries(spec)):
        family = entry.get("family", spec.get("family", "pp"))
        name = entry.get("name", f"{family}{k}")
        s = base + int(entry.get("seed", k))
        if family == "pp":
            patterns = entry.get("patterns", list(instances.PRICE_KINDS))
            for kind in patterns:
                pattern = instances.PricePattern(kind, entry.get("noise"), seed=s)
                pp = instances.random_pp(
                    entry["taus"], entry["horizon"], pattern, seed=s,
                    max_draw=entry.get("max_draw", 2), capacity=entry.get("capacity"),
                )
                label = name if len(patterns) == 1 else f"{name}-{kind}"
                prob = instances.build_pp(pp, label)
                meta_spec = {**asdict(pp), "pattern": kind}
                written.append(instances.save_instance(out_dir / f"{label}.json", prob, "pp", meta_spec, s))
        elif family == "mks":
            mks = instances.random_mks(entry["n"], entry["m"], seed=s)
            prob = instances.build_mks(mks, name)
            written.append(instances.save_instance(out_dir / f"{name}.json", prob, "mks", mks, s))
        else:
            raise ValueError(f"unknown family {family!r}")
        msgs = validate(instances.load_instance(written[-1]).normalized())
        if msgs:
            raise ValueError(f"{written[-1]}: " + "; ".join(msgs))
    return written


# ---------------------------------------------------------------------------
# compile


def _pipeline_config(method: str, eta, rho, mem_cap: int) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig(method, eta=eta, rho=rho, mem_cap=mem_cap)


def compile_instance(path, method: str, out_dir, eta=None, rho=None, mem_cap: int = DEFAULT_MEM_CAP, tensors: bool = False) -> Path:
    """Write the layout summary (and optionally the phase/evaluation tensors) of one compilation."""
    prob = instances.load_instance(path)
    model = pipeline.compile(prob, _pipeline_config(method, eta, rho, mem_cap))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = f"{prob.name}.{model.method}"
    layout = {
        **model.summary(),
        "instance": prob.name,
        "sites": [{"dim": s.dim, "variables": list(s.variables), "slack": s.slack} for s in model.layout.sites],
        "layers": asdict(metrics.circuit_layers(model)),
    }
    target = out_dir / f"{stem}.layout.json"
    target.write_text(json.dumps(layout, indent=1) + "\n")
    if tensors:
        bitcost.save_tensor(out_dir / f"{stem}.phase.cqt", model.phase_cost, model.layout)
        bitcost.save_tensor(out_dir / f"{stem}.eval.cqt", model.eval_cost, model.layout)
    return target


# ---------------------------------------------------------------------------
# run


@dataclass
class ExperimentConfig:
    instances: list[str]
    methods: list[str] = field(default_factory=lambda: list(pipeline.METHODS))
    p_max: int = 12
    eta: float | None = None  # None: optimal-objective policy
    rho: float | None = None  # None: computed per instance
    seed: int = 0
    mem_cap: int = DEFAULT_MEM_CAP
    out: str = "results"
    workers: int = 1

    def __post_init__(self):
        if not self.instances:
            raise ValueError("need at least one instance")
        if not self.methods:
            raise ValueError("need at least one method")
        self.methods = [pipeline.normalize_method(m) for m in self.methods]
        if self.p_max < 1:
            raise ValueError("p_max must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")


def _run_job(path: str, method: str, cfg: ExperimentConfig) -> dict:
    prob = instances.load_instance(path)
    try:
        model = pipeline.compile(prob, _pipeline_config(method, cfg.eta, cfg.rho, cfg.mem_cap))
    except MemoryCapExceeded as exc:
        return {"instance": prob.name, "method": method, "skipped": "memory cap", "detail": str(exc)}
    settings = qaoa.OptimizerSettings(seed=cfg.seed)
    reports = qaoa.run_ladder(model, cfg.p_max, settings)
    return {"instance": prob.name, "method": method, "reports": [r.to_dict() for r in reports]}


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if not math.isfinite(v) else repr(v)
    return str(v)


def run_experiment(cfg: ExperimentConfig) -> tuple[list[dict], list[dict]]:
    """Run every (instance, method) ladder; write ``reports.jsonl``, ``summary.csv`` and ``skipped.jsonl``.

    Returns the summary rows and the skipped pairs. Output order does not
    depend on the number of workers.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(str(p), m) for p in cfg.instances for m in cfg.methods]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_job, *zip(*jobs), [cfg] * len(jobs)))
    else:
        results = [_run_job(p, m, cfg) for p, m in jobs]

    rows, skipped = [], []
    with open(out / "reports.jsonl", "w") as fh:
        for res in results:
            if "skipped" in res:
                logger.warning("skip %s/%s: %s", res["instance"], res["method"], res["skipped"])
                skipped.append(res)
                continue
            reps = res["reports"]
            best = metrics.tts_star(r["tts"] if r["tts"] is not None else math.inf for r in reps)
            for r in reps:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
                rows.append({
                    "instance": r["instance"], "method": r["method"], "p": r["p"],
                    "expectation": r["expectation"], "raar": r["raar"], "p_opt": r["p_opt"], "p90": r["p90"],
                    "layers": r["layers"], "tts": r["tts"], "tts_star": best, "search_space": r["search_space"],
                })
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([h for h, _ in SUMMARY_COLUMNS])
        for row in rows:
            w.writerow([_fmt(row[k]) for _, k in SUMMARY_COLUMNS])
    with open(out / "skipped.jsonl", "w") as fh:
        for s in skipped:
            fh.write(json.dumps(s, sort_keys=True) + "\n")
    return rows, skipped


# ---------------------------------------------------------------------------
# report


def read_summary(path) -> list[dict]:
    """Summary rows keyed like :data:`SUMMARY_COLUMNS` row keys (values as strings)."""
    names = dict(SUMMARY_COLUMNS)
    with open(path, newline="") as fh:
        return [{names.get(k, k): v for k, v in r.items()} for r in csv.DictReader(fh)]


def _float(v):
    return float(v) if v not in ("", None) else None


def build_report(results_dir, baseline: str = "qubo", out_dir=None) -> tuple[dict, list[str]]:
    """Scaling fits, per-instance comparison and speedups from a results directory.

    Writes ``report.json`` and ``comparison.csv``; returns the report and
    any warnings (methods with too few finite TTS* values are not fitted).
    """
    results_dir = Path(results_dir)
    out_dir = Path(out_dir or results_dir)
    baseline = pipeline.normalize_method(baseline)
    rows = read_summary(results_dir / "summary.csv")
    best: dict[tuple[str, str], tuple[float | None, int]] = {}
    for r in rows:
        key = (r["instance"], r["method"])
        best[key] = (_float(r["tts_star"]), int(r["search_space"]))

    methods = [m for m in pipeline.METHODS if any(k[1] == m for k in best)]
    insts = sorted({k[0] for k in best})
    warnings, fits = [], {}
    for m in methods:
        pts = [(s, t) for (i, mm), (t, s) in best.items() if mm == m and t is not None]
        try:
            fit = metrics.scaling_fit(pts)
        except ValueError as exc:
            warnings.append(f"{m}: no fit ({exc})")
            continue
        fits[m] = {**asdict(fit), "base": fit.base}

    comparison, speedups = [], {}
    for inst in insts:
        row = {"instance": inst}
        for m in methods:
            t = best.get((inst, m), (None, 0))[0]
            row[m] = t
        comparison.append(row)
        base = row.get(baseline)
        speedups[inst] = {m: (base / row[m] if base and row[m] else None) for m in methods}

    medians = {}
    for m in methods:
        vals = [best[(i, m)][0] for i in insts if (i, m) in best and best[(i, m)][0] is not None]
        medians[m] = statistics.median(vals) if vals else None
    report = {"fits": fits, "median_tts_star": medians, "baseline": baseline, "speedups": speedups, "warnings": warnings}

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    with open(out_dir / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["instance", *methods, *[f"r_{m}" for m in methods]])
        for row in comparison:
            sp = speedups[row["instance"]]
            w.writerow([row["instance"], *[_fmt(row[m]) for m in methods], *[_fmt(sp[m]) for m in methods]])
    return report, warnings


# ---------------------------------------------------------------------------
# argument parsing


def _eta(text: str):
    if text in ("optimal", "optimal-objective"):
        return None
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("eta must be positive")
    return v


def _rho(text: str):
    return None if text == "auto" else float(text)


def _methods(values) -> list[str]:
    out = []
    for v in values or []:
        out += [m for m in v.split(",") if m]
    return out or list(pipeline.METHODS)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cqaoa", description="Constrained QAOA pipelines: generation, compilation, ladder runs, reports.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, method_many=False):
        if method_many:
            p.add_argument("--method", action="append", help="qubo, xy, if, ifxy (repeat or comma-separate; default all)")
        else:
            p.add_argument("--method", default="ifxy")
        p.add_argument("--eta", type=_eta, default=None,
                       help="violation penalty: a positive number, or 'optimal' for |f(x*)| by exhaustive scan (benchmark only)")
        p.add_argument("--rho", type=_rho, default=None, help="indicator penalty: a positive number or 'auto'")
        p.add_argument("--mem-cap", type=int, default=DEFAULT_MEM_CAP, help="max state-tensor entries")
        p.add_argument("--out", required=True)

    g = sub.add_parser("generate", help="generate instance files from a JSON generator config")
    g.add_argument("config")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    c = sub.add_parser("compile", help="compile one instance and write its layout")
    c.add_argument("instance")
    common(c)
    c.add_argument("--tensors", action="store_true", help="also write phase and evaluation tensors")

    r = sub.add_parser("run", help=f"run depth ladders (workers from ${WORKERS_ENV})")
    r.add_argument("instances", nargs="+")
    common(r, method_many=True)
    r.add_argument("--pmax", type=int, default=12)
    r.add_argument("--seed", type=int, default=0)

    rep = sub.add_parser("report", help="fit TTS* scaling and compare methods")
    rep.add_argument("results")
    rep.add_argument("--baseline", default="qubo")
    rep.add_argument("--out", default=None)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "generate":
            spec = json.loads(Path(args.config).read_text())
            for p in generate_instances(spec, args.out, args.seed):
                print(p)
            return EXIT_OK
        if args.command == "compile":
            try:
                print(compile_instance(args.instance, args.method, args.out, args.eta, args.rho, args.mem_cap, args.tensors))
            except MemoryCapExceeded as exc:
                logger.warning("skip: memory cap (%s)", exc)
                return EXIT_PARTIAL
            return EXIT_OK
        if args.command == "run":
            cfg = ExperimentConfig(
                instances=args.instances, methods=_methods(args.method), p_max=args.pmax, eta=args.eta,
                rho=args.rho, seed=args.seed, mem_cap=args.mem_cap, out=args.out, workers=_workers(),
            )
            rows, skipped = run_experiment(cfg)
            print(f"{len(rows)} rows, {len(skipped)} skipped -> {cfg.out}")
            return EXIT_PARTIAL if skipped else EXIT_OK
        if args.command == "report":
            report, warnings = build_report(args.results, args.baseline, args.out)
            for w in warnings:
                logger.warning(w)
            print(json.dumps(report["median_tts_star"], sort_keys=True))
            return EXIT_PARTIAL if warnings else EXIT_OK
    except (OSError, ValueError, KeyError, instances.GenerationError) as exc:
        logger.error("%s", exc)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
