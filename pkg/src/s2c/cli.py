"""Command-line front end: pipeline runs, the benchmark harness, standalone
D2C conversion, and synthetic suite generation."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, pipeline
from .codegen import generate, write_artifact
from .llm import make_client
from .model import (PlantError, PlantModel, load_plant, plant_to_dict,
                    tustin_d2c, write_plant)
from .pipeline import (BASELINE_METHODS, PipelineError, RunConfig, run,
                       run_baseline)
from .specint import RequirementText, parse_rules, to_specset

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FALLBACK = 2

CSV_COLUMNS = ("problem", "method", "success", "iterations", "gamma",
               "gamma_over_target", "decay_sat", "dist_rej",
               "settling_median", "overshoot_median")

DEFAULT_REQUIREMENT = (
    "Design a robust controller; overshoot target 20%, low priority; "
    "settling time target 7 seconds with 1.5s tolerance; "
    "H-infinity norm less than 10."
)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _json_dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _read_requirement(spec: str) -> RequirementText:
    if spec == "-":
        return RequirementText(sys.stdin.read())
    return RequirementText(Path(spec).read_text())


def _metrics_row(problem: str, method: str, ms) -> dict:
    def num(x):
        return "" if x is None else repr(float(x))

    return {
        "problem": problem,
        "method": method,
        "success": str(bool(ms.success)).lower(),
        "iterations": str(ms.iterations),
        "gamma": num(ms.gamma),
        "gamma_over_target": num(ms.gamma_over_target),
        "decay_sat": num(ms.decay_sat),
        "dist_rej": num(ms.disturbance_rejection),
        "settling_median": num(ms.settling_median_s),
        "overshoot_median": num(ms.overshoot_median),
    }


def _run_report(result) -> dict:
    history = []
    for rec in result.history:
        history.append({
            "iteration": rec.iteration,
            "gamma": rec.certificate.gamma,
            "gamma_floor": rec.specs_snapshot.hinf_min,
            "max_re_lambda": rec.certificate.closed_loop_spectrum.max_real_part,
            "disturbance_rejection": rec.report.freq.disturbance_rejection,
            "settling_median_s": rec.report.mc.settling_time_median_s,
            "overshoot_median": rec.report.mc.overshoot_median,
            "violations": [
                {"kind": v.kind, "measured": v.measured, "target": v.target,
                 "severity": v.severity}
                for v in rec.report.violations
            ],
        })
    ms = result.metrics
    return {
        "schema_version": 1,
        "tool_version": __version__,
        "converged": result.converged,
        "iterations_used": result.iterations_used,
        "gamma_trace": list(result.gamma_trace),
        "floor_trace": list(result.floor_trace),
        "history": history,
        "final": {
            "iteration": result.final_record.iteration,
            "K": np.asarray(result.final_record.certificate.K).tolist(),
            "gamma": result.final_record.certificate.gamma,
            "metrics": {
                "success": ms.success,
                "gamma_over_target": ms.gamma_over_target,
                "decay_sat": ms.decay_sat,
                "disturbance_rejection": ms.disturbance_rejection,
                "settling_median_s": ms.settling_median_s,
                "overshoot_median": ms.overshoot_median,
            },
        },
    }


def cmd_pipeline(args) -> int:
    try:
        plant = load_plant(args.plant)
        req = _read_requirement(args.req)
    except (PlantError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    cfg = RunConfig(max_iter=args.max_iter, seed=args.seed,
                    llm_client=make_client(args.llm))
    try:
        result = run(plant, req, cfg)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out_dir = Path(args.out)
    _atomic_write(out_dir / f"{plant.name}_run.json",
                  _json_dumps(_run_report(result)))
    cont_plant = tustin_d2c(plant) if plant.domain == "discrete" else plant
    artifact = generate(result.final_record, cont_plant)
    write_artifact(artifact, out_dir, plant.name)
    return EXIT_OK if result.converged else EXIT_FALLBACK


def _load_suite(path: str) -> list:
    doc = json.loads(Path(path).read_text())
    problems = doc.get("problems", doc if isinstance(doc, list) else None)
    if not problems:
        raise ValueError("suite is empty or malformed")
    base = Path(path).parent
    out = []
    for entry in problems:
        plant_path = base / entry["plant"]
        req_path = entry.get("req")
        out.append((plant_path, (base / req_path) if req_path else None))
    return out


def _bench_one(plant_path, req_path, method, seed, max_iter):
    plant = load_plant(plant_path)
    text = Path(req_path).read_text() if req_path else DEFAULT_REQUIREMENT
    specs = to_specset(parse_rules(RequirementText(text)))
    cfg = RunConfig(max_iter=max_iter, seed=seed)
    cont = tustin_d2c(plant) if plant.domain == "discrete" else plant
    try:
        ms = run_baseline(cont, specs, method, cfg)
    except Exception as exc:  # a failed row must never abort the suite
        log.warning("bench row %s/%s failed: %s", plant.name, method, exc)
        ms = pipeline.MetricSet(success=False)
    return plant.name, method, ms


def _median_or_none(values):
    vals = [v for v in values if v is not None and np.isfinite(v)]
    return float(np.median(vals)) if vals else None


def _aggregate(rows) -> dict:
    methods = sorted({m for _, m, _ in rows})
    brl_dr = _median_or_none([ms.disturbance_rejection
                              for _, m, ms in rows if m == "brl" and ms.success])
    report = {}
    for method in methods:
        own = [ms for _, m, ms in rows if m == method]
        succ = [ms for ms in own if ms.success]
        dr = _median_or_none([ms.disturbance_rejection for ms in succ])
        report[method] = {
            "success_rate": len(succ) / len(own),
            "converged_within_6_rate": sum(
                1 for ms in own if ms.converged and ms.iterations <= 6) / len(own),
            "dist_rej_median": dr,
            "dist_rej_normalized": (dr / brl_dr if dr is not None and brl_dr
                                    else None),
            "gamma_over_target_median": _median_or_none(
                [ms.gamma_over_target for ms in succ]),
            "decay_sat_median": _median_or_none([ms.decay_sat for ms in succ]),
        }
    return {"schema_version": 1, "tool_version": __version__, "methods": report}


def cmd_bench(args) -> int:
    try:
        suite = _load_suite(args.suite)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: bad suite file: {exc}", file=sys.stderr)
        return EXIT_ERROR
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in BASELINE_METHODS]
    if not methods or unknown:
        print(f"error: bad methods {unknown or '(none)'}", file=sys.stderr)
        return EXIT_ERROR
    jobs = [(pp, rp, m) for pp, rp in suite for m in methods]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        rows = list(pool.map(
            lambda j: _bench_one(j[0], j[1], j[2], args.seed, args.max_iter),
            jobs))
    out_dir = Path(args.out)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for problem, method, ms in rows:
        writer.writerow(_metrics_row(problem, method, ms))
        _atomic_write(out_dir / "runs" / f"{problem}_{method}.json",
                      _json_dumps(_metrics_row(problem, method, ms)))
    _atomic_write(out_dir / "bench.csv", buf.getvalue())
    _atomic_write(out_dir / "aggregate.json", _json_dumps(_aggregate(rows)))
    return EXIT_OK


def cmd_d2c(args) -> int:
    try:
        plant = load_plant(args.plant)
    except (PlantError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if plant.domain != "discrete":
        print("error: plant is not discrete", file=sys.stderr)
        return EXIT_ERROR
    try:
        cont = tustin_d2c(plant)
    except PlantError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(args.out)
    _atomic_write(out, _json_dumps(plant_to_dict(cont)))
    return EXIT_OK


def _parse_dims(spec: str) -> dict:
    out = {"n": (2, 4), "m": (1, 2)}
    for part in spec.split(","):
        key, _, rng = part.partition(":")
        lo, _, hi = rng.partition("..")
        out[key.strip()] = (int(lo), int(hi))
    return out


def _controllable(A, B) -> bool:
    n = A.shape[0]
    blocks = [B]
    for _ in range(n - 1):
        blocks.append(A @ blocks[-1])
    return np.linalg.matrix_rank(np.hstack(blocks)) == n


def random_plant(rng, n_range, m_range, unstable: bool, index: int) -> PlantModel:
    """One random controllable plant; eigenvalues shifted so max Re lambda
    lands in a stable or unstable band as requested."""
    while True:
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        m = int(rng.integers(m_range[0], m_range[1] + 1))
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m))
        if not _controllable(A, B):
            continue
        max_re = float(np.max(np.linalg.eigvals(A).real))
        # Stable plants sit close to the imaginary axis so open-loop-like
        # designs settle slowly; unstable ones get a genuinely unstable pole.
        target = rng.uniform(0.2, 1.0) if unstable else rng.uniform(-0.50, -0.30)
        A = A + (target - max_re) * np.eye(n)
        E = 1.5 * rng.normal(size=(n, max(1, n // 2)))
        # Regulated output stacks weighted states over weighted inputs, so no
        # gain can cancel the whole channel and the optimal gamma stays
        # bounded away from zero. The effort weight dominates, so norm-optimal
        # designs favor low gain.
        C0 = 1.0 * rng.normal(size=(max(1, n // 2), n))
        Cz = np.vstack([C0, np.zeros((m, n))])
        Dz = np.vstack([np.zeros((C0.shape[0], m)), 4.0 * np.eye(m)])
        return PlantModel(name=f"synth{index:02d}", A=A, B=B, E=E, Cz=Cz, Dz=Dz)


def cmd_gen_suite(args) -> int:
    if args.count < 1:
        print("error: count must be positive", file=sys.stderr)
        return EXIT_ERROR
    dims = _parse_dims(args.dims)
    n_unstable = int(round(args.unstable_frac * args.count))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    problems = []
    for i in range(args.count):
        rng = np.random.default_rng((args.seed, i))
        plant = random_plant(rng, dims["n"], dims["m"], i < n_unstable, i)
        plant_file = f"{plant.name}.json"
        req_file = f"{plant.name}_req.txt"
        write_plant(plant, out_dir / plant_file)
        _atomic_write(out_dir / req_file, DEFAULT_REQUIREMENT + "\n")
        problems.append({"plant": plant_file, "req": req_file})
    _atomic_write(out_dir / "suite.json",
                  _json_dumps({"schema_version": 1, "seed": args.seed,
                               "problems": problems}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="s2c",
        description="Certified H-infinity state-feedback synthesis toolkit. "
                    "Exit codes: 0 success/converged, 1 unrecoverable error, "
                    "2 best-design fallback (not converged).",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run the iterative design pipeline")
    p.add_argument("--plant", required=True)
    p.add_argument("--req", required=True, help="requirement text file or -")
    p.add_argument("--max-iter", type=int, default=10, dest="max_iter")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--llm", choices=("off", "on"), default="off")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_pipeline)

    b = sub.add_parser("bench", help="run the benchmark harness")
    b.add_argument("--suite", required=True)
    b.add_argument("--methods", default=",".join(BASELINE_METHODS))
    b.add_argument("--seed", type=int, default=42)
    b.add_argument("--max-iter", type=int, default=10, dest="max_iter")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", default="bench_out")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("d2c", help="convert a discrete plant to continuous")
    d.add_argument("--plant", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_d2c)

    g = sub.add_parser("gen-suite", help="generate a synthetic plant suite")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--dims", default="n:2..4,m:1..2")
    g.add_argument("--unstable-frac", type=float, default=0.0,
                   dest="unstable_frac")
    g.add_argument("--out", default="suite_out")
    g.set_defaults(func=cmd_gen_suite)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr)
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
