"""``gkcm`` command line: solve, build, simulate, bench and eval.

Exit codes: 0 success, 1 usage error, 2 input-format error, 3 infeasible
request or guard refusal.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .consistency import ConsistencyGraphBuilder, FamilyMismatch
from .formats import (FormatError, MeasurementFile, read_hypergraph, read_measurements,
                      read_selection, read_truth, write_hypergraph, write_measurements,
                      write_truth)
from .maxclique import SolverError, SolverOptions, max_clique_exact, max_clique_incremental, solve
from .metrics.families import (pose_family, range_family, range_pcm_family, scalar_family,
                               visual_family)
from .sim import WorldGenerationError, WorldSpec, evaluate_selection, gen_planted_clique_graph, generate

log = logging.getLogger("gkcm")

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_REFUSED = 0, 1, 2, 3
THREADS_ENV = "GKCM_THREADS"

METRIC_KIND = {"scalar": "scalar", "pose": "relpose", "range": "range", "range-pcm": "range",
               "visual": "bearing_rot"}
DEFAULT_METRIC = {"scalar": "scalar", "relpose": "pose", "range": "range", "bearing_rot": "visual"}
WORLD_METRIC = {"one_d": "scalar", "range2d": "range", "visual3d": "visual"}


class UsageError(Exception):
    pass


class Refused(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    input: Optional[str] = None
    output: Optional[str] = None
    metric: str = "auto"
    k: Optional[int] = None
    confidence: float = 0.95
    hierarchical: bool = False
    incremental: bool = False
    solver: str = "heuristic"
    threads: int = 1
    seed: int = 0

    def validate(self) -> "RunConfig":
        if not 0.0 < self.confidence < 1.0:
            raise UsageError(f"confidence must be in (0, 1), got {self.confidence}")
        if self.threads < 1:
            raise UsageError("threads must be >= 1")
        if self.k is not None and self.k < 2:
            raise UsageError("k must be >= 2")
        if self.metric != "auto" and self.metric not in METRIC_KIND:
            raise UsageError(f"unknown metric {self.metric!r}")
        return self


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be >= 1")
    return n


def _threads(args) -> int:
    return args.threads if args.threads is not None else default_threads()


def _emit(record: dict) -> None:
    print(json.dumps(record, sort_keys=True))


def _parse_range(spec: str) -> list[int]:
    """``30:110:10`` (inclusive stop) or a comma list."""
    try:
        if ":" in spec:
            parts = [int(x) for x in spec.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            if step < 1:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(x) for x in spec.split(",") if x]
    except (ValueError, IndexError):
        raise UsageError(f"bad size list {spec!r}") from None


# -- families --------------------------------------------------------------------------


def make_family(metric: str, mf: MeasurementFile, confidence: float):
    if METRIC_KIND[metric] != mf.kind:
        raise FamilyMismatch(f"metric {metric!r} needs {METRIC_KIND[metric]} measurements, "
                             f"file holds {mf.kind}")
    if metric == "scalar":
        return scalar_family(confidence)
    ctx = mf.context()
    if metric == "pose":
        return pose_family(ctx[0], ctx[1], confidence)
    if metric == "range":
        return range_family(ctx, confidence)
    if metric == "range-pcm":
        return range_pcm_family(ctx, confidence)
    return visual_family(ctx[0], ctx[1], confidence)


def build_from_file(mf: MeasurementFile, cfg: RunConfig):
    metric = DEFAULT_METRIC[mf.kind] if cfg.metric == "auto" else cfg.metric
    family = make_family(metric, mf, cfg.confidence)
    if cfg.k is not None and cfg.k != family.k:
        raise FamilyMismatch(f"metric {metric!r} checks groups of {family.k}, not k={cfg.k}")
    if cfg.incremental and mf.kind == "range":
        poses = [m.pose_index for m in mf.measurements]
        if any(b < a for a, b in zip(poses, poses[1:])):
            raise UsageError("incremental build needs measurements ordered by pose index")
    builder = ConsistencyGraphBuilder(family, cfg.hierarchical, cfg.threads)
    if cfg.incremental:
        for m in mf.measurements:
            builder.add(m)
    else:
        builder.extend(mf.measurements)
    header = [f"metric {metric}", f"k {family.k}", f"confidence {cfg.confidence:g}"]
    header += [f"gamma order {j} = {family.thresholds[j]:.10g}" for j in family.orders]
    return builder, metric, header


# -- commands ------------------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = RunConfig("solve", input=args.graph, solver=args.solver,
                    threads=_threads(args)).validate()
    g = read_hypergraph(cfg.input)
    opts = SolverOptions(mode="exact" if cfg.solver == "exact" else "heuristic",
                         num_threads=cfg.threads, deterministic=args.deterministic)
    t0 = time.perf_counter()
    try:
        res = solve(g, cfg.solver, opts)
    except SolverError as e:
        raise Refused(str(e)) from None
    _emit({"clique": [v + 1 for v in res.vertices], "size": res.size, "valid": res.is_valid_clique,
           "solver": res.solver, "wall_time_ms": 1e3 * (time.perf_counter() - t0),
           "nodes_expanded": res.stats.get("nodes_expanded", 0)})
    return EXIT_OK


def cmd_build(args) -> int:
    cfg = RunConfig("build", input=args.measurements, output=args.output, metric=args.metric,
                    k=args.k, confidence=args.confidence, hierarchical=args.hierarchical,
                    incremental=args.incremental, threads=_threads(args)).validate()
    mf = read_measurements(cfg.input)
    t0 = time.perf_counter()
    builder, metric, header = build_from_file(mf, cfg)
    elapsed = time.perf_counter() - t0
    write_hypergraph(builder.graph, cfg.output, header)
    m, k = len(mf.measurements), builder.family.k
    _emit({"graph": cfg.output, "metric": metric, "n": builder.graph.n, "edges": builder.graph.num_edges,
           "checks": {str(j): c for j, c in builder.check_counts.items()},
           "total_checks": builder.total_checks, "budget": math.comb(m, k),
           "wall_time_ms": 1e3 * elapsed})
    return EXIT_OK


def _world_spec(args) -> WorldSpec:
    kind = args.kind
    over = {"seed": args.seed}
    if kind == "range2d":
        if args.poses is not None:
            over["n_poses"] = args.poses
        if args.outliers is not None:
            over["n_clustered"] = args.outliers // 2
            over["n_random"] = args.outliers - args.outliers // 2
        if args.beacons is not None:
            over["n_beacons"] = args.beacons
        if args.trajectory is not None:
            over["trajectory"] = args.trajectory
    elif kind == "visual3d":
        if args.poses is not None:
            over["n_poses"] = args.poses
        if args.measurements is not None:
            over["n_measurements"] = args.measurements
        if args.inlier_fraction is not None:
            over["inlier_fraction"] = args.inlier_fraction
    elif kind == "one_d":
        if args.inliers is not None:
            over["n_inliers"] = args.inliers
        if args.outliers is not None:
            over["n_random"] = args.outliers
    try:
        return WorldSpec.for_kind(kind, **over)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_simulate(args) -> int:
    prefix = Path(args.out)
    if args.kind == "planted":
        if args.n is None or args.k is None or args.clique is None or args.density is None:
            raise UsageError("planted graphs need --n, --k, --clique and --density")
        try:
            g, planted = gen_planted_clique_graph(args.n, args.k, args.clique, args.density, args.seed)
        except ValueError as e:
            raise Refused(str(e)) from None
        graph_path = f"{prefix}.hcq"
        write_hypergraph(g, graph_path, [f"planted clique size {args.clique} density {args.density:g}"
                                         f" seed {args.seed}"])
        labels = np.zeros(args.n, dtype=bool)
        labels[planted] = True
        write_truth(f"{prefix}.truth.json", labels, {"planted": [v + 1 for v in planted]},
                    {"kind": "planted", "n": args.n, "k": args.k, "clique": args.clique,
                     "density": args.density, "seed": args.seed})
        _emit({"graph": graph_path, "truth": f"{prefix}.truth.json", "n": g.n,
               "edges": g.num_edges})
        return EXIT_OK
    spec = _world_spec(args)
    try:
        world = generate(spec)
    except WorldGenerationError as e:
        raise Refused(str(e)) from None
    except ValueError as e:
        raise Refused(f"infeasible world: {e}") from None
    if spec.kind == "range2d":
        chains = {0: world.context.chain}
    elif spec.kind == "visual3d":
        chains = {0: world.context[0], 1: world.context[1]}
    else:
        chains = {}
    meas_path = f"{prefix}.jsonl"
    write_measurements(meas_path, world.measurements, chains)
    write_truth(f"{prefix}.truth.json", world.labels, world.ground_truth, spec.to_dict())
    out = {"measurements": meas_path, "truth": f"{prefix}.truth.json",
           "count": len(world.measurements), "inliers": int(world.labels.sum())}
    if args.graph:
        cfg = RunConfig("build", metric=WORLD_METRIC[spec.kind], confidence=args.confidence,
                        hierarchical=True, threads=_threads(args)).validate()
        builder, _, header = build_from_file(read_measurements(meas_path), cfg)
        write_hypergraph(builder.graph, f"{prefix}.hcq", header)
        out["graph"] = f"{prefix}.hcq"
    _emit(out)
    return EXIT_OK


def _bench_hierarchy(m: int, seed: int, confidence: float) -> dict[str, float]:
    n_bad = int(round(0.8 * m))
    w = generate(WorldSpec.for_kind("range2d", n_poses=m, n_clustered=n_bad // 2,
                                    n_random=n_bad - n_bad // 2, seed=seed))
    out = {}
    for mode, orders in (("g4", (4,)), ("g3+g4", (3, 4)), ("g2+g3+g4", (2, 3, 4))):
        fam = range_family(w.context, confidence, orders=orders)
        t0 = time.perf_counter()
        ConsistencyGraphBuilder(fam, hierarchical=len(orders) > 1).extend(w.measurements)
        out[mode] = time.perf_counter() - t0
    return out


def _bench_incremental(m: int, seed: int, confidence: float) -> dict[str, float]:
    """One update on arrival of the last measurement: checks plus clique search."""
    n_bad = int(round(0.8 * m))
    w = generate(WorldSpec.for_kind("range2d", n_poses=m, n_clustered=n_bad // 2,
                                    n_random=n_bad - n_bad // 2, seed=seed))
    fam = range_family(w.context, confidence)
    b = ConsistencyGraphBuilder(fam, hierarchical=True)
    for z in w.measurements[:-1]:
        b.add(z)
    prev = max_clique_exact(b.graph)
    t0 = time.perf_counter()
    b.add(w.measurements[-1])
    max_clique_incremental(b.graph, prev, b.graph.n - 1, SolverOptions(mode="exact"))
    t_inc = time.perf_counter() - t0
    t0 = time.perf_counter()
    batch = ConsistencyGraphBuilder(fam, hierarchical=True)
    batch.extend(w.measurements)
    max_clique_exact(batch.graph)
    return {"batch": time.perf_counter() - t0, "incremental": t_inc}


def cmd_bench(args) -> int:
    if args.repeats < 1:
        raise UsageError("--repeats must be >= 1")
    sizes = _parse_range(args.sizes)
    if not sizes or min(sizes) < 5:
        raise UsageError("sizes must be >= 5")
    run = _bench_hierarchy if args.sweep == "hierarchy" else _bench_incremental
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["config", "mode", "mean_ms", "std_ms"])
        for m in sizes:
            samples: dict[str, list[float]] = {}
            for r in range(args.repeats):
                for mode, t in run(m, args.seed + r, args.confidence).items():
                    samples.setdefault(mode, []).append(1e3 * t)
            for mode, ts in samples.items():
                w.writerow([f"m={m}", mode, f"{np.mean(ts):.3f}", f"{np.std(ts):.3f}"])
            out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_eval(args) -> int:
    truth = read_truth(args.truth)
    sel = read_selection(args.selection)
    labels = np.asarray(truth["labels"], dtype=bool)
    bad = [v + 1 for v in sel if v >= len(labels)]
    if bad:
        raise FormatError(f"selection index {bad[0]} out of range 1..{len(labels)}", None,
                          str(args.selection))
    gt = truth.get("ground_truth", {})
    if "chi2" in gt:
        gt = dict(gt, chi2=[np.inf if c is None else c for c in gt["chi2"]])
    rep = evaluate_selection(sel, labels, gt)
    _emit(rep.to_dict())
    return EXIT_OK


# -- entry point ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gkcm", description="Group-k consistent measurement selection.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="maximum clique of a hypergraph file")
    s.add_argument("graph")
    s.add_argument("--solver", choices=["exact", "heuristic", "bruteforce", "kcore"], default="heuristic")
    s.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    s.add_argument("--deterministic", action="store_true",
                   help="merge per-thread results deterministically")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("build", help="consistency hypergraph from a measurement file")
    b.add_argument("measurements")
    b.add_argument("-o", "--output", required=True)
    b.add_argument("--metric", default="auto", choices=["auto", *METRIC_KIND])
    b.add_argument("--k", type=int, default=None)
    b.add_argument("--confidence", type=float, default=0.95)
    b.add_argument("--hierarchical", action="store_true")
    b.add_argument("--incremental", action="store_true")
    b.add_argument("--threads", type=int, default=None)
    b.set_defaults(func=cmd_build)

    m = sub.add_parser("simulate", help="write a synthetic world or planted-clique graph")
    m.add_argument("--kind", required=True, choices=["one_d", "range2d", "visual3d", "planted"])
    m.add_argument("--out", required=True, help="output path prefix")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--poses", type=int)
    m.add_argument("--outliers", type=int)
    m.add_argument("--beacons", type=int)
    m.add_argument("--trajectory", choices=["manhattan", "circle", "line"])
    m.add_argument("--measurements", type=int)
    m.add_argument("--inlier-fraction", type=float)
    m.add_argument("--inliers", type=int)
    m.add_argument("--n", type=int)
    m.add_argument("--k", type=int)
    m.add_argument("--clique", type=int)
    m.add_argument("--density", type=float)
    m.add_argument("--graph", action="store_true", help="also build the consistency graph")
    m.add_argument("--confidence", type=float, default=0.95)
    m.add_argument("--threads", type=int, default=None)
    m.set_defaults(func=cmd_simulate)

    c = sub.add_parser("bench", help="timing sweeps written as CSV")
    c.add_argument("--sweep", choices=["hierarchy", "incremental"], default="hierarchy")
    c.add_argument("--sizes", default="30:110:10", help="start:stop:step (inclusive) or a comma list")
    c.add_argument("--repeats", type=int, default=3)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--confidence", type=float, default=0.95)
    c.add_argument("--out", default=None, help="CSV path (default: standard output)")
    c.set_defaults(func=cmd_bench)

    e = sub.add_parser("eval", help="TPR/FPR of a selection against a truth file")
    e.add_argument("selection", help="solver result record or list of 1-based indices")
    e.add_argument("--truth", required=True)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:  # --help or a usage error already printed
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"gkcm: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, FamilyMismatch) as e:
        print(f"gkcm: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as e:
        print(f"gkcm: {e.filename or ''}: {e.strerror or e}", file=sys.stderr)
        return EXIT_FORMAT
    except Refused as e:
        print(f"gkcm: refused: {e}", file=sys.stderr)
        return EXIT_REFUSED


if __name__ == "__main__":
    sys.exit(main())
