"""Command-line entry point: ``vecmap <subcommand> ...``.

Exit status is 0 on success, 1 on invalid input or usage, and 2 when a fit
diverges or produces non-finite values. Multi-scene work runs on
``VECMAP_THREADS`` worker processes (default 1).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

from .evaluation import DEFAULT_THRESHOLDS, map_score
from .geometry import GeometryError, rdp_simplify
from .gradcheck import run_grad_check
from .hsmr import DensitySchedule, MapElement, element_at_density
from .mapio import MapFormatError, read_map, write_map, write_text_atomic
from .refine import DivergenceError, FitConfig, progressive_fit, trajectory_csv
from .scenegen import PerceptionRange, SceneSpec, generate_scene, load_suite

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INTERNAL = 2
THREADS_ENV = "VECMAP_THREADS"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; usage problems are exit 1 here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _schedule(text: str) -> DensitySchedule:
    try:
        return DensitySchedule.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def _map_parallel(fn, items: list) -> list:
    workers = min(thread_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _map_files(path: Path) -> dict[str, Path]:
    if path.is_dir():
        return {p.name: p for p in sorted(path.glob("*.json"))}
    if path.is_file():
        return {path.name: path}
    raise UsageError(f"no such file or directory: {path}")


# -- subcommands ---------------------------------------------------------------


def cmd_generate(args) -> int:
    rng = PerceptionRange.named(args.range)
    if args.suite:
        suite = load_suite(args.suite, args.range)
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        for seed, scene in zip(suite.seeds, suite.scenes()):
            write_map(list(scene), rng, out / f"scene_{seed:04d}.json")
        print(f"wrote {len(suite.seeds)} scenes to {out}")
        return EXIT_OK
    spec = SceneSpec(
        seed=args.seed,
        road_count=args.roads,
        lanes_per_road=args.lanes,
        curvature_range=args.curvature,
        crossing_count=args.crossings,
        jitter=args.jitter,
    )
    scene = generate_scene(spec, rng)
    write_map(list(scene), rng, args.output)
    print(f"wrote {len(scene)} elements to {args.output}")
    return EXIT_OK


def _rewrite(args, transform) -> int:
    mf = read_map(args.input)
    elements = [MapElement(e.category, transform(e), e.confidence) for e in mf.elements]
    write_map(elements, mf.range, args.output)
    return EXIT_OK


def cmd_simplify(args) -> int:
    if args.epsilon < 0:
        raise UsageError("--epsilon must be non-negative")
    return _rewrite(args, lambda e: rdp_simplify(e.shape, args.epsilon))


def cmd_densify(args) -> int:
    if args.density < 2:
        raise UsageError("--density must be at least 2")
    return _rewrite(args, lambda e: element_at_density(e, args.density))


def _fit_one(job: tuple) -> tuple[list[MapElement], str]:
    gt_path, config_kwargs = job
    mf = read_map(gt_path)
    config = FitConfig(range=mf.range, **config_kwargs)
    result = progressive_fit(mf.elements, config)
    return result.final_map, trajectory_csv(result.trajectory)


def cmd_fit(args) -> int:
    config_kwargs = dict(
        schedule=args.schedule,
        n_candidates=args.n,
        steps_per_layer=args.steps,
        step_size=args.step_size,
        seed=args.seed,
        rematch_every=args.rematch_every,
    )
    FitConfig(**config_kwargs)  # validate before touching any file
    src = Path(args.input)
    inputs = _map_files(src)
    ranges = {name: read_map(p).range for name, p in inputs.items()}  # every input validated up front
    if src.is_dir():
        out_dir = Path(args.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        targets = {name: (out_dir / name, out_dir / (Path(name).stem + ".trajectory.csv")) for name in inputs}
    else:
        out = Path(args.output)
        traj = Path(args.trajectory) if args.trajectory else out.with_suffix(".trajectory.csv")
        targets = {src.name: (out, traj)}
    names = list(inputs)
    results = _map_parallel(_fit_one, [(inputs[n], config_kwargs) for n in names])
    for name, (final_map, csv_text) in zip(names, results):
        map_path, traj_path = targets[name]
        write_map(final_map, ranges[name], map_path)
        write_text_atomic(traj_path, csv_text)
        print(f"{name}: {len(final_map)} elements -> {map_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    preds = _map_files(Path(args.pred))
    gts = _map_files(Path(args.gt))
    if len(preds) == 1 and len(gts) == 1:
        pairs = [(next(iter(preds.values())), next(iter(gts.values())))]
    else:
        missing = sorted(set(gts) - set(preds))
        if missing:
            raise UsageError(f"no prediction file for ground truth {', '.join(missing)}")
        pairs = [(preds[n], gts[n]) for n in sorted(gts)]
    if not pairs:
        raise UsageError("no map files to evaluate")
    pred_scenes, gt_scenes = [], []
    for p, g in pairs:
        pred_scenes.append(read_map(p).elements)
        gt_scenes.append(read_map(g).elements)
    if any(t <= 0 for t in args.thresholds):
        raise UsageError("--thresholds must be positive")
    score = map_score(pred_scenes, gt_scenes, args.thresholds)
    sys.stdout.write(score.to_text())
    if args.csv:
        write_text_atomic(args.csv, score.to_csv())
    return EXIT_OK


def cmd_grad_check(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    report = run_grad_check(trials=args.trials, seed=args.seed)
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_INTERNAL


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vecmap", description="Hierarchical sparse map fitting and evaluation tools.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="write a synthetic ground-truth scene (or a whole suite)")
    g.add_argument("output", help="output map file, or directory with --suite")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--roads", type=int, default=1)
    g.add_argument("--lanes", type=int, default=3)
    g.add_argument("--curvature", type=_float_list, default=(-0.02, 0.02), help="min,max in 1/m")
    g.add_argument("--crossings", type=int, default=1)
    g.add_argument("--jitter", type=float, default=0.0)
    g.add_argument("--range", choices=("regular", "long"), default="regular")
    g.add_argument("--suite", help="write every scene of a bundled suite (e.g. standard)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simplify", help="RDP-simplify every element of a map")
    s.add_argument("input")
    s.add_argument("output")
    s.add_argument("--epsilon", type=float, default=0.05)
    s.set_defaults(func=cmd_simplify)

    d = sub.add_parser("densify", help="render every element at a fixed vertex count")
    d.add_argument("input")
    d.add_argument("output")
    d.add_argument("--density", type=int, required=True)
    d.set_defaults(func=cmd_densify)

    f = sub.add_parser("fit", help="progressively fit candidates to a ground-truth map")
    f.add_argument("input", help="ground-truth map file or directory")
    f.add_argument("output", help="prediction map file, or directory for directory input")
    f.add_argument("--trajectory", help="trajectory CSV path (single-file input only)")
    f.add_argument("--schedule", type=_schedule, default=DensitySchedule())
    f.add_argument("--n", type=int, default=50)
    f.add_argument("--steps", type=int, default=200)
    f.add_argument("--step-size", type=float, default=0.05)
    f.add_argument("--rematch-every", type=int, default=1)
    f.add_argument("--seed", type=int, default=0)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="Chamfer AP of predictions against ground truth")
    e.add_argument("pred", help="prediction map file or directory")
    e.add_argument("gt", help="ground-truth map file or directory")
    e.add_argument("--thresholds", type=_float_list, default=DEFAULT_THRESHOLDS)
    e.add_argument("--csv", help="also write the AP table as CSV")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("grad-check", help="finite-difference check of all loss gradients")
    c.add_argument("--trials", type=int, default=200)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_grad_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DivergenceError, FloatingPointError) as exc:
        print(f"vecmap: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (UsageError, MapFormatError, GeometryError, ValueError, KeyError, OSError) as exc:
        print(f"vecmap: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
