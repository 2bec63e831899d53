"""``fusebench`` command line.

Exit status: 0 on success, 1 on I/O failure, 2 on invalid input or
inconsistent data. Global flags (``--seed``, ``--out``, ``--verbose``) are
accepted before or after the subcommand.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Sequence

from fusebench import beauty, metrics
from fusebench.errors import ConsistencyError, DomainError, FusebenchError, ValidationError
from fusebench.fusion import FUSED_SOURCE, fuse, load_config, save_config
from fusebench.imgfeat.extract import METHODS, ExtractOptions, extract_directory
from fusebench.imgfeat.io import read_boxes
from fusebench.learners import repeated_split_eval
from fusebench.optimizer import PowellSettings, fit_fusion, write_trace
from fusebench.scores import BONAFIDE, load_manifest, load_manifest_table, load_scores

log = logging.getLogger("fusebench")

EXIT_OK, EXIT_IO, EXIT_INVALID = 0, 1, 2

LEAKAGE_NOTE = (
    "Weights fitted on a table are tuned to that table. Fit on a development "
    "set and report results with 'fusebench eval' on held-out scores; fitting "
    "and reporting on the same scores gives an optimistic D-EER."
)


class _Parser(argparse.ArgumentParser):
    """Argument errors count as invalid input (exit 2), same as argparse's default."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # Subcommand copies use SUPPRESS so they only override when actually given.
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=default(0), help="run seed (default 0)")
    p.add_argument("--out", default=default(None), help="output file or directory")
    p.add_argument("--verbose", "-v", action="store_true", default=default(False), help="log progress")
    return p


def _sources_arg(text: str) -> list[str]:
    names = [s.strip() for s in text.split(",") if s.strip()]
    if not names:
        raise argparse.ArgumentTypeError("expected a comma-separated list of source names")
    return names


def _out(args, fallback: str) -> Path:
    return Path(args.out if args.out is not None else fallback)


# -- subcommands -------------------------------------------------------------

def cmd_extract(args) -> int:
    if args.crop and args.boxes is None:
        raise ValidationError("--crop needs --boxes <csv>")
    boxes = None
    if args.boxes is not None:
        if not Path(args.boxes).is_file():
            raise ValidationError(f"bounding-box file not found: {args.boxes}")
        boxes = read_boxes(args.boxes)
    if not Path(args.images).is_dir():
        raise ValidationError(f"image directory not found: {args.images}")
    options = ExtractOptions(method=args.method, margin=args.margin)
    manifest = extract_directory(args.images, _out(args, "features"), options, boxes)
    print(manifest)
    return EXIT_OK


def cmd_fit(args) -> int:
    manifest = load_manifest(args.manifest)
    sources = args.sources or list(manifest)
    table = load_manifest_table(manifest, sources)
    ranges = [manifest[s].declared for s in sources if manifest[s].declared is not None]
    settings = PowellSettings(max_iterations=args.max_iterations,
                              objective_tolerance=args.objective_tolerance)
    config, trace = fit_fusion(table, sources, settings, source_ranges=ranges)
    out = _out(args, "fusion.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_config(config, out)
    trace_path = Path(args.trace) if args.trace else out.with_name("trace.csv")
    write_trace(trace, trace_path, settings, sources)
    weights = ", ".join(f"{s}={w:.6g}" for s, w in zip(config.sources, config.weights))
    print(f"average D-EER {trace.final_objective:.6f} after {len(trace.iterations) - 1} iteration(s); {weights}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config = load_config(args.config)
    manifest = load_manifest(args.manifest)
    missing = [s for s in config.sources if s not in manifest]
    if missing:
        raise ConsistencyError(f"config source(s) missing from manifest: {', '.join(missing)}")
    table = fuse(load_manifest_table(manifest, config.sources), config, renorm="stored")
    per_filter = metrics.per_filter_deer(table, FUSED_SOURCE)
    avg = metrics.average_deer(table, FUSED_SOURCE)
    out = _out(args, "eval_out")
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "deer.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["filter", "deer"])
        for name, value in per_filter.items():
            w.writerow([name, repr(value)])
        w.writerow(["average", repr(avg)])
    bona = table.scores(FUSED_SOURCE, BONAFIDE)
    curves = [(f, metrics.det_curve(table.scores(FUSED_SOURCE, f), bona)) for f in per_filter]
    metrics.emit_det_plot(curves, out / "det_fused.svg")
    for name, value in per_filter.items():
        print(f"{name:<24}{100 * value:8.3f}%")
    print(f"{'average':<24}{100 * avg:8.3f}%")
    return EXIT_OK


def cmd_det(args) -> int:
    manifest = load_manifest(args.scores)
    if args.source not in manifest:
        raise ConsistencyError(f"source {args.source!r} not in manifest")
    table = load_manifest_table(manifest, [args.source])
    bona = table.scores(args.source, BONAFIDE)
    curves = [(f, metrics.det_curve(table.scores(args.source, f), bona)) for f in table.attack_filters]
    if not curves:
        raise DomainError(f"source {args.source!r} has no attack scores")
    out = _out(args, "det_out")
    out.mkdir(parents=True, exist_ok=True)
    for p in metrics.emit_det_plot(curves, out / f"det_{args.source}.svg"):
        print(p)
    return EXIT_OK


def cmd_beauty_stats(args) -> int:
    table = load_scores(args.scores, args.source)
    rows = beauty.filter_stats(table, args.source)
    out = _out(args, "beauty_out")
    out.mkdir(parents=True, exist_ok=True)
    beauty.write_stats_csv(rows, out / f"stats_{args.source}.csv")
    curves = [(f, beauty.kde(table.scores(args.source, f))) for f in table.filters]
    beauty.emit_kde_plot(curves, out / f"kde_{args.source}.svg", xlabel=f"{args.source} score")
    for r in rows:
        print(f"{r.filter:<24}mean {r.mean:.4f}  std {r.std_dev:.4f}  distance {r.distance:+.4f}")
    return EXIT_OK


def cmd_ml_fuse(args) -> int:
    manifest = load_manifest(args.manifest)
    sources = args.sources or list(manifest)
    table = load_manifest_table(manifest, sources)
    report = repeated_split_eval(table, args.learner, args.train_frac, args.repeats, args.seed,
                                 sources=sources, n_trees=args.trees,
                                 regularization=args.regularization, epochs=args.epochs)
    out = _out(args, "report.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "average_deer"])
        for i, value in enumerate(report.per_run_deer, start=1):
            w.writerow([i, repr(value)])
        w.writerow(["mean", repr(report.mean)])
        w.writerow(["std_dev", repr(report.std_dev)])
    print(f"{args.learner}: mean average D-EER {report.mean:.4f} (std {report.std_dev:.4f}) over {args.repeats} runs")
    return EXIT_OK


def cmd_demo(args) -> int:
    from fusebench.demo import run_demo

    if args.n_subjects < 2:
        raise ValidationError("--n-subjects must be at least 2")
    result = run_demo(args.seed, args.n_subjects, _out(args, "demo_out"))
    print((result.out_dir / "report.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fusebench", description="Retouching-detection score evaluation and fusion.",
                     parents=[_global_flags(suppress=False)])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_global_flags(suppress=True)]

    p = sub.add_parser("extract", parents=common, help="extract rgb/dct/srm feature tensors from images")
    p.add_argument("--images", required=True, help="directory of PNG/PPM images")
    p.add_argument("--boxes", help="bounding-box CSV (sample_id,x,y,w,h); implies cropping")
    p.add_argument("--crop", action="store_true", help="crop to the face box (requires --boxes)")
    p.add_argument("--method", choices=METHODS, default="srm")
    p.add_argument("--margin", type=int, default=0, help="pixels added around the face box")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fit", parents=common, help="fit fusion weights by Powell's method",
                       description="Fit weighted-sum fusion weights on a score manifest. " + LEAKAGE_NOTE)
    p.add_argument("--manifest", required=True, help="score manifest JSON")
    p.add_argument("--sources", type=_sources_arg, help="comma-separated sources (default: all)")
    p.add_argument("--trace", help="trace CSV path (default: trace.csv next to --out)")
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--objective-tolerance", type=float, default=1e-6)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", parents=common, help="apply a fitted fusion config to scores")
    p.add_argument("--config", required=True, help="fusion.json written by 'fit'")
    p.add_argument("--manifest", required=True, help="score manifest JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("det", parents=common, help="DET plot and D-EER per filter for one source")
    p.add_argument("--scores", required=True, help="score manifest JSON")
    p.add_argument("--source", required=True)
    p.set_defaults(func=cmd_det)

    p = sub.add_parser("beauty-stats", parents=common, help="per-filter beauty score statistics and KDE")
    p.add_argument("--scores", required=True, help="score CSV")
    p.add_argument("--source", required=True, help="name of the score source")
    p.set_defaults(func=cmd_beauty_stats)

    p = sub.add_parser("ml-fuse", parents=common, help="learned fusion over repeated random splits")
    p.add_argument("--manifest", required=True, help="score manifest JSON")
    p.add_argument("--sources", type=_sources_arg, help="comma-separated sources (default: all)")
    p.add_argument("--learner", choices=("forest", "svc"), default="forest")
    p.add_argument("--train-frac", type=float, default=0.7)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--trees", type=int, default=100, help="forest size")
    p.add_argument("--regularization", type=float, default=1e-3, help="svc regularisation strength")
    p.add_argument("--epochs", type=int, default=20, help="svc training epochs")
    p.set_defaults(func=cmd_ml_fuse)

    p = sub.add_parser("demo", parents=common, help="end-to-end run on synthetic faces")
    p.add_argument("--n-subjects", type=int, default=50)
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FusebenchError, ValueError) as exc:
        print(f"fusebench: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"fusebench: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
