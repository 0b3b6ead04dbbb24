"""Command-line front end.

Exit codes: 0 success, 2 bad arguments or configuration, 3 I/O failure,
4 extraction or evaluation failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from celledproj import features as feat
from celledproj import harness
from celledproj.errors import CelledProjError, ConfigError, InputError
from celledproj.imagecore import (
    LabeledDataset,
    idx_paths,
    load_dataset,
    load_pbm,
    save_idx_pair,
    save_manifest,
)

log = logging.getLogger("celledproj")

EXIT_OK, EXIT_ARGS, EXIT_IO, EXIT_EXTRACT = 0, 2, 3, 4


def _read_images(path: str, size: int):
    p = Path(path)
    if p.suffix == ".pbm":
        if not p.exists():
            raise FileNotFoundError(path)
        data = LabeledDataset([(load_pbm(p), 0)], name=p.name)
    else:
        data = load_dataset(p)
    return data.normalized(size, size) if size else data


def cmd_extract(args) -> int:
    params = feat.canonical_params(args.feature, feat.parse_params(args.params))
    data = _read_images(args.input, args.normalize)
    records = [(args.feature, params, feat.extract(img, args.feature, params)) for img in data.images]
    feat.write_vectors(args.out, records)
    print(f"wrote {len(records)} {args.feature} vector(s) of length "
          f"{len(records[0][2]) if records else 0} to {args.out}")
    return EXIT_OK


def cmd_grid(args) -> int:
    spec = harness.load_spec(args.spec) if args.spec else harness.default_spec()
    if args.seed is not None:
        spec.seed = args.seed
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = harness.run_grid(spec, jobs=args.jobs, cache_dir=out / "cache", templates=args.templates)
    ext = "md" if args.format == "md" else "csv"
    text = harness.emit_report(report, args.format, timings=args.timings, spec=spec)
    (out / f"report.{ext}").write_text(text, encoding="utf-8")
    trials = harness.ExperimentReport(cells=report.trials, metadata=report.metadata, seed=report.seed)
    (out / "trials.csv").write_text(harness.emit_report(trials, "csv", timings=args.timings), encoding="utf-8")
    if not args.no_plot:
        from celledproj.plotting import plot_grid

        plot_grid(report, out / "report.png")
    print(harness.emit_report(report, "md", spec=spec), end="")
    for msg in harness.ordering_warnings(report):
        log.warning(msg)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = harness.SynthConfig(seed=args.seed, samples_per_class=args.per_class, rotation=args.rotation,
                              shear=args.shear, noise=args.noise, thickness_steps=args.thickness,
                              size=args.size)
    data = harness.synth_generate(harness.load_templates(args.templates), cfg)
    if args.out.endswith(".idx"):
        images, labels = idx_paths(args.out)
        Path(images).parent.mkdir(parents=True, exist_ok=True)
        save_idx_pair(data, images, labels)
        print(f"wrote {len(data)} samples to {images} / {labels}")
    else:
        manifest = save_manifest(data, args.out)
        print(f"wrote {len(data)} samples to {manifest}")
    return EXIT_OK


def cmd_eval(args) -> int:
    train = _read_images(args.train, args.size)
    test = _read_images(args.test, args.size)
    params = feat.canonical_params(args.feature, feat.parse_params(args.params))
    value = args.value if args.value is not None else {"knn": 3, "pnn": 1.0, "fbpn": 30}[args.classifier]
    fbpn = harness.clf.FbpnConfig(seed=args.seed)
    cell = harness.evaluate(train, test, args.feature, params, args.classifier, value, fbpn)
    print(f"{cell.feature} {cell.feature_params} {cell.classifier} {cell.classifier_params} "
          f"accuracy {cell.accuracy:.2f}")
    if args.out:
        report = harness.ExperimentReport(cells=[cell], seed=args.seed)
        Path(args.out).write_text(harness.emit_report(report, "csv"), encoding="utf-8")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.input:
        images = _read_images(args.input, args.size).images
    else:
        cfg = harness.SynthConfig(seed=0, samples_per_class=20, size=args.size or 16)
        images = harness.synth_generate(harness.load_templates(), cfg).images
    rows = harness.bench_extractors(images, args.reps)
    table = harness.format_bench(rows)
    print(f"median of {args.reps} run(s) over {len(images)} image(s)")
    print(table, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.csv").write_text(table, encoding="utf-8")
        if rows:
            from celledproj.plotting import plot_bench

            plot_bench(rows, out / "bench.png")
    return EXIT_OK


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="celledproj", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", help="compute feature vectors for an image or dataset")
    e.add_argument("--feature", required=True, choices=feat.FEATURE_NAMES)
    e.add_argument("--params", default="", help="e.g. kh=4,kv=4 or rows=4,cols=4")
    e.add_argument("--in", dest="input", required=True, help="PBM image, dataset directory, manifest or IDX images file")
    e.add_argument("--out", required=True)
    e.add_argument("--normalize", type=int, default=0, metavar="N", help="normalize to NxN first (0 = off)")
    e.set_defaults(func=cmd_extract)

    g = sub.add_parser("grid", help="run the feature x classifier grid")
    g.add_argument("--spec", help="spec file; the full default grid when omitted")
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=("csv", "md"), default="csv")
    g.add_argument("--jobs", type=_positive, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--templates", help="directory with digit0.pbm .. digit9.pbm")
    g.add_argument("--timings", action="store_true", help="fill the seconds column")
    g.add_argument("--no-plot", action="store_true")
    g.set_defaults(func=cmd_grid)

    s = sub.add_parser("synth", help="generate synthetic digit samples")
    s.add_argument("--templates")
    s.add_argument("--per-class", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="directory for PBM + manifest, or NAME.idx for an IDX pair")
    s.add_argument("--rotation", type=float, default=15.0)
    s.add_argument("--shear", type=float, default=0.15)
    s.add_argument("--noise", type=float, default=0.03)
    s.add_argument("--thickness", type=int, default=0)
    s.add_argument("--size", type=int, default=16)
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("eval", help="train on one dataset and score another")
    v.add_argument("--train", required=True)
    v.add_argument("--test", required=True)
    v.add_argument("--feature", required=True, choices=feat.FEATURE_NAMES)
    v.add_argument("--params", default="")
    v.add_argument("--classifier", required=True, choices=("knn", "pnn", "fbpn"))
    v.add_argument("--value", type=float, help="k, spread or hidden neuron count")
    v.add_argument("--size", type=int, default=16, help="normalization size (0 = off)")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out")
    v.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="time the extractors and KNN queries")
    b.add_argument("--in", dest="input")
    b.add_argument("--reps", type=_positive, default=3)
    b.add_argument("--size", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if getattr(args, "value", None) is not None and args.classifier in ("knn", "fbpn"):
        if not float(args.value).is_integer():
            print(f"error: --value must be an integer for {args.classifier}", file=sys.stderr)
            return EXIT_ARGS
        args.value = int(args.value)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (CelledProjError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXTRACT


if __name__ == "__main__":
    sys.exit(main())
