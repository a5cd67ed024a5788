"""Command-line front end: generate, preprocess, run, report, exemplars.

Exit codes: 0 success, 2 config/schema error, 3 I/O error, 4 numeric
failure (training divergence).
"""

import argparse
import copy
import csv
import json
import os
import sys

import numpy as np

from . import dataset, errors, imageproc, market, nn, pipeline

SCHEMA_VERSION = 1

DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "seed": 7,
    "market": {
        "n_listings": 2000,
        "gamma_layout": 0.30,
        "noise_sigma": 0.08,
        "n_districts": 12,
        "n_controls": 30,
        "raster_size": 64,
        "gamma_small_area_mult": 0.0,
        "gamma_old_building_mult": 0.0,
    },
    "image": {"side": 64},
    "stage1": {"target": "rpms"},
    "stage2": {
        "lr": 1e-3,
        "epochs": 40,
        "batch_size": 64,
        "patience": 6,
        "val_fraction": 0.2,
        "p_mirror": 0.5,
        "max_angle": 0.0,
        "optimizer": "nadam",
    },
    "benchmark": {"models": ["ols"], "folds": 5, "subsets": False},
    "report": {"exemplar_k": 10},
}


def _merge_config(defaults, overrides, path="config"):
    """Merge a user config over the defaults, rejecting unknown keys."""
    out = copy.deepcopy(defaults)
    for key, val in overrides.items():
        if key not in defaults:
            raise errors.ConfigError(f"unknown key {path}.{key}")
        if isinstance(defaults[key], dict):
            if not isinstance(val, dict):
                raise errors.ConfigError(f"{path}.{key} must be an object")
            out[key] = _merge_config(defaults[key], val, f"{path}.{key}")
        else:
            out[key] = val
    return out


def load_config(path):
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise errors.ConfigError(f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise errors.ConfigError(
            f"malformed JSON config at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    if not isinstance(doc, dict):
        raise errors.ConfigError("config root must be a JSON object")
    merged = _merge_config(DEFAULT_CONFIG, doc)
    if merged["schema_version"] != SCHEMA_VERSION:
        raise errors.ConfigError(
            f"unsupported schema_version {merged['schema_version']}")
    return merged


def _prepare_out_dir(out_dir, force):
    if os.path.isdir(out_dir) and os.listdir(out_dir) and not force:
        raise OSError(f"output directory {out_dir} is not empty (use --force)")
    os.makedirs(out_dir, exist_ok=True)


# ---------------------------------------------------------------------------
# subcommands

def cmd_generate(args):
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    _prepare_out_dir(args.out, args.force)
    mc = market.MarketConfig(seed=config["seed"], **config["market"])
    listings, geometries, qualities, truths = market.generate_market(mc)
    from .geometry import rasterize
    images = {rec.id: rasterize(geo, mc.raster_size)
              for rec, geo in zip(listings, geometries)}
    truth = None
    if args.emit_truth:
        truth = {rec.id: (qual.q, resid)
                 for rec, qual, resid in zip(listings, qualities, truths)}
    dataset.write_dataset(args.out, listings, images, truth)
    print(f"generated n={len(listings)} seed={config['seed']} "
          f"truth={'yes' if truth is not None else 'no'} -> {args.out}")
    return 0


def cmd_preprocess(args):
    listings, images, _ = dataset.read_dataset(args.data)
    _prepare_out_dir(args.out, args.force)
    for rec in listings:
        img = imageproc.letterbox_resize(
            imageproc.crop_to_content(images[rec.id]), args.size)
        imageproc.write_pgm(os.path.join(args.out, f"{rec.id}.pgm"), img)
    print(f"preprocessed {len(listings)} plans to {args.size}px -> {args.out}")
    return 0


def _study_config(config, args):
    train = nn.TrainConfig(
        lr=config["stage2"]["lr"],
        epochs=config["stage2"]["epochs"],
        batch_size=config["stage2"]["batch_size"],
        patience=config["stage2"]["patience"],
        val_fraction=config["stage2"]["val_fraction"],
        p_mirror=config["stage2"]["p_mirror"],
        max_angle=config["stage2"]["max_angle"],
        optimizer=config["stage2"]["optimizer"],
        cnn_spec=nn.CnnSpec(input_side=config["image"]["side"]),
    )
    models = args.models.split(",") if args.models else config["benchmark"]["models"]
    for m in models:
        if m not in ("ols", "gbt", "mlp"):
            raise errors.ConfigError(f"unknown benchmark model {m!r}")
    return pipeline.StudyConfig(
        target=args.target or config["stage1"]["target"],
        k=args.folds or config["benchmark"]["folds"],
        seed=config["seed"],
        image_side=config["image"]["side"],
        models=tuple(models),
        train=train,
        exemplar_k=config["report"]["exemplar_k"],
        run_subsets=config["benchmark"]["subsets"],
    )


def cmd_run(args):
    config = load_config(args.config)
    if args.seed is not None:
        config["seed"] = args.seed
    study = _study_config(config, args)
    listings, images, _ = dataset.read_dataset(args.data)
    _prepare_out_dir(args.out, args.force)
    report, side = pipeline.run_study(listings, images, study)
    report["config_echo"] = config
    report["deterministic"] = bool(args.deterministic)
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
    sentiment = side["sentiment"]
    with open(os.path.join(args.out, "sentiment.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "score", "fold"])
        for rec in listings:
            w.writerow([rec.id, f"{sentiment.scores[rec.id]:.9g}",
                        sentiment.fold[rec.id]])
    folds = side["folds"]
    for model_name, res in side["benchmark_raw"].items():
        for label in ("with", "without"):
            path = os.path.join(args.out, f"errors_{model_name}_{label}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["id", "fold", "sq_err", "abs_err"])
                for pos, rec in enumerate(listings):
                    w.writerow([rec.id, folds.assignment[rec.id],
                                f"{res[label]['sq_errors'][pos]:.9g}",
                                f"{res[label]['abs_errors'][pos]:.9g}"])
    print(f"study complete: target={study.target} n={report['n']} "
          f"sentiment_coef={report['sentiment_coef']:.4f} "
          f"p={report['sentiment_p']:.2e} -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# reporting (hand-written SVG primitives)

def _svg_header(width, height):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">\n'
            f'<rect width="{width}" height="{height}" fill="white"/>\n')


def _coefficients_svg(report):
    rows = [r for r in report["stage3"]["coefficients"]
            if r["name"] != "intercept"
            and not r["name"].startswith(("district_", "ctrl_"))]
    width, row_h, left = 640, 28, 220
    height = row_h * len(rows) + 60
    plot_w = width - left - 30
    lo = min(r["estimate"] - 1.96 * r["se"] for r in rows)
    hi = max(r["estimate"] + 1.96 * r["se"] for r in rows)
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    span = (hi - lo) or 1.0

    def sx(v):
        return left + (v - lo) / span * plot_w

    parts = [_svg_header(width, height)]
    parts.append(f'<line x1="{sx(0):.1f}" y1="20" x2="{sx(0):.1f}" '
                 f'y2="{height - 40}" stroke="#999" stroke-dasharray="4 3"/>\n')
    for i, r in enumerate(rows):
        cy = 30 + i * row_h
        x0 = sx(r["estimate"] - 1.96 * r["se"])
        x1 = sx(r["estimate"] + 1.96 * r["se"])
        parts.append(f'<g class="coef-row">'
                     f'<text x="10" y="{cy + 4}" font-size="12">{r["name"]}</text>'
                     f'<line x1="{x0:.1f}" y1="{cy}" x2="{x1:.1f}" y2="{cy}" '
                     f'stroke="black"/>'
                     f'<circle cx="{sx(r["estimate"]):.1f}" cy="{cy}" r="3.5" '
                     f'fill="black"/></g>\n')
    parts.append(f'<text x="{left}" y="{height - 12}" font-size="11">'
                 f'standardized estimate with 95% CI</text>\n</svg>\n')
    return "".join(parts)


def _ccdf_svg(points, label):
    width, height, pad = 480, 320, 45
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    x_lo, x_hi = min(xs), max(xs)
    span = (x_hi - x_lo) or 1.0
    coords = []
    for x, y in points:
        px = pad + (x - x_lo) / span * (width - 2 * pad)
        py = height - pad - y * (height - 2 * pad)
        coords.append(f"{px:.1f},{py:.1f}")
    parts = [_svg_header(width, height)]
    parts.append(f'<polyline points="{" ".join(coords)}" fill="none" '
                 f'stroke="black" stroke-width="1.5"/>\n')
    parts.append(f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
                 f'y2="{height - pad}" stroke="#333"/>\n')
    parts.append(f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
                 f'stroke="#333"/>\n')
    parts.append(f'<text x="{width / 2 - 20}" y="{height - 10}" '
                 f'font-size="12">{label}</text>\n')
    parts.append(f'<text x="8" y="{height / 2}" font-size="12" '
                 f'transform="rotate(-90 12 {height / 2})">P(X &gt; x)</text>\n'
                 f'</svg>\n')
    return "".join(parts)


def cmd_report(args):
    reports = []
    for path in args.reports:
        try:
            with open(path) as fh:
                reports.append(json.load(fh))
        except OSError:
            raise
        except json.JSONDecodeError as exc:
            raise errors.SchemaMismatch(f"malformed report {path}: {exc}")
    for rep in reports:
        for key in ("stage3", "benchmark", "ccdf", "exemplars", "target"):
            if key not in rep:
                raise errors.SchemaMismatch(f"report missing key {key!r}")
    _prepare_out_dir(args.out, args.force)
    first = reports[0]
    with open(os.path.join(args.out, "coefficients.svg"), "w") as fh:
        fh.write(_coefficients_svg(first))
    for target in ("rent", "rpms"):
        with open(os.path.join(args.out, f"ccdf_{target}.svg"), "w") as fh:
            fh.write(_ccdf_svg(first["ccdf"][target], target))
    with open(os.path.join(args.out, "results.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "floor_plans", "target", "mse", "mae"])
        for rep in reports:
            for model_name, res in sorted(rep["benchmark"].items()):
                for label, flag in (("without", "no"), ("with", "yes")):
                    w.writerow([model_name, flag, rep["target"],
                                f"{res[label]['mse']:.9g}",
                                f"{res[label]['mae']:.9g}"])
    with open(os.path.join(args.out, "exemplars.txt"), "w") as fh:
        fh.write(f"target: {first['target']}\n")
        fh.write("top positive price adjustments (listing ids): "
                 + ", ".join(map(str, first["exemplars"]["positive"])) + "\n")
        fh.write("top negative price adjustments (listing ids): "
                 + ", ".join(map(str, first["exemplars"]["negative"])) + "\n")
    print(f"report artifacts -> {args.out}")
    return 0


def cmd_exemplars(args):
    with open(args.report) as fh:
        rep = json.load(fh)
    if "exemplars" not in rep:
        raise errors.SchemaMismatch("report has no exemplars block")
    print("positive:", ", ".join(map(str, rep["exemplars"]["positive"])))
    print("negative:", ", ".join(map(str, rep["exemplars"]["negative"])))
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="hfl",
        description="Floor-plan hedonic study: synthetic market, residual CNN, "
                    "sentiment-augmented regression")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--force", action="store_true",
                        help="allow writing into a non-empty output directory")

    g = sub.add_parser("generate", parents=[common],
                       help="generate a synthetic market dataset")
    g.add_argument("--config", default=None)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--emit-truth", action="store_true")
    g.set_defaults(fn=cmd_generate)

    p = sub.add_parser("preprocess", parents=[common],
                       help="batch crop/letterbox plans into a sized cache")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=64)
    p.set_defaults(fn=cmd_preprocess)

    r = sub.add_parser("run", parents=[common], help="run the full study")
    r.add_argument("--config", default=None)
    r.add_argument("--data", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--target", choices=["rent", "rpms"], default=None)
    r.add_argument("--folds", type=int, default=None)
    r.add_argument("--models", default=None, help="comma list: ols,gbt,mlp")
    r.add_argument("--deterministic", action="store_true",
                   help="force sequential execution for bit-exact reports")
    r.add_argument("--threads", type=int,
                   default=int(os.environ.get("HFL_THREADS", "0")) or None)
    r.set_defaults(fn=cmd_run)

    rep = sub.add_parser("report", parents=[common],
                         help="emit human-readable artifacts from report.json")
    rep.add_argument("reports", nargs="+", help="one or more report.json files")
    rep.add_argument("--out", required=True)
    rep.set_defaults(fn=cmd_report)

    ex = sub.add_parser("exemplars", help="print exemplar listing ids")
    ex.add_argument("report")
    ex.set_defaults(fn=cmd_exemplars)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except errors.DivergenceDetected as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (errors.ConfigError, errors.SchemaMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except errors.HflError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
