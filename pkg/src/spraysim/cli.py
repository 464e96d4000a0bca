"""Command-line entry point: ``spraysim {simulate,analyze,eval,report}``.

Exit codes: 0 success, 1 partial failure, 2 invalid input.
"""

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, config as config_mod
from ._validation import ConfigError
from .control import ControlConfig, write_decision_log
from .deposition import DepositionConfig, emitted_volume
from .detector import OracleNoise, parse_detections
from .metrics import evaluate
from .netpbm import read_image, write_image
from .protocol import decode
from .scene import BoomConfig, CameraConfig
from .simulation import paper_classes, simulate
from .wsp import WspAnalyzer

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID = 0, 1, 2

# reported class means of the reference trial, kept next to simulated values for comparison
REFERENCE_MEANS = {"SMALL": 16.22, "MEDIUM": 21.46, "LARGE": 21.65}
CLASS_ORDER = ("SMALL", "MEDIUM", "LARGE")
RASTER_EXT = (".pgm", ".ppm", ".png")


class UsageError(Exception):
    pass


def _env_default(value, var, cast=str):
    if value is not None:
        return value
    raw = os.environ.get(var)
    if raw is None:
        return None
    try:
        return cast(raw)
    except ValueError:
        raise UsageError(f"{var}={raw!r} is not valid") from None


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_table(path_stem, header, rows, fmt):
    """Write ``rows`` as CSV or as an aligned text table; returns the path written."""
    if fmt == "csv":
        path = Path(f"{path_stem}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        return path
    path = Path(f"{path_stem}.txt")
    cells = [list(map(str, header))] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    with open(path, "w") as fh:
        for row in cells:
            fh.write("  ".join(v.rjust(w) for v, w in zip(row, widths)).rstrip() + "\n")
    return path


def _fmt(v):
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def module_defaults():
    return {
        "scene.boom": asdict(BoomConfig()),
        "scene.camera": {k: v for k, v in asdict(CameraConfig(1, (1, 2))).items()
                         if k not in ("id", "covered_nozzles")},
        "detector": dict(asdict(OracleNoise()), conf_threshold=0.5),
        "control": asdict(ControlConfig()),
        "deposition": asdict(DepositionConfig()),
        "wsp": WspAnalyzer().get_params(),
    }


# -- simulate -------------------------------------------------------------------------

def cmd_simulate(args):
    seed = _env_default(args.seed, "SPRAYSIM_SEED", int)
    out = Path(_env_default(args.out, "SPRAYSIM_OUT") or "run")
    if args.config:
        cfg = config_mod.load(args.config)
        config_path = args.config
    else:
        cfg = config_mod.load_default()
        config_path = f"<bundled>/{config_mod.DEFAULT_SCENARIO}"
    if seed is not None:
        cfg = cfg.with_seed(seed)

    out.mkdir(parents=True, exist_ok=True)
    (out / "rasters").mkdir(exist_ok=True)
    classes = paper_classes(cfg)
    ext = args.raster
    raster_files = {w.id: f"rasters/{w.id}.{ext}" for w in cfg.scene.papers}

    manifest = {
        "manifest_version": 1,
        "tool": "spraysim",
        "version": __version__,
        "config_path": str(config_path),
        "seed": cfg.seed,
        "out_dir": ".",
        "jobs": args.jobs,
        "defaults": module_defaults(),
        "config": config_mod.to_dict(cfg),
        "papers": [{"id": w.id, "plant": w.plant_id, "resolution_um": w.resolution_um,
                    "canopy_class": classes[w.id].name if classes[w.id] else None,
                    "raster": raster_files[w.id]} for w in cfg.scene.papers],
        "outputs": ["decisions.csv", "wire.txt", "nozzles.csv", "deposition.csv"]
                   + sorted(raster_files.values()),
    }
    clock = time.perf_counter if args.wall_clock else None
    duration_ms = cfg.resolved_pass_length() / cfg.deposition.robot_speed * 1000
    manifest["timestamps"] = {"sim_start_ms": 0.0, "sim_end_ms": duration_ms}
    if args.wall_clock:
        manifest["timestamps"]["created_unix"] = time.time()
    _write_json(out / "manifest.json", manifest)

    result = simulate(cfg, clock=clock, jobs=args.jobs)

    write_decision_log(result.ticks, out / "decisions.csv")
    stream = b"".join(t.wire for t in result.ticks)
    decoded = decode(stream, cfg.scene.boom.nozzle_count)
    expected = [d.command() for t in result.ticks for d in t.decisions]
    if decoded.commands != expected or decoded.errors or decoded.remainder:
        print("error: protocol round-trip mismatch", file=sys.stderr)
        return EXIT_PARTIAL
    with open(out / "wire.txt", "w") as fh:
        for t in result.ticks:
            for frame in t.wire.splitlines():
                fh.write(f"{t.frame.time_ms:.1f} {frame.decode('ascii')}\n")

    boom = cfg.scene.boom
    with open(out / "nozzles.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["nozzle", "on_time_ms", "emitted_volume_ml"])
        for n, on in zip(boom.nozzle_ids, result.deposition.on_time_ms):
            w.writerow([n, f"{on:.3f}", f"{emitted_volume(255, on / 1000, boom):.4f}"])
    with open(out / "deposition.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["paper", "plant", "canopy_class", "droplets_stamped", "stained_px"])
        for wsp in cfg.scene.papers:
            r = result.deposition.rasters[wsp.id]
            w.writerow([wsp.id, wsp.plant_id or "", classes[wsp.id].name if classes[wsp.id] else "",
                        result.deposition.droplets_on_paper[wsp.id], int(r.stained.sum())])
    for pid, raster in result.deposition.rasters.items():
        img = raster.to_gray() if ext == "pgm" else raster.to_rgb()
        write_image(out / raster_files[pid], img)

    over = sum(t.over_budget for t in result.ticks)
    print(f"simulated {len(result.ticks)} frames, {len(cfg.scene.papers)} papers -> {out}")
    if args.wall_clock:
        lat = np.array([t.latency_ms for t in result.ticks])
        if len(lat):
            print(f"latency p50 {np.percentile(lat, 50):.2f} ms, p95 {np.percentile(lat, 95):.2f} ms, "
                  f"{over} over budget")
    return EXIT_OK


# -- analyze --------------------------------------------------------------------------

def _collect_inputs(paths):
    """Expand inputs into (path, paper_id, canopy_class, resolution) tuples."""
    items = []
    manifests = []
    for p in map(Path, paths):
        manifest = p / "manifest.json" if p.is_dir() else None
        if manifest is not None and manifest.exists():
            data = json.loads(manifest.read_text())
            manifests.append(p)
            for paper in data["papers"]:
                items.append((p / paper["raster"], paper["id"], paper.get("canopy_class"),
                              paper.get("resolution_um")))
        elif p.is_dir():
            for f in sorted(p.iterdir()):
                if f.suffix.lower() in RASTER_EXT:
                    items.append((f, f.stem, None, None))
        else:
            items.append((p, p.stem, None, None))
    return items, manifests


def _analyze_one(item, resolution, fmt_out):
    path, pid, cls, res = item
    res = res or resolution
    if res is None:
        raise ConfigError("unknown image resolution; pass --resolution", field="resolution_um")
    image = read_image(path)
    report = WspAnalyzer(resolution_um=res).analyze(image, paper_id=pid)
    doc = report.to_dict()
    doc["source"] = str(path)
    doc["canopy_class"] = cls
    _write_json(fmt_out / f"{pid}.json", doc)
    with open(fmt_out / f"{pid}_droplets.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "row_px", "col_px", "row_mm", "col_mm", "area_px", "area_um2",
                    "equivalent_diameter_um"])
        for d in report.droplets:
            w.writerow([d.id, f"{d.centroid_px[0]:.3f}", f"{d.centroid_px[1]:.3f}",
                        f"{d.centroid_mm[0]:.4f}", f"{d.centroid_mm[1]:.4f}", d.area_px,
                        f"{d.area_um2:.2f}", f"{d.equivalent_diameter_um:.3f}"])
    write_image(fmt_out / f"{pid}_heatmap.pgm", report.uniformity.kde.to_gray())
    return report, cls


def cmd_analyze(args):
    items, manifests = _collect_inputs(args.inputs)
    if not items:
        raise UsageError("no rasters found")
    out = _env_default(args.out, "SPRAYSIM_OUT")
    if out is None:
        out = (manifests[0] / "analysis") if len(args.inputs) == 1 and manifests else "analysis"
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    def work(item):
        try:
            return item, _analyze_one(item, args.resolution, out), None
        except (OSError, ValueError) as exc:
            return item, None, exc

    if args.jobs > 1:
        with ThreadPoolExecutor(args.jobs) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(i) for i in items]

    rows, failed = [], 0
    for (path, pid, _, _), res, err in results:
        if err is not None:
            failed += 1
            print(f"error: {path}: {err}", file=sys.stderr)
            continue
        report, cls = res
        s = report.area_stats
        u = report.uniformity
        rows.append([pid, cls or "", report.coverage_percent, s.n, s.mean, s.median, s.std,
                     s.p33, s.p66, s.small, s.medium, s.large, u.grid_cv,
                     "inf" if u.drift_saturated else u.drift_index])
    header = ["paper", "canopy_class", "coverage_percent", "droplets", "mean_area_um2",
              "median_area_um2", "std_area_um2", "p33_um2", "p66_um2", "small", "medium",
              "large", "grid_cv", "drift_index"]
    # the summary is always CSV so `report` can read it back
    _write_table(out / "summary", header, rows, "csv")
    if any(r[1] for r in rows):
        agg = []
        for cls in CLASS_ORDER:
            cov = np.array([r[2] for r in rows if r[1] == cls])
            if len(cov):
                agg.append([cls, len(cov), float(cov.mean()), float(np.median(cov)), float(cov.std())])
        path = _write_table(out / "aggregate", ["canopy_class", "n", "mean_coverage",
                                                "median_coverage", "std_coverage"], agg, args.format)
        print(path.read_text(), end="")
    print(f"analyzed {len(rows)} of {len(items)} rasters -> {out}")
    return EXIT_PARTIAL if failed else EXIT_OK


# -- eval -----------------------------------------------------------------------------

def cmd_eval(args):
    preds = parse_detections(Path(args.predictions).read_text())
    truths = parse_detections(Path(args.truths).read_text())
    report = evaluate(preds, truths, args.iou, args.iou_type, args.conf)
    out = Path(_env_default(args.out, "SPRAYSIM_OUT") or "eval")
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "eval_report.json", report.to_dict())
    with open(out / "pr_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "recall", "precision"])
        for c, r in sorted(report.classes.items()):
            for rec, prec in r.pr_curve:
                w.writerow([c, repr(rec), repr(prec)])
    rows = [[c, r.counts.tp, r.counts.fp, r.counts.fn, r.precision, r.recall, r.f1, r.ap]
            for c, r in sorted(report.classes.items())]
    path = _write_table(out / "eval_summary", ["class", "tp", "fp", "fn", "precision", "recall",
                                               "f1", "ap"], rows, args.format)
    print(path.read_text(), end="")
    print(f"mAP@{args.iou:g} = {report.map:.4f}")
    return EXIT_OK


# -- report ---------------------------------------------------------------------------

def cmd_report(args):
    run = Path(args.run_dir)
    summary = next((p for p in (run / "analysis" / "summary.csv", run / "summary.csv") if p.exists()),
                   None)
    if summary is None:
        raise UsageError(f"no analysis summary under {run}; run `spraysim analyze` first")
    with open(summary, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r["canopy_class"]]
    if not rows:
        raise UsageError("analysis has no canopy classes; analyze a simulated run directory")
    out = Path(_env_default(args.out, "SPRAYSIM_OUT") or (run / "report"))
    out.mkdir(parents=True, exist_ok=True)

    data_rows, stats_rows, means = [], [], {}
    for cls in CLASS_ORDER:
        cov = [float(r["coverage_percent"]) for r in rows if r["canopy_class"] == cls]
        data_rows += [[cls, r["paper"], float(r["coverage_percent"])]
                      for r in rows if r["canopy_class"] == cls]
        if not cov:
            continue
        q1, med, q3 = np.percentile(cov, [25, 50, 75])
        means[cls] = float(np.mean(cov))
        stats_rows.append([cls, len(cov), min(cov), float(q1), float(med), float(q3), max(cov),
                           means[cls], REFERENCE_MEANS[cls]])
    _write_table(out / "boxplot_data", ["canopy_class", "paper", "coverage_percent"], data_rows,
                 args.format)
    _write_table(out / "boxplot_summary", ["canopy_class", "n", "min", "q1", "median", "q3", "max",
                                           "mean", "reference_mean"], stats_rows, args.format)

    trend = (all(c in means for c in CLASS_ORDER)
             and means["SMALL"] < means["MEDIUM"] and means["LARGE"] >= means["MEDIUM"] - 2.0)
    lines = ["canopy class  mean coverage %  reference %"]
    for cls in CLASS_ORDER:
        if cls in means:
            lines.append(f"{cls:<12}  {means[cls]:>15.2f}  {REFERENCE_MEANS[cls]:>11.2f}")
    lines.append("trend small < medium, large >= medium - 2 pp: " + ("PASS" if trend else "FAIL"))
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="spraysim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=True):
        p.add_argument("--out", help="output directory (env SPRAYSIM_OUT)")
        p.add_argument("--format", choices=("csv", "txt"), default="csv",
                       help="format of tabular summaries")
        if jobs:
            p.add_argument("--jobs", type=int, default=1,
                           help="worker threads; outputs do not depend on it")

    p = sub.add_parser("simulate", help="run the sprayer over a scenario")
    p.add_argument("--config", help="scenario JSON or run manifest (default: bundled scenario)")
    p.add_argument("--seed", type=int, help="override the scenario seed (env SPRAYSIM_SEED)")
    p.add_argument("--raster", choices=("pgm", "ppm"), default="pgm",
                   help="binary PGM mask or rendered colour PPM")
    p.add_argument("--wall-clock", action="store_true",
                   help="record real tick latency (logs are then not byte-reproducible)")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="analyze water-sensitive paper rasters")
    p.add_argument("inputs", nargs="+", help="raster files or directories (a simulate run directory adds class labels)")
    p.add_argument("--resolution", type=float, help="µm per pixel when no manifest is present")
    common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eval", help="precision/recall/F1/mAP of detections")
    p.add_argument("predictions")
    p.add_argument("truths")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--iou-type", choices=("box", "mask"), default="box")
    p.add_argument("--conf", type=float, default=0.0, help="confidence cut for the counts")
    common(p, jobs=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="per-class coverage statistics of an analyzed run")
    p.add_argument("run_dir")
    common(p, jobs=False)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
