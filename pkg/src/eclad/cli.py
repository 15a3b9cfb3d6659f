"""Command-line front end for the pipeline.

Subcommands: gen-data, train, extract, localize, validate, ablate,
metric-study. Global flags (--seed, --config, --out, --threads, --quiet)
apply to every subcommand; per-flag precedence is CLI over config file
over built-in default, and every run echoes its effective configuration
into its output report. A failing run leaves a `.failed` marker in the
output directory instead of a silently truncated report.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import concepts, glyphs, net, plotpng, synth, validation

log = logging.getLogger("eclad")

DEFAULTS = {
    "gen-data": {"size": 224, "per_class": 200},
    "train": {"epochs": 30, "lr": 0.1, "momentum": 0.9, "batch": 24,
              "val_fraction": 0.15, "early_stop_acc": None, "clip_norm": 1.0,
              "augment": 0.0, "channels": "16,32,64,64"},
    "extract": {"n_c": 10, "n_i": 2, "lam": 0.3, "mode": "bilinear",
                "kmeans_epochs": 1, "standardize": False, "layers": None,
                "max_per_class": 200, "examples": 8, "target_size": None},
    "localize": {"lam": 0.3},
    "validate": {"t_dst": None, "important": None},
    "ablate": {"axis": "n_c", "values": "5,10,20,50", "n_c": 10, "n_i": 2,
               "lam": 0.3, "mode": "bilinear", "kmeans_epochs": 1,
               "standardize": False, "max_per_class": 200, "t_dst": None},
    "metric-study": {"glyph": "A", "canvas": 128, "glyph_size": 56,
                     "offsets": "0,8,16,24,32,40,48,56,64", "rings": "0,4,8,16"},
}


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v != ""]


def _merge_options(command: str, args: argparse.Namespace) -> dict:
    merged = dict(DEFAULTS[command])
    merged.update({"seed": 0, "out": None, "threads": 1, "quiet": False})
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            file_conf = json.load(fh)
        for key, value in file_conf.items():
            if key in merged:
                merged[key] = value
    for key, value in vars(args).items():
        if key in ("command", "config"):
            continue
        if value is not None:
            merged[key] = value
    return merged


def _require_out(opts: dict) -> Path:
    if not opts.get("out"):
        raise SystemExit("this command needs --out <dir>")
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _arch_for(dataset_dir, channels: str) -> net.Architecture:
    manifest = synth.load_manifest(dataset_dir)
    return net.Architecture(
        input_size=manifest["image_size"],
        stage_channels=tuple(_ints(channels)),
        n_classes=len(manifest["classes"]),
    )


def cmd_gen_data(opts: dict) -> None:
    out = _require_out(opts)
    spec = synth.spec_by_name(opts["name"])
    spec = synth.DatasetSpec(
        name=spec.name, classes=spec.classes, primitives=spec.primitives,
        image_size=opts["size"], per_class_count=opts["per_class"])
    manifest = synth.generate_dataset(spec, opts["seed"], out)
    log.info("wrote %d images for %s under %s",
             len(manifest["files"]), spec.name, out)


def cmd_train(opts: dict) -> None:
    out = _require_out(opts)
    arch = _arch_for(opts["dataset"], opts["channels"])
    hyper = net.Hyper(lr=opts["lr"], momentum=opts["momentum"],
                      epochs=opts["epochs"], batch=opts["batch"],
                      seed=opts["seed"], val_fraction=opts["val_fraction"],
                      early_stop_acc=opts["early_stop_acc"],
                      clip_norm=opts["clip_norm"], augment=opts["augment"])
    params, history = net.train(arch, opts["dataset"], hyper)
    net.save_checkpoint(out / "model.ectf", arch, params)
    doc = {
        "config": {k: opts[k] for k in ("dataset", "epochs", "lr", "momentum",
                                        "batch", "val_fraction", "seed",
                                        "early_stop_acc", "clip_norm", "augment",
                                        "channels")},
        "architecture": arch.to_json(),
        "history": history,
    }
    with open(out / "training.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    if history:
        log.info("final epoch: %s", history[-1])


def _tap_source(opts: dict):
    if opts.get("taps"):
        return concepts.DirectoryTapSource(opts["taps"], opts["dataset"])
    if opts.get("checkpoint"):
        arch, params = net.load_checkpoint(opts["checkpoint"])
        return concepts.MicronetTapSource(params, arch, opts["dataset"])
    raise SystemExit("extract needs --checkpoint <model.ectf> or --taps <dir>")


def _extract_config(opts: dict) -> concepts.EcladConfig:
    layers = opts["layers"].split(",") if opts.get("layers") else None
    return concepts.EcladConfig(
        layers=layers, n_c=opts["n_c"], n_i=opts["n_i"], lam=opts["lam"],
        mode=opts["mode"], seed=opts["seed"], epochs=opts["kmeans_epochs"],
        standardize=bool(opts["standardize"]),
        max_per_class=opts["max_per_class"],
        examples_per_concept=opts.get("examples", 8),
        target_size=opts.get("target_size"))


def cmd_extract(opts: dict) -> None:
    out = _require_out(opts)
    source = _tap_source(opts)
    result = concepts.run_eclad(source, _extract_config(opts), out)
    log.info("extracted %d concepts; max |ri| concept: c%d",
             result.model.n_c, int(np.argmax(np.abs(result.report.ri))))


def cmd_localize(opts: dict) -> None:
    out = _require_out(opts)
    doc = concepts.load_report(opts["report"])
    model = concepts.model_from_report(doc)
    arch, params = net.load_checkpoint(opts["checkpoint"])
    lam = doc["config"]["lam"]
    for image_path in opts["images"]:
        image = synth.load_image_png(image_path)
        _, taps = net.forward(params, arch, image)
        d = concepts.compute_descriptor(taps, model.layers,
                                        image.shape[0], image.shape[1], model.mode)
        labels_map = concepts.assign_pixels(d, model)
        stem = Path(image_path).stem
        target = out / stem
        target.mkdir(parents=True, exist_ok=True)
        overlay = np.empty_like(image)
        for j in range(model.n_c):
            mask = labels_map == j
            synth.save_mask_png(target / f"c{j}.png", mask)
            color = np.array(plotpng.PALETTE[j % len(plotpng.PALETTE)],
                             np.float32) / 255.0
            overlay[mask] = lam * image[mask] + (1.0 - lam) * color
        synth.save_image_png(target / "overlay.png", overlay)
    log.info("localized %d images", len(opts["images"]))


def _masks_root(masks: str) -> Path:
    # an extract --out dir nests the full masks under localization/; its
    # top-level concepts/ holds example overlays, not per-image masks
    root = Path(masks)
    if (root / "localization" / "concepts").is_dir():
        return root / "localization"
    return root


def cmd_validate(opts: dict) -> None:
    out = _require_out(opts)
    important = opts["important"].split(",") if opts.get("important") else None
    report = validation.validate_ce(
        opts["dataset"], _masks_root(opts["masks"]), out_dir=out,
        important_ids=important, t_dst=opts["t_dst"], threads=opts["threads"])
    log.info("rc=%s ic=%s", report["rc"], report["ic"])


def cmd_ablate(opts: dict) -> None:
    out = _require_out(opts)
    axis = opts["axis"]
    if axis not in ("layers", "n_c", "interp"):
        raise SystemExit(f"unknown ablation axis {axis!r}")
    values = [v for v in str(opts["values"]).split(",") if v]
    if not values:
        raise SystemExit("ablate needs at least one value")
    rows = []
    for value in values:
        sub_opts = dict(opts)
        if axis == "n_c":
            sub_opts["n_c"] = int(value)
        elif axis == "interp":
            sub_opts["mode"] = value
        else:
            sub_opts["layers"] = value.replace("+", ",")
        run_dir = out / f"{axis}_{value.replace(',', '-').replace('+', '-')}"
        run_dir.mkdir(parents=True, exist_ok=True)
        source = _tap_source(sub_opts)
        concepts.run_eclad(source, _extract_config(sub_opts), run_dir)
        report = validation.validate_ce(
            sub_opts["dataset"], run_dir / "localization", out_dir=run_dir,
            t_dst=sub_opts["t_dst"], threads=sub_opts["threads"])
        rows.append({"axis": axis, "value": value,
                     "rc": report["rc"], "ic": report["ic"],
                     "report": str(run_dir / "validation_report.json")})
        log.info("%s=%s rc=%s ic=%s", axis, value, report["rc"], report["ic"])
    with open(out / "ablation.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    with open(out / "ablation.json", "w", encoding="utf-8") as fh:
        json.dump({"config": {k: opts[k] for k in sorted(opts)}, "rows": rows},
                  fh, indent=2, default=str)
        fh.write("\n")


def cmd_metric_study(opts: dict) -> None:
    out = _require_out(opts)
    offsets = _ints(str(opts["offsets"])) if opts["offsets"] else []
    rings = _ints(str(opts["rings"])) if opts["rings"] else []
    if not offsets and not rings:
        raise SystemExit("metric-study needs --offsets and/or --rings")
    canvas = int(opts["canvas"])
    glyph = glyphs.rasterize(opts["glyph"], int(opts["glyph_size"]))
    gh, gw = glyph.shape

    if offsets:
        mask = np.zeros((canvas, canvas), bool)
        y0 = (canvas - gh) // 2
        mask[y0:y0 + gh, 8:8 + gw] = glyph
        rows = validation.offset_study(mask, offsets)
        _write_study(out, "offsets", "offset", rows)
    if rings:
        mask = np.zeros((canvas, canvas), bool)
        y0, x0 = (canvas - gh) // 2, (canvas - gw) // 2
        mask[y0:y0 + gh, x0:x0 + gw] = glyph
        rows = validation.surround_study(mask, rings)
        _write_study(out, "rings", "gap", rows)
    with open(out / "metric_study.json", "w", encoding="utf-8") as fh:
        json.dump({"config": {k: opts[k] for k in sorted(opts)}}, fh,
                  indent=2, default=str)
        fh.write("\n")


def _write_study(out: Path, name: str, x_key: str, rows: list[dict]) -> None:
    with open(out / f"{name}.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    xs = [row[x_key] for row in rows]
    dst_max = max(max(row["dst"] for row in rows), 1e-12)
    series = {
        "dst scaled": [row["dst"] / dst_max for row in rows],
        "jaccard": [row["jaccard"] for row in rows],
        "nmi": [row["nmi"] for row in rows],
        "ari": [row["ari"] for row in rows],
    }
    plotpng.line_plot(out / f"{name}.png", xs, series,
                      title=f"{name} study", xlabel=f"{x_key} px", ylabel="score")


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=None)
    shared.add_argument("--config", default=None, help="JSON file with option defaults")
    shared.add_argument("--out", default=None, help="output directory")
    shared.add_argument("--threads", type=int, default=None)
    shared.add_argument("--quiet", action="store_true", default=None)

    parser = argparse.ArgumentParser(
        prog="eclad",
        description="concept extraction, localization, and mask-based validation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[shared],
                       help="generate a synthetic dataset with primitive masks")
    p.add_argument("name", help="dataset name (AB, ABplus, BigSmall, CO, colorGB, isA)")
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--per-class", dest="per_class", type=int, default=None)

    p = sub.add_parser("train", parents=[shared], help="train the tapped classifier")
    p.add_argument("--dataset", required=True)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=None)
    p.add_argument("--early-stop-acc", dest="early_stop_acc", type=float, default=None)
    p.add_argument("--clip-norm", dest="clip_norm", type=float, default=None)
    p.add_argument("--augment", type=float, default=None,
                   help="color-jitter strength in [0,1], 0 disables")
    p.add_argument("--channels", default=None, help="per-stage channels, e.g. 16,32,64,64")

    p = sub.add_parser("extract", parents=[shared],
                       help="mine, localize, and score concepts")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--taps", default=None, help="directory of ECTF tap dumps")
    p.add_argument("--n-c", dest="n_c", type=int, default=None)
    p.add_argument("--n-i", dest="n_i", type=int, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--mode", choices=["nearest", "bilinear", "bicubic"], default=None)
    p.add_argument("--layers", default=None, help="comma-separated tap names")
    p.add_argument("--kmeans-epochs", dest="kmeans_epochs", type=int, default=None)
    p.add_argument("--standardize", action="store_true", default=None)
    p.add_argument("--max-per-class", dest="max_per_class", type=int, default=None)
    p.add_argument("--examples", type=int, default=None)
    p.add_argument("--target-size", dest="target_size", type=int, default=None)

    p = sub.add_parser("localize", parents=[shared],
                       help="concept masks and overlay for arbitrary images")
    p.add_argument("--report", required=True, help="eclad_report.json from extract")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("images", nargs="+")

    p = sub.add_parser("validate", parents=[shared],
                       help="score concept masks against primitive annotations")
    p.add_argument("--dataset", required=True)
    p.add_argument("--masks", required=True,
                   help="masks dir (concepts/<id>/… + importances.json) or an extract --out dir")
    p.add_argument("--t-dst", dest="t_dst", type=float, default=None)
    p.add_argument("--important", default=None,
                   help="comma-separated primitive ids overriding the manifest flags")

    p = sub.add_parser("ablate", parents=[shared],
                       help="sweep one extraction axis, validating each setting")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--taps", default=None)
    p.add_argument("--axis", choices=["layers", "n_c", "interp"], default=None)
    p.add_argument("--values", default=None,
                   help="comma-separated settings; layers values use + between taps")
    p.add_argument("--n-c", dest="n_c", type=int, default=None)
    p.add_argument("--n-i", dest="n_i", type=int, default=None)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--mode", default=None)
    p.add_argument("--kmeans-epochs", dest="kmeans_epochs", type=int, default=None)
    p.add_argument("--standardize", action="store_true", default=None)
    p.add_argument("--max-per-class", dest="max_per_class", type=int, default=None)
    p.add_argument("--t-dst", dest="t_dst", type=float, default=None)

    p = sub.add_parser("metric-study", parents=[shared],
                       help="association distance vs overlap baselines on shifted glyphs")
    p.add_argument("--glyph", default=None)
    p.add_argument("--canvas", type=int, default=None)
    p.add_argument("--glyph-size", dest="glyph_size", type=int, default=None)
    p.add_argument("--offsets", default=None, help="comma-separated px offsets")
    p.add_argument("--rings", default=None, help="comma-separated px ring gaps")

    return parser


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "extract": cmd_extract,
    "localize": cmd_localize,
    "validate": cmd_validate,
    "ablate": cmd_ablate,
    "metric-study": cmd_metric_study,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    opts = _merge_options(args.command, args)
    logging.basicConfig(format="%(message)s",
                        level=logging.WARNING if opts["quiet"] else logging.INFO)
    out = Path(opts["out"]) if opts.get("out") else None
    marker = out / ".failed" if out else None
    try:
        COMMANDS[args.command](opts)
    except (Exception, SystemExit) as exc:
        if isinstance(exc, SystemExit) and (exc.code == 0 or exc.code is None):
            return 0
        if marker is not None and marker.parent.is_dir():
            marker.write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        log.error("error: %s", exc)
        return 1
    if marker is not None and marker.exists():
        marker.unlink()
    return 0


if __name__ == "__main__":
    sys.exit(main())
