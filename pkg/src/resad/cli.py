"""Command-line entry point: build, score, eval, ablate, export-model-check."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import errors, ingest, pipeline
from .backbone import load_model
from .bank import load_bank
from .config import PipelineConfig, load_config_file, resolve_config

log = logging.getLogger("resad")

# exit code 2: the user's configuration or model is wrong
_CONFIG_ERRORS = (
    errors.InvalidConfig,
    errors.ModelLoadError,
    errors.ConfigFingerprintMismatch,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--model", dest="model_path")
    parser.add_argument("--data-root", dest="data_root")
    parser.add_argument("--layout", choices=["generic", "idrid", "adam"])
    parser.add_argument("--side", type=int)
    parser.add_argument("--region-radius", type=int, dest="region_radius")
    parser.add_argument("--jl-eps", type=float, dest="jl_eps")
    parser.add_argument("--coreset-fraction", type=float, dest="coreset_fraction")
    parser.add_argument("--train-subset", type=float, dest="train_subset")
    parser.add_argument("--attention-block-rows", type=int, dest="attention_block_rows")
    parser.add_argument("--smooth-sigma", type=float, dest="smooth_sigma")
    parser.add_argument("--projection-seed", type=int, dest="projection_seed")
    parser.add_argument("--coreset-seed", type=int, dest="coreset_seed")
    parser.add_argument("--bank", dest="bank_path")
    parser.add_argument("--out-dir", dest="out_dir")
    parser.add_argument("--cache-dir", dest="cache_dir")
    parser.add_argument("--no-cache", action="store_true", default=None, dest="no_cache")
    parser.add_argument(
        "--disable-region", action="store_false", default=None, dest="use_region"
    )
    parser.add_argument(
        "--disable-spatial", action="store_false", default=None, dest="use_spatial"
    )
    parser.add_argument("--disable-resc", action="store_true", default=None)
    parser.add_argument(
        "--exclude-normal-pixels",
        action="store_false",
        default=None,
        dest="include_normal_pixels",
    )


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    file_values = load_config_file(args.config) if args.config else {}
    keys = [
        "model_path", "data_root", "layout", "side", "region_radius", "jl_eps",
        "coreset_fraction", "train_subset", "attention_block_rows", "smooth_sigma",
        "projection_seed", "coreset_seed", "bank_path", "out_dir", "cache_dir",
        "no_cache", "use_region", "use_spatial", "include_normal_pixels",
    ]
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if getattr(args, "disable_resc", None):
        overrides["use_region"] = False
        overrides["use_spatial"] = False
    return resolve_config(file_values, overrides)


def cmd_build(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    _, stats = pipeline.build_bank(cfg)
    print(json.dumps({"bank": cfg.bank_path, **stats}, indent=2))
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    handle = load_model(cfg.model_path)
    cbank = load_bank(cfg.bank_path, cfg.fingerprint(handle.sha256))
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    image_paths: list[Path] = []
    for item in args.images:
        p = Path(item)
        if p.is_dir():
            image_paths.extend(
                q for q in sorted(p.iterdir())
                if q.suffix.lower() in ingest.IMAGE_EXTENSIONS
            )
        else:
            image_paths.append(p)

    records = []
    for path in image_paths:
        try:
            img = ingest.load_image(path)
        except (OSError, errors.DecodeError) as exc:
            log.warning("skipping %s: %s", path, exc)
            records.append({"image": str(path), "skipped": True, "reason": str(exc)})
            continue
        amap = pipeline.score_image(
            str(path), handle, cbank, cfg, out_h=img.shape[0], out_w=img.shape[1]
        )
        sidecar = pipeline.export_heatmap(amap, out_dir, path.stem)
        records.append({"image": str(path), "skipped": False, **sidecar})
    with open(out_dir / "scores.jsonl", "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    print(f"scored {sum(not r['skipped'] for r in records)}/{len(records)} images "
          f"-> {out_dir}")
    return 0


def _emit_report(results, cfg: PipelineConfig, report_json: str | None) -> None:
    print(pipeline.render_report_table(results))
    if report_json:
        payload = {
            "results": [{"config": label, **report.to_dict()} for label, report in results],
            "resolved_config": cfg.to_dict(),
        }
        with open(report_json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    report = pipeline.evaluate(cfg)
    _emit_report([("default", report)], cfg, args.report_json)
    return 0


DEFAULT_ABLATION_GRID = [
    {"label": "10%", "train_subset": 0.1},
    {"label": "40%", "train_subset": 0.4},
    {"label": "70%", "train_subset": 0.7},
    {"label": "wo ReSC", "preset": "wo_resc"},
    {"label": "wo Region Module", "preset": "wo_region"},
    {"label": "wo Spatial Module", "preset": "wo_spatial"},
    {"label": "with ReSC", "preset": "with_resc"},
]


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    if args.grid:
        with open(args.grid, "r", encoding="utf-8") as fh:
            grid = json.load(fh)
    else:
        grid = DEFAULT_ABLATION_GRID
    results = pipeline.run_ablation(cfg, grid)
    _emit_report(results, cfg, args.report_json)
    if args.report_csv:
        pipeline.write_report_csv(results, args.report_csv)
    return 0


def cmd_export_model_check(args: argparse.Namespace) -> int:
    handle = load_model(args.model_path)
    print(json.dumps({
        "model": handle.model_path,
        "arch": handle.arch,
        "input_name": handle.input_name,
        "output_names": list(handle.output_names),
        "channels": list(handle.channels),
        "strides": list(handle.strides),
        "side": handle.side,
        "sha256": handle.sha256,
    }, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resad")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_build = sub.add_parser("build", help="build and persist the memory bank")
    _add_common(p_build)
    p_build.set_defaults(func=cmd_build)

    p_score = sub.add_parser("score", help="score images against a bank")
    _add_common(p_score)
    p_score.add_argument("--images", nargs="+", required=True,
                         help="image files or directories")
    p_score.set_defaults(func=cmd_score)

    p_eval = sub.add_parser("eval", help="evaluate the test split")
    _add_common(p_eval)
    p_eval.add_argument("--report-json")
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="run an ablation grid")
    _add_common(p_ablate)
    p_ablate.add_argument("--grid", help="JSON file with ablation rows")
    p_ablate.add_argument("--report-json")
    p_ablate.add_argument("--report-csv")
    p_ablate.set_defaults(func=cmd_ablate)

    p_check = sub.add_parser("export-model-check", help="validate an exported model")
    p_check.add_argument("--model", dest="model_path", required=True)
    p_check.set_defaults(func=cmd_export_model_check)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (errors.ResadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
