"""End-to-end orchestration: bank building, scoring, evaluation, ablation."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import replace
from pathlib import Path

import cv2
import numpy as np

from . import bank as bank_mod
from . import ingest, resc, scorer, tensorio
from .backbone import BackboneHandle, extract_features, fuse_levels, load_model
from .config import PipelineConfig
from .errors import LayoutError
from .evaluation import EvalReport, evaluate_pixel, scored_set_result

log = logging.getLogger(__name__)


def _cache_dir(cfg: PipelineConfig) -> Path | None:
    if cfg.no_cache:
        return None
    if cfg.cache_dir:
        return Path(cfg.cache_dir)
    if cfg.data_root:
        return Path(cfg.data_root) / ".resad_cache"
    return None


def _cache_key(image_path: str, handle: BackboneHandle, cfg: PipelineConfig) -> str:
    digest = hashlib.sha256()
    with open(image_path, "rb") as fh:
        digest.update(fh.read())
    digest.update(handle.sha256.encode())
    digest.update(str(cfg.side).encode())
    return digest.hexdigest()


def fused_feature_map(
    image_path: str, handle: BackboneHandle, cfg: PipelineConfig
) -> np.ndarray:
    """Fused stage-2/3 map for one image, via the on-disk cache when enabled.

    Only the fused map (before the region/spatial transforms) is cached, so
    ablation reruns over those switches reuse the expensive inference.
    """
    cache = _cache_dir(cfg)
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
        cached = cache / f"{_cache_key(image_path, handle, cfg)}.rsft"
        if cached.exists():
            return tensorio.load_tensor(cached)
    img = ingest.load_image(image_path)
    tensor = ingest.preprocess(img, cfg.side, cfg.mean, cfg.std)
    f2, f3 = extract_features(handle, tensor)
    fused = fuse_levels(f2, f3)
    if cache is not None:
        tmp = cached.with_suffix(".tmp")
        tensorio.save_tensor(tmp, fused)
        tmp.replace(cached)
    return fused


def combined_feature_map(
    image_path: str, handle: BackboneHandle, cfg: PipelineConfig
) -> np.ndarray:
    fused = fused_feature_map(image_path, handle, cfg)
    return resc.apply_resc(
        fused,
        radius=cfg.region_radius,
        block_rows=cfg.attention_block_rows,
        use_region=cfg.use_region,
        use_spatial=cfg.use_spatial,
    )


def select_train_entries(index: ingest.DatasetIndex, subset: float) -> list:
    entries = index.subset("train", "normal")
    if subset >= 1.0:
        return entries
    count = max(1, int(np.floor(subset * len(entries) + 0.5)))
    return entries[:count]


def build_bank(cfg: PipelineConfig) -> tuple[bank_mod.CompressedBank, dict]:
    """Build, compress, and persist the memory bank; returns it with stats."""
    handle = load_model(cfg.model_path)
    index = ingest.index_dataset(cfg.data_root, cfg.layout)
    train = select_train_entries(index, cfg.train_subset)
    maps = []
    for entry in train:
        maps.append(combined_feature_map(entry.image_path, handle, cfg))
        log.info("featurized %s", entry.image_path)
    full = bank_mod.collect_features(maps)
    proj = bank_mod.fit_projection(full, cfg.jl_eps, cfg.projection_seed)
    cbank = bank_mod.coreset_select(full, proj, cfg.coreset_fraction, cfg.coreset_seed)
    fingerprint = cfg.fingerprint(handle.sha256)
    Path(cfg.bank_path).parent.mkdir(parents=True, exist_ok=True)
    bank_mod.save_bank(cbank, cfg.bank_path, fingerprint)
    stats = {
        "train_images": len(train),
        "bank_rows": int(full.vectors.shape[0]),
        "kept_rows": int(cbank.vectors.shape[0]),
        "channels": int(full.channels),
        "projection_dim": proj.dim,
        "covering_radius": cbank.covering_radius,
        "fingerprint": fingerprint,
    }
    return cbank, stats


def score_image(
    image_path: str,
    handle: BackboneHandle,
    cbank: bank_mod.CompressedBank,
    cfg: PipelineConfig,
    out_h: int | None = None,
    out_w: int | None = None,
) -> scorer.AnomalyMap:
    """Distance map for one image, upsampled to the requested resolution.

    Defaults to the model input side, which matches resized lesion masks.
    """
    combined = combined_feature_map(image_path, handle, cfg)
    dmap = scorer.nearest_distance(cbank, combined)
    return scorer.upsample_scores(
        dmap, out_h or cfg.side, out_w or cfg.side, cfg.smooth_sigma
    )


def export_heatmap(amap: scorer.AnomalyMap, out_dir: Path, stem: str) -> dict:
    """Write the 16-bit PNG heatmap, raw score tensor, and JSON sidecar."""
    out_dir.mkdir(parents=True, exist_ok=True)
    data = amap.data
    lo, hi = float(data.min()), float(data.max())
    scale = (data - lo) / (hi - lo) if hi > lo else np.zeros_like(data)
    png_path = out_dir / f"{stem}.png"
    cv2.imwrite(str(png_path), (scale * 65535.0 + 0.5).astype(np.uint16))
    tensorio.save_tensor(out_dir / f"{stem}.rsft", data)
    sidecar = {"min": lo, "max": hi, "image_score": amap.image_score}
    with open(out_dir / f"{stem}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh)
    return sidecar


def evaluate(cfg: PipelineConfig) -> EvalReport:
    """Score the test split against the persisted bank and compute metrics."""
    handle = load_model(cfg.model_path)
    fingerprint = cfg.fingerprint(handle.sha256)
    cbank = bank_mod.load_bank(cfg.bank_path, fingerprint)
    index = ingest.index_dataset(cfg.data_root, cfg.layout)

    pixel_maps, pixel_masks = [], []
    image_scores, image_labels = [], []
    for entry in index.subset("test"):
        amap = score_image(entry.image_path, handle, cbank, cfg)
        image_scores.append(amap.image_score)
        image_labels.append(1 if entry.label == "abnormal" else 0)
        if entry.label == "abnormal":
            if not entry.mask_paths:
                raise LayoutError(f"abnormal image {entry.image_path} has no mask")
            mask = ingest.load_mask(entry.mask_paths, cfg.side, union=True)
            pixel_maps.append(amap.data)
            pixel_masks.append(mask)
        elif cfg.include_normal_pixels:
            pixel_maps.append(amap.data)
            pixel_masks.append(np.zeros((cfg.side, cfg.side), dtype=np.uint8))
        log.info("scored %s", entry.image_path)

    pixel = evaluate_pixel(pixel_maps, pixel_masks)
    image = scored_set_result(image_scores, image_labels)
    return EvalReport(pixel=pixel, image=image, config_fingerprint=fingerprint)


ABLATION_PRESETS = {
    "with_resc": {"use_region": True, "use_spatial": True},
    "wo_resc": {"use_region": False, "use_spatial": False},
    "wo_region": {"use_region": False, "use_spatial": True},
    "wo_spatial": {"use_region": True, "use_spatial": False},
}


def run_ablation(cfg: PipelineConfig, grid: list[dict]) -> list[tuple[str, EvalReport]]:
    """Run one build+evaluate cycle per grid row.

    A row is {"label": ..., "preset": one of ABLATION_PRESETS} and/or plain
    config overrides such as {"train_subset": 0.1}.
    """
    results = []
    for i, row in enumerate(grid):
        row = dict(row)
        label = row.pop("label", None)
        preset = row.pop("preset", None)
        overrides = dict(ABLATION_PRESETS[preset]) if preset else {}
        overrides.update(row)
        label = label or preset or ",".join(f"{k}={v}" for k, v in overrides.items())
        row_cfg = replace(cfg, **overrides)
        row_cfg.bank_path = str(Path(cfg.out_dir) / f"ablation_{i}.rsft")
        row_cfg.validate()
        build_bank(row_cfg)
        results.append((label, evaluate(row_cfg)))
    return results


def render_report_table(results: list[tuple[str, EvalReport]]) -> str:
    header = f"{'config':<28} {'I-AUC':>7} {'I-ACC':>7} {'P-AUC':>7} {'P-ACC':>7}"
    lines = [header, "-" * len(header)]
    for label, report in results:
        image = report.image
        pixel = report.pixel
        lines.append(
            f"{label:<28} {image.auc:>7.3f} {image.acc:>7.3f} "
            f"{pixel.auc:>7.3f} {pixel.acc:>7.3f}"
        )
    return "\n".join(lines)


def write_report_csv(results: list[tuple[str, EvalReport]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["config", "image_auc", "image_acc", "pixel_auc", "pixel_acc"])
        for label, report in results:
            writer.writerow(
                [label, report.image.auc, report.image.acc, report.pixel.auc, report.pixel.acc]
            )
