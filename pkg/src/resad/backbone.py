"""Frozen backbone runtime: load an exported model, extract stage features.

The model file is a TorchScript archive with an embedded ``manifest.json``
(extra file) that declares the input name, the two output names ``stage2``
and ``stage3``, their channel counts, strides, and the spatial input size
the model was exported for.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import (
    ChannelMismatch,
    InferenceError,
    ModelLoadError,
    OutputMismatch,
    ShapeError,
)
from .imageops import bilinear_resize

EXPECTED_OUTPUTS = ("stage2", "stage3")
REFERENCE_CHANNELS = {"wide_resnet50_2": (512, 1024)}


@dataclass
class BackboneHandle:
    module: torch.jit.ScriptModule
    model_path: str
    arch: str
    input_name: str
    output_names: tuple[str, str]
    channels: tuple[int, int]  # (c2, c3)
    strides: tuple[int, int]  # (8, 16) for the reference backbone
    side: int
    sha256: str


def file_sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def load_model(
    path: str | Path, expected_channels: tuple[int, int] | None = None
) -> BackboneHandle:
    """Load and validate an exported backbone.

    The reference backbone must declare (c2, c3) = (512, 1024); any
    explicitly expected channel counts are enforced as well.
    """
    path = Path(path)
    if not path.is_file():
        raise ModelLoadError(f"model file {path} does not exist")
    extra = {"manifest.json": ""}
    try:
        module = torch.jit.load(str(path), map_location="cpu", _extra_files=extra)
    except Exception as exc:
        raise ModelLoadError(f"{path}: {exc}") from exc
    if not extra["manifest.json"]:
        raise ModelLoadError(f"{path}: missing embedded manifest")
    try:
        manifest = json.loads(extra["manifest.json"])
    except json.JSONDecodeError as exc:
        raise ModelLoadError(f"{path}: corrupt embedded manifest") from exc

    outputs = tuple(manifest.get("output_names", ()))
    if outputs != EXPECTED_OUTPUTS:
        raise OutputMismatch(f"{path}: outputs {outputs}, expected {EXPECTED_OUTPUTS}")
    channels = tuple(manifest.get("channels", ()))
    if len(channels) != 2:
        raise ModelLoadError(f"{path}: manifest lacks channel counts")
    arch = manifest.get("arch", "unknown")
    reference = REFERENCE_CHANNELS.get(arch)
    if reference is not None and channels != reference:
        raise ChannelMismatch(f"{arch} declares channels {channels}, expected {reference}")
    if expected_channels is not None and channels != tuple(expected_channels):
        raise ChannelMismatch(f"channels {channels}, expected {tuple(expected_channels)}")

    module.eval()
    return BackboneHandle(
        module=module,
        model_path=str(path),
        arch=arch,
        input_name=manifest.get("input_name", "input"),
        output_names=outputs,
        channels=(int(channels[0]), int(channels[1])),
        strides=tuple(manifest.get("strides", (8, 16))),
        side=int(manifest["side"]),
        sha256=file_sha256(path),
    )


def extract_features(
    handle: BackboneHandle, tensor: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Run the backbone; returns stage-2 and stage-3 maps as (h, w, c) float32."""
    if tensor.shape != (3, handle.side, handle.side):
        raise ShapeError(
            f"input shape {tensor.shape}, model expects (3, {handle.side}, {handle.side})"
        )
    batch = torch.from_numpy(np.ascontiguousarray(tensor, dtype=np.float32)).unsqueeze(0)
    try:
        with torch.no_grad():
            stage2, stage3 = handle.module(batch)
    except RuntimeError as exc:
        raise InferenceError(f"backbone inference failed: {exc}") from exc
    f2 = stage2.squeeze(0).permute(1, 2, 0).contiguous().numpy().astype(np.float32)
    f3 = stage3.squeeze(0).permute(1, 2, 0).contiguous().numpy().astype(np.float32)
    if f2.shape[2] != handle.channels[0] or f3.shape[2] != handle.channels[1]:
        raise ShapeError(
            f"model produced channels ({f2.shape[2]}, {f3.shape[2]}), "
            f"manifest declares {handle.channels}"
        )
    return f2, f3


def fuse_levels(f2: np.ndarray, f3: np.ndarray) -> np.ndarray:
    """Concatenate stage 2 with bilinearly upscaled stage 3 along channels."""
    if f2.ndim != 3 or f3.ndim != 3:
        raise ShapeError("feature maps must be rank 3")
    h2, w2 = f2.shape[:2]
    h3, w3 = f3.shape[:2]
    if (-(-h2 // 2), -(-w2 // 2)) != (h3, w3):
        raise ShapeError(
            f"stage-3 map {f3.shape[:2]} does not upsample to stage-2 map {f2.shape[:2]}"
        )
    upscaled = bilinear_resize(f3.astype(np.float32), h2, w2)
    return np.concatenate([f2.astype(np.float32), upscaled], axis=2)
