"""Export a frozen backbone to TorchScript with named stage-2/3 outputs.

Produces four artifacts in the output directory:

* ``backbone_<arch>_<side>.pt``   TorchScript module returning the stage-2
  and stage-3 feature maps, with a ``manifest.json`` extra file embedded
* ``manifest.json``               the same manifest, standalone
* ``fixture_input.rsft`` / ``fixture_stage2.rsft`` / ``fixture_stage3.rsft``
  a seeded random input and the recorded outputs, for cross-runtime
  parity checks

Usage::

    python export_backbone.py --arch wide_resnet50_2 --side 784 --out models/

Pretrained ImageNet weights require network access to the torchvision
weight host; ``--weights random --seed N`` gives a deterministic
random-initialized export for offline or test use.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import io
import json
import struct
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn


class ExportError(Exception):
    pass


class WeightsUnavailable(ExportError):
    pass


OUTPUT_NAMES = ("stage2", "stage3")
STRIDES = (8, 16)


def save_rsft(path: Path, array: np.ndarray) -> None:
    # mirrors the consumer's tensor container: RSFT, version u16, dtype u8
    # (0 = f32), rank u8, u64 dims, row-major payload, all little-endian
    array = np.ascontiguousarray(array, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sHBB", b"RSFT", 1, 0, array.ndim))
        fh.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        fh.write(array.tobytes())


class ResNetStages(nn.Module):
    """Wraps a torchvision ResNet, returning the stage-2 and stage-3 maps."""

    def __init__(self, resnet: nn.Module):
        super().__init__()
        self.stem = nn.Sequential(
            resnet.conv1, resnet.bn1, resnet.relu, resnet.maxpool, resnet.layer1
        )
        self.stage2 = resnet.layer2
        self.stage3 = resnet.layer3

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self.stem(x)
        s2 = self.stage2(x)
        s3 = self.stage3(s2)
        return s2, s3


class TinyStages(nn.Module):
    """Small fixed random CNN with the same stride-8/16 output contract.

    Documented extension hook for test-scale pipelines; not the reference
    backbone.
    """

    CHANNELS = (48, 96)

    def __init__(self):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
        )
        self.stage2 = nn.Sequential(
            nn.Conv2d(32, 48, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(48, 48, 3, stride=1, padding=1),
        )
        self.stage3 = nn.Sequential(
            nn.ReLU(),
            nn.Conv2d(48, 96, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(96, 96, 3, stride=1, padding=1),
        )

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        x = self.stem(x)
        s2 = self.stage2(x)
        s3 = self.stage3(s2)
        return s2, s3


def build_backbone(arch: str, weights: str, seed: int) -> tuple[nn.Module, tuple[int, int]]:
    if arch == "tiny":
        torch.manual_seed(seed)
        return TinyStages(), TinyStages.CHANNELS
    if arch == "wide_resnet50_2":
        from torchvision import models

        if weights == "pretrained":
            try:
                resnet = models.wide_resnet50_2(
                    weights=models.Wide_ResNet50_2_Weights.IMAGENET1K_V1
                )
            except Exception as exc:
                raise WeightsUnavailable(
                    f"could not obtain pretrained weights: {exc}"
                ) from exc
        else:
            torch.manual_seed(seed)
            resnet = models.wide_resnet50_2(weights=None)
        return ResNetStages(resnet), (512, 1024)
    raise ExportError(f"unknown architecture {arch!r}")


def weights_hash(model: nn.Module) -> str:
    buf = io.BytesIO()
    for name, tensor in sorted(model.state_dict().items()):
        buf.write(name.encode())
        buf.write(np.ascontiguousarray(tensor.numpy()).tobytes())
    return hashlib.sha256(buf.getvalue()).hexdigest()


def export_backbone(
    arch: str,
    side: int,
    out_dir: str | Path,
    weights: str = "pretrained",
    seed: int = 0,
    fixture_seed: int = 0,
) -> dict:
    """Trace, save, and fixture one backbone; returns the manifest."""
    if side % 16 != 0:
        raise ExportError(f"side must be divisible by 16, got {side}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    model, channels = build_backbone(arch, weights, seed)
    model.eval()

    example = torch.randn(1, 3, side, side)
    with torch.no_grad():
        traced = torch.jit.trace(model, example)
        s2, s3 = model(example)

    manifest = {
        "arch": arch,
        "weights": weights,
        "weights_sha256": weights_hash(model),
        "format": "torchscript",
        "input_name": "input",
        "input_shape": [1, 3, side, side],
        "output_names": list(OUTPUT_NAMES),
        "output_shapes": [list(s2.shape), list(s3.shape)],
        "channels": list(channels),
        "strides": list(STRIDES),
        "side": side,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }

    model_path = out_dir / f"backbone_{arch}_{side}.pt"
    torch.jit.save(traced, str(model_path),
                   _extra_files={"manifest.json": json.dumps(manifest)})
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)

    rng = np.random.default_rng(fixture_seed)
    fixture = rng.standard_normal((1, 3, side, side)).astype(np.float32)
    with torch.no_grad():
        f2, f3 = model(torch.from_numpy(fixture))
    save_rsft(out_dir / "fixture_input.rsft", fixture)
    save_rsft(out_dir / "fixture_stage2.rsft", f2.numpy())
    save_rsft(out_dir / "fixture_stage3.rsft", f3.numpy())
    return manifest


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--arch", default="wide_resnet50_2",
                        choices=["wide_resnet50_2", "tiny"])
    parser.add_argument("--side", type=int, default=784)
    parser.add_argument("--out", default="models")
    parser.add_argument("--weights", default="pretrained",
                        choices=["pretrained", "random"])
    parser.add_argument("--seed", type=int, default=0,
                        help="weight init seed for --weights random")
    parser.add_argument("--fixture-seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        manifest = export_backbone(
            args.arch, args.side, args.out, args.weights, args.seed, args.fixture_seed
        )
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(manifest, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
