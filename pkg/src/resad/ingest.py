"""Dataset loading: image/mask decoding, preprocessing, and layout indexing.

Supported dataset layouts (all rooted at ``--data-root``)::

    generic                     idrid / adam
    ├── train/normal/           ├── train/normal/
    ├── test/normal/            ├── test/normal/
    ├── test/abnormal/          ├── test/abnormal/
    └── test/masks/             └── test/masks/<KIND>/
        <stem>.png  or              <stem>*.png
        <stem>/<anything>.png

For ``idrid`` the lesion kinds are MA, SE, EX, HE; for ``adam`` they are
drusen, exudate, hemorrhage, scar, other. Mask files are matched to an
abnormal image by filename-stem prefix.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, EmptySplit, InvalidConfig, LayoutError, UnsupportedFormat
from .imageops import bilinear_resize, nearest_resize

# Per-channel statistics of the backbone's pretraining corpus.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp"}

LESION_KINDS = {
    "idrid": ("MA", "SE", "EX", "HE"),
    "adam": ("drusen", "exudate", "hemorrhage", "scar", "other"),
}


@dataclass(frozen=True)
class IndexEntry:
    image_path: str
    split: str  # "train" | "test"
    label: str  # "normal" | "abnormal"
    mask_paths: tuple[str, ...] = ()


@dataclass
class DatasetIndex:
    entries: list[IndexEntry] = field(default_factory=list)

    def subset(self, split: str, label: str | None = None) -> list[IndexEntry]:
        return [
            e
            for e in self.entries
            if e.split == split and (label is None or e.label == label)
        ]

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries:
            key = f"{e.split}/{e.label}"
            out[key] = out.get(key, 0) + 1
        return out

    def to_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                record = asdict(e)
                record["mask_paths"] = list(e.mask_paths)
                fh.write(json.dumps(record) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "DatasetIndex":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                record = json.loads(line)
                record["mask_paths"] = tuple(record.get("mask_paths", ()))
                entries.append(IndexEntry(**record))
        return cls(entries)


def load_image(path: str | Path) -> np.ndarray:
    """Decode an image file into an (h, w, 3) uint8 array.

    Grayscale inputs are replicated across the three channels.
    """
    with open(path, "rb") as fh:  # missing/unreadable surfaces as OSError
        try:
            with Image.open(fh) as img:
                img = img.convert("RGB")
                return np.asarray(img, dtype=np.uint8)
        except UnidentifiedImageError as exc:
            raise UnsupportedFormat(f"{path}: {exc}") from exc
        except OSError as exc:
            raise DecodeError(f"{path}: {exc}") from exc


def preprocess(
    img: np.ndarray,
    side: int = 784,
    mean: Sequence[float] = IMAGENET_MEAN,
    std: Sequence[float] = IMAGENET_STD,
) -> np.ndarray:
    """Resize to side×side, scale to [0, 1], normalize per channel.

    Returns a channel-first (3, side, side) float32 tensor. Non-square
    inputs are resized anisotropically: the target is a single square size.
    """
    if side < 32:
        raise InvalidConfig(f"side must be >= 32, got {side}")
    mean = np.asarray(mean, dtype=np.float32)
    std = np.asarray(std, dtype=np.float32)
    if mean.shape != (3,) or std.shape != (3,):
        raise InvalidConfig("mean and std must have 3 components")
    if np.any(std == 0):
        raise InvalidConfig("std components must be nonzero")
    data = np.asarray(img, dtype=np.float32)
    if data.ndim != 3 or data.shape[2] != 3:
        raise InvalidConfig(f"expected (h, w, 3) image, got {data.shape}")
    resized = bilinear_resize(data, side, side)
    scaled = resized / 255.0
    normalized = (scaled - mean) / std
    return np.ascontiguousarray(normalized.transpose(2, 0, 1), dtype=np.float32)


def load_mask(
    paths: str | Path | Iterable[str | Path],
    side: int,
    union: bool = True,
) -> np.ndarray:
    """Load one or more lesion masks as a binary (side, side) uint8 array.

    Any nonzero source pixel counts as lesion. With ``union`` the masks are
    OR-combined; otherwise exactly one path is expected.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    paths = list(paths)
    if not paths:
        raise InvalidConfig("load_mask requires at least one path")
    if not union and len(paths) > 1:
        raise InvalidConfig("multiple masks given with union=False")
    combined = np.zeros((side, side), dtype=np.uint8)
    for p in paths:
        with open(p, "rb") as fh:
            try:
                with Image.open(fh) as img:
                    raw = np.asarray(img.convert("L"))
            except UnidentifiedImageError as exc:
                raise UnsupportedFormat(f"{p}: {exc}") from exc
            except OSError as exc:
                raise DecodeError(f"{p}: {exc}") from exc
        binary = (raw != 0).astype(np.uint8)
        resized = nearest_resize(binary, side, side)
        combined |= resized
    return combined


def _sorted_images(directory: Path) -> list[Path]:
    return sorted(
        p for p in directory.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


def _masks_for(stem: str, masks_dir: Path, layout: str) -> tuple[str, ...]:
    found: list[Path] = []
    if layout == "generic":
        subdir = masks_dir / stem
        if subdir.is_dir():
            found.extend(_sorted_images(subdir))
        found.extend(
            p for p in _sorted_images(masks_dir) if p.stem == stem or p.stem.startswith(stem + "_")
        )
    else:
        for kind in LESION_KINDS[layout]:
            kind_dir = masks_dir / kind
            if not kind_dir.is_dir():
                continue
            found.extend(p for p in _sorted_images(kind_dir) if p.stem.startswith(stem))
    return tuple(str(p) for p in sorted(found))


def index_dataset(root: str | Path, layout: str = "generic") -> DatasetIndex:
    """Build a deterministic, lexicographically sorted dataset manifest."""
    if layout not in ("generic", "idrid", "adam"):
        raise InvalidConfig(f"unknown layout {layout!r}")
    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f"dataset root {root} does not exist")
    required = [root / "train" / "normal", root / "test" / "normal", root / "test" / "abnormal"]
    missing = [str(d) for d in required if not d.is_dir()]
    if missing:
        raise LayoutError(f"missing required directories: {', '.join(missing)}")
    masks_dir = root / "test" / "masks"

    entries: list[IndexEntry] = []
    for path in _sorted_images(root / "train" / "normal"):
        entries.append(IndexEntry(str(path), "train", "normal"))
    for path in _sorted_images(root / "test" / "normal"):
        entries.append(IndexEntry(str(path), "test", "normal"))
    for path in _sorted_images(root / "test" / "abnormal"):
        masks = _masks_for(path.stem, masks_dir, layout) if masks_dir.is_dir() else ()
        entries.append(IndexEntry(str(path), "test", "abnormal", masks))

    index = DatasetIndex(entries)
    counts = index.counts()
    if counts.get("train/normal", 0) == 0:
        raise EmptySplit("train/normal split is empty")
    if counts.get("test/normal", 0) + counts.get("test/abnormal", 0) == 0:
        raise EmptySplit("test split is empty")
    return index
