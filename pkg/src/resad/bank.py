"""Memory bank of pixel-level normal features, and its coreset compression.

The bank gathers every spatial feature vector from every training image.
Compression selects a small covering subset by greedy k-center (farthest
point first); selection distances are computed in a sparse random
projection of the features, but the stored rows are the original vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import (
    ConfigFingerprintMismatch,
    EmptyInput,
    InvalidConfig,
    ShapeError,
    VersionMismatch,
)
from .tensorio import load_tensor, save_tensor

BANK_META_VERSION = 1


@dataclass
class MemoryBank:
    vectors: np.ndarray  # (n, c) float32
    provenance: np.ndarray  # (n, 3) int64: image_index, y, x
    map_shape: tuple[int, int]
    image_count: int

    @property
    def channels(self) -> int:
        return self.vectors.shape[1]


@dataclass
class Projection:
    matrix: sparse.csr_matrix  # (c, d), entries in {+s, -s, 0}
    dim: int
    density: float
    seed: int
    eps: float

    def apply(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors @ self.matrix, dtype=np.float32)


@dataclass
class CompressedBank:
    vectors: np.ndarray  # (m, c) float32, original-space rows
    selected_indices: np.ndarray  # (m,) int64, strictly increasing
    coreset_fraction: float
    provenance: np.ndarray  # (m, 3) int64
    map_shape: tuple[int, int]
    image_count: int
    selection_order: np.ndarray  # (m,) int64, greedy pick order
    covering_radius: float  # projected-space radius after the last pick
    meta: dict = field(default_factory=dict)

    @property
    def channels(self) -> int:
        return self.vectors.shape[1]


def collect_features(maps: Sequence[np.ndarray]) -> MemoryBank:
    """Stack per-image feature maps into one bank, rows in (image, y, x) order."""
    maps = list(maps)
    if not maps:
        raise EmptyInput("no feature maps given")
    shape = maps[0].shape
    if len(shape) != 3:
        raise ShapeError(f"expected (h, w, c) maps, got {shape}")
    for i, m in enumerate(maps):
        if m.shape != shape:
            raise ShapeError(f"map {i} has shape {m.shape}, expected {shape}")
    h, w, c = shape
    vectors = np.concatenate(
        [np.ascontiguousarray(m, dtype=np.float32).reshape(h * w, c) for m in maps]
    )
    ys, xs = np.divmod(np.arange(h * w, dtype=np.int64), w)
    provenance = np.empty((len(maps) * h * w, 3), dtype=np.int64)
    for k in range(len(maps)):
        rows = slice(k * h * w, (k + 1) * h * w)
        provenance[rows, 0] = k
        provenance[rows, 1] = ys
        provenance[rows, 2] = xs
    return MemoryBank(vectors, provenance, (h, w), len(maps))


def jl_dimension(n: int, eps: float) -> int:
    """Johnson-Lindenstrauss target dimension for n points at distortion eps."""
    return int(np.ceil(4.0 * np.log(n) / (eps**2 / 2.0 - eps**3 / 3.0)))


def fit_projection(bank: MemoryBank, eps: float, seed: int) -> Projection:
    """Seeded sparse sign projection sized by the JL bound, clamped to [1, c]."""
    if not 0.0 < eps < 1.0:
        raise InvalidConfig(f"eps must be in (0, 1), got {eps}")
    n, c = bank.vectors.shape
    if n < 2:
        raise InvalidConfig("projection needs at least 2 bank rows")
    dim = min(max(jl_dimension(n, eps), 1), c)
    density = 1.0 / np.sqrt(c)
    scale = np.sqrt(1.0 / (dim * density))
    rng = np.random.default_rng(seed)
    mask = rng.random((c, dim)) < density
    signs = rng.integers(0, 2, size=(c, dim)) * 2 - 1
    dense = np.where(mask, signs * scale, 0.0).astype(np.float32)
    return Projection(sparse.csr_matrix(dense), dim, density, seed, eps)


def _sq_dist_to_row(projected: np.ndarray, row_sq: np.ndarray, idx: int) -> np.ndarray:
    dots = projected @ projected[idx]
    d2 = row_sq + row_sq[idx] - 2.0 * dots.astype(np.float64)
    np.maximum(d2, 0.0, out=d2)
    return d2


def coreset_select(
    bank: MemoryBank,
    proj: Projection,
    fraction: float,
    seed: int | None = None,
) -> CompressedBank:
    """Greedy k-center selection of round(fraction·n) rows.

    Starts at row 0 (or a seeded random row), then repeatedly adds the row
    farthest from the selected set, ties broken by lowest row index. The
    per-row min-distance array is updated incrementally, O(n) per step.
    """
    if not 0.0 < fraction <= 1.0:
        raise InvalidConfig(f"fraction must be in (0, 1], got {fraction}")
    n = bank.vectors.shape[0]
    if n < 1:
        raise EmptyInput("empty bank")
    m = max(1, int(np.floor(fraction * n + 0.5)))
    projected = proj.apply(bank.vectors)
    row_sq = np.einsum("ij,ij->i", projected, projected, dtype=np.float64)

    if seed is None:
        start = 0
    else:
        start = int(np.random.default_rng(seed).integers(n))
    order = np.empty(m, dtype=np.int64)
    order[0] = start
    min_d2 = _sq_dist_to_row(projected, row_sq, start)
    for step in range(1, m):
        pick = int(np.argmax(min_d2))  # argmax returns the lowest tied index
        order[step] = pick
        np.minimum(min_d2, _sq_dist_to_row(projected, row_sq, pick), out=min_d2)
    covering_radius = float(np.sqrt(min_d2.max())) if m < n else 0.0

    selected = np.sort(order)
    return CompressedBank(
        vectors=bank.vectors[selected].copy(),
        selected_indices=selected,
        coreset_fraction=fraction,
        provenance=bank.provenance[selected].copy(),
        map_shape=bank.map_shape,
        image_count=bank.image_count,
        selection_order=order,
        covering_radius=covering_radius,
        meta={"projection_seed": proj.seed, "eps": proj.eps, "dim": proj.dim,
              "coreset_seed": seed},
    )


def _meta_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".meta.json")


def save_bank(cbank: CompressedBank, path: str | Path, fingerprint: dict) -> None:
    """Persist vectors in the RSFT container plus a JSON metadata sidecar."""
    save_tensor(path, cbank.vectors)
    meta = {
        "version": BANK_META_VERSION,
        "fingerprint": fingerprint,
        "coreset_fraction": cbank.coreset_fraction,
        "map_shape": list(cbank.map_shape),
        "image_count": cbank.image_count,
        "selected_indices": cbank.selected_indices.tolist(),
        "selection_order": cbank.selection_order.tolist(),
        "covering_radius": cbank.covering_radius,
        **cbank.meta,
    }
    with open(_meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh)


def load_bank(path: str | Path, fingerprint: dict | None = None) -> CompressedBank:
    """Load a persisted bank; verify the config fingerprint when given."""
    vectors = load_tensor(path)
    meta_file = _meta_path(path)
    if not meta_file.exists():
        raise VersionMismatch(f"missing bank metadata {meta_file}")
    with open(meta_file, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("version") != BANK_META_VERSION:
        raise VersionMismatch(f"unsupported bank metadata version {meta.get('version')}")
    if fingerprint is not None and meta["fingerprint"] != fingerprint:
        raise ConfigFingerprintMismatch(
            f"bank was built with {meta['fingerprint']}, expected {fingerprint}"
        )
    selected = np.asarray(meta["selected_indices"], dtype=np.int64)
    h, w = meta["map_shape"]
    image_count = meta["image_count"]
    ys, xs = np.divmod(selected % (h * w), w)
    provenance = np.stack([selected // (h * w), ys, xs], axis=1)
    return CompressedBank(
        vectors=vectors,
        selected_indices=selected,
        coreset_fraction=meta["coreset_fraction"],
        provenance=provenance,
        map_shape=(h, w),
        image_count=image_count,
        selection_order=np.asarray(meta["selection_order"], dtype=np.int64),
        covering_radius=meta["covering_radius"],
        meta={k: meta.get(k) for k in ("projection_seed", "eps", "dim", "coreset_seed")},
    )
