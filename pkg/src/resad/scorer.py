"""Anomaly scoring: exact nearest-bank distances, upsampling, image score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .bank import CompressedBank
from .errors import EmptyBank, InvalidConfig, ShapeError
from .imageops import bilinear_resize


@dataclass
class AnomalyMap:
    data: np.ndarray  # (H, W) float32, nonnegative
    image_score: float


def nearest_distance(
    cbank: CompressedBank,
    fmap: np.ndarray,
    query_block: int = 1024,
    bank_block: int = 8192,
) -> np.ndarray:
    """Exact minimum Euclidean distance from each position to the bank.

    Distances are computed blockwise via ||a-b||² = ||a||² + ||b||² - 2a·b;
    negative round-off is clamped to zero before the square root.
    """
    if fmap.ndim != 3:
        raise ShapeError(f"expected (h, w, c) feature map, got {fmap.shape}")
    h, w, c = fmap.shape
    bank = cbank.vectors
    if bank.shape[0] == 0:
        raise EmptyBank("compressed bank has no rows")
    if bank.shape[1] != c:
        raise ShapeError(f"bank has {bank.shape[1]} channels, features have {c}")

    queries = np.ascontiguousarray(fmap.reshape(h * w, c), dtype=np.float64)
    bank_sq = np.einsum("ij,ij->i", bank, bank, dtype=np.float64)
    out = np.empty(h * w, dtype=np.float64)
    for qs in range(0, h * w, query_block):
        q = queries[qs : qs + query_block]
        q_sq = np.einsum("ij,ij->i", q, q)
        best = np.full(q.shape[0], np.inf)
        for bs in range(0, bank.shape[0], bank_block):
            b = bank[bs : bs + bank_block]
            # float64 cross terms: exact self-matches must come out ~0
            dots = q @ b.T.astype(np.float64)
            d2 = q_sq[:, None] + bank_sq[None, bs : bs + b.shape[0]] - 2.0 * dots
            np.minimum(best, d2.min(axis=1), out=best)
        out[qs : qs + q.shape[0]] = best
    np.maximum(out, 0.0, out=out)
    return np.sqrt(out).reshape(h, w).astype(np.float32)


def upsample_scores(
    dmap: np.ndarray, height: int, width: int, smooth_sigma: float = 0.0
) -> AnomalyMap:
    """Bilinearly interpolate a distance map to full resolution.

    Optional Gaussian smoothing (sigma > 0) is applied after interpolation.
    The image-level score is the maximum of the final map.
    """
    if dmap.ndim != 2:
        raise ShapeError(f"expected (h, w) distance map, got {dmap.shape}")
    if height < dmap.shape[0] or width < dmap.shape[1]:
        raise InvalidConfig("target size must be at least the distance-map size")
    if smooth_sigma < 0:
        raise InvalidConfig(f"smooth_sigma must be >= 0, got {smooth_sigma}")
    if (height, width) == dmap.shape:
        data = dmap.astype(np.float32).copy()
    else:
        data = bilinear_resize(dmap.astype(np.float32), height, width)
    if smooth_sigma > 0:
        data = gaussian_filter(data, sigma=smooth_sigma).astype(np.float32)
    np.maximum(data, 0.0, out=data)
    return AnomalyMap(data, float(data.max()))


def image_score(amap: AnomalyMap) -> float:
    """Image-level anomaly score: the maximum of the anomaly map."""
    if amap.data.size == 0:
        raise ShapeError("empty anomaly map")
    return float(amap.data.max())
