"""Region- and spatial-aware feature combination.

Two training-free transforms over a fused feature map, plus their sum:

* a depthwise local filter whose weights decay linearly with distance from
  the kernel center (unit-sum, so constant fields are preserved), and
* a parameter-free spatial self-attention that lets every position
  aggregate from all similar positions regardless of distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import InvalidConfig, OverflowGuard, ShapeError


@dataclass(frozen=True)
class RegionKernel:
    radius: int
    weights: np.ndarray  # (2r+1, 2r+1), nonnegative, sums to 1


def make_region_kernel(radius: int) -> RegionKernel:
    """Linear-decay kernel: pre-weight max(0, 1 - d/(r+1)), normalized.

    Distance d is the L2 norm of the pixel offset from the center;
    radius 0 degenerates to the 1x1 identity kernel.
    """
    if radius < 0:
        raise InvalidConfig(f"kernel radius must be >= 0, got {radius}")
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    dist = np.hypot(offsets[:, None], offsets[None, :])
    weights = np.maximum(0.0, 1.0 - dist / (radius + 1))
    weights /= weights.sum()
    return RegionKernel(radius, weights)


def region_filter(fmap: np.ndarray, kernel: RegionKernel) -> np.ndarray:
    """Depthwise 2-D correlation with replicate border padding.

    Output shape equals input shape. The r=0 kernel is an exact identity.
    """
    if fmap.ndim != 3:
        raise ShapeError(f"expected (h, w, c) feature map, got {fmap.shape}")
    if kernel.radius == 0:
        return fmap.copy()
    r = kernel.radius
    padded = np.pad(fmap.astype(np.float64), ((r, r), (r, r), (0, 0)), mode="edge")
    # correlation == convolution with the flipped kernel
    flipped = kernel.weights[::-1, ::-1, None]
    out = fftconvolve(padded, flipped, mode="valid", axes=(0, 1))
    return out.astype(np.float32)


def spatial_attention(fmap: np.ndarray, block_rows: int = 512) -> np.ndarray:
    """Self-attention over flattened spatial positions, no learned weights.

    Flattens the map to X of shape (h·w, c), forms logits X·Xᵀ, applies a
    max-shifted row softmax, and returns softmax(X·Xᵀ)·X reshaped back.
    Processed in row blocks so the full (h·w)² logit matrix never
    materializes; peak extra memory is block_rows × h·w values.
    """
    if fmap.ndim != 3:
        raise ShapeError(f"expected (h, w, c) feature map, got {fmap.shape}")
    if block_rows < 1:
        raise InvalidConfig(f"block_rows must be >= 1, got {block_rows}")
    h, w, c = fmap.shape
    x = np.ascontiguousarray(fmap.reshape(h * w, c), dtype=np.float32)
    out = np.empty_like(x)
    for start in range(0, h * w, block_rows):
        block = x[start : start + block_rows]
        with np.errstate(over="ignore"):  # non-finite logits are caught below
            logits = block @ x.T
        if not np.all(np.isfinite(logits)):
            raise OverflowGuard("non-finite attention logits")
        logits = logits.astype(np.float64)
        logits -= logits.max(axis=1, keepdims=True)
        weights = np.exp(logits)
        weights /= weights.sum(axis=1, keepdims=True)
        out[start : start + block_rows] = weights.astype(np.float32) @ x
    return out.reshape(h, w, c)


def combine(spatial: np.ndarray, region: np.ndarray) -> np.ndarray:
    """Elementwise sum of the spatial- and region-aware maps."""
    if spatial.shape != region.shape:
        raise ShapeError(f"shape mismatch: {spatial.shape} vs {region.shape}")
    return spatial + region


def apply_resc(
    fmap: np.ndarray,
    radius: int = 12,
    block_rows: int = 512,
    use_region: bool = True,
    use_spatial: bool = True,
) -> np.ndarray:
    """Full transform with ablation switches.

    Both branches off returns the input unchanged; a single branch returns
    that branch alone (no doubling).
    """
    if not use_region and not use_spatial:
        return fmap.copy()
    region = region_filter(fmap, make_region_kernel(radius)) if use_region else None
    spatial = spatial_attention(fmap, block_rows) if use_spatial else None
    if region is None:
        return spatial
    if spatial is None:
        return region
    return combine(spatial, region)
