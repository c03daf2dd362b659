"""Resampling helpers shared by ingest, feature fusion, and score upsampling.

Bilinear resizing uses OpenCV's half-pixel sampling convention (the
corner-aligned variant is deliberately not used), which preserves constant
fields. OpenCV caps the channel count per call, so wide feature maps are
resized in channel chunks.
"""

from __future__ import annotations

import cv2
import numpy as np

# cv2.resize rejects images beyond its per-Mat channel cap (128 in OpenCV 5)
_MAX_CV_CHANNELS = 128


def bilinear_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize a (h, w) or (h, w, c) array bilinearly, half-pixel centers."""
    if arr.ndim == 2:
        return cv2.resize(arr, (out_w, out_h), interpolation=cv2.INTER_LINEAR)
    if arr.ndim != 3:
        raise ValueError(f"expected rank 2 or 3, got rank {arr.ndim}")
    channels = arr.shape[2]
    if channels <= _MAX_CV_CHANNELS:
        out = cv2.resize(arr, (out_w, out_h), interpolation=cv2.INTER_LINEAR)
        return out.reshape(out_h, out_w, channels)
    parts = []
    for start in range(0, channels, _MAX_CV_CHANNELS):
        chunk = np.ascontiguousarray(arr[:, :, start : start + _MAX_CV_CHANNELS])
        resized = cv2.resize(chunk, (out_w, out_h), interpolation=cv2.INTER_LINEAR)
        parts.append(resized.reshape(out_h, out_w, -1))
    return np.concatenate(parts, axis=2)


def nearest_resize(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize; keeps masks binary."""
    return cv2.resize(arr, (out_w, out_h), interpolation=cv2.INTER_NEAREST)
