"""Pixel-space layer algebra: compositing, analytic foreground recovery,
effect-region extraction, and lossless PNG clip storage.

Conventions used throughout the package:
  * Video:      float array (N, H, W, 3), values in [0, 1]
  * AlphaMatte: float array (N, H, W),    values in [0, 1]
  * BinaryMask: bool array  (N, H, W)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

DEFAULT_EPS = 1e-4
DEFAULT_BINARIZE_THRESHOLD = 0.1


class ManifestError(ValueError):
    """A clip manifest is missing or lacks a required field."""


def ensure_video(arr: np.ndarray, name: str = "video") -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 4 or arr.shape[-1] != 3:
        raise ValueError(f"{name} must have shape (N, H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ValueError(f"{name} must have N,H,W >= 1, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr.astype(np.float32, copy=False)


def ensure_matte(arr: np.ndarray, name: str = "alpha") -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (N, H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr.astype(np.float32, copy=False)


def ensure_mask(arr: np.ndarray, name: str = "mask") -> np.ndarray:
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise ValueError(f"{name} must have shape (N, H, W), got {arr.shape}")
    if arr.dtype != np.bool_:
        vals = np.unique(arr)
        if not np.all(np.isin(vals, (0, 1))):
            raise ValueError(f"{name} must be strictly binary")
        arr = arr.astype(bool)
    return arr


def _check_same_grid(*arrays: np.ndarray) -> None:
    shapes = {a.shape[:3] for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"frame grids disagree: {sorted(shapes)}")


def compose(fg: np.ndarray, alpha: np.ndarray, bg: np.ndarray) -> np.ndarray:
    """Alpha-composite a foreground over a background: alpha*fg + (1-alpha)*bg.

    The result is clamped to [0, 1] purely to absorb float rounding; inputs
    are validated so the clamp correction can never exceed 1e-6.
    """
    fg = ensure_video(fg, "fg")
    bg = ensure_video(bg, "bg")
    alpha = ensure_matte(alpha)
    _check_same_grid(fg, alpha[..., None], bg)
    a = alpha[..., None]
    out = a * fg + (1.0 - a) * bg
    return np.clip(out, 0.0, 1.0)


def recover_foreground(
    frame: np.ndarray, alpha: np.ndarray, bg: np.ndarray, eps: float = DEFAULT_EPS
) -> np.ndarray:
    """Analytically invert compositing: F = clip(I - (1-a)*B) / (a + eps).

    The numerator is clamped to [0, 1] before the division; the quotient is
    clamped again so the output stays a valid video. eps guards the division
    where alpha vanishes.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    frame = ensure_video(frame, "frame")
    bg = ensure_video(bg, "bg")
    alpha = ensure_matte(alpha)
    _check_same_grid(frame, alpha[..., None], bg)
    a = alpha[..., None]
    numer = np.clip(frame - (1.0 - a) * bg, 0.0, 1.0)
    return np.clip(numer / (a + eps), 0.0, 1.0)


def binarize(alpha: np.ndarray, thresh: float = DEFAULT_BINARIZE_THRESHOLD) -> np.ndarray:
    """Threshold a matte into a binary mask: pixel set iff alpha >= thresh."""
    if not 0.0 < thresh < 1.0:
        raise ValueError(f"thresh must lie in (0, 1), got {thresh}")
    alpha = ensure_matte(alpha)
    return alpha >= thresh


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Per-frame morphological dilation with a square (2r+1)-side element."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    mask = ensure_mask(mask)
    if radius == 0:
        return mask.copy()
    side = 2 * radius + 1
    out = ndimage.maximum_filter(
        mask.astype(np.uint8), size=(1, side, side), mode="constant", cval=0
    )
    return out.astype(bool)


def default_dilation_radius(height: int, width: int) -> int:
    """Default effect-mask dilation: 2% of the longer side, rounded up."""
    return int(math.ceil(0.02 * max(height, width)))


def extract_effect_mask(
    alpha: np.ndarray,
    obj_mask: np.ndarray,
    thresh: float = DEFAULT_BINARIZE_THRESHOLD,
    radius: int | None = None,
) -> np.ndarray:
    """Isolate effect pixels: binarize(alpha) minus the dilated object mask."""
    alpha = ensure_matte(alpha)
    obj_mask = ensure_mask(obj_mask, "obj_mask")
    _check_same_grid(alpha, obj_mask)
    if radius is None:
        radius = default_dilation_radius(alpha.shape[1], alpha.shape[2])
    return binarize(alpha, thresh) & ~dilate(obj_mask, radius)


@dataclass
class LayerDecomposition:
    """A (foreground, alpha, background) triple sharing one frame grid."""

    foreground: np.ndarray
    alpha: np.ndarray
    background: np.ndarray

    def __post_init__(self) -> None:
        self.foreground = ensure_video(self.foreground, "foreground")
        self.alpha = ensure_matte(self.alpha)
        self.background = ensure_video(self.background, "background")
        _check_same_grid(self.foreground, self.alpha[..., None], self.background)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.alpha.shape

    def recompose(self) -> np.ndarray:
        return compose(self.foreground, self.alpha, self.background)

    def save(self, root: Path | str) -> None:
        root = Path(root)
        write_frames(root / "foreground", self.foreground, role="video")
        write_frames(root / "alpha", self.alpha, role="alpha")
        write_frames(root / "background", self.background, role="video")

    @classmethod
    def load(cls, root: Path | str) -> "LayerDecomposition":
        root = Path(root)
        return cls(
            foreground=read_frames(root / "foreground"),
            alpha=read_frames(root / "alpha"),
            background=read_frames(root / "background"),
        )


# --- PNG clip storage -------------------------------------------------------
#
# A clip directory holds %04d.png frames (8-bit RGB for videos, 8-bit
# grayscale for mattes/masks) plus manifest.json {n_frames, height, width,
# role}. Loading maps back to [0, 1] via x / 255.

_ROLES = ("video", "alpha", "mask")


def write_frames(directory: Path | str, arr: np.ndarray, role: str) -> None:
    if role not in _ROLES:
        raise ValueError(f"role must be one of {_ROLES}, got {role!r}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if role == "video":
        arr = ensure_video(arr)
        data = np.round(arr * 255.0).astype(np.uint8)
    elif role == "alpha":
        arr = ensure_matte(arr)
        data = np.round(arr * 255.0).astype(np.uint8)
    else:
        arr = ensure_mask(arr)
        data = arr.astype(np.uint8) * 255
    n, h, w = arr.shape[:3]
    for i in range(n):
        Image.fromarray(data[i]).save(directory / f"{i:04d}.png")
    manifest = {"n_frames": int(n), "height": int(h), "width": int(w), "role": role}
    (directory / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    )


def read_frames(directory: Path | str) -> np.ndarray:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise ManifestError(f"missing manifest.json in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"corrupt manifest.json in {directory}: {exc}") from exc
    for field in ("n_frames", "height", "width", "role"):
        if field not in manifest:
            raise ManifestError(f"manifest.json in {directory} missing field {field!r}")
    role = manifest["role"]
    if role not in _ROLES:
        raise ManifestError(f"manifest.json in {directory} has unknown role {role!r}")
    frames = []
    for i in range(manifest["n_frames"]):
        path = directory / f"{i:04d}.png"
        if not path.exists():
            raise ManifestError(f"missing frame file {path}")
        frames.append(np.asarray(Image.open(path)))
    data = np.stack(frames, axis=0)
    if data.shape[1] != manifest["height"] or data.shape[2] != manifest["width"]:
        raise ManifestError(
            f"frame size {data.shape[1:3]} disagrees with manifest in {directory}"
        )
    if role == "video":
        return (data.astype(np.float32) / 255.0).reshape(
            manifest["n_frames"], manifest["height"], manifest["width"], 3
        )
    if role == "alpha":
        return data.astype(np.float32) / 255.0
    return data >= 128
