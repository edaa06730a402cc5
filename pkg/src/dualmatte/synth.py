"""Synthetic clip generator with full ground truth.

Each clip composites a procedurally generated sprite (plus an optional
pseudo-shadow) over a static procedural background, with eased affine
motion between two sampled poses. Emitted ground truth: composited video,
clean background, combined alpha (object + shadow), binary object mask,
shadow matte, and per-frame motion states.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .media import ManifestError, binarize, compose, dilate, ensure_matte, ensure_video, read_frames, write_frames

GENERATOR_VERSION = "1"


@dataclass
class AffineState:
    """One pose of the foreground: translation is a fraction of the clip
    width/height, rotation and shear are degrees, scale is a multiplier."""

    tx: float
    ty: float
    rotation_deg: float
    scale: float
    shear_deg: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "AffineState":
        return cls(**d)


@dataclass
class ShadowParams:
    v_compress: float
    h_shear_deg: float
    opacity: float
    blur_radius: int

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ShadowParams":
        return cls(**d)


# Hard bounds each sampled range must stay within.
_RANGE_BOUNDS = {
    "tx_range": (0.15, 0.30),
    "ty_range": (-0.10, 0.10),
    "rotation_range": (-5.0, 5.0),
    "scale_range": (0.95, 1.05),
    "shear_range": (-3.0, 3.0),
    "padding_range": (0.3, 0.5),
    "sprite_frac_range": (0.2, 0.8),
    "shadow_v_compress_range": (0.10, 0.30),
    "shadow_shear_range": (30.0, 60.0),
    "shadow_opacity_range": (0.30, 0.70),
}


@dataclass
class GeneratorConfig:
    """Every sampled parameter is an explicit (lo, hi) range."""

    frames: int = 8
    height: int = 16
    width: int = 16
    tx_range: tuple[float, float] = (0.15, 0.30)
    ty_range: tuple[float, float] = (-0.05, 0.05)
    rotation_range: tuple[float, float] = (-5.0, 5.0)
    scale_range: tuple[float, float] = (0.95, 1.05)
    shear_range: tuple[float, float] = (-3.0, 3.0)
    padding_range: tuple[float, float] = (0.3, 0.5)
    sprite_frac_range: tuple[float, float] = (0.35, 0.60)
    shadow_enabled: bool = True
    shadow_v_compress_range: tuple[float, float] = (0.10, 0.30)
    shadow_shear_range: tuple[float, float] = (30.0, 60.0)
    shadow_opacity_range: tuple[float, float] = (0.30, 0.70)
    shadow_blur_radius: int = 2
    bg_noise: float = 0.05
    object_margin: int = 1  # shadow is zeroed inside this dilation of the object

    def validate(self) -> None:
        if self.frames < 1 or self.height < 1 or self.width < 1:
            raise ValueError("frames/height/width must be >= 1")
        if self.shadow_blur_radius < 1:
            raise ValueError(
                f"shadow_blur_radius: must be >= 1, got {self.shadow_blur_radius}"
            )
        for name, (blo, bhi) in _RANGE_BOUNDS.items():
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range ({lo}, {hi})")
            if lo < blo or hi > bhi:
                raise ValueError(
                    f"{name}: values must lie within [{blo}, {bhi}], got ({lo}, {hi})"
                )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generator config fields: {sorted(unknown)}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kwargs)


@dataclass
class TrainingSample:
    composite: np.ndarray
    background: np.ndarray
    alpha_full: np.ndarray
    obj_mask: np.ndarray
    shadow_matte: np.ndarray
    motion: list[AffineState]
    seed: int | None = None
    shadow_params: ShadowParams | None = None
    # Exact premultiplied layer color (shadow rendered black); kept in memory
    # only, never serialized, so compose(foreground, alpha_full, background)
    # reproduces the composite to float precision.
    foreground: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.alpha_full.shape


def smoothstep(u: float) -> float:
    return 3.0 * u * u - 2.0 * u * u * u


def ease_interpolate(a: AffineState, b: AffineState, u: float) -> AffineState:
    """Fieldwise smoothstep blend between two poses; u=0 -> a, u=1 -> b."""
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"u must lie in [0, 1], got {u}")
    s = smoothstep(u)
    blend = lambda x, y: (1.0 - s) * x + s * y
    return AffineState(
        tx=blend(a.tx, b.tx),
        ty=blend(a.ty, b.ty),
        rotation_deg=blend(a.rotation_deg, b.rotation_deg),
        scale=blend(a.scale, b.scale),
        shear_deg=blend(a.shear_deg, b.shear_deg),
    )


def _draw(rng: np.random.Generator, lohi: tuple[float, float]) -> float:
    return float(rng.uniform(lohi[0], lohi[1]))


def sample_affine_pair(
    rng: np.random.Generator, cfg: GeneratorConfig | None = None
) -> tuple[AffineState, AffineState]:
    """Draw two poses; their horizontal translations get opposite signs."""
    cfg = cfg or GeneratorConfig()
    sign_a = 1.0 if rng.random() < 0.5 else -1.0
    states = []
    for sign in (sign_a, -sign_a):
        states.append(
            AffineState(
                tx=sign * _draw(rng, cfg.tx_range),
                ty=_draw(rng, cfg.ty_range),
                rotation_deg=_draw(rng, cfg.rotation_range),
                scale=_draw(rng, cfg.scale_range),
                shear_deg=_draw(rng, cfg.shear_range),
            )
        )
    return states[0], states[1]


def sample_shadow_params(rng: np.random.Generator, cfg: GeneratorConfig) -> ShadowParams:
    return ShadowParams(
        v_compress=_draw(rng, cfg.shadow_v_compress_range),
        h_shear_deg=_draw(rng, cfg.shadow_shear_range),
        opacity=_draw(rng, cfg.shadow_opacity_range),
        blur_radius=cfg.shadow_blur_radius,
    )


# --- affine geometry --------------------------------------------------------


def affine_matrix(
    state: AffineState, width: int, height: int, center: tuple[float, float]
) -> np.ndarray:
    """Forward 3x3 pixel map for a pose: rotate/shear/scale about `center`
    (x, y order), then translate by (tx*width, ty*height)."""
    cx, cy = center
    rot = math.radians(state.rotation_deg)
    sh = math.tan(math.radians(state.shear_deg))
    c, s = math.cos(rot), math.sin(rot)
    lin = np.array([[c, -s], [s, c]]) @ np.array([[1.0, sh], [0.0, 1.0]]) * state.scale
    m = np.eye(3)
    m[:2, :2] = lin
    m[:2, 2] = [
        state.tx * width + cx - lin[0, 0] * cx - lin[0, 1] * cy,
        state.ty * height + cy - lin[1, 0] * cx - lin[1, 1] * cy,
    ]
    return m


def warp_affine(img: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Warp an (H, W) or (H, W, C) image by a forward map, bilinear sampling
    with zero fill outside the source."""
    h, w = img.shape[:2]
    inv = np.linalg.inv(matrix)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    return _sample_bilinear(img, sy, sx)


def _sample_bilinear(img: np.ndarray, sy: np.ndarray, sx: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    fy = (sy - y0).astype(np.float32)
    fx = (sx - x0).astype(np.float32)

    def fetch(yy, xx):
        valid = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        vals = img[yc, xc]
        if img.ndim == 3:
            return vals * valid[..., None]
        return vals * valid

    if img.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = fetch(y0, x0) * (1 - fx) + fetch(y0, x0 + 1) * fx
    bot = fetch(y0 + 1, x0) * (1 - fx) + fetch(y0 + 1, x0 + 1) * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)


# --- shadow synthesis -------------------------------------------------------


def synth_shadow(
    alpha: np.ndarray, params: ShadowParams, anchor: tuple[int, int]
) -> np.ndarray:
    """Render a pseudo-shadow from a matte: compress its support vertically
    to `v_compress` of its height about the anchor row, shear horizontally,
    scale by opacity, box-blur. Nearest-neighbour resampling keeps the
    un-blurred silhouette piecewise exact."""
    alpha = ensure_matte(alpha)
    if params.blur_radius < 0:
        raise ValueError("blur_radius must be >= 0")
    n, h, w = alpha.shape
    a_r = float(anchor[0])
    tan_sh = math.tan(math.radians(params.h_shear_deg))
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    src_y = np.rint(a_r + (ys - a_r) / params.v_compress).astype(int)
    src_x = np.rint(xs - tan_sh * (ys - a_r)).astype(int)
    valid = (src_y >= 0) & (src_y < h) & (src_x >= 0) & (src_x < w)
    syc = np.clip(src_y, 0, h - 1)
    sxc = np.clip(src_x, 0, w - 1)
    out = np.zeros_like(alpha)
    for f in range(n):
        out[f] = alpha[f][syc, sxc] * valid * params.opacity
    if params.blur_radius >= 1:
        side = 2 * params.blur_radius + 1
        out = ndimage.uniform_filter(out, size=(1, side, side), mode="constant").astype(
            np.float32
        )
    return out


# --- procedural content -----------------------------------------------------

SPRITE_KINDS = ("square", "disk", "capsule")


def make_sprite(
    rng: np.random.Generator, cfg: GeneratorConfig, kind: str | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Procedural soft-edged sprite: (color (s,s,3), alpha (s,s))."""
    kind = kind or SPRITE_KINDS[int(rng.integers(0, len(SPRITE_KINDS)))]
    frac = _draw(rng, cfg.sprite_frac_range)
    size = max(4, int(round(frac * min(cfg.height, cfg.width))))
    c = (size - 1) / 2.0
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    if kind == "square":
        d = np.maximum(np.abs(xs - c), np.abs(ys - c)) - (size / 2.0 - 1.0)
    elif kind == "disk":
        d = np.hypot(xs - c, ys - c) - (size / 2.0 - 1.0)
    elif kind == "capsule":
        half = size / 2.0 - 1.0
        px = np.clip(xs - c, -half / 2.0, half / 2.0)
        d = np.hypot(xs - c - px, ys - c) - half / 2.0
    else:
        raise ValueError(f"unknown sprite kind {kind!r}")
    alpha = np.clip(0.5 - d, 0.0, 1.0).astype(np.float32)
    base = rng.uniform(0.15, 0.95, size=3)
    shade = (0.85 + 0.3 * xs / max(1, size - 1))[..., None]
    color = np.clip(base[None, None, :] * shade, 0.0, 1.0).astype(np.float32)
    return color, alpha


def make_background(
    rng: np.random.Generator, height: int, width: int, noise: float = 0.05
) -> np.ndarray:
    """Static background: random linear color gradient plus smooth noise."""
    c0 = rng.uniform(0.05, 0.95, size=3)
    c1 = rng.uniform(0.05, 0.95, size=3)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    proj = xs * math.cos(theta) + ys * math.sin(theta)
    g = (proj - proj.min()) / max(float(np.ptp(proj)), 1e-9)
    bg = c0[None, None, :] * (1.0 - g[..., None]) + c1[None, None, :] * g[..., None]
    if noise > 0:
        rough = rng.normal(0.0, 1.0, size=(height, width, 3))
        bg = bg + ndimage.gaussian_filter(rough, sigma=(1.5, 1.5, 0)) * noise
    return np.clip(bg, 0.0, 1.0).astype(np.float32)


# --- clip assembly ----------------------------------------------------------


def render_clip(
    fg_color: np.ndarray,
    fg_alpha: np.ndarray,
    bg: np.ndarray,
    rng: np.random.Generator,
    cfg: GeneratorConfig,
    seed: int | None = None,
) -> TrainingSample:
    """Animate a sprite over a static background and record all ground truth.

    The sprite is embedded on a horizontally padded canvas, moved per-frame
    by the eased blend of two sampled poses; its shadow translates rigidly
    with it and darkens the background before the object is composited.
    """
    n, h, w = cfg.frames, cfg.height, cfg.width
    pad_total = int(round(_draw(rng, cfg.padding_range) * w))
    pad_left = int(rng.integers(0, pad_total + 1))
    wc = w + pad_total
    if bg.shape[0] < h or bg.shape[1] < wc:
        raise ValueError(
            f"background {bg.shape[:2]} smaller than required canvas ({h}, {wc})"
        )
    canvas_bg = np.asarray(bg, dtype=np.float32)[:h, :wc]

    # sprite centered on the target window so frame and sprite centers align
    sh, sw = fg_alpha.shape
    if sh > h or sw > wc:
        raise ValueError(f"sprite {(sh, sw)} larger than canvas ({h}, {wc})")
    cy = (h - 1) / 2.0
    cx = pad_left + (w - 1) / 2.0
    top = int(round(cy - (sh - 1) / 2.0))
    left = int(round(cx - (sw - 1) / 2.0))
    base_alpha = np.zeros((h, wc), dtype=np.float32)
    base_color = np.zeros((h, wc, 3), dtype=np.float32)
    base_alpha[top : top + sh, left : left + sw] = fg_alpha
    base_color[top : top + sh, left : left + sw] = fg_color

    state_a, state_b = sample_affine_pair(rng, cfg)
    shadow_params = None
    base_shadow = np.zeros_like(base_alpha)
    if cfg.shadow_enabled and base_alpha.max() > 0:
        shadow_params = sample_shadow_params(rng, cfg)
        rows = np.nonzero(base_alpha.max(axis=1) > 0.05)[0]
        cols = np.nonzero(base_alpha.max(axis=0) > 0.05)[0]
        anchor = (int(rows[-1]), int((cols[0] + cols[-1]) // 2))
        base_shadow = synth_shadow(base_alpha[None], shadow_params, anchor)[0]

    window = slice(pad_left, pad_left + w)
    motion: list[AffineState] = []
    alpha_frames, color_frames, shadow_frames = [], [], []
    for i in range(n):
        state = ease_interpolate(state_a, state_b, i / n)
        motion.append(state)
        m_full = affine_matrix(state, w, h, center=(cx, cy))
        alpha_i = np.clip(warp_affine(base_alpha, m_full), 0.0, 1.0)
        color_i = np.clip(warp_affine(base_color, m_full), 0.0, 1.0)
        shift = AffineState(state.tx, state.ty, 0.0, 1.0, 0.0)
        m_shift = affine_matrix(shift, w, h, center=(cx, cy))
        shadow_i = np.clip(warp_affine(base_shadow, m_shift), 0.0, 1.0)
        alpha_frames.append(alpha_i[:, window])
        color_frames.append(color_i[:, window])
        shadow_frames.append(shadow_i[:, window])

    obj_alpha = np.stack(alpha_frames)
    obj_color = np.stack(color_frames)
    shadow = np.stack(shadow_frames)
    # keep object and shadow layers disjoint by construction
    keep_out = dilate(obj_alpha > 0.05, cfg.object_margin)
    shadow = shadow * ~keep_out

    background = np.broadcast_to(canvas_bg[None, :, window], (n, h, w, 3)).copy()
    bg_dark = background * (1.0 - shadow[..., None])
    composite = compose(obj_color, obj_alpha, bg_dark)
    alpha_full = obj_alpha + (1.0 - obj_alpha) * shadow
    numer = obj_alpha[..., None] * obj_color
    foreground = np.divide(
        numer,
        alpha_full[..., None],
        out=np.zeros_like(numer),
        where=alpha_full[..., None] > 0,
    )
    return TrainingSample(
        composite=composite,
        background=ensure_video(background),
        alpha_full=np.clip(alpha_full, 0.0, 1.0),
        obj_mask=binarize(obj_alpha, 0.5),
        shadow_matte=shadow,
        motion=motion,
        seed=seed,
        shadow_params=shadow_params,
        foreground=np.clip(foreground, 0.0, 1.0),
    )


def generate_sample(seed: int, cfg: GeneratorConfig) -> TrainingSample:
    """Fully seeded clip generation: sprite + background + rendering."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    max_wc = cfg.width + int(math.ceil(cfg.padding_range[1] * cfg.width)) + 1
    bg = make_background(rng, cfg.height, max_wc, cfg.bg_noise)
    color, alpha = make_sprite(rng, cfg)
    return render_clip(color, alpha, bg, rng, cfg, seed=seed)


# --- dataset persistence ----------------------------------------------------


def write_sample(sample: TrainingSample, path: Path | str) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_frames(path / "composite", sample.composite, role="video")
    write_frames(path / "background", sample.background, role="video")
    write_frames(path / "alpha", sample.alpha_full, role="alpha")
    write_frames(path / "obj_mask", sample.obj_mask, role="mask")
    write_frames(path / "shadow", sample.shadow_matte, role="alpha")
    meta = {
        "seed": sample.seed,
        "motion": [m.to_dict() for m in sample.motion],
        "shadow_params": sample.shadow_params.to_dict() if sample.shadow_params else None,
        "generator_version": GENERATOR_VERSION,
    }
    (path / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")


def read_sample(path: Path | str) -> TrainingSample:
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise ManifestError(f"missing meta.json in {path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"corrupt meta.json in {path}: {exc}") from exc
    for fname in ("seed", "motion", "shadow_params", "generator_version"):
        if fname not in meta:
            raise ManifestError(f"meta.json in {path} missing field {fname!r}")
    return TrainingSample(
        composite=read_frames(path / "composite"),
        background=read_frames(path / "background"),
        alpha_full=read_frames(path / "alpha"),
        obj_mask=read_frames(path / "obj_mask"),
        shadow_matte=read_frames(path / "shadow"),
        motion=[AffineState.from_dict(m) for m in meta["motion"]],
        seed=meta["seed"],
        shadow_params=ShadowParams.from_dict(meta["shadow_params"])
        if meta["shadow_params"]
        else None,
    )


def generate_dataset(
    root: Path | str,
    count: int,
    base_seed: int,
    cfg: GeneratorConfig,
    start_index: int = 0,
    jobs: int = 1,
) -> list[Path]:
    """Write `count` clips under root/clip_%05d; clip i uses seed base+i."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    indices = list(range(start_index, start_index + count))

    def build(i: int) -> Path:
        sample = generate_sample(base_seed + i, cfg)
        path = root / f"clip_{i:05d}"
        write_sample(sample, path)
        return path

    if jobs > 1 and len(indices) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(build, indices))
    return [build(i) for i in indices]


def list_dataset(root: Path | str) -> list[Path]:
    root = Path(root)
    return sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("clip_"))


def load_dataset(root: Path | str) -> list[TrainingSample]:
    return [read_sample(p) for p in list_dataset(root)]
