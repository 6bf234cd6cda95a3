"""Synthetic wet/dry leaf samples and the augmentation policy used in training."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DomainError
from .fusion import rgb_dropout
from .radar import RadarConfig
from .recon import DepthStack, crop_fov, depth_stack, normalize01
from .scene import (DEFAULT_BANDS, Leaf, RawDataCube, ScanGeometry, Scene, Wetness,
                    phase_compensate, simulate_scan, wind_perturb)

SOIL = np.array([0.36, 0.27, 0.18])
LEAF = np.array([0.22, 0.55, 0.18])
DROP = np.array([0.92, 0.96, 1.0])


@dataclass(frozen=True)
class DatasetConfig:
    """Knobs for the synthetic scene generator (lengths in mm)."""

    n: int = 200
    seed: int = 0
    radar: RadarConfig = field(default_factory=RadarConfig)
    nx: int = 32
    ny: int = 24
    width: float = 150.0
    height: float = 100.0
    delta_T: float = 2.0
    z_ref: float = 350.0
    z_min: float = 200.0
    z_max: float = 500.0
    n_slices: int = 8
    leaves: tuple = (1, 3)
    points_per_leaf: tuple = (20, 40)
    fov: tuple = (110.0, 70.0)
    dry_band: tuple = DEFAULT_BANDS[Wetness.DRY]
    wet_band: tuple = DEFAULT_BANDS[Wetness.WET]
    noise_std: float = 30.0
    drops_per_leaf: tuple = (10, 20)
    drop_px: int = 3
    lighting: tuple = (0.7, 1.1)
    camera_offset: tuple = (6, 9)
    camera_margin: tuple = (12, 16)

    def __post_init__(self):
        if self.n_slices < 1 or self.z_max < self.z_min:
            raise DomainError("need n_slices >= 1 and z_max >= z_min")

    @property
    def geometry(self) -> ScanGeometry:
        return ScanGeometry.uniform(self.width, self.height, nx=self.nx, ny=self.ny,
                                    delta_T=self.delta_T, z_ref=self.z_ref)

    @property
    def slice_step(self) -> float:
        return (self.z_max - self.z_min) / (self.n_slices - 1) if self.n_slices > 1 else 1.0

    @property
    def bands(self):
        return {Wetness.DRY: tuple(self.dry_band), Wetness.WET: tuple(self.wet_band)}

    @property
    def fov_rect(self):
        """Crop that maps the wider camera raster onto the SAR pixel grid."""
        return (self.camera_offset[0], self.camera_offset[1], 2 * self.nx, 2 * self.ny)


@dataclass
class Sample:
    raw: RawDataCube
    stack: DepthStack
    rgb: np.ndarray
    label: int
    meta: dict = field(default_factory=dict)

    @property
    def sar(self) -> np.ndarray:
        """Per-slice min-max normalized stack ``[S, H, W]``."""
        return np.stack([normalize01(s.pixels) for s in self.stack.slices])

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.raw.data, self.stack.array, self.rgb):
            h.update(np.ascontiguousarray(a).tobytes())
        h.update(str(self.label).encode())
        return h.hexdigest()


def stack_for(raw: RawDataCube, cfg: DatasetConfig) -> DepthStack:
    return depth_stack(raw, cfg.z_min, cfg.z_max, cfg.slice_step)


def random_leaves(rng: np.random.Generator, wetness, cfg: DatasetConfig):
    n = int(rng.integers(cfg.leaves[0], cfg.leaves[1] + 1))
    fx, fy = cfg.fov
    out = []
    for _ in range(n):
        c = (rng.uniform(-fx / 2 + 15, fx / 2 - 15), rng.uniform(-fy / 2 + 10, fy / 2 - 10),
             rng.uniform(cfg.z_min, cfg.z_max))
        out.append(Leaf.random(rng, c, wetness))
    return out


def render_rgb(leaves, wetness, rng: np.random.Generator, cfg: DatasetConfig, lighting=1.0):
    """Orthographic camera view of the leaves on a wider raster, then cropped to the SAR grid.

    Rows follow the SAR x axis and columns the y axis. Wet leaves carry bright
    specular droplets; dry leaves only texture.
    """
    h, w = 2 * cfg.nx, 2 * cfg.ny
    H, W = h + cfg.camera_margin[0], w + cfg.camera_margin[1]
    g = cfg.geometry
    px, py = g.dx / 2, g.dy / 2
    r0, c0 = cfg.camera_offset
    xs = g.x_positions[0] + (np.arange(H) - r0) * px
    ys = g.y_positions[0] + (np.arange(W) - c0) * py
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    img = SOIL[:, None, None] * (1 + 0.15 * rng.standard_normal((1, H, W)))
    # far leaves first so nearer ones occlude them
    for leaf in sorted(leaves, key=lambda lf: -lf.center[2]):
        inside = leaf.contains(X, Y)
        shade = LEAF[:, None, None] * rng.uniform(0.8, 1.2) * (1 + 0.1 * rng.standard_normal((H, W)))[None]
        img = np.where(inside[None], np.clip(shade, 0, 1), img)
        if wetness == Wetness.WET:
            rows, cols = np.nonzero(inside)
            if rows.size:
                k = int(rng.integers(cfg.drops_per_leaf[0], cfg.drops_per_leaf[1] + 1))
                pick = rng.choice(rows.size, size=min(k, rows.size), replace=False)
                a = cfg.drop_px // 2
                for r, c in zip(rows[pick], cols[pick]):
                    img[:, max(r - a, 0):r - a + cfg.drop_px, max(c - a, 0):c - a + cfg.drop_px] = DROP[:, None, None]
    img = np.clip(img * lighting, 0.0, 1.0)
    return crop_fov(img, cfg.fov_rect)


def make_sample(label, seed, cfg: DatasetConfig) -> Sample:
    rng = np.random.default_rng(seed)
    wet = Wetness(label)
    leaves = random_leaves(rng, wet, cfg)
    scs = []
    for leaf in leaves:
        n = int(rng.integers(cfg.points_per_leaf[0], cfg.points_per_leaf[1] + 1))
        scs += leaf.scatterers(rng, n, cfg.bands)
    raw = simulate_scan(Scene(scs, wet), cfg.geometry, cfg.radar)
    if cfg.noise_std > 0:
        noise = rng.standard_normal(raw.data.shape + (2,)) @ np.array([1.0, 1j])
        raw = replace(raw, data=raw.data + noise * (cfg.noise_std / np.sqrt(2)))
    raw = phase_compensate(raw)
    lighting = float(rng.uniform(*cfg.lighting))
    rgb = render_rgb(leaves, wet, rng, cfg, lighting)
    meta = dict(seed=int(seed), wind=0.0, lighting=lighting, n_leaves=len(leaves), n_points=len(scs))
    return Sample(raw, stack_for(raw, cfg), rgb, int(label), meta)


def synth_dataset(n=None, cfg: DatasetConfig | None = None, seed=None):
    """``n // 2`` dry and ``n // 2`` wet samples, interleaved, deterministic per seed."""
    cfg = cfg or DatasetConfig()
    n = cfg.n if n is None else n
    seed = cfg.seed if seed is None else seed
    if n < 2 or n % 2:
        raise DomainError(f"dataset size must be even and >= 2, got {n}")
    seeds = np.random.SeedSequence(seed).generate_state(n)
    return [make_sample(i % 2, int(s), cfg) for i, s in enumerate(seeds)]


@dataclass(frozen=True)
class AugmentPolicy:
    rgb_drop: float = 0.2
    lighting: tuple | None = (0.4, 1.2)
    wind_max_mm: float = 2.0
    wind_prob: float = 0.25

    @classmethod
    def null(cls) -> "AugmentPolicy":
        return cls(0.0, None, 0.0, 0.0)

    def __post_init__(self):
        if not 0 <= self.rgb_drop <= 1:
            raise DomainError("rgb_drop must be in [0, 1]")
        if self.lighting is not None and not 0 <= self.lighting[0] <= self.lighting[1]:
            raise DomainError("lighting range must satisfy 0 <= lo <= hi")
        if self.wind_max_mm < 0 or not 0 <= self.wind_prob <= 1:
            raise DomainError("wind amplitude must be >= 0 and wind_prob in [0, 1]")


def draw_augment(policy: AugmentPolicy, seed):
    """Independent draws (dropped?, lighting factor, wind amplitude, wind seed) for one sample."""
    s_drop, s_light, s_wind = np.random.SeedSequence(seed).spawn(3)
    drop = np.random.default_rng(s_drop).random() < policy.rgb_drop
    light = 1.0
    if policy.lighting is not None:
        light = float(np.random.default_rng(s_light).uniform(*policy.lighting))
    wind_rng = np.random.default_rng(s_wind)
    gust = wind_rng.random() < policy.wind_prob
    amp = wind_rng.uniform(0, policy.wind_max_mm)
    wind = float(amp) if gust and policy.wind_max_mm > 0 else 0.0
    return bool(drop), light, wind, int(wind_rng.integers(2**31))


def augment(sample: Sample, policy: AugmentPolicy, seed, cfg: DatasetConfig | None = None) -> Sample:
    """Camera dropout, lighting rescale and breeze jitter, each on its own stream.

    Breeze is applied to the raw cube, so the depth stack is rebuilt when it
    is non-zero.
    """
    drop, light, wind, wind_seed = draw_augment(policy, seed)
    rgb = sample.rgb
    if light != 1.0:
        rgb = np.clip(rgb * light, 0.0, 1.0)
    if drop:
        rgb = rgb_dropout(rgb, 1.0)
    raw, stack = sample.raw, sample.stack
    if wind > 0:
        raw = wind_perturb(raw, wind, wind_seed)
        st = sample.stack
        stack = depth_stack(raw, st.z_min, st.z_max, st.step)
    meta = dict(sample.meta, wind=wind, lighting=sample.meta.get("lighting", 1.0) * light, rgb_dropped=drop)
    return Sample(raw, stack, rgb, sample.label, meta)


def apply_eval_condition(samples, rgb_blackout=False, wind_mm=0.0, seed=0):
    """Evaluation-time corruptions: camera failure and/or fixed-amplitude breeze."""
    out = []
    seeds = np.random.SeedSequence(seed).generate_state(max(len(samples), 1))
    for s, sd in zip(samples, seeds):
        raw, stack = s.raw, s.stack
        if wind_mm > 0:
            raw = wind_perturb(raw, wind_mm, int(sd))
            stack = depth_stack(raw, s.stack.z_min, s.stack.z_max, s.stack.step)
        rgb = np.zeros_like(s.rgb) if rgb_blackout else s.rgb
        out.append(Sample(raw, stack, rgb, s.label, dict(s.meta, wind=wind_mm)))
    return out


def to_arrays(samples):
    """Model inputs ``sar [B, S, H, W]``, ``rgb [B, 3, H, W]`` and labels ``[B]``."""
    sar = np.stack([s.sar for s in samples])
    rgb = np.stack([s.rgb for s in samples])
    y = np.array([s.label for s in samples], dtype=float)
    return sar, rgb, y
