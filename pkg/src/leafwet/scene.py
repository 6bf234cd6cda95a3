"""Point-scatterer leaf scenes and raw SAR data synthesis over a planar scan.

Geometry is in millimetres throughout. The aperture plane sits at ``z = Z0``;
a scatterer's depth coordinate ``z`` is measured in the same frame, so its
standoff from the aperture is ``z - Z0``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, DomainError, StateError
from .radar import RadarConfig, wavenumber_grid


class Wetness(enum.IntEnum):
    DRY = 0
    WET = 1

    @classmethod
    def parse(cls, token) -> "Wetness":
        t = str(token).strip().lower()
        if t in ("dry", "0"):
            return cls.DRY
        if t in ("wet", "1"):
            return cls.WET
        raise DomainError(f"unknown wetness {token!r}")


# |sigma| bands; dry foliage reflects more strongly than water-covered foliage
DEFAULT_BANDS = {Wetness.DRY: (0.8, 1.0), Wetness.WET: (0.3, 0.5)}


@dataclass(frozen=True)
class Scatterer:
    x: float
    y: float
    z: float
    sigma: complex = 1.0
    wetness: Wetness = Wetness.DRY

    def __post_init__(self):
        if not self.z > 0:
            raise DomainError(f"scatterer depth must be > 0, got z={self.z}")


@dataclass
class Scene:
    scatterers: list = field(default_factory=list)
    label: Wetness | None = None

    def __post_init__(self):
        if self.label is None:
            wet = sum(1 for s in self.scatterers if s.wetness == Wetness.WET)
            self.label = Wetness.WET if 2 * wet > len(self.scatterers) else Wetness.DRY

    def __len__(self):
        return len(self.scatterers)

    def positions(self) -> np.ndarray:
        if not self.scatterers:
            return np.zeros((0, 3))
        return np.array([(s.x, s.y, s.z) for s in self.scatterers], dtype=float)

    def sigmas(self) -> np.ndarray:
        return np.array([complex(s.sigma) for s in self.scatterers], dtype=complex)

    def __or__(self, other: "Scene") -> "Scene":
        return Scene(list(self.scatterers) + list(other.scatterers))


def _uniform_step(v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ConfigError(f"{name} must be a non-empty 1-D sequence")
    if v.size > 1:
        d = np.diff(v)
        if np.any(d <= 0):
            raise ConfigError(f"{name} must be strictly increasing")
        if np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(d[0])):
            raise ConfigError(f"{name} must be uniformly spaced")
    return v


@dataclass(frozen=True)
class ScanGeometry:
    """Two-axis scan: TX/RX pair moved over ``x_positions`` x ``y_positions``.

    At aperture sample ``(x', y')`` the transmitter sits at ``x' + delta_T/2`` and
    the receiver at ``x' - delta_T/2``, both at height ``y'`` on the plane
    ``z = Z0``. ``z_ref`` is the standoff used for multistatic phase compensation.
    """

    x_positions: np.ndarray
    y_positions: np.ndarray
    delta_T: float = 2.0
    Z0: float = 0.0
    z_ref: float = 300.0

    def __post_init__(self):
        object.__setattr__(self, "x_positions", _uniform_step(self.x_positions, "x_positions"))
        object.__setattr__(self, "y_positions", _uniform_step(self.y_positions, "y_positions"))
        if self.delta_T < 0:
            raise ConfigError("delta_T must be >= 0")

    @classmethod
    def uniform(cls, width=150.0, height=100.0, nx=None, ny=None, step=None, **kw):
        """Aperture centred on the origin.

        Give either sample counts or a pitch; with neither, the pitch is a
        quarter wavelength at 77 GHz.
        """
        if step is None and (nx is None or ny is None):
            step = 0.25 * 2.99792458e8 / 77e9 * 1e3
        if nx is None:
            nx = int(np.floor(width / step + 1e-9)) + 1
        if ny is None:
            ny = int(np.floor(height / step + 1e-9)) + 1
        if step is not None:
            xs = (np.arange(nx) - (nx - 1) / 2) * step
            ys = (np.arange(ny) - (ny - 1) / 2) * step
        else:
            xs = np.linspace(-width / 2, width / 2, nx)
            ys = np.linspace(-height / 2, height / 2, ny)
        return cls(xs, ys, **kw)

    @property
    def shape(self):
        return (self.x_positions.size, self.y_positions.size)

    @property
    def dx(self) -> float:
        return float(self.x_positions[1] - self.x_positions[0]) if self.x_positions.size > 1 else 1.0

    @property
    def dy(self) -> float:
        return float(self.y_positions[1] - self.y_positions[0]) if self.y_positions.size > 1 else 1.0

    def with_(self, **kw) -> "ScanGeometry":
        return replace(self, **kw)


@dataclass(frozen=True)
class RawDataCube:
    data: np.ndarray
    geometry: ScanGeometry
    cfg: RadarConfig
    compensated: bool = False

    def __post_init__(self):
        want = (*self.geometry.shape, self.cfg.n_freq)
        if self.data.shape != want:
            raise ConfigError(f"cube shape {self.data.shape} does not match geometry/config {want}")
        if not np.all(np.isfinite(self.data)):
            raise DomainError("raw cube contains non-finite samples")

    def __add__(self, other: "RawDataCube") -> "RawDataCube":
        if other.compensated != self.compensated:
            raise StateError("cannot add compensated and uncompensated cubes")
        return replace(self, data=self.data + other.data)


def two_way_ranges(sc: Scatterer, x_ap: float, y_t: float, y_r: float, geom: ScanGeometry):
    """Transmitter and receiver distances (mm) from one aperture sample to ``sc``."""
    half = geom.delta_T / 2.0
    dz2 = (sc.z - geom.Z0) ** 2
    r_t = np.sqrt((sc.x - (x_ap + half)) ** 2 + (sc.y - y_t) ** 2 + dz2)
    r_r = np.sqrt((sc.x - (x_ap - half)) ** 2 + (sc.y - y_r) ** 2 + dz2)
    return float(r_t), float(r_r)


def wavenumbers_mm(cfg: RadarConfig) -> np.ndarray:
    return wavenumber_grid(cfg) * 1e-3


def simulate_scan(scene: Scene, geom: ScanGeometry, cfg: RadarConfig, chunk: int = 64) -> RawDataCube:
    """Sum ``sigma * exp(-j k (R_T + R_R))`` over all scatterers for every sample."""
    k = wavenumbers_mm(cfg)
    nx, ny = geom.shape
    out = np.zeros((nx, ny, cfg.n_freq), dtype=complex)
    pos = scene.positions()
    sig = scene.sigmas()
    half = geom.delta_T / 2.0
    xa = geom.x_positions[:, None, None]
    ya = geom.y_positions[None, :, None]
    for i in range(0, len(pos), chunk):
        p = pos[i:i + chunk]
        x, y, z = (p[:, j][None, None, :] for j in range(3))
        dz2 = (z - geom.Z0) ** 2
        dy2 = (y - ya) ** 2
        path = np.sqrt((x - (xa + half)) ** 2 + dy2 + dz2) + np.sqrt((x - (xa - half)) ** 2 + dy2 + dz2)
        # (nx, ny, m) x (m,) per frequency; fixed order keeps sums reproducible
        for j, kj in enumerate(k):
            out[:, :, j] += np.exp(-1j * kj * path) @ sig[i:i + chunk]
    return RawDataCube(out, geom, cfg, compensated=False)


def compensation_phase(geom: ScanGeometry, cfg: RadarConfig, z_ref: float | None = None) -> np.ndarray:
    """Per-frequency factor mapping the TX/RX pair onto a co-located antenna.

    The reference scatterer sits straight in front of the pair midpoint at
    standoff ``z_ref``; the residual ``R_T + R_R - 2 R`` is removed there.
    """
    zr = geom.z_ref if z_ref is None else z_ref
    d = zr - geom.Z0
    if d <= 0:
        raise DomainError("reference depth must lie in front of the aperture")
    excess = 2.0 * np.hypot(geom.delta_T / 2.0, d) - 2.0 * d
    return np.exp(1j * wavenumbers_mm(cfg) * excess)


def phase_compensate(raw: RawDataCube, z_ref: float | None = None) -> RawDataCube:
    if raw.compensated:
        raise StateError("cube is already phase compensated")
    if raw.geometry.delta_T == 0:
        return replace(raw, data=raw.data.copy(), compensated=True)
    fac = compensation_phase(raw.geometry, raw.cfg, z_ref)
    return replace(raw, data=raw.data * fac[None, None, :], compensated=True)


def wind_perturb(raw: RawDataCube, amplitude_mm: float, seed: int) -> RawDataCube:
    """Breeze model: each aperture position sees a random range offset in [-a, a]."""
    if amplitude_mm < 0:
        raise DomainError("wind amplitude must be >= 0")
    if amplitude_mm == 0:
        return replace(raw, data=raw.data.copy())
    rng = np.random.default_rng(seed)
    dr = rng.uniform(-amplitude_mm, amplitude_mm, size=raw.geometry.shape)
    k = wavenumbers_mm(raw.cfg)
    return replace(raw, data=raw.data * np.exp(-2j * dr[:, :, None] * k[None, None, :]))


def reflectivity_of(wetness, rng_seed, bands=None) -> complex:
    """Draw a complex reflectivity whose magnitude falls in the band for ``wetness``."""
    bands = DEFAULT_BANDS if bands is None else bands
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    lo, hi = bands[Wetness(wetness)]
    mag = rng.uniform(lo, hi)
    return complex(mag * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi)))


@dataclass(frozen=True)
class Leaf:
    """Elliptical leaf patch; ``size`` is (length, width) in mm, ``rotation`` in-plane."""

    center: tuple
    size: tuple = (40.0, 25.0)
    rotation: float = 0.0
    tilt: tuple = (0.0, 0.0)
    wetness: Wetness = Wetness.DRY

    @classmethod
    def random(cls, rng: np.random.Generator, center, wetness, size_range=(30.0, 50.0)):
        length = rng.uniform(*size_range)
        return cls(tuple(float(c) for c in center), (length, length * rng.uniform(0.5, 0.75)),
                   float(rng.uniform(0, np.pi)), tuple(rng.uniform(-0.4, 0.4, 2)), Wetness(wetness))

    def contains(self, x, y):
        u, v = self._local(x, y)
        a, b = self.size
        return (u / (a / 2)) ** 2 + (v / (b / 2)) ** 2 <= 1.0

    def _local(self, x, y):
        dx, dy = x - self.center[0], y - self.center[1]
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        return dx * c + dy * s, -dx * s + dy * c

    def scatterers(self, rng: np.random.Generator, n_points=None, bands=None):
        """Point scatterers jittered over the patch surface."""
        n = int(rng.integers(20, 61)) if n_points is None else int(n_points)
        a, b = self.size
        r = np.sqrt(rng.uniform(0, 1, n))
        th = rng.uniform(0, 2 * np.pi, n)
        u, v = a / 2 * r * np.cos(th), b / 2 * r * np.sin(th)
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        cx, cy, cz = self.center
        xs = cx + u * c - v * s
        ys = cy + u * s + v * c
        zs = cz + self.tilt[0] * (xs - cx) + self.tilt[1] * (ys - cy) + rng.normal(0, 0.5, n)
        return [Scatterer(float(x), float(y), float(z), reflectivity_of(self.wetness, rng, bands), self.wetness)
                for x, y, z in zip(xs, ys, zs)]


def read_scene(path) -> Scene:
    """Parse ``x y z sigma_re sigma_im wetness`` lines; ``#`` starts a comment."""
    scs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            try:
                x, y, z, sr, si = map(float, parts[:5])
                scs.append(Scatterer(x, y, z, complex(sr, si), Wetness.parse(parts[5])))
            except (ValueError, DomainError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return Scene(scs)


def write_scene(scene: Scene, path):
    from .formats import atomic_write

    lines = ["# x y z sigma_re sigma_im wetness  (mm, mm, mm, -, -, dry|wet)"]
    for s in scene.scatterers:
        sg = complex(s.sigma)
        lines.append(f"{s.x!r} {s.y!r} {s.z!r} {sg.real!r} {sg.imag!r} {s.wetness.name.lower()}")
    atomic_write(path, ("\n".join(lines) + "\n").encode())
