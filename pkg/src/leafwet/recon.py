"""Depth-slice image formation from compensated SAR cubes.

The fast path is a single-depth range migration: per frequency, an aperture
FFT, a plane-wave propagation phase to the slice depth, and a coherent sum
over frequency followed by one inverse FFT. ``backproject_oracle`` is a slow
direct matched filter used to check it.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import DomainError, StateError
from .scene import RawDataCube, wavenumbers_mm

PAD = 2


@dataclass(frozen=True)
class SarSlice:
    pixels: np.ndarray
    z0: float
    x: np.ndarray
    y: np.ndarray

    @property
    def extent(self):
        return (float(self.x[0]), float(self.x[-1]), float(self.y[0]), float(self.y[-1]))

    @property
    def pitch(self):
        return (float(self.x[1] - self.x[0]), float(self.y[1] - self.y[0]))

    def pixel_of(self, x, y):
        """Nearest pixel index for a physical position."""
        px, py = self.pitch
        return int(round((x - self.x[0]) / px)), int(round((y - self.y[0]) / py))


@dataclass(frozen=True)
class DepthStack:
    slices: list
    z_min: float
    z_max: float
    step: float

    def __len__(self):
        return len(self.slices)

    @property
    def depths(self) -> np.ndarray:
        return np.array([s.z0 for s in self.slices])

    @property
    def array(self) -> np.ndarray:
        return np.stack([s.pixels for s in self.slices])


def pixel_axes(raw: RawDataCube, pad: int = PAD):
    g = raw.geometry
    nx, ny = g.shape
    xs = g.x_positions[0] + np.arange(pad * nx) * (g.dx / pad)
    ys = g.y_positions[0] + np.arange(pad * ny) * (g.dy / pad)
    return xs, ys


@lru_cache(maxsize=8)
def _kz_grid(n, dx, dy, cfg):
    k = wavenumbers_mm(cfg)
    kx = 2 * np.pi * np.fft.fftfreq(n[0], dx)
    ky = 2 * np.pi * np.fft.fftfreq(n[1], dy)
    kz2 = 4 * k[None, None, :] ** 2 - kx[:, None, None] ** 2 - ky[None, :, None] ** 2
    propagating = kz2 > 0
    return np.sqrt(np.where(propagating, kz2, 0.0)), propagating


@lru_cache(maxsize=4)
def _phase_table(n, dx, dy, cfg, d_start, step, count):
    # the same depth grid is refocused for every sample of a dataset, so keep the phases
    kz, _ = _kz_grid(n, dx, dy, cfg)
    d = d_start + step * np.arange(count)
    return np.exp(1j * kz[None] * d[:, None, None, None])


class _Focuser:
    """Aperture spectrum of one cube, reusable across slice depths."""

    def __init__(self, raw: RawDataCube, pad: int = PAD):
        if not raw.compensated:
            raise StateError("reconstruction needs a phase-compensated cube")
        g = raw.geometry
        nx, ny = g.shape
        self.raw, self.pad = raw, pad
        self.n = (pad * nx, pad * ny)
        self._key = (self.n, float(g.dx), float(g.dy), raw.cfg)
        self.spec = np.fft.fft2(raw.data, s=self.n, axes=(0, 1))
        self.kz, self.propagating = _kz_grid(*self._key)
        # evanescent bins are dropped once here so the focusing phase needs no mask
        self.spec *= self.propagating

    def _standoff(self, z0):
        if not z0 > 0:
            raise DomainError(f"slice depth must be > 0, got {z0}")
        d = z0 - self.raw.geometry.Z0
        if not d > 0:
            raise DomainError("slice depth must lie in front of the aperture plane")
        return d

    def _image(self, phase):
        spec = np.einsum("abk,abk->ab", self.spec, phase)
        return _interp_ifft(spec, self.pad)[: self.n[0], : self.n[1]]

    def field(self, z0: float) -> np.ndarray:
        # conjugate of the exp(-j kz d) the forward model carries
        return self._image(np.exp(1j * self.kz * self._standoff(z0)))

    def fields(self, z_start: float, step: float, count: int):
        """Fields on a uniform depth grid; the phase table is cached per geometry and grid."""
        table = _phase_table(*self._key, self._standoff(z_start), float(step), int(count))
        specs = np.einsum("abk,sabk->sab", self.spec, table)
        for spec in specs:
            yield _interp_ifft(spec, self.pad)[: self.n[0], : self.n[1]]


def _interp_ifft(spec, factor):
    """Inverse FFT onto a grid ``factor`` times finer via centred spectral zero fill."""
    n0, n1 = spec.shape
    m0, m1 = n0 * factor, n1 * factor
    sh = np.fft.fftshift(spec)
    big = np.zeros((m0, m1), dtype=complex)
    o0, o1 = (m0 - n0) // 2, (m1 - n1) // 2
    big[o0:o0 + n0, o1:o1 + n1] = sh
    return np.fft.ifft2(np.fft.ifftshift(big)) * (factor * factor)


def reconstruct_field(raw: RawDataCube, z0: float, pad: int = PAD) -> np.ndarray:
    """Complex reflectivity at depth ``z0`` on the padded pixel grid (see ``pixel_axes``)."""
    return _Focuser(raw, pad).field(z0)


def reconstruct_slice(raw: RawDataCube, z0: float, pad: int = PAD) -> SarSlice:
    xs, ys = pixel_axes(raw, pad)
    return SarSlice(np.abs(reconstruct_field(raw, z0, pad)), float(z0), xs, ys)


def backproject_field(raw: RawDataCube, z0: float, xs=None, ys=None) -> np.ndarray:
    """Direct matched filter: sum of data * exp(+j 2 k R(pixel)) over every sample."""
    if not raw.compensated:
        raise StateError("backprojection needs a phase-compensated cube")
    g = raw.geometry
    if xs is None or ys is None:
        xs, ys = pixel_axes(raw)
    k = wavenumbers_mm(raw.cfg)
    dz2 = (z0 - g.Z0) ** 2
    out = np.zeros((len(xs), len(ys)), dtype=complex)
    ax, ay = g.x_positions, g.y_positions
    for i, px in enumerate(xs):
        r = np.sqrt((px - ax)[None, :, None] ** 2 + (ys[:, None, None] - ay[None, None, :]) ** 2 + dz2)
        for j, kj in enumerate(k):
            out[i] += np.einsum("pab,ab->p", np.exp(2j * kj * r), raw.data[:, :, j])
    return out


def backproject_oracle(raw: RawDataCube, z0: float, xs=None, ys=None) -> SarSlice:
    if xs is None or ys is None:
        xs, ys = pixel_axes(raw)
    return SarSlice(np.abs(backproject_field(raw, z0, xs, ys)), float(z0), np.asarray(xs), np.asarray(ys))


def depth_stack(raw: RawDataCube, z_min: float, z_max: float, step: float = 1.0, pad: int = PAD) -> DepthStack:
    """Slices at ``z_min, z_min + step, ...`` up to and including ``z_max`` when it lands on the grid."""
    if not step > 0 or z_max < z_min:
        raise DomainError(f"invalid depth range [{z_min}, {z_max}] step {step}")
    count = int(np.floor((z_max - z_min) / step + 1e-9)) + 1
    foc = _Focuser(raw, pad)
    xs, ys = pixel_axes(raw, pad)
    if z_min + (count - 1) * step - foc.raw.geometry.Z0 <= 0 or z_min <= 0:
        raise DomainError("all slices must lie in front of the aperture plane")
    slices = [SarSlice(np.abs(f), float(z_min + i * step), xs, ys)
              for i, f in enumerate(foc.fields(z_min, step, count))]
    return DepthStack(slices, float(z_min), float(z_max), float(step))


def normalize01(img):
    """Min-max scale to [0, 1]; a constant image maps to all zeros."""
    if isinstance(img, SarSlice):
        return replace(img, pixels=normalize01(img.pixels))
    a = np.asarray(img, dtype=float)
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def crop_fov(img, rect):
    """Cut ``(row0, col0, n_rows, n_cols)`` out of the last two axes."""
    a = np.asarray(img)
    r0, c0, nr, nc = (int(v) for v in rect)
    h, w = a.shape[-2:]
    if r0 < 0 or c0 < 0 or nr < 1 or nc < 1 or r0 + nr > h or c0 + nc > w:
        raise DomainError(f"crop rectangle {rect} outside image of shape {(h, w)}")
    return a[..., r0:r0 + nr, c0:c0 + nc]


def fov_rect(marker_px, sar_peak_px, sar_shape):
    """Crop rectangle that puts a camera-image marker onto the SAR peak pixel.

    The calibration target is imaged by both sensors at a single depth; the
    offset between the two detections fixes the camera crop.
    """
    r0 = int(marker_px[0]) - int(sar_peak_px[0])
    c0 = int(marker_px[1]) - int(sar_peak_px[1])
    return (r0, c0, int(sar_shape[0]), int(sar_shape[1]))


def complex_correlation(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(abs(np.vdot(a, b)) / den) if den > 0 else 0.0


def mainlobe_width(profile, pitch=1.0, level=1 / np.sqrt(2)):
    """Width of the lobe around the maximum at ``level`` times the peak (default -3 dB).

    Crossings are located by linear interpolation between samples.
    """
    p = np.asarray(profile, dtype=float)
    i = int(np.argmax(p))
    thr = p[i] * level

    def crossing(direction):
        j = i
        while 0 <= j + direction < p.size and p[j + direction] > thr:
            j += direction
        nxt = j + direction
        if not 0 <= nxt < p.size:
            return float(j)
        frac = (p[j] - thr) / (p[j] - p[nxt])
        return j + direction * frac

    return (crossing(1) - crossing(-1)) * pitch


def peak_sidelobe_ratio(img, exclude=3) -> float:
    """Peak over the largest value outside a (2*exclude+1)^2 box around it."""
    a = np.asarray(img, dtype=float)
    i, j = np.unravel_index(np.argmax(a), a.shape)
    m = a.copy()
    m[max(0, i - exclude):i + exclude + 1, max(0, j - exclude):j + exclude + 1] = 0
    return float(a[i, j] / m.max()) if m.max() > 0 else np.inf
