"""FMCW waveform model: transmitted chirp, dechirped beat signal, wavenumber grid."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

C0 = 2.99792458e8


@dataclass(frozen=True)
class RadarConfig:
    """Linear FMCW sweep from ``f0`` to ``f0 + bandwidth`` over ``chirp_T`` seconds.

    ``slope_K`` is derived, never passed. ``n_freq`` is the number of uniformly
    spaced frequency samples taken across the sweep.
    """

    f0: float = 77e9
    bandwidth: float = 4e9
    chirp_T: float = 40e-6
    n_freq: int = 32
    c: float = field(default=C0, init=False)

    def __post_init__(self):
        if not (self.f0 > 0 and self.bandwidth > 0 and self.chirp_T > 0):
            raise DomainError("f0, bandwidth and chirp_T must be positive")
        if int(self.n_freq) != self.n_freq or self.n_freq < 2:
            raise DomainError("n_freq must be an integer >= 2")

    @property
    def slope_K(self) -> float:
        return self.bandwidth / self.chirp_T

    @property
    def center_wavelength(self) -> float:
        """Wavelength at the sweep centre, in metres."""
        return self.c / (self.f0 + 0.5 * self.bandwidth)

    def frequencies(self) -> np.ndarray:
        return self.f0 + np.arange(self.n_freq) * (self.bandwidth / (self.n_freq - 1))


@dataclass(frozen=True)
class Echo:
    tau: float
    sigma: complex = 1.0

    def __post_init__(self):
        if not self.tau >= 0:
            raise DomainError(f"round-trip delay must be >= 0, got {self.tau}")
        if not np.isfinite(complex(self.sigma)):
            raise DomainError("reflectivity must be finite")


def _check_time(t, cfg):
    if not 0.0 <= t <= cfg.chirp_T:
        raise DomainError(f"t={t} outside chirp [0, {cfg.chirp_T}]")


def chirp_sample(t: float, cfg: RadarConfig) -> float:
    """Transmitted chirp amplitude cos(2*pi*(f0*t + K*t^2/2))."""
    _check_time(t, cfg)
    return math.cos(2.0 * math.pi * (cfg.f0 * t + 0.5 * cfg.slope_K * t * t))


def beat_phase(tau, t, cfg: RadarConfig):
    """Phase of the dechirped beat signal, including the residual video phase term."""
    K = cfg.slope_K
    return -2.0 * np.pi * (cfg.f0 * tau + K * tau * t - 0.5 * K * tau * tau)


def beat_sample(echo: Echo, t: float, cfg: RadarConfig) -> complex:
    """Complex beat sample ``sigma * exp(-j 2 pi (f0 tau + K tau t - K tau^2 / 2))``."""
    _check_time(t, cfg)
    return complex(echo.sigma) * complex(np.exp(1j * beat_phase(echo.tau, t, cfg)))


def wavenumber_grid(cfg: RadarConfig) -> np.ndarray:
    """Wavenumbers 2*pi*f/c (rad/m) for the uniformly sampled sweep frequencies."""
    return 2.0 * np.pi * cfg.frequencies() / cfg.c
