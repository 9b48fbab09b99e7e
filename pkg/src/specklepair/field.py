"""Sampled scalar fields and the ideal transforms of the optical bench.

Position-domain fields carry a pitch in mm, frequency-domain fields a pitch in
mm^-1. The 2f transform uses the kernel exp(-i 2 pi nu x) with continuous-FT
scaling, so ``sum |values|^2 * pitch^2`` is the same on both sides.

All transforms are centred: the optical axis (x = 0 or nu = 0) sits at index
``n // 2`` along each axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.fft as sfft

from .errors import DimensionError, UnsupportedConfigurationError

Domain = Literal["position", "frequency"]
TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------- array level
def ft2c(values: np.ndarray, pitch: float) -> np.ndarray:
    """Centred forward transform over the last two axes, continuous-FT scaled."""
    shifted = sfft.ifftshift(values, axes=(-2, -1))
    out = sfft.fft2(shifted, axes=(-2, -1))
    return sfft.fftshift(out, axes=(-2, -1)) * (pitch * pitch)


def ift2c(values: np.ndarray, pitch: float) -> np.ndarray:
    """Inverse of :func:`ft2c`; ``pitch`` is the frequency pitch of ``values``."""
    n = values.shape[-1] * values.shape[-2]
    shifted = sfft.ifftshift(values, axes=(-2, -1))
    out = sfft.ifft2(shifted, axes=(-2, -1))
    return sfft.fftshift(out, axes=(-2, -1)) * (pitch * pitch * n)


def ft1c(values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Centred unitary 1-D DFT (used for per-axis mode bookkeeping)."""
    shifted = sfft.ifftshift(values, axes=axis)
    return sfft.fftshift(sfft.fft(shifted, axis=axis, norm="ortho"), axes=axis)


def ift1c(values: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = sfft.ifftshift(values, axes=axis)
    return sfft.fftshift(sfft.ifft(shifted, axis=axis, norm="ortho"), axes=axis)


def point_reflect(values: np.ndarray, axes=(-2, -1)) -> np.ndarray:
    """x -> -x about the centred origin (index n//2 maps to itself)."""
    out = values
    for ax in axes:
        out = np.roll(np.flip(out, axis=ax), 1 if out.shape[ax] % 2 == 0 else 0, axis=ax)
    return out


def centered_offset(n: int, size: int) -> int:
    """Start index of a ``size`` window centred on index ``n // 2``."""
    return n // 2 - size // 2


# ---------------------------------------------------------------- types
@dataclass(frozen=True, eq=False)
class FieldGrid:
    values: np.ndarray
    pitch: float
    domain: Domain = "position"
    wavelength_nm: float = 710.0
    focal_mm: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim != 2 or v.shape[0] == 0 or v.shape[1] == 0:
            raise DimensionError(f"field must be a non-empty 2-D array, got shape {v.shape}")
        if not (self.pitch > 0 and np.isfinite(self.pitch)):
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if self.domain not in ("position", "frequency"):
            raise ValueError(f"unknown domain tag {self.domain!r}")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.pitch**2)

    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def axis(self, which: int = -1) -> np.ndarray:
        """Physical coordinates along one axis (mm or mm^-1)."""
        n = self.values.shape[which]
        return (np.arange(n) - n // 2) * self.pitch

    @property
    def camera_scale_mm(self) -> float | None:
        """lambda * f: camera position (mm) per unit spatial frequency (mm^-1)."""
        if self.focal_mm is None:
            return None
        return self.wavelength_nm * 1e-6 * self.focal_mm

    def with_values(self, values: np.ndarray) -> "FieldGrid":
        return FieldGrid(values, self.pitch, self.domain, self.wavelength_nm, self.focal_mm)


@dataclass(frozen=True, eq=False)
class PhaseMask:
    """Phase-only SLM pattern on a grid of square macropixels."""

    phases: np.ndarray
    macropixel_size: int = 1

    def __post_init__(self):
        p = np.asarray(self.phases, dtype=np.float64)
        if p.ndim != 2:
            raise DimensionError("mask phases must be 2-D")
        if int(self.macropixel_size) < 1:
            raise ValueError("macropixel_size must be >= 1")
        p = np.mod(p, TWO_PI)
        p[p >= TWO_PI] = 0.0
        object.__setattr__(self, "phases", p)
        object.__setattr__(self, "macropixel_size", int(self.macropixel_size))

    @classmethod
    def zeros(cls, n_macro: int, macropixel_size: int) -> "PhaseMask":
        return cls(np.zeros((n_macro, n_macro)), macropixel_size)

    @property
    def footprint(self) -> tuple[int, int]:
        my, mx = self.phases.shape
        return my * self.macropixel_size, mx * self.macropixel_size

    def slm_phases(self) -> np.ndarray:
        """Phases replicated onto SLM pixels."""
        s = self.macropixel_size
        return np.repeat(np.repeat(self.phases, s, axis=0), s, axis=1)

    def embed(self, shape: tuple[int, int]) -> np.ndarray:
        """Full-grid phase map with the mask centred and zero phase outside."""
        fy, fx = self.footprint
        ny, nx = shape
        if fy > ny or fx > nx:
            raise DimensionError(f"mask footprint {self.footprint} exceeds grid {shape}")
        full = np.zeros(shape)
        oy, ox = centered_offset(ny, fy), centered_offset(nx, fx)
        full[oy:oy + fy, ox:ox + fx] = self.slm_phases()
        return full


# ---------------------------------------------------------------- operations
def fourier_2f(f: FieldGrid, focal_mm: float | None = None) -> FieldGrid:
    """2f lens transform between position (mm) and spatial frequency (mm^-1).

    A position-domain input is transformed forward; a frequency-domain input is
    transformed back, so applying this twice is the identity.
    """
    ny, nx = f.shape
    if ny != nx:
        raise DimensionError(f"2f transform needs a square grid, got {f.shape}")
    focal = focal_mm if focal_mm is not None else f.focal_mm
    out_pitch = 1.0 / (nx * f.pitch)
    if f.domain == "position":
        return FieldGrid(ft2c(f.values, f.pitch), out_pitch, "frequency", f.wavelength_nm, focal)
    return FieldGrid(ift2c(f.values, f.pitch), out_pitch, "position", f.wavelength_nm, focal)


def relay_image(f: FieldGrid, magnification: float = -1.0) -> FieldGrid:
    """Unit-magnitude telescope relay. Only m = +1 and m = -1 are modelled."""
    if magnification == 0:
        raise ValueError("magnification must be non-zero")
    if abs(magnification) != 1:
        raise UnsupportedConfigurationError(
            f"only |magnification| = 1 relays are supported, got {magnification}"
        )
    if magnification > 0:
        return f.with_values(f.values.copy())
    return f.with_values(point_reflect(f.values))


def apply_mask(f: FieldGrid, m: PhaseMask) -> FieldGrid:
    if f.domain != "position":
        raise ValueError("phase masks act on position-domain fields")
    phase = m.embed(f.shape)
    return f.with_values(f.values * np.exp(1j * phase))


def _check_roi(shape, roi) -> tuple[int, int, int, int]:
    y0, x0, h, w = (int(r) for r in roi)
    if h <= 0 or w <= 0 or y0 < 0 or x0 < 0 or y0 + h > shape[0] or x0 + w > shape[1]:
        raise DimensionError(f"roi {roi} outside array of shape {shape}")
    return y0, x0, h, w


def centered_roi(n: int, size: int) -> tuple[int, int, int, int]:
    o = centered_offset(n, size)
    return (o, o, size, size)


def crop_field(f: FieldGrid, roi) -> FieldGrid:
    """Plain crop of a complex field; roi is (y0, x0, height, width)."""
    y0, x0, h, w = _check_roi(f.shape, roi)
    return f.with_values(f.values[y0:y0 + h, x0:x0 + w].copy())


def bin_intensity(intensity: np.ndarray, roi, bin: int) -> np.ndarray:
    """Crop an intensity image and sum it over ``bin x bin`` detector pixels."""
    intensity = np.asarray(intensity)
    if np.iscomplexobj(intensity):
        raise TypeError("bin_intensity takes intensities; use crop_field for fields")
    y0, x0, h, w = _check_roi(intensity.shape, roi)
    b = int(bin)
    if b < 1 or h % b or w % b:
        raise DimensionError(f"bin {bin} does not divide roi {h}x{w}")
    sub = intensity[y0:y0 + h, x0:x0 + w]
    return sub.reshape(h // b, b, w // b, b).sum(axis=(1, 3))
