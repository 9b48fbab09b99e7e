"""Thin scattering medium: random phase screens and their transmission matrices.

The signal-arm optical train is SLM mask -> relay (m = -1) -> diffuser phase
screen -> 2f lens onto the camera. Every element is either a pointwise phase,
a point reflection or a unitary transform, so the train is lossless.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np
from scipy import optimize, special

from .errors import AliasingError, DimensionError
from .field import (
    FieldGrid,
    PhaseMask,
    apply_mask,
    centered_offset,
    fourier_2f,
    ft2c,
    point_reflect,
    relay_image,
)


@dataclass(frozen=True)
class Geometry:
    """Sampling of the bench, shared by the laser and the biphoton arms.

    ``grid`` is the simulation grid (pixels per side) at the SLM, diffuser and
    camera planes; ``slm_roi`` is the modulated SLM square, binned into
    ``macropixel``-sized blocks; ``camera_roi`` is the far-field square on which
    the transmission matrix is measured.
    """

    grid: int = 128
    pitch_mm: float = 0.0078125
    slm_roi: int = 64
    macropixel: int = 4
    camera_roi: int = 32
    wavelength_nm: float = 710.0
    focal_mm: float = 200.0

    def __post_init__(self):
        if self.grid <= 0 or self.pitch_mm <= 0:
            raise DimensionError("grid and pitch must be positive")
        if self.slm_roi > self.grid or self.camera_roi > self.grid:
            raise DimensionError("ROIs must fit inside the grid")
        if self.macropixel < 1 or self.slm_roi % self.macropixel:
            raise DimensionError(
                f"macropixel {self.macropixel} does not divide SLM ROI {self.slm_roi}"
            )

    @property
    def n_macro(self) -> int:
        return self.slm_roi // self.macropixel

    @property
    def n_inputs(self) -> int:
        return self.n_macro**2

    @property
    def n_outputs(self) -> int:
        return self.camera_roi**2

    @property
    def freq_pitch(self) -> float:
        """Far-field sampling in mm^-1."""
        return 1.0 / (self.grid * self.pitch_mm)

    @property
    def slm_offset(self) -> int:
        return centered_offset(self.grid, self.slm_roi)

    @property
    def camera_offset(self) -> int:
        return centered_offset(self.grid, self.camera_roi)

    def camera_slice(self) -> tuple[slice, slice]:
        o, p = self.camera_offset, self.camera_roi
        return slice(o, o + p), slice(o, o + p)

    def roi_support(self) -> np.ndarray:
        sup = np.zeros((self.grid, self.grid), dtype=bool)
        o, s = self.slm_offset, self.slm_roi
        sup[o:o + s, o:o + s] = True
        return sup

    def nu_to_camera_index(self, nu_x: float, nu_y: float) -> tuple[int, int]:
        """(row, col) of the camera-ROI pixel nearest to spatial frequency (nu_x, nu_y)."""
        c = self.camera_roi // 2
        return c + int(round(nu_y / self.freq_pitch)), c + int(round(nu_x / self.freq_pitch))

    def camera_index_to_nu(self, row: int, col: int) -> tuple[float, float]:
        c = self.camera_roi // 2
        return (col - c) * self.freq_pitch, (row - c) * self.freq_pitch


@dataclass(frozen=True, eq=False)
class DiffuserScreen:
    phases: np.ndarray
    pitch_mm: float
    correlation_length_mm: float
    seed: int | None = None

    @classmethod
    def transparent(cls, n: int, pitch_mm: float) -> "DiffuserScreen":
        return cls(np.zeros((n, n)), pitch_mm, np.inf, None)

    @property
    def shape(self) -> tuple[int, int]:
        return self.phases.shape


@dataclass(frozen=True, eq=False)
class TransmissionMatrix:
    """Complex map from SLM macropixels (columns) to camera-ROI pixels (rows).

    Columns follow row-major macropixel order, rows row-major camera order.
    """

    t: np.ndarray
    geometry: Geometry
    kind: Literal["ground_truth", "measured"] = "ground_truth"
    seed: int | None = None

    def __post_init__(self):
        g = self.geometry
        if self.t.shape != (g.n_outputs, g.n_inputs):
            raise DimensionError(
                f"TM shape {self.t.shape} inconsistent with geometry "
                f"({g.n_outputs} outputs x {g.n_inputs} inputs)"
            )

    def row(self, row: int, col: int) -> np.ndarray:
        return self.t[row * self.geometry.camera_roi + col]


# ---------------------------------------------------------------- diffuser
@lru_cache(maxsize=1)
def _half_max_field_correlation() -> float:
    """Field correlation |rho| at which the phasor exp(i arg g) correlation is 1/2.

    For a circular complex Gaussian g, <exp(i(phi1 - phi2))> =
    (pi/4) |rho| 2F1(1/2, 1/2; 2; |rho|^2).
    """
    def phasor(r):
        return np.pi / 4 * r * special.hyp2f1(0.5, 0.5, 2.0, r * r) - 0.5

    return optimize.brentq(phasor, 1e-6, 1 - 1e-12)


def make_diffuser(correlation_length_mm: float, n: int, pitch_mm: float, seed=None) -> DiffuserScreen:
    """Random phase screen whose phasor autocorrelation has FWHM ``correlation_length_mm``.

    Built as the argument of a low-pass filtered circular Gaussian field, which
    makes the phase marginal uniform on [0, 2 pi).
    """
    if correlation_length_mm < 2 * pitch_mm:
        raise AliasingError(
            f"correlation length {correlation_length_mm} mm is below two pixels ({2 * pitch_mm} mm)"
        )
    rng = np.random.default_rng(seed)
    white = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    if np.isinf(correlation_length_mm):
        g = np.full((n, n), white.mean())
    else:
        rho = _half_max_field_correlation()
        s = 0.5 * correlation_length_mm / np.sqrt(-2.0 * np.log(rho))
        nu = np.fft.fftfreq(n, d=pitch_mm)
        nu2 = nu[:, None] ** 2 + nu[None, :] ** 2
        g = np.fft.ifft2(np.fft.fft2(white) * np.exp(-np.pi**2 * s**2 * nu2))
    phases = np.mod(np.angle(g), 2 * np.pi)
    return DiffuserScreen(phases, pitch_mm, correlation_length_mm, seed)


# ---------------------------------------------------------------- train
class SignalTrain:
    """Array-level signal arm for a fixed mask and screen.

    ``apply`` maps a stack of SLM-plane fields (..., n, n) to far-field camera
    amplitudes on the full grid.
    """

    def __init__(self, geometry: Geometry, mask: PhaseMask | None, screen: DiffuserScreen | None):
        n = geometry.grid
        if screen is not None and screen.shape != (n, n):
            raise DimensionError(f"screen shape {screen.shape} does not match grid {n}")
        self.geometry = geometry
        pre = np.zeros((n, n)) if mask is None else mask.embed((n, n))
        post = np.zeros((n, n)) if screen is None else screen.phases
        # reflect(x * pre) * post == reflect(x * pre * reflect(post))
        self.multiplier = np.exp(1j * (pre + point_reflect(post)))

    def apply(self, fields: np.ndarray) -> np.ndarray:
        g = self.geometry
        return ft2c(point_reflect(fields * self.multiplier), g.pitch_mm)


def forward_train(inp: FieldGrid, mask: PhaseMask, screen: DiffuserScreen) -> FieldGrid:
    """Propagate an SLM-plane field to the far-field camera plane."""
    if inp.domain != "position":
        raise ValueError("forward_train expects a position-domain field at the SLM plane")
    if screen.shape != inp.shape:
        raise DimensionError(f"screen {screen.shape} does not match field {inp.shape}")
    f = apply_mask(inp, mask)
    f = relay_image(f, -1)
    f = f.with_values(f.values * np.exp(1j * screen.phases))
    return fourier_2f(f)


def pattern_fields(geometry: Geometry, patterns: np.ndarray) -> np.ndarray:
    """Full-grid SLM fields for complex macropixel patterns of shape (k, n_inputs)."""
    g = geometry
    patterns = np.asarray(patterns)
    k = patterns.shape[0]
    blocks = patterns.reshape(k, g.n_macro, g.n_macro)
    s = g.macropixel
    out = np.zeros((k, g.grid, g.grid), dtype=np.complex128)
    o = g.slm_offset
    out[:, o:o + g.slm_roi, o:o + g.slm_roi] = np.repeat(np.repeat(blocks, s, axis=1), s, axis=2)
    return out


def macropixel_fields(geometry: Geometry, indices) -> np.ndarray:
    """Unit-amplitude fields, one per macropixel index, on the full grid."""
    indices = np.asarray(indices)
    onehot = np.zeros((len(indices), geometry.n_inputs))
    onehot[np.arange(len(indices)), indices] = 1.0
    return pattern_fields(geometry, onehot)


def ground_truth_tm(
    screen: DiffuserScreen, geometry: Geometry, chunk: int = 64, full_plane: bool = False
) -> TransmissionMatrix:
    """Exact TM by propagating each macropixel through the train.

    With ``full_plane`` the whole far-field grid is kept as output instead of
    the camera ROI (used for the isometry check); the result is then returned
    as a plain array.
    """
    g = geometry
    train = SignalTrain(g, None, screen)
    ys, xs = g.camera_slice()
    n_out = g.grid**2 if full_plane else g.n_outputs
    t = np.empty((n_out, g.n_inputs), dtype=np.complex128)
    for start in range(0, g.n_inputs, chunk):
        idx = np.arange(start, min(start + chunk, g.n_inputs))
        far = train.apply(macropixel_fields(g, idx))
        if not full_plane:
            far = far[:, ys, xs]
        t[:, idx] = far.reshape(len(idx), -1).T
    if full_plane:
        return t
    return TransmissionMatrix(t, g, "ground_truth", screen.seed)
