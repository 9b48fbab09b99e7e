"""Momentum-correlation maps from twin frame stacks, and peak statistics.

The map lives on the sum coordinate nu+ = nu_s + nu_i. For n x n frames it is
(2n - 1) x (2n - 1) with nu+ = 0 at index ``2 * (n // 2)`` on each axis, the
same layout as :meth:`JointMomentumPDF.sum_marginal`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.fft as sfft

from .detector import FrameStack
from .errors import DimensionError, InputError

Accidentals = Literal["shift", "mean", "none"]
Normalization = Literal["pair-rate", "singles", "raw"]


@dataclass(frozen=True, eq=False)
class CorrelationMap:
    values: np.ndarray
    freq_pitch: float
    frames_used: int
    normalization: dict = field(default_factory=dict)
    stderr: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] % 2 == 0:
            raise DimensionError(f"correlation map must be square with odd side, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("correlation map has non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def origin(self) -> int:
        """Index of nu+ = 0 along each axis."""
        n = (self.values.shape[0] + 1) // 2
        return 2 * (n // 2)

    def nu_to_index(self, nu_x: float, nu_y: float) -> tuple[int, int]:
        o = self.origin
        return o + int(round(nu_y / self.freq_pitch)), o + int(round(nu_x / self.freq_pitch))

    def index_to_nu(self, row: float, col: float) -> tuple[float, float]:
        o = self.origin
        return (col - o) * self.freq_pitch, (row - o) * self.freq_pitch

    def total(self) -> float:
        """Sum over the whole map: all genuine coincidences, peak and speckle."""
        return float(self.values.sum())


def _saturation_weights(frames: np.ndarray) -> np.ndarray:
    # binary covariance of a genuine pair ~ c * (1 - p_s)(1 - p_i); undo it per pixel
    p = frames.mean(axis=0)
    return 1.0 / np.maximum(1.0 - p, 1e-3)


def _check(stack: FrameStack) -> None:
    if stack.signal.shape != stack.idler.shape:
        raise DimensionError("signal and idler stacks differ in shape")
    if len(stack) < 2:
        raise InputError("at least two frame pairs are needed")


def correlate(
    stack: FrameStack,
    accidentals: Accidentals = "shift",
    normalization: Normalization = "pair-rate",
    saturation_correction: bool = True,
    stderr: bool = False,
    chunk: int = 32,
) -> CorrelationMap:
    """R(nu+) = mean_f sum_nu S_f(nu) I_f(nu+ - nu) minus accidentals.

    Accidentals come from pairing signal frame f with idler frame f + 1
    (cyclic), or with ``mean`` from the product of the mean frames; ``none``
    keeps the raw coincidences.

    Normalisation modes:
      - ``pair-rate``: divided by the generated pairs per frame, so a lossless
        detector puts integral 1 under the genuine coincidences.
      - ``singles``: divided by the mean idler count per frame.
      - ``raw``: coincidences per frame.
    """
    _check(stack)
    if accidentals not in ("shift", "mean", "none"):
        raise ValueError(f"unknown accidentals mode {accidentals!r}")
    f_count, n, _ = stack.signal.shape
    ws = _saturation_weights(stack.signal) if saturation_correction else 1.0
    wi = _saturation_weights(stack.idler) if saturation_correction else 1.0
    size = (2 * n, 2 * n)

    def spectra(frames, weights, idx):
        return sfft.rfft2(frames[idx] * weights, s=size, axes=(-2, -1))

    mean_s = mean_i = 0.0
    if accidentals == "mean":
        mean_s = sfft.rfft2(stack.signal.mean(axis=0) * ws, s=size)
        mean_i = sfft.rfft2(stack.idler.mean(axis=0) * wi, s=size)
    acc_sum = 0.0
    sq_sum = 0.0
    # fixed chunk order keeps the floating-point sum reproducible
    for start in range(0, f_count, chunk):
        idx = np.arange(start, min(start + chunk, f_count))
        fs = spectra(stack.signal, ws, idx)
        fi = spectra(stack.idler, wi, idx)
        if accidentals == "shift":
            per = fs * (fi - spectra(stack.idler, wi, (idx + 1) % f_count))
        elif accidentals == "mean":
            per = fs * fi - mean_s * mean_i
        else:
            per = fs * fi
        acc_sum = acc_sum + per.sum(axis=0)
        if stderr:
            maps = sfft.irfft2(per, s=size, axes=(-2, -1))[:, : 2 * n - 1, : 2 * n - 1]
            sq_sum = sq_sum + (maps**2).sum(axis=0)
    m = sfft.irfft2(acc_sum / f_count, s=size)[: 2 * n - 1, : 2 * n - 1]

    if normalization == "pair-rate":
        scale = stack.pairs_per_frame
    elif normalization == "singles":
        scale = float(stack.idler.sum()) / f_count
    elif normalization == "raw":
        scale = 1.0
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    if scale <= 0:
        raise InputError("normalization scale is zero (no photons or no pairs)")

    se = None
    if stderr:
        var = np.maximum(sq_sum / f_count - m**2, 0.0) * f_count / (f_count - 1)
        se = np.sqrt(var / f_count) / scale
    record = {
        "mode": normalization,
        "scale": scale,
        "accidentals": accidentals,
        "saturation_correction": saturation_correction,
    }
    return CorrelationMap(m / scale, 1.0 / (n * stack.geometry.pitch_mm), f_count, record, se)


@dataclass(frozen=True)
class PeakStats:
    centroid: tuple[float, float]
    sigma: tuple[float, float]
    amplitude: float
    integral: float
    contrast: float
    frames_used: int
    center_index: tuple[int, int]
    flags: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.flags

    def as_row(self) -> dict:
        return {
            "centroid_x": self.centroid[0],
            "centroid_y": self.centroid[1],
            "sigma_x": self.sigma[0],
            "sigma_y": self.sigma[1],
            "amplitude": self.amplitude,
            "integral": self.integral,
            "contrast": self.contrast,
            "frames_used": self.frames_used,
        }


STATS_COLUMNS = ("centroid_x", "centroid_y", "sigma_x", "sigma_y", "amplitude", "integral", "contrast", "frames_used")


def peak_stats(
    cmap: CorrelationMap,
    window: int = 7,
    center: tuple[float, float] | None = None,
    guard: int = 2,
    annulus: int = 6,
) -> PeakStats:
    """Background-subtracted moments of the peak in a ``window`` x ``window`` box.

    The box is centred on the global maximum, or on the pixel nearest to
    ``center`` = (nu_x, nu_y) in mm^-1. The background is the mean of a square
    ring starting ``guard`` pixels outside the box and ``annulus`` pixels wide;
    contrast is the amplitude over the ring's rms.

    Flags: ``boundary`` when the box or ring leaves the map or the box maximum
    sits on its edge, ``absent`` when there is no positive peak.
    """
    if window < 1 or window % 2 == 0:
        raise InputError(f"window must be a positive odd size, got {window}")
    v = cmap.values
    size = v.shape[0]
    if center is None:
        r0, c0 = (int(k) for k in np.unravel_index(np.argmax(v), v.shape))
    else:
        r0, c0 = cmap.nu_to_index(*center)
    h = window // 2
    outer = h + guard + annulus
    flags = []
    if r0 - outer < 0 or c0 - outer < 0 or r0 + outer >= size or c0 + outer >= size:
        flags.append("boundary")
    lo_r, hi_r = max(r0 - h, 0), min(r0 + h + 1, size)
    lo_c, hi_c = max(c0 - h, 0), min(c0 + h + 1, size)
    box = v[lo_r:hi_r, lo_c:hi_c]
    if box.size == 0:
        raise InputError("empty peak window")
    inner = box[1:-1, 1:-1]
    if inner.size and box.max() > inner.max() and "boundary" not in flags:
        # the maximum sits on the box edge only
        flags.append("boundary")

    rr, cc = np.mgrid[0:size, 0:size]
    cheb = np.maximum(np.abs(rr - r0), np.abs(cc - c0))
    ring = v[(cheb > h + guard) & (cheb <= outer)]
    bg = float(ring.mean()) if ring.size else 0.0
    noise = float(np.sqrt(np.mean(ring**2))) if ring.size else 0.0

    w = box - bg
    amplitude = float(box.max() - bg)
    integral = float(w.sum())
    rows = (np.arange(lo_r, hi_r) - cmap.origin) * cmap.freq_pitch
    cols = (np.arange(lo_c, hi_c) - cmap.origin) * cmap.freq_pitch
    total = w.sum()
    tiny = 1e-12 * float(np.abs(v).max(initial=0.0))
    if amplitude <= tiny or total <= tiny:
        flags.append("absent")
        nan = float("nan")
        centroid, sigma = cmap.index_to_nu(r0, c0), (nan, nan)
    else:
        wy, wx = w.sum(axis=1), w.sum(axis=0)
        mx, my = float(wx @ cols / total), float(wy @ rows / total)
        vx = float(wx @ (cols - mx) ** 2 / total)
        vy = float(wy @ (rows - my) ** 2 / total)
        centroid = (mx, my)
        sigma = (float(np.sqrt(vx)) if vx > 0 else float("nan"), float(np.sqrt(vy)) if vy > 0 else float("nan"))
        if not (vx > 0 and vy > 0):
            flags.append("absent")
    contrast = amplitude / noise if noise > 0 else (float("inf") if amplitude > 0 else 0.0)
    return PeakStats(centroid, sigma, amplitude, integral, contrast, cmap.frames_used, (r0, c0), tuple(flags))


def pair_count_estimate(stats: PeakStats, metadata: dict) -> float:
    """Detected pairs per frame implied by a pair-rate-normalised peak integral."""
    return float(stats.integral) * float(metadata["pairs_per_frame"])
