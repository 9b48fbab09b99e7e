"""Interferometric transmission-matrix measurement and phase-conjugation focusing."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
import scipy.linalg

from .errors import DimensionError, InputError
from .field import PhaseMask
from .medium import DiffuserScreen, Geometry, SignalTrain, TransmissionMatrix, macropixel_fields, pattern_fields

PHASE_STEPS = (0.0, np.pi / 2, np.pi, 3 * np.pi / 2)


@dataclass(frozen=True, eq=False)
class ProbeBasis:
    """Orthogonal input patterns over macropixels, one per row of ``vectors``."""

    vectors: np.ndarray
    kind: Literal["hadamard", "canonical"]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


def _sign_changes(h: np.ndarray) -> np.ndarray:
    return np.count_nonzero(np.diff(h, axis=1), axis=1)


def hadamard_basis(n_macro: int) -> ProbeBasis:
    """Walsh (sequency-ordered) Hadamard patterns on an ``n_macro x n_macro`` grid."""
    m = n_macro * n_macro
    if n_macro < 1 or n_macro & (n_macro - 1):
        raise DimensionError(f"Hadamard basis needs a power-of-two macropixel side, got {n_macro}")
    h = scipy.linalg.hadamard(m).astype(np.float64)
    order = np.argsort(_sign_changes(h), kind="stable")
    return ProbeBasis(h[order], "hadamard")


def canonical_basis(n_macro: int) -> ProbeBasis:
    return ProbeBasis(np.eye(n_macro * n_macro), "canonical")


def reconstruct_4phase(i0, i_half, i_pi, i_3half) -> np.ndarray:
    """Complex product conj(E_ref) * E_mode from four phase-stepped interferograms.

    The probe is shifted by 0, pi/2, pi and 3pi/2 against the reference, so
    I(a) = |E_ref + exp(i a) E_mode|^2.
    """
    imgs = [np.asarray(i, dtype=np.float64) for i in (i0, i_half, i_pi, i_3half)]
    if any(im.shape != imgs[0].shape for im in imgs):
        raise InputError("interferograms must share one shape")
    if any(np.any(im < 0) for im in imgs):
        raise InputError("intensities must be non-negative")
    i0, ih, ip, i3 = imgs
    return (i0 - ip) / 4 + 1j * (i3 - ih) / 4


def _reference_field(train: SignalTrain, policy: str) -> np.ndarray:
    g = train.geometry
    ys, xs = g.camera_slice()
    if policy == "ideal":
        return np.ones((g.camera_roi, g.camera_roi), dtype=np.complex128)
    if policy == "border":
        border = (~g.roi_support()).astype(np.complex128)
        if not border.any():
            raise DimensionError("border reference needs an SLM ROI smaller than the grid")
        return train.apply(border)[ys, xs]
    raise ValueError(f"unknown reference policy {policy!r}")


def _common_reference(c: np.ndarray, full: np.ndarray) -> np.ndarray:
    """Refer canonical-probe products to the full-ROI field.

    With macropixel k stepped, its reference is R - t_k (R: border plus the
    whole ROI), so the raw product is c = u - |u|^2 / |R|^2 with
    u = conj(R) t_k. The zero-step frame is exactly |R|^2; solving the real
    quadratic for s = |u|^2 / |R|^2 (root continuous at t_k = 0) gives u.
    """
    b = full - 2 * c.real
    disc = np.maximum(b * b - 4 * np.abs(c) ** 2, 0.0)
    s = (b - np.sqrt(disc)) / 2
    return c + s


def measure_tm(
    screen: DiffuserScreen,
    basis: ProbeBasis,
    geometry: Geometry,
    reference_policy: Literal["border", "ideal"] = "border",
    chunk: int = 64,
    workers: int = 1,
) -> TransmissionMatrix:
    """Phase-stepping TM measurement with a plane-wave probe laser.

    With ``border`` the unmodulated SLM area around the ROI provides the
    reference; with ``ideal`` a flat unit reference is added at the camera.
    Each row of the result carries the unknown factor conj(E_ref) of its pixel.

    Hadamard probes phase-encode +-1 as 0/pi over the whole ROI and step the
    ROI phase. Canonical probes step one macropixel while the rest of the ROI
    stays at zero phase, so the remaining macropixels join the reference; the
    products are then re-referred to the full-ROI field so that every row
    keeps a single factor.
    """
    g = geometry
    if basis.size != g.n_inputs:
        raise DimensionError(f"basis of size {basis.size} for {g.n_inputs} macropixels")
    train = SignalTrain(g, None, screen)
    ys, xs = g.camera_slice()
    ref = _reference_field(train, reference_policy)
    roi_all = None
    if basis.kind == "canonical":
        roi_all = train.apply(g.roi_support().astype(np.complex128))[ys, xs]

    def probe_chunk(idx: np.ndarray) -> np.ndarray:
        if basis.kind == "canonical":
            modes = train.apply(macropixel_fields(g, idx))[:, ys, xs]
            if reference_policy == "ideal":
                refs = np.broadcast_to(ref, modes.shape)
            else:
                refs = ref + roi_all - modes
        else:
            modes = train.apply(pattern_fields(g, basis.vectors[idx]))[:, ys, xs]
            refs = np.broadcast_to(ref, modes.shape)
        frames = [np.abs(refs + np.exp(1j * a) * modes) ** 2 for a in PHASE_STEPS]
        c = reconstruct_4phase(*frames)
        if basis.kind == "canonical" and reference_policy == "border":
            c = _common_reference(c, frames[0])
        return c.reshape(len(idx), -1)

    chunks = [np.arange(s, min(s + chunk, basis.size)) for s in range(0, basis.size, chunk)]
    y = np.empty((g.n_outputs, basis.size), dtype=np.complex128)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(probe_chunk, chunks))
    else:
        results = [probe_chunk(c) for c in chunks]
    for idx, res in zip(chunks, results):
        y[:, idx] = res.T
    # y = T @ V with V holding the probe patterns as columns
    v = basis.vectors.T
    if basis.kind == "hadamard":
        t = y @ v.T / basis.size
    else:
        t = np.linalg.solve(v.T, y.T).T
    return TransmissionMatrix(t, g, "measured", screen.seed)


@dataclass(frozen=True)
class FocusTargetSet:
    """Far-field focus targets in mm^-1 with complex weights (default 1)."""

    targets: Sequence[tuple[float, float]]
    weights: Sequence[complex] = field(default=())

    def __post_init__(self):
        if len(self.targets) == 0:
            raise ValueError("at least one target is required")
        if self.weights and len(self.weights) != len(self.targets):
            raise ValueError("one weight per target")

    def resolved_weights(self) -> np.ndarray:
        if not self.weights:
            return np.ones(len(self.targets), dtype=np.complex128)
        return np.asarray(self.weights, dtype=np.complex128)

    def pixels(self, geometry: Geometry) -> list[tuple[int, int]]:
        out = []
        for nu_x, nu_y in self.targets:
            r, c = geometry.nu_to_camera_index(nu_x, nu_y)
            if not (0 <= r < geometry.camera_roi and 0 <= c < geometry.camera_roi):
                raise InputError(f"target ({nu_x}, {nu_y}) mm^-1 lies outside the camera ROI")
            out.append((r, c))
        return out


def conjugation_mask(tm: TransmissionMatrix, targets: FocusTargetSet) -> PhaseMask:
    """Phase-only mask putting all macropixel contributions in phase at the targets.

    With several targets each TM row is scaled to unit norm first, so equal
    weights mean equal share of the light regardless of the unknown
    per-pixel reference amplitude in a measured TM.
    """
    g = tm.geometry
    pix = targets.pixels(g)
    w = targets.resolved_weights()
    acc = np.zeros(g.n_inputs, dtype=np.complex128)
    for (r, c), wk in zip(pix, w):
        row = tm.row(r, c)
        if len(pix) > 1:
            row = row / np.linalg.norm(row)
        acc += wk * np.conj(row)
    return PhaseMask(np.angle(acc).reshape(g.n_macro, g.n_macro), g.macropixel)


def focus_image(geometry: Geometry, mask: PhaseMask | None, screen: DiffuserScreen) -> np.ndarray:
    """Camera-ROI laser intensity with the SLM ROI uniformly illuminated."""
    g = geometry
    train = SignalTrain(g, mask, screen)
    ys, xs = g.camera_slice()
    return np.abs(train.apply(g.roi_support().astype(np.complex128))[ys, xs]) ** 2


def enhancement(focused: np.ndarray, baseline: np.ndarray, target: tuple[int, int]) -> float:
    """Focus intensity over the mean unshaped speckle intensity of the ROI."""
    focused = np.asarray(focused)
    baseline = np.asarray(baseline)
    if focused.shape != baseline.shape:
        raise DimensionError("focused and baseline images differ in shape")
    mean = float(np.mean(baseline))
    if mean == 0:
        raise ZeroDivisionError("baseline image has zero mean")
    return float(focused[target]) / mean
