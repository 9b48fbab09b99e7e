"""Double-Gaussian biphoton state, its Schmidt modes and the joint far-field pdf.

Width conventions
-----------------
``sigma_sum`` is the intensity standard deviation of nu_s + nu_i, i.e. the
width of the momentum-correlation peak. ``sigma_marginal`` (mm^-1) and
``sigma_position`` (mm) are single-photon Gaussian widths written as
exp(-x^2 / sigma^2) in amplitude (twice the intensity standard deviation).
With that convention the per-axis Schmidt number of the double Gaussian is
exactly ``pi * sigma_position * sigma_marginal`` and a separable state sits at
``sigma_position * sigma_marginal = 1 / pi``.

The state is factorised per transverse axis. In momentum space, per axis,

    A(nu_s, nu_i) = exp(-(nu_s + nu_i)^2 / (4 a^2) - (nu_s - nu_i)^2 / (4 b^2))

with a = sigma_sum and b the width of the difference coordinate.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import SamplingError, TruncationError
from .field import PhaseMask, ft1c, ift1c, point_reflect
from .medium import DiffuserScreen, Geometry, SignalTrain

AXES = ("x", "y")


def schmidt_number(sigma_position: float, sigma_marginal: float) -> float:
    """Per-axis Schmidt number of a double-Gaussian state from its two widths."""
    if sigma_position <= 0 or sigma_marginal <= 0:
        raise ValueError("widths must be positive")
    return float(np.pi * sigma_position * sigma_marginal)


def _ratio_from_k(k: float) -> float:
    if k < 1:
        raise ValueError(f"Schmidt number must be >= 1, got {k}")
    return k + np.sqrt(k * k - 1.0)


@dataclass(frozen=True)
class DoubleGaussianState:
    """Per-axis double-Gaussian biphoton; tuples are (x, y)."""

    sigma_sum: tuple[float, float]
    sigma_marginal: tuple[float, float]
    wavelength_nm: float = 710.0

    def __post_init__(self):
        for a, m in zip(self.sigma_sum, self.sigma_marginal):
            if a <= 0 or m <= a:
                raise ValueError("need 0 < sigma_sum < sigma_marginal on each axis")
            if a / m >= 0.1:
                warnings.warn(
                    f"sigma_sum/sigma_marginal = {a / m:.3f} >= 0.1: weakly entangled state",
                    stacklevel=3,
                )

    @classmethod
    def from_schmidt(cls, sigma_sum, schmidt, wavelength_nm: float = 710.0) -> "DoubleGaussianState":
        marg = []
        for a, k in zip(sigma_sum, schmidt):
            b = _ratio_from_k(k) * a
            marg.append(float(np.sqrt(a * a + b * b)))
        return cls(tuple(float(a) for a in sigma_sum), tuple(marg), wavelength_nm)

    @classmethod
    def from_widths(cls, sigma_position, sigma_marginal, wavelength_nm: float = 710.0) -> "DoubleGaussianState":
        """Pure state reproducing given single-photon near- and far-field widths."""
        sums = []
        for sx, sn in zip(sigma_position, sigma_marginal):
            k = schmidt_number(sx, sn)
            r = _ratio_from_k(k)
            sums.append(float(sn / np.sqrt(1 + r * r)))
        return cls(tuple(sums), tuple(float(s) for s in sigma_marginal), wavelength_nm)

    @property
    def sigma_diff(self) -> tuple[float, float]:
        """Intensity std of nu_s - nu_i per axis."""
        return tuple(float(np.sqrt(m * m - a * a)) for a, m in zip(self.sigma_sum, self.sigma_marginal))

    @property
    def sigma_position(self) -> tuple[float, float]:
        out = []
        for a, b in zip(self.sigma_sum, self.sigma_diff):
            out.append(float(np.sqrt(1 / a**2 + 1 / b**2) / (2 * np.pi)))
        return tuple(out)

    @property
    def schmidt(self) -> tuple[float, float]:
        return tuple(schmidt_number(p, m) for p, m in zip(self.sigma_position, self.sigma_marginal))


@dataclass(frozen=True, eq=False)
class AxisModes:
    """Schmidt data for one transverse axis.

    ``spectrum`` is the full normalised eigenvalue list; ``signal`` and
    ``idler`` hold the kept near-field modes as rows (unit l2 norm).
    """

    spectrum: np.ndarray
    signal: np.ndarray
    idler: np.ndarray

    @property
    def n_modes(self) -> int:
        return self.signal.shape[0]

    @property
    def kept(self) -> np.ndarray:
        return self.spectrum[: self.n_modes]

    @property
    def captured(self) -> float:
        return float(self.kept.sum())

    @property
    def schmidt_number(self) -> float:
        return float(1.0 / np.sum(self.spectrum**2))


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    x: AxisModes
    y: AxisModes
    pitch_mm: float
    truncation: dict = field(default_factory=dict)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Full 2-D spectrum (outer product of the axes), descending."""
        lam = np.outer(self.y.spectrum, self.x.spectrum).ravel()
        return np.sort(lam)[::-1]

    @property
    def captured_weight(self) -> float:
        return self.x.captured * self.y.captured

    def mode(self, ix: int, iy: int, arm: str = "signal") -> np.ndarray:
        """2-D near-field mode u_ix(x) u_iy(y) as an (n, n) array indexed [y, x]."""
        mx, my = getattr(self.x, arm)[ix], getattr(self.y, arm)[iy]
        return np.outer(my, mx)


def axis_amplitude(n: int, dnu: float, a: float, b: float) -> np.ndarray:
    """Momentum-space amplitude A[nu_s, nu_i] on the centred grid, unit l2 norm."""
    nu = (np.arange(n) - n // 2) * dnu
    s = nu[:, None] + nu[None, :]
    d = nu[:, None] - nu[None, :]
    amp = np.exp(-(s**2) / (4 * a * a) - d**2 / (4 * b * b))
    return amp / np.linalg.norm(amp)


def _decompose_axis(n: int, dnu: float, a: float, b: float, n_modes: int) -> AxisModes:
    if a / dnu < 0.5:
        raise SamplingError(
            f"sum width {a:.3g} mm^-1 is under half a far-field pixel ({dnu:.3g} mm^-1)"
        )
    marginal_std = np.sqrt(a * a + b * b) / 2
    if 2.5 * marginal_std > (n // 2) * dnu:
        raise SamplingError(
            f"single-photon far field (std {marginal_std:.3g} mm^-1) overflows the grid "
            f"(half-width {(n // 2) * dnu:.3g} mm^-1)"
        )
    amp = axis_amplitude(n, dnu, a, b)
    u, s, vh = np.linalg.svd(amp)
    lam = s**2 / np.sum(s**2)
    k = min(n_modes, n)
    # momentum modes -> SLM / idler near-field planes
    signal = ift1c(u[:, :k].T, axis=-1)
    idler = ift1c(vh[:k], axis=-1)
    return AxisModes(lam, signal, idler)


def schmidt_decompose(state: DoubleGaussianState, n_modes: int, geometry: Geometry) -> SchmidtDecomposition:
    """SVD of the discretised two-photon amplitude, axis by axis."""
    if n_modes < 1 or n_modes > geometry.grid:
        raise ValueError(f"n_modes must lie in [1, {geometry.grid}]")
    n, dnu = geometry.grid, geometry.freq_pitch
    axes = [
        _decompose_axis(n, dnu, a, b, n_modes)
        for a, b in zip(state.sigma_sum, state.sigma_diff)
    ]
    dec = SchmidtDecomposition(axes[0], axes[1], geometry.pitch_mm)
    dec.truncation.update(
        n_modes=n_modes,
        captured_x=axes[0].captured,
        captured_y=axes[1].captured,
        captured=dec.captured_weight,
    )
    return dec


# ---------------------------------------------------------------- propagation
class TransformedModes:
    """Schmidt modes carried through the two arms.

    Signal modes go through the mask/diffuser train; idler modes through a
    relay and a 2f lens, which act per axis. Both arms are unitary on the grid.
    Signal modes are produced on demand since the 2-D set is large.
    """

    def __init__(self, dec: SchmidtDecomposition, geometry: Geometry, mask: PhaseMask | None, screen: DiffuserScreen | None):
        self.dec = dec
        self.geometry = geometry
        self.train = SignalTrain(geometry, mask, screen)
        self._scale = 1.0 / (geometry.grid * geometry.pitch_mm**2)
        self.idler_x = ft1c(point_reflect(dec.x.idler, axes=(-1,)), axis=-1)
        self.idler_y = ft1c(point_reflect(dec.y.idler, axes=(-1,)), axis=-1)

    def propagate_fields(self, fields: np.ndarray) -> np.ndarray:
        """Unitary (l2-preserving) signal-arm propagation of SLM-plane fields."""
        return self.train.apply(fields) * self._scale

    def signal(self, pairs) -> np.ndarray:
        """Far-field signal modes for (ix, iy) index pairs, shape (k, n, n)."""
        fields = np.stack([self.dec.mode(ix, iy, "signal") for ix, iy in pairs])
        return self.propagate_fields(fields)

    def idler(self, pairs) -> np.ndarray:
        return np.stack([np.outer(self.idler_y[iy], self.idler_x[ix]) for ix, iy in pairs])


def propagate_signal_arm(
    dec: SchmidtDecomposition, mask: PhaseMask | None, screen: DiffuserScreen | None, geometry: Geometry
) -> TransformedModes:
    return TransformedModes(dec, geometry, mask, screen)


class JointMomentumPDF:
    """P(nu_s, nu_i) = |sum_n sqrt(lam_n) u'_n(nu_s) v'_n(nu_i)|^2 on the far-field grids.

    Fixing the idler pixel, the sum over modes is a single signal near field
    (separable in x and y); the train is linear, so we propagate that field
    instead of each mode. Indices are flat row-major over the n x n grid.
    """

    def __init__(self, modes: TransformedModes, force: bool = False, chunk: int = 128):
        dec = modes.dec
        if dec.captured_weight < 0.99 and not force:
            raise TruncationError(
                f"kept modes carry {dec.captured_weight:.4f} < 0.99 of the state; pass force=True"
            )
        self.modes = modes
        self.geometry = modes.geometry
        self.n = modes.geometry.grid
        self.chunk = chunk
        # g[nu_i, x_s] = sum_j sqrt(lam_j) v'_j(nu_i) u_j(x_s)
        self._gx = (modes.idler_x.T * np.sqrt(dec.x.kept)) @ dec.x.signal
        self._gy = (modes.idler_y.T * np.sqrt(dec.y.kept)) @ dec.y.signal
        self.norm = dec.captured_weight
        self._sum_map = None
        self._signal_marginal = None

    @property
    def freq_pitch(self) -> float:
        return self.geometry.freq_pitch

    @property
    def sum_origin(self) -> int:
        """Index of nu+ = 0 along each axis of :meth:`sum_marginal`."""
        return 2 * (self.n // 2)

    def idler_marginal(self) -> np.ndarray:
        wy = np.sum(np.abs(self._gy) ** 2, axis=1)
        wx = np.sum(np.abs(self._gx) ** 2, axis=1)
        return np.outer(wy, wx) / self.norm

    def conditional_amplitudes(self, idler_flat: np.ndarray) -> np.ndarray:
        """Signal far-field amplitudes for each idler pixel, unnormalised, (k, n, n)."""
        iy, ix = np.divmod(np.asarray(idler_flat), self.n)
        near = self._gy[iy][:, :, None] * self._gx[ix][:, None, :]
        return self.modes.propagate_fields(near)

    def joint_slices(self, idler_flat) -> np.ndarray:
        """P(nu_s, nu_i) for every signal pixel at the given idler pixels, (k, n, n)."""
        return np.abs(self.conditional_amplitudes(idler_flat)) ** 2 / self.norm

    def evaluate(self, signal_flat, idler_flat) -> np.ndarray:
        signal_flat = np.asarray(signal_flat)
        idler_flat = np.asarray(idler_flat)
        out = np.empty(signal_flat.shape)
        uniq, inv = np.unique(idler_flat, return_inverse=True)
        slices = self.joint_slices(uniq).reshape(len(uniq), -1)
        out[...] = slices[inv.ravel(), signal_flat.ravel()].reshape(signal_flat.shape)
        return out

    def _accumulate(self):
        n = self.n
        cmap = np.zeros((2 * n - 1, 2 * n - 1))
        smarg = np.zeros((n, n))
        for start in range(0, n * n, self.chunk):
            idx = np.arange(start, min(start + self.chunk, n * n))
            p = self.joint_slices(idx)
            smarg += p.sum(axis=0)
            for k, flat in enumerate(idx):
                iy, ix = divmod(int(flat), n)
                cmap[iy:iy + n, ix:ix + n] += p[k]
        self._sum_map, self._signal_marginal = cmap, smarg

    def sum_marginal(self) -> np.ndarray:
        """C(nu+) = sum_nu P(nu, nu+ - nu) on a (2n-1) x (2n-1) grid."""
        if self._sum_map is None:
            self._accumulate()
        return self._sum_map

    def signal_marginal(self) -> np.ndarray:
        if self._signal_marginal is None:
            self._accumulate()
        return self._signal_marginal

    def sample_signal(self, idler_flat: np.ndarray, uniforms: np.ndarray, workers: int = 1) -> np.ndarray:
        """Inverse-CDF draw of a signal pixel for each idler pixel.

        Deterministic given ``uniforms``: idler pixels are grouped in sorted
        order and every group writes only its own entries, so neither batching
        nor ``workers`` changes the result.
        """
        idler_flat = np.asarray(idler_flat)
        uniforms = np.asarray(uniforms)
        if uniforms.shape != idler_flat.shape:
            raise ValueError("one uniform per idler pixel is required")
        out = np.empty(idler_flat.shape, dtype=np.int64)
        if idler_flat.size == 0:
            return out
        uniq, inv = np.unique(idler_flat, return_inverse=True)
        inv = inv.ravel()
        order = np.argsort(inv, kind="stable")
        bounds = np.searchsorted(inv[order], np.arange(len(uniq) + 1))
        npix = self.n * self.n
        flat_out = out.ravel()
        flat_u = uniforms.ravel()

        def run(start: int) -> None:
            stop = min(start + self.chunk, len(uniq))
            p = self.joint_slices(uniq[start:stop]).reshape(stop - start, -1)
            cdf = np.cumsum(p, axis=1)
            cdf /= cdf[:, -1:]
            for k in range(stop - start):
                members = order[bounds[start + k]:bounds[start + k + 1]]
                pos = np.searchsorted(cdf[k], flat_u[members], side="right")
                flat_out[members] = np.minimum(pos, npix - 1)

        starts = range(0, len(uniq), self.chunk)
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                list(pool.map(run, starts))
        else:
            for s0 in starts:
                run(s0)
        return out


def joint_momentum_pdf(modes: TransformedModes, force: bool = False) -> JointMomentumPDF:
    return JointMomentumPDF(modes, force=force)
