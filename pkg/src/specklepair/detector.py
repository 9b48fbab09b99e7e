"""Photon-counting (EMCCD-like) acquisition of twin far-field frames.

Each frame holds a Poisson number of generated pairs. Every pair draws its
idler pixel from the idler marginal and its signal pixel from the conditional
pdf; each photon then survives its arm's detection efficiency independently.
Spurious counts are added per pixel and frames are binarised, so a pixel
reads 1 when at least one photon landed on it.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .biphoton import JointMomentumPDF
from .errors import ConfigError, DimensionError
from .medium import Geometry


@dataclass(frozen=True)
class DetectorConfig:
    """Detection model; ``mean_photons_per_pixel`` is the target fill.

    The fill is the expected binarised occupancy of the brightest idler pixel.
    The idler never crosses the medium, so its peak is fixed by the state and
    the same pair rate serves every scenario. ``signal_transmission`` is an
    extra loss of the signal arm (diffuser throughput).
    """

    eta_signal: float = 0.48
    eta_idler: float = 0.48
    mean_photons_per_pixel: float = 0.15
    spurious_rate: float = 1e-3
    frames: int = 500
    seed: int | None = 0
    signal_transmission: float = 1.0

    def __post_init__(self):
        for name in ("eta_signal", "eta_idler", "signal_transmission"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        if not 0 < self.mean_photons_per_pixel <= 0.5:
            raise ConfigError(
                f"fill must lie in (0, 0.5] for photon counting, got {self.mean_photons_per_pixel}"
            )
        if not 0 <= self.spurious_rate < 1:
            raise ConfigError(f"spurious_rate must lie in [0, 1), got {self.spurious_rate}")
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class FrameStack:
    """Binary twin frames, shape (frames, n, n), values in {0, 1}."""

    signal: np.ndarray
    idler: np.ndarray
    geometry: Geometry
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.signal, dtype=np.uint8)
        i = np.asarray(self.idler, dtype=np.uint8)
        if s.ndim != 3 or s.shape != i.shape:
            raise DimensionError(f"signal {s.shape} and idler {i.shape} stacks differ")
        if s.shape[1:] != (self.geometry.grid, self.geometry.grid):
            raise DimensionError(f"frames {s.shape[1:]} do not match grid {self.geometry.grid}")
        if s.max(initial=0) > 1 or i.max(initial=0) > 1:
            raise ValueError("frames must be binary")
        object.__setattr__(self, "signal", s)
        object.__setattr__(self, "idler", i)

    def __len__(self) -> int:
        return self.signal.shape[0]

    @property
    def pairs_per_frame(self) -> float:
        return float(self.metadata["pairs_per_frame"])

    def subset(self, index) -> "FrameStack":
        """Frames selected by a slice or index array; counts are not carried over."""
        meta = {k: v for k, v in self.metadata.items() if k != "surviving_pairs"}
        return FrameStack(self.signal[index], self.idler[index], self.geometry, meta)


def pair_survival_rate(cfg: DetectorConfig) -> float:
    """Fraction of generated pairs with both photons detected."""
    return cfg.eta_signal * cfg.signal_transmission * cfg.eta_idler


def _spurious_mean(cfg: DetectorConfig) -> float:
    return -np.log1p(-cfg.spurious_rate)


def pair_rate_for_fill(peak_probability: float, cfg: DetectorConfig) -> float:
    """Pairs per frame putting the brightest idler pixel at the target fill.

    The binarised occupancy of a pixel is 1 - exp(-(R eta_i p + mu_sp)); it is
    monotone in R and inverted in closed form.
    """
    need = -np.log1p(-cfg.mean_photons_per_pixel) - _spurious_mean(cfg)
    if need <= 0:
        raise ConfigError(
            f"spurious rate {cfg.spurious_rate} alone reaches the target fill "
            f"{cfg.mean_photons_per_pixel}"
        )
    if peak_probability <= 0:
        raise ConfigError("idler marginal is empty")
    return float(need / (cfg.eta_idler * peak_probability))


def _frame_draws(rng: np.random.Generator, rate: float, cdf: np.ndarray, cfg: DetectorConfig, npix: int):
    n_pairs = int(rng.poisson(rate))
    idler = np.searchsorted(cdf, rng.random(n_pairs) * cdf[-1], side="right")
    idler = np.minimum(idler, npix - 1)
    u_signal = rng.random(n_pairs)
    keep_s = rng.random(n_pairs) < cfg.eta_signal * cfg.signal_transmission
    keep_i = rng.random(n_pairs) < cfg.eta_idler
    spur_s = rng.random(npix) < cfg.spurious_rate
    spur_i = rng.random(npix) < cfg.spurious_rate
    return idler, u_signal, keep_s, keep_i, spur_s, spur_i


def sample_frames(pdf: JointMomentumPDF, cfg: DetectorConfig, workers: int = 1) -> FrameStack:
    """Monte-Carlo twin frames from the joint pdf.

    Frame f uses the child seed (seed, f), so any frame can be regenerated
    alone and the stack does not depend on ``workers``.
    """
    g = pdf.geometry
    n = g.grid
    npix = n * n
    im = pdf.idler_marginal().ravel()
    cdf = np.cumsum(im)
    rate = pair_rate_for_fill(float(im.max() / cdf[-1]), cfg)
    root = np.random.SeedSequence(cfg.seed)

    def draw(f: int):
        child = np.random.SeedSequence(root.entropy, spawn_key=(f,))
        return _frame_draws(np.random.default_rng(child), rate, cdf, cfg, npix)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            draws = list(pool.map(draw, range(cfg.frames)))
    else:
        draws = [draw(f) for f in range(cfg.frames)]

    # one conditional-pdf pass for the surviving signal photons of all frames
    sizes = [int(d[2].sum()) for d in draws]
    all_idler = np.concatenate([d[0][d[2]] for d in draws]) if draws else np.empty(0, int)
    all_u = np.concatenate([d[1][d[2]] for d in draws]) if draws else np.empty(0)
    all_signal = pdf.sample_signal(all_idler, all_u, workers=workers)
    splits = np.split(all_signal, np.cumsum(sizes)[:-1])

    sig = np.zeros((cfg.frames, npix), dtype=np.uint8)
    idl = np.zeros((cfg.frames, npix), dtype=np.uint8)
    generated = 0
    surviving = 0
    for f, ((idler, _, keep_s, keep_i, spur_s, spur_i), s_pix) in enumerate(zip(draws, splits)):
        generated += len(idler)
        surviving += int(np.count_nonzero(keep_s & keep_i))
        sig[f, s_pix] = 1
        idl[f, idler[keep_i]] = 1
        sig[f] |= spur_s
        idl[f] |= spur_i
    meta = {
        "pairs_per_frame": rate,
        "generated_pairs": generated,
        "surviving_pairs": surviving,
        "detector": cfg.to_dict(),
    }
    return FrameStack(sig.reshape(-1, n, n), idl.reshape(-1, n, n), g, meta)
