"""End-to-end runs of the four shaping experiments plus the no-diffuser reference.

Stages: diffuser -> TM measurement -> mask -> laser focus check -> biphoton pdf
-> frames -> correlation -> peak statistics. Each stage writes its products as
soon as it finishes, so a failed run keeps everything computed before the
failure. Stats are taken at each scenario's reference locations: the targets
for shaped runs, nu+ = 0 for the unshaped ones.
"""

from __future__ import annotations

import csv
import hashlib
import platform
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import io
from .biphoton import joint_momentum_pdf, propagate_signal_arm, schmidt_decompose
from .config import SCENARIOS, ExperimentConfig
from .correlator import STATS_COLUMNS, CorrelationMap, PeakStats, correlate, peak_stats
from .detector import FrameStack, sample_frames
from .errors import DimensionError, SpecklePairError, StageError
from .field import PhaseMask
from .medium import DiffuserScreen, Geometry, make_diffuser
from .probe import FocusTargetSet, canonical_basis, conjugation_mask, enhancement, focus_image, hadamard_basis, measure_tm


@dataclass
class RunReport:
    scenario: str
    config: ExperimentConfig
    geometry: Geometry
    locations: list[tuple[float, float]]
    stats: list[PeakStats] = field(default_factory=list)
    global_stats: PeakStats | None = None
    enhancement: list[float] = field(default_factory=list)
    pairs_per_frame: float = float("nan")
    surviving_pairs_per_frame: float = float("nan")
    timings: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    out_dir: Path | None = None
    cmap: CorrelationMap | None = None
    mask: PhaseMask | None = None
    stack: FrameStack | None = None


def _targets(cfg: ExperimentConfig, scenario: str) -> list[tuple[float, float]]:
    if scenario in ("center", "offset", "dual"):
        return [tuple(map(float, t)) for t in getattr(cfg.targets, scenario)]
    return [(0.0, 0.0)]


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_stats_csv(path, stats: list[PeakStats]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STATS_COLUMNS)
        for s in stats:
            row = s.as_row()
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in STATS_COLUMNS])


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"version.package": pkg, "version.numpy": np.__version__, "version.scipy": scipy.__version__,
            "version.python": platform.python_version()}


def write_manifest(report: RunReport, status: str, error: str | None = None) -> Path | None:
    if report.out_dir is None:
        return None
    cfg = report.config
    lines = {
        "scenario": report.scenario,
        "status": status,
        "seed": cfg.seed,
        "seed.medium": cfg.medium_seed,
        "seed.detector": cfg.detector_seed,
        **_versions(),
    }
    if error:
        lines["error"] = error.replace("\n", " ")
    if not np.isnan(report.pairs_per_frame):
        lines["pairs_per_frame"] = repr(report.pairs_per_frame)
        lines["surviving_pairs_per_frame"] = repr(report.surviving_pairs_per_frame)
    for k, e in enumerate(report.enhancement):
        lines[f"enhancement.{k}"] = repr(e)
    if report.global_stats is not None:
        lines["global_peak.contrast"] = repr(report.global_stats.contrast)
    for stage, t in report.timings.items():
        lines[f"timing.{stage}"] = f"{t:.3f}"
    for name in sorted(report.files):
        p = report.files[name]
        lines[f"file.{name}"] = f"{p.name} sha256={_sha256(p)}"
    path = report.out_dir / "manifest.txt"
    path.write_text("".join(f"{k}={v}\n" for k, v in lines.items()))
    return path


class _Stages:
    def __init__(self, report: RunReport):
        self.report = report

    def run(self, name: str, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            out = fn(*args, **kwargs)
        except StageError:
            raise
        except (SpecklePairError, ValueError, ArithmeticError, OSError) as exc:
            raise StageError(name, f"{type(exc).__name__}: {exc}") from exc
        finally:
            self.report.timings[name] = time.perf_counter() - t0
        return out

    def save(self, name: str, filename: str, writer, obj, **kwargs):
        if self.report.out_dir is None:
            return
        path = self.report.out_dir / filename
        writer(path, obj, **kwargs)
        self.report.files[name] = path


def run_experiment(cfg: ExperimentConfig, scenario: str, out_dir=None, write: bool = True) -> RunReport:
    """Run one scenario; outputs go to ``out_dir`` (default output_dir/scenario)."""
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    cfg.validate()
    g = cfg.geometry.build()
    report = RunReport(scenario, cfg, g, _targets(cfg, scenario))
    if write:
        report.out_dir = Path(out_dir) if out_dir is not None else Path(cfg.output_dir) / scenario
        report.out_dir.mkdir(parents=True, exist_ok=True)
        (report.out_dir / "config.yaml").write_text(cfg.to_yaml())
        report.files["config"] = report.out_dir / "config.yaml"
    st = _Stages(report)
    try:
        _execute(cfg, scenario, g, report, st)
    except StageError as exc:
        write_manifest(report, "failed", str(exc))
        raise
    write_manifest(report, "ok")
    return report


def _execute(cfg: ExperimentConfig, scenario: str, g: Geometry, report: RunReport, st: _Stages) -> None:
    workers = cfg.workers
    if scenario == "no_diffuser":
        screen = DiffuserScreen.transparent(g.grid, g.pitch_mm)
    else:
        screen = st.run("diffuser", make_diffuser, cfg.medium.correlation_length_mm, g.grid, g.pitch_mm, cfg.medium_seed)
    st.save("screen", "screen.bin", io.save_screen, screen)

    mask = None
    if scenario in ("center", "offset", "dual"):
        basis = hadamard_basis(g.n_macro) if cfg.medium.basis == "hadamard" else canonical_basis(g.n_macro)
        tm = st.run("tm", measure_tm, screen, basis, g, cfg.medium.reference_policy, workers=workers)
        st.save("tm", "tm.bin", io.save_tm, tm)
        targets = FocusTargetSet(report.locations)
        mask = st.run("mask", conjugation_mask, tm, targets)
        st.save("mask", "mask.bin", io.save_mask, mask)
        st.save("mask_preview", "mask.png", io.write_preview, mask.phases, wrap_phase=True)
        report.mask = mask

        def focus_check():
            baseline = focus_image(g, None, screen)
            focused = focus_image(g, mask, screen)
            return focused, [enhancement(focused, baseline, px) for px in targets.pixels(g)]

        focused, report.enhancement = st.run("focus", focus_check)
        st.save("focus_preview", "focus.png", io.write_preview, focused)

    state = cfg.state.build()
    st.save("state", "state.bin", io.save_state, state)
    n_modes = cfg.state.n_modes or g.grid
    dec = st.run("schmidt", schmidt_decompose, state, n_modes, g)
    st.save("decomposition", "decomposition.bin", io.save_decomposition, dec)
    pdf = st.run("pdf", lambda: joint_momentum_pdf(propagate_signal_arm(dec, mask, screen, g)))

    det = cfg.detector.build(cfg.detector_seed)
    stack = st.run("frames", sample_frames, pdf, det, workers=workers)
    report.stack = stack
    report.pairs_per_frame = stack.pairs_per_frame
    report.surviving_pairs_per_frame = stack.metadata["surviving_pairs"] / len(stack)
    st.save("frames", "frames.bin", io.save_frames, stack)

    a = cfg.analysis
    cmap = st.run("correlate", correlate, stack, a.accidentals, a.normalization)
    report.cmap = cmap
    st.save("map", "map.bin", io.save_map, cmap)
    st.save("map_preview", "map.png", io.write_preview, cmap.values)

    def stats():
        rows = [peak_stats(cmap, a.window, loc, a.guard, a.annulus) for loc in report.locations]
        return rows, peak_stats(cmap, a.window, None, a.guard, a.annulus)

    report.stats, report.global_stats = st.run("stats", stats)
    st.save("stats", "stats.csv", write_stats_csv, report.stats)


# ---------------------------------------------------------------- comparison
@dataclass
class CompareReport:
    rows: list[dict]
    ratios: dict

    def format(self) -> str:
        cols = ("peak",) + STATS_COLUMNS
        out = ["\t".join(("run",) + cols)]
        for r in self.rows:
            out.append("\t".join([r["run"]] + [f"{r[c]:.6g}" if isinstance(r[c], float) else str(r[c]) for c in cols]))
        out += [f"{k}\t{v:.6g}" for k, v in self.ratios.items()]
        return "\n".join(out)


def compare_runs(a: RunReport, b: RunReport) -> CompareReport:
    """Side-by-side stats and ratio metrics of run ``a`` against run ``b``.

    ``width_ratio`` compares the mean of the two axis widths of the first peak;
    ``amplitude_ratio_k`` compares peak k of ``a`` with the first peak of ``b``.
    """
    if a.geometry != b.geometry:
        raise DimensionError("runs were made on different geometries")
    rows = []
    for label, rep in (("a", a), ("b", b)):
        for k, s in enumerate(rep.stats):
            rows.append({"run": label, "peak": k, **s.as_row()})
    ref = b.stats[0]
    ratios = {
        "width_ratio": float(np.mean(a.stats[0].sigma) / np.mean(ref.sigma)),
        "width_ratio_x": a.stats[0].sigma[0] / ref.sigma[0],
        "width_ratio_y": a.stats[0].sigma[1] / ref.sigma[1],
        "integral_ratio": a.stats[0].integral / ref.integral if ref.integral else float("nan"),
    }
    for k, s in enumerate(a.stats):
        ratios[f"amplitude_ratio_{k}"] = s.amplitude / ref.amplitude if ref.amplitude else float("nan")
    if len(a.stats) == len(b.stats):
        for k, (sa, sb) in enumerate(zip(a.stats, b.stats)):
            for c in STATS_COLUMNS:
                ratios[f"diff_{k}_{c}"] = float(sa.as_row()[c] - sb.as_row()[c])
    return CompareReport(rows, ratios)
