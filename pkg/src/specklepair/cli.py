"""Command-line entry point: ``specklepair <command> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import ast
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .biphoton import joint_momentum_pdf, propagate_signal_arm, schmidt_decompose
from .config import SCENARIOS, ExperimentConfig, load_config
from .correlator import CorrelationMap, PeakStats, correlate, peak_stats
from .detector import sample_frames
from .errors import ConfigError, SpecklePairError, StageError
from .medium import DiffuserScreen, make_diffuser
from .pipeline import RunReport, compare_runs, run_experiment, write_stats_csv
from .probe import FocusTargetSet, canonical_basis, conjugation_mask, enhancement, focus_image, hadamard_basis, measure_tm

log = logging.getLogger("specklepair")

EXIT_CONFIG = 2
EXIT_STAGE = 3


def _target(text: str) -> tuple[float, float]:
    try:
        value = ast.literal_eval(text)
        nu_x, nu_y = (float(v) for v in value)
    except (ValueError, SyntaxError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"target must look like '(nu_x, nu_y)', got {text!r}") from exc
    return nu_x, nu_y


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config, args.preset)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg.validate()


def _screen(args, cfg: ExperimentConfig) -> DiffuserScreen:
    if getattr(args, "screen", None):
        return io.load_screen(args.screen)
    g = cfg.geometry.build()
    return make_diffuser(cfg.medium.correlation_length_mm, g.grid, g.pitch_mm, cfg.medium_seed)


# ---------------------------------------------------------------- commands
def cmd_run(args) -> int:
    cfg = _config(args)
    if args.output_dir:
        cfg = replace(cfg, output_dir=args.output_dir)
    report = run_experiment(cfg, args.scenario)
    for k, s in enumerate(report.stats):
        print(
            f"peak {k}: centroid=({s.centroid[0]:.3f}, {s.centroid[1]:.3f}) mm^-1 "
            f"sigma=({s.sigma[0]:.3f}, {s.sigma[1]:.3f}) mm^-1 amplitude={s.amplitude:.4g} "
            f"integral={s.integral:.4f} contrast={s.contrast:.2f}"
            + (f" flags={','.join(s.flags)}" if s.flags else "")
        )
    print(f"outputs in {report.out_dir}")
    return 0


def cmd_tm_measure(args) -> int:
    cfg = _config(args)
    g = cfg.geometry.build()
    screen = _screen(args, cfg)
    if args.screen_out:
        io.save_screen(args.screen_out, screen)
    basis = hadamard_basis(g.n_macro) if cfg.medium.basis == "hadamard" else canonical_basis(g.n_macro)
    tm = measure_tm(screen, basis, g, cfg.medium.reference_policy, workers=cfg.workers)
    io.save_tm(args.out, tm)
    print(f"TM {tm.t.shape[0]}x{tm.t.shape[1]} written to {args.out}")
    return 0


def cmd_tm_focus(args) -> int:
    tm = io.load_tm(args.tm)
    mask = conjugation_mask(tm, FocusTargetSet(args.targets))
    io.save_mask(args.out, mask)
    if args.preview:
        io.write_preview(args.preview, mask.phases, wrap_phase=True)
    print(f"mask for {len(args.targets)} target(s) written to {args.out}")
    return 0


def cmd_tm_enhance(args) -> int:
    tm = io.load_tm(args.tm)
    g = tm.geometry
    screen = io.load_screen(args.screen)
    mask = io.load_mask(args.mask)
    targets = FocusTargetSet(args.targets or [(0.0, 0.0)])
    baseline = focus_image(g, None, screen)
    focused = focus_image(g, mask, screen)
    for t, px in zip(targets.targets, targets.pixels(g)):
        print(f"target ({t[0]:g}, {t[1]:g}) mm^-1: enhancement {enhancement(focused, baseline, px):.2f}")
    return 0


def _pdf(args, cfg):
    g = cfg.geometry.build()
    screen = io.load_screen(args.screen) if args.screen else DiffuserScreen.transparent(g.grid, g.pitch_mm)
    mask = io.load_mask(args.mask) if args.mask else None
    dec = schmidt_decompose(cfg.state.build(), cfg.state.n_modes or g.grid, g)
    return g, joint_momentum_pdf(propagate_signal_arm(dec, mask, screen, g))


def cmd_biphoton_pdf(args) -> int:
    cfg = _config(args)
    g, pdf = _pdf(args, cfg)
    cmap = CorrelationMap(pdf.sum_marginal(), g.freq_pitch, 0, {"mode": "pdf"})
    io.save_map(args.out, cmap)
    print(f"sum-coordinate marginal written to {args.out}")
    return 0


def cmd_acquire(args) -> int:
    cfg = _config(args)
    det = cfg.detector
    det = replace(
        det,
        frames=args.frames if args.frames is not None else det.frames,
        fill=args.fill if args.fill is not None else det.fill,
        signal_transmission=args.transmission if args.transmission is not None else det.signal_transmission,
    )
    cfg = replace(cfg, detector=det).validate()
    _, pdf = _pdf(args, cfg)
    seed = args.seed if args.seed is not None else cfg.detector_seed
    stack = sample_frames(pdf, det.build(seed), workers=cfg.workers)
    io.save_frames(args.out, stack)
    print(f"{len(stack)} twin frames written to {args.out} ({stack.pairs_per_frame:.1f} pairs/frame)")
    return 0


def cmd_correlate(args) -> int:
    stack = io.load_frames(args.stack)
    cmap = correlate(stack, args.accidentals, args.normalization)
    io.save_map(args.out, cmap)
    centers = args.targets or [None]
    stats = [peak_stats(cmap, args.window, c) for c in centers]
    if args.stats:
        write_stats_csv(args.stats, stats)
    for s in stats:
        print(f"integral={s.integral:.4f} contrast={s.contrast:.2f} sigma=({s.sigma[0]:.3f}, {s.sigma[1]:.3f})")
    return 0


def _read_run(path: Path) -> RunReport:
    cfg = ExperimentConfig.from_yaml((path / "config.yaml").read_text())
    stats = []
    with open(path / "stats.csv") as fh:
        for row in csv.DictReader(fh):
            v = {k: float(x) for k, x in row.items()}
            stats.append(PeakStats((v["centroid_x"], v["centroid_y"]), (v["sigma_x"], v["sigma_y"]), v["amplitude"],
                                   v["integral"], v["contrast"], int(v["frames_used"]), (0, 0)))
    return RunReport(path.name, cfg, cfg.geometry.build(), [], stats)


def cmd_compare(args) -> int:
    try:
        a, b = _read_run(Path(args.a)), _read_run(Path(args.b))
    except OSError as exc:
        raise ConfigError(f"cannot read run directory: {exc}") from exc
    print(compare_runs(a, b).format())
    return 0


# ---------------------------------------------------------------- parser
def _common(p: argparse.ArgumentParser, seeds: bool = True) -> None:
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--preset", default="desk", choices=("desk", "paper"))
    p.add_argument("--workers", type=int, default=None)
    if seeds:
        p.add_argument("--seed", type=int, default=None, help="global seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specklepair", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario end to end")
    _common(p)
    p.add_argument("--scenario", required=True, choices=SCENARIOS)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_run)

    tm = sub.add_parser("tm", help="transmission-matrix tools").add_subparsers(dest="tm_command", required=True)
    p = tm.add_parser("measure", help="measure a TM through a diffuser")
    _common(p)
    p.add_argument("--screen", help="existing screen container (default: synthesize from config)")
    p.add_argument("--screen-out", help="also write the synthesized screen here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tm_measure)

    p = tm.add_parser("focus", help="phase-conjugation mask for targets in mm^-1")
    p.add_argument("--tm", required=True)
    p.add_argument("--targets", type=_target, action="append", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--preview", help="8-bit PNG of the mask phases")
    p.set_defaults(func=cmd_tm_focus)

    p = tm.add_parser("enhance", help="laser enhancement of a mask")
    p.add_argument("--tm", required=True)
    p.add_argument("--screen", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--targets", type=_target, action="append")
    p.set_defaults(func=cmd_tm_enhance)

    bi = sub.add_parser("biphoton", help="biphoton tools").add_subparsers(dest="bi_command", required=True)
    p = bi.add_parser("pdf", help="exact sum-coordinate marginal C(nu+)")
    _common(p)
    p.add_argument("--mask")
    p.add_argument("--screen")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_biphoton_pdf)

    p = sub.add_parser("acquire", help="sample photon-counting twin frames")
    _common(p)
    p.add_argument("--mask")
    p.add_argument("--screen")
    p.add_argument("--frames", type=int)
    p.add_argument("--fill", type=float)
    p.add_argument("--transmission", type=float, help="signal-arm transmission")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_acquire)

    p = sub.add_parser("correlate", help="momentum-correlation map and stats")
    p.add_argument("--stack", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stats")
    p.add_argument("--targets", type=_target, action="append", help="evaluate peaks here (default: argmax)")
    p.add_argument("--window", type=int, default=7)
    p.add_argument("--accidentals", choices=("shift", "mean", "none"), default="shift")
    p.add_argument("--normalization", choices=("pair-rate", "singles", "raw"), default="pair-rate")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("compare", help="compare two run directories")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (SpecklePairError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
