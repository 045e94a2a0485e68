"""Command-line entry point: synth, train, detect, eval and bench subcommands.

Exit status: 0 on success, 1 on a usage error, 2 when the command fails
at run time (unreadable file, malformed model, training error).
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

from . import pipeline
from .canny import CannyConfig
from .doorfeat import FeatureConfig
from .imgcore import GrayImage, PnmError, read_pnm, save_pnm, to_gray_image
from .linefit import LineConfig
from .som import TrainSchedule
from .synthcorpus import generate_corpus, load_corpus

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


# (flag, config field) for every tunable; defaults are read from the config dataclasses
_CANNY_FLAGS = (("--sigma", "sigma"), ("--canny-lo", "lo"), ("--canny-hi", "hi"))
_LINE_FLAGS = (("--dev-tol", "dev_tol"), ("--angle-tol", "angle_tol"), ("--gap-tol", "gap_tol"),
               ("--min-len", "min_len"), ("--lateral-tol", "lateral_tol"))
_FEATURE_FLAGS = (("--vertical-tol", "vertical_tol_deg"), ("--min-post-frac", "min_post_frac"),
                  ("--horizon-frac", "horizon_frac"), ("--w-min", "w_min"), ("--w-max", "w_max"),
                  ("--columns", "n_columns"), ("--window", "window"), ("--bins", "bins"))
_SCHEDULE_FLAGS = (("--eta0", "eta0_order"), ("--eta-conv", "eta_conv"), ("--sigma0", "sigma0"),
                   ("--tau2", "tau2"), ("--tau-eta", "tau_eta"), ("--h0", "h0"), ("--iters", "total_iters"),
                   ("--order-frac", "order_frac"), ("--sigma-min", "sigma_min"),
                   ("--sample-every", "sample_every"))


def _add_group(parser, title: str, cls, flags) -> None:
    g = parser.add_argument_group(title)
    defaults = cls()
    for flag, name in flags:
        value = getattr(defaults, name)
        g.add_argument(flag, dest=f"{cls.__name__}.{name}", type=type(value), default=value,
                       metavar=type(value).__name__.upper(), help="default: %(default)s")


def _collect(args, cls):
    kwargs = {}
    for f in fields(cls):
        key = f"{cls.__name__}.{f.name}"
        if hasattr(args, key):
            kwargs[f.name] = getattr(args, key)
    return cls(**kwargs)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="doorsom", description="Door detection with a self-organizing map.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", help="render a synthetic labeled corpus")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--n", type=int, default=100, help="images per category (default: %(default)s)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--width", type=int, default=320)
    s.add_argument("--height", type=int, default=240)

    t = sub.add_parser("train", help="train a model on a corpus directory")
    t.add_argument("--corpus", required=True, type=Path)
    t.add_argument("--out", required=True, type=Path)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--curve", type=Path, help="write the training error curve here")
    cfg = pipeline.PipelineConfig()
    t.add_argument("--rows", type=int, default=cfg.rows, help="lattice rows (default: %(default)s)")
    t.add_argument("--cols", type=int, default=cfg.cols, help="lattice columns (default: %(default)s)")
    t.add_argument("--iou", type=float, default=cfg.iou_threshold,
                   help="overlap labeling a candidate as a door (default: %(default)s)")
    _add_group(t, "edge detection", CannyConfig, _CANNY_FLAGS)
    _add_group(t, "line fitting", LineConfig, _LINE_FLAGS)
    _add_group(t, "door features", FeatureConfig, _FEATURE_FLAGS)
    _add_group(t, "training schedule", TrainSchedule, _SCHEDULE_FLAGS)

    d = sub.add_parser("detect", help="classify the door candidates of one image")
    d.add_argument("--model", required=True, type=Path)
    d.add_argument("--image", required=True, type=Path)
    d.add_argument("--overlay", type=Path, help="write a PPM with detected doors outlined")
    d.add_argument("--lines", type=Path, help="write the binary door-line raster as PGM")

    e = sub.add_parser("eval", help="per-category detection report on a corpus")
    e.add_argument("--model", required=True, type=Path)
    e.add_argument("--corpus", required=True, type=Path)
    e.add_argument("--log", type=Path, help="write per-image detection logs here")
    e.add_argument("--iou", type=float, default=cfg.iou_threshold)

    b = sub.add_parser("bench", help="timing report")
    b.add_argument("--model", required=True, type=Path)
    b.add_argument("--image", required=True, type=Path)
    b.add_argument("--classify-reps", type=int, default=1000)
    b.add_argument("--step-reps", type=int, default=100)
    b.add_argument("--train-reps", type=int, default=100)
    b.add_argument("--stage-reps", type=int, default=20)
    return p


def _gray(path: Path) -> GrayImage:
    img = read_pnm(path)
    if not isinstance(img, GrayImage):
        raise ValueError(f"{path}: expected a grayscale (P5) image")
    return img


def _run(args, out) -> None:
    if args.command == "synth":
        items = generate_corpus(args.n, args.seed, args.out, args.width, args.height)
        print(f"wrote {len(items)} images to {args.out}", file=out)
    elif args.command == "train":
        cfg = pipeline.PipelineConfig(
            canny=_collect(args, CannyConfig), lines=_collect(args, LineConfig),
            features=_collect(args, FeatureConfig), schedule=_collect(args, TrainSchedule),
            rows=args.rows, cols=args.cols, iou_threshold=args.iou,
        )
        corpus = load_corpus(args.corpus)
        if not corpus:
            raise ValueError(f"{args.corpus}: no images found")
        res = pipeline.fit_model(corpus, cfg, args.seed)
        pipeline.save_model(args.out, res.model)
        if args.curve is not None:
            args.curve.write_text(res.curve.format(), encoding="utf-8")
        print(f"images {res.n_images} candidates {res.n_candidates} doors {res.n_doors} "
              f"train_accuracy {res.train_accuracy:.4f}", file=out)
    elif args.command == "detect":
        model = pipeline.read_model(args.model)
        img = _gray(args.image)
        res = pipeline.detect_doors(img, model)
        out.write(res.records())
        if args.overlay is not None:
            args.overlay.write_bytes(save_pnm(res.overlay(img)))
        if args.lines is not None:
            args.lines.write_bytes(save_pnm(to_gray_image(res.line_raster() * 255)))
    elif args.command == "eval":
        model = pipeline.read_model(args.model)
        rep = pipeline.evaluate_corpus(model, load_corpus(args.corpus), args.iou)
        out.write(rep.format())
        if args.log is not None:
            args.log.write_text(rep.format_logs(), encoding="utf-8")
    elif args.command == "bench":
        model = pipeline.read_model(args.model)
        rep = pipeline.bench(model, _gray(args.image), args.classify_reps, args.step_reps,
                             args.train_reps, args.stage_reps)
        out.write(rep.format())


def _unknown_flags(parser: argparse.ArgumentParser, argv: Sequence[str]) -> list[str]:
    """Option strings the chosen subcommand does not define.

    Checked before parsing so an unknown flag is named even when a
    required one is also missing.
    """
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    cmd = next((t for t in argv if not t.startswith("-")), None)
    if cmd not in sub.choices:
        return []
    known = sub.choices[cmd]._option_string_actions
    return [t.split("=", 1)[0] for t in argv
            if t.startswith("--") and t.split("=", 1)[0] not in known]


def main(argv: Optional[Sequence[str]] = None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        unknown = _unknown_flags(parser, argv)
        if unknown:
            raise UsageError(f"doorsom: error: unrecognized arguments: {' '.join(unknown)}")
        args = parser.parse_args(argv)
    except UsageError as e:
        print(parser.format_usage().rstrip(), file=err)
        print(str(e), file=err)
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    try:
        _run(args, out)
    except (OSError, ValueError, PnmError, pipeline.TrainingError) as e:
        print(f"doorsom {args.command}: error: {e}", file=err)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
