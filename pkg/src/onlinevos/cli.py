"""Command-line interface: ``run``, ``eval``, ``synth`` and ``selftest``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
"""

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .errors import (DegenerateMaskError, DimensionError, FormatError, GenerationError,
                     InputError, NumericalBreakdownError)
from .evaluation import EvalReport, score_sequence
from .features import PRECOMPUTED, FeatureSpec, PrecomputedFeatureProvider, ToyFeatureProvider
from .io import (RunConfig, decode_pgm, encode_pgm, open_sequence, read_feature_file,
                 read_run_config, split_objects)
from .pipeline import EngineConfig, SegmentationEngine
from .synthetic import TIERS, tier_spec, write_sequence

log = logging.getLogger("onlinevos")

RUNTIME_ERRORS = (DegenerateMaskError, DimensionError, FormatError, GenerationError, InputError,
                  NumericalBreakdownError, OSError)

TIMING_FILE = "timing.txt"
DIAGNOSTICS_FILE = "diagnostics.txt"


def _format_record(rec):
    parts = []
    for k, v in rec.items():
        parts.append(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")
    return " ".join(parts)


def cmd_run(args):
    seq = open_sequence(args.sequence)
    rc = read_run_config(args.config) if args.config else RunConfig()
    source = args.features or rc.feature_source
    if source == PRECOMPUTED:
        if seq.features_dir is None:
            raise InputError(f"{args.sequence}: no features/ directory for precomputed features")
        first = seq.features_dir / "00000.ft"
        provider = PrecomputedFeatureProvider(seq.features_dir, read_feature_file(first).shape[0])
    else:
        provider = ToyFeatureProvider(FeatureSpec(channels=rc.toy_channels, toy_seed=rc.seed))
    cfg = EngineConfig.from_run_config(rc, no_update=args.no_update)

    out = Path(args.out)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    records = []
    engine = SegmentationEngine(cfg, provider, sink=records.append)
    label0 = seq.mask(0)
    ids, masks = split_objects(label0)
    if not ids:
        raise InputError(f"{seq.masks[0]}: first-frame annotation has no objects")
    elapsed = 0.0
    for i in range(len(seq)):
        image = seq.frame(i)
        try:
            if i == 0:
                result = engine.initialize(image, label0)
            else:
                t0 = time.perf_counter()
                result = engine.step(image)
                elapsed += time.perf_counter() - t0
        except RUNTIME_ERRORS + (ValueError,) as exc:
            raise InputError(f"frame {i}: {type(exc).__name__}: {exc}") from exc
        (out / "masks" / f"{i:05d}.pgm").write_bytes(encode_pgm(result.labels))
    (out / DIAGNOSTICS_FILE).write_text("".join(_format_record(r) + "\n" for r in records),
                                        encoding="utf-8")
    if args.timing and len(seq) > 1:
        fps = (len(seq) - 1) / elapsed if elapsed > 0 else float("inf")
        (out / TIMING_FILE).write_text(f"frames {len(seq) - 1}\nseconds {elapsed!r}\nfps {fps!r}\n",
                                       encoding="utf-8")
    print(f"wrote {len(seq)} masks to {out / 'masks'}")
    return 0


def _mask_dir(path):
    p = Path(path)
    return p / "masks" if (p / "masks").is_dir() else p


def _read_masks(directory):
    files = sorted(f for f in Path(directory).glob("*.pgm") if f.stem.isdigit())
    return [decode_pgm(f.read_bytes(), f) for f in files], [int(f.stem) for f in files]


def _sequence_pairs(pred, gt):
    pred, gt = Path(pred), Path(gt)
    if (gt / "masks").is_dir() or any(gt.glob("*.pgm")):
        return [(gt.name, _mask_dir(pred), _mask_dir(gt))]
    pairs = []
    for sub in sorted(p for p in gt.iterdir() if p.is_dir()):
        pairs.append((sub.name, _mask_dir(pred / sub.name), _mask_dir(sub)))
    return pairs


def _read_fps(pred_dir):
    f = Path(pred_dir).parent / TIMING_FILE
    if not f.is_file():
        return None
    for line in f.read_text(encoding="utf-8").splitlines():
        key, _, val = line.partition(" ")
        if key == "fps":
            return float(val)
    return None


def cmd_eval(args):
    pairs = _sequence_pairs(args.pred, args.gt)
    if not pairs:
        raise InputError(f"{args.gt}: no ground-truth sequences")
    report = EvalReport()
    fps = []
    for name, pdir, gdir in pairs:
        if not pdir.is_dir():
            raise InputError(f"{pdir}: prediction directory not found")
        preds, pidx = _read_masks(pdir)
        gts, gidx = _read_masks(gdir)
        if not preds:
            raise InputError(f"{pdir}: no predicted masks")
        if pidx != gidx:
            raise InputError(f"{name}: predicted frames {pidx[:3]}... do not match ground truth "
                             f"{gidx[:3]}... ({len(pidx)} vs {len(gidx)} files)")
        report.sequences.append(score_sequence(preds, gts, name))
        f = _read_fps(pdir)
        if f is not None:
            fps.append(f)
    if fps and len(fps) == len(pairs):
        report.fps = float(np.mean(fps))
    text = report.to_text()
    Path(args.report).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_synth(args):
    out = Path(args.out)
    overrides = {}
    if args.width:
        overrides["width"] = args.width
    if args.height:
        overrides["height"] = args.height
    if args.objects:
        overrides["objects"] = args.objects
    if args.count == 1:
        write_sequence(tier_spec(args.tier, args.seed, args.frames, **overrides), out)
    else:
        for k in range(args.count):
            spec = tier_spec(args.tier, args.seed + k, args.frames, **overrides)
            write_sequence(spec, out / f"{args.tier}_{args.seed + k:03d}")
    print(f"wrote {args.count} {args.tier} sequence(s) to {out}")
    return 0


def cmd_selftest(args):
    from .selftest import run_selftest
    failures = run_selftest(quick=not args.full, stream=sys.stdout)
    return 1 if failures else 0


def build_parser():
    p = argparse.ArgumentParser(prog="onlinevos", description="Online video object segmentation.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="segment one sequence")
    r.add_argument("--sequence", required=True, help="sequence directory (frames/, masks/)")
    r.add_argument("--config", help="key=value run configuration file")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--features", choices=("toy", "precomputed"), help="override feature_source")
    r.add_argument("--no-update", action="store_true", help="never update the models after frame 0")
    r.add_argument("--timing", action="store_true",
                   help=f"also write {TIMING_FILE} (wall-clock, not reproducible)")
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="score predicted masks against ground truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--report", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("synth", help="generate synthetic sequences")
    s.add_argument("--out", required=True)
    s.add_argument("--tier", choices=TIERS, default="easy")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--frames", type=int, default=60)
    s.add_argument("--width", type=int)
    s.add_argument("--height", type=int)
    s.add_argument("--objects", type=int)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("selftest", help="run the built-in invariant checks")
    t.add_argument("--full", action="store_true", help="use the full instance counts")
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "count", 1) < 1 or getattr(args, "frames", 1) < 1:
        parser.error("--count and --frames must be positive")
    try:
        return args.func(args)
    except RUNTIME_ERRORS as exc:
        print(f"onlinevos {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"onlinevos {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
