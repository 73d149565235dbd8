"""``motion-complete`` command-line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
divergence during training, 5 dimension mismatch.
"""

import argparse
import json
import logging
import os
import sys
import time
from . import checkpoint
from .bvh import BvhDocument, read_bvh, write_bvh
from .data import (TEST_WINDOWS, WindowSpec, load_dataset, read_positions_csv, slice_windows,
                   synth_corpus, write_positions_csv)
from .estimator import MotionCompleter
from .exceptions import (CheckpointError, DoesNotFit, MotionCompleteError, NumericDivergence,
                         ShapeError)
from .interpolation import InterpolationBaseline, ZeroVelocityBaseline
from .masks import BLEND, INBETWEEN, INFILL, SCENARIOS, make_mask
from .model import ModelConfig
from .skeleton import GLOBAL, LOCAL, to_global, to_local
from .training import TrainConfig, evaluate, train

log = logging.getLogger("motion_complete")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_DIMENSION = 5

THREADS_ENV = "MOTION_COMPLETE_THREADS"


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _default_jobs():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


def _scenario_param(args):
    """The single scenario parameter from --length / --interval / --window."""
    given = {INBETWEEN: args.length, INFILL: args.interval, BLEND: args.window}
    value = given[args.scenario]
    if value is None:
        flag = {INBETWEEN: "--length", INFILL: "--interval", BLEND: "--window"}[args.scenario]
        raise ConfigError(f"--scenario {args.scenario} needs {flag}")
    return value


# -- train ---------------------------------------------------------------------------


def _read_config(path):
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict) or set(cfg) - {"model", "train", "scenario"}:
        raise ConfigError("config must be an object with model/train/scenario sections")
    return cfg


def build_configs(raw, args, n_joints):
    """Model and train configs from the JSON sections plus CLI overrides."""
    model = dict(raw.get("model", {}))
    train = dict(raw.get("train", {}))
    scenario = dict(raw.get("scenario", {}))
    if args.coord is not None:
        model["coord"] = args.coord
    if args.seed is not None:
        train["seed"] = args.seed
    if args.epochs is not None:
        train["epochs"] = args.epochs
    if args.lr is not None:
        train["max_lr"] = args.lr
    if args.scenario:
        scenario["kinds"] = args.scenario
    if scenario:
        unknown = set(scenario) - {"kinds", "ranges"}
        if unknown:
            raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
        train["scenarios"] = tuple(scenario.get("kinds", (INBETWEEN,)))
        train["ranges"] = {k: tuple(v) for k, v in scenario.get("ranges", {}).items()}
        if set(train["scenarios"]) - set(SCENARIOS) or set(train["ranges"]) - set(SCENARIOS):
            raise ConfigError(f"scenarios must be among {SCENARIOS}")
    model.setdefault("n_joints", n_joints)
    try:
        return ModelConfig(**model), TrainConfig(**train)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def cmd_train(args):
    raw = _read_config(args.config)
    data = _load_data(args.data)
    mcfg, tcfg = build_configs(raw, args, data[0].n_joints)
    log_fh = open(args.log, "w") if args.log else None

    def log_fn(record):
        if log_fh is not None:
            log_fh.write(json.dumps(record) + "\n")
            log_fh.flush()
        log.info("epoch %d loss %.5f lr %.3g", record["epoch"], record["loss"], record["lr"])

    try:
        model, history = train(data, mcfg, tcfg, log_fn=log_fn)
    finally:
        if log_fh is not None:
            log_fh.close()
    checkpoint.save(args.out, model, {"train": _jsonable(tcfg.to_dict())})
    print(f"wrote {args.out} after {len(history)} epochs, final loss {history[-1]['loss']:.5f}")
    return EXIT_OK


def _jsonable(d):
    return json.loads(json.dumps(d, default=list))


# -- complete ---------------------------------------------------------------------


def _read_input(path):
    ext = os.path.splitext(path)[1].lower()
    if ext not in (".bvh", ".csv"):
        raise DataError(f"unsupported input type {ext!r}; expected .bvh or .csv")
    if not os.path.isfile(path):
        raise DataError(f"input file {path!r} does not exist")
    if ext == ".bvh":
        doc = read_bvh(path)
        return doc, doc.to_sequence()
    return None, read_positions_csv(path)


def _write_output(path, seq, doc, mask):
    if doc is None:
        write_positions_csv(path, seq)
        return
    rot_chans = [c for c in doc.channels[0] if c.endswith("rotation")]
    order = "".join(c[0] for c in rot_chans) or "ZYX"
    out = BvhDocument.from_sequence(to_local(seq, doc.skeleton), order, doc.end_sites)
    out.root_offset = doc.root_offset
    if out.channels == doc.channels:
        # copy keyframe rows verbatim so they survive the Euler round trip
        key = mask.labels == 0
        out.motion[key] = doc.motion[key]
    write_bvh(path, out)


def cmd_complete(args):
    param = _scenario_param(args)
    est = _load_estimator(args.checkpoint, args)
    doc, seq = _read_input(args.input)
    mask = make_mask(args.scenario, param, seq.n_frames)
    if doc is not None and est.model_.skeleton is not None \
            and doc.skeleton.n_joints != est.model_.config.n_joints:
        raise ShapeError("input skeleton does not match the checkpoint")
    t0 = time.perf_counter()
    out = est.predict(seq, mask)
    elapsed = time.perf_counter() - t0
    _write_output(args.output, out, doc, mask)
    print(f"inference time: {est.forward_seconds_:.4f} s (predict {elapsed:.4f} s)")
    return EXIT_OK


# -- eval ---------------------------------------------------------------------------


def _load_data(directory):
    try:
        return load_dataset(directory)
    except (OSError, MotionCompleteError) as exc:
        if isinstance(exc, ShapeError):
            raise
        raise DataError(str(exc)) from exc


def _load_estimator(path, args):
    try:
        model, _ = checkpoint.load(path)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path!r}: {exc}") from exc
    except CheckpointError as exc:
        raise DataError(str(exc)) from exc
    return MotionCompleter.from_model(
        model, standardize_tpose=args.standardize_tpose, n_jobs=args.jobs or _default_jobs()
    )


def cmd_eval(args):
    est = _load_estimator(args.checkpoint, args)
    data = _load_data(args.data)
    spec = WindowSpec(*args.test_window)
    windows = [w for s in data for w in slice_windows(s, spec)]
    J = est.model_.config.n_joints
    if any(w.n_joints != J for w in windows):
        raise ShapeError(f"data has {windows[0].n_joints} joints, checkpoint expects {J}")
    skel = est.model_.skeleton or windows[0].skeleton
    interp_coord = args.interp_coord or (LOCAL if skel is not None else GLOBAL)
    rows = {
        "Zero-Vel": ZeroVelocityBaseline(),
        "Interp": InterpolationBaseline(coord=interp_coord, skeleton=skel),
        "Ours": est,
    }
    stats = est.model_.norm_stats
    reports = []
    for kind in args.scenario or [INBETWEEN]:
        entry = {"scenario": kind, "lengths": list(args.lengths), "rows": {}}
        for name, predictor in rows.items():
            rep = evaluate(predictor, windows, kind, args.lengths, stats=stats,
                           standardize=args.standardize_tpose and name == "Ours", skeleton=skel,
                           npss_span=args.npss_span)
            entry["rows"][name] = {k: rep[k] for k in ("l2q", "l2p", "npss", "per_sequence")}
        reports.append(entry)
    report = {"checkpoint": args.checkpoint, "n_windows": len(windows), "reports": reports}
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    for entry in reports:
        print(_table(entry))
    return EXIT_OK


def _table(entry):
    lengths = entry["lengths"]
    head = f"{entry['scenario']:<10}" + "".join(
        f"{m.upper() + '@' + str(L):>11}" for m in ("l2q", "l2p", "npss") for L in lengths)
    lines = [head]
    for name, row in entry["rows"].items():
        vals = "".join(f"{v:>11.4f}" for m in ("l2q", "l2p", "npss") for v in row[m])
        lines.append(f"{name:<10}{vals}")
    return "\n".join(lines)


# -- synth --------------------------------------------------------------------------


def cmd_synth(args):
    seqs = synth_corpus(args.seed, args.count, args.frames, args.joints, coord=LOCAL)
    try:
        os.makedirs(args.out, exist_ok=True)
        width = len(str(max(args.count - 1, 0)))
        for i, seq in enumerate(seqs):
            name = os.path.join(args.out, f"synth_{i:0{width}d}.{args.format}")
            if args.format == "bvh":
                write_bvh(name, BvhDocument.from_sequence(seq, "ZYX"))
            else:
                write_positions_csv(name, to_global(seq))
    except OSError as exc:
        raise DataError(f"cannot write to {args.out!r}: {exc}") from exc
    print(f"wrote {args.count} {args.format} files to {args.out}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _add_scenario_flags(p, multiple=False):
    if multiple:
        p.add_argument("--scenario", nargs="+", choices=SCENARIOS)
    else:
        p.add_argument("--scenario", choices=SCENARIOS, default=INBETWEEN)
        p.add_argument("--length", type=_positive_int, help="in-betweening transition length")
        p.add_argument("--interval", type=_positive_int, help="in-filling keyframe interval")
        p.add_argument("--window", type=_positive_int, help="blending window")


def build_parser():
    parser = argparse.ArgumentParser(prog="motion-complete",
                                     description="Transformer motion completion toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", help="JSON file with model/train/scenario sections")
    p.add_argument("--data", required=True, help="directory of .bvh or .csv files")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="JSON-lines metrics log")
    p.add_argument("--coord", choices=(LOCAL, GLOBAL))
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--lr", type=float, help="maximum learning rate")
    _add_scenario_flags(p, multiple=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("complete", help="fill the masked frames of one clip")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_scenario_flags(p)
    p.add_argument("--standardize-tpose", action="store_true")
    p.add_argument("--jobs", type=_positive_int)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("eval", help="score the model and both baselines")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    _add_scenario_flags(p, multiple=True)
    p.add_argument("--lengths", type=_positive_int, nargs="+", default=[5, 15, 30])
    p.add_argument("--test-window", type=_positive_int, nargs=2,
                   default=[TEST_WINDOWS.width, TEST_WINDOWS.offset], metavar=("WIDTH", "OFFSET"))
    p.add_argument("--interp-coord", choices=(LOCAL, GLOBAL))
    p.add_argument("--npss-span", choices=("transition", "window"), default="transition")
    p.add_argument("--standardize-tpose", action="store_true")
    p.add_argument("--jobs", type=_positive_int)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a deterministic synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=_positive_int, default=10)
    p.add_argument("--frames", type=_positive_int, default=90)
    p.add_argument("--joints", type=_positive_int, default=22)
    p.add_argument("--format", choices=("bvh", "csv"), default="bvh")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DoesNotFit) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ShapeError as exc:
        print(f"dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except (DataError, MotionCompleteError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
