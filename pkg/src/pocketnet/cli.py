"""Command-line entry point: ``pocketnet <subcommand> [options]``.

Option values are resolved in increasing precedence from a ``--config``
file (``key = value`` lines, ``#`` comments), ``POCKETNET_<KEY>``
environment variables and command-line flags.  Keys are the long flag names
with dashes or underscores.  Unknown config-file keys are errors; environment
variables naming an option the subcommand lacks are ignored.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

import argparse
import json
import logging
import os
import sys
import time

from . import __version__
from .datapipe import augment_minority, load_arrays, read_manifest, select, split_dataset, write_manifest
from .errors import PocketNetError
from .gradcheck import check_network
from .model import (
    PRESETS,
    build_model,
    count_parameters,
    layer_rows,
    load_checkpoint,
    preset,
)
from .optim import OptimConfig
from .synthgen import SynthSpec, easy_spec, generate_dataset
from .trainer import TrainConfig, accuracy, evaluate, fit, format_report, predict, write_predictions

log = logging.getLogger("pocketnet")
ENV_PREFIX = "POCKETNET_"
GRADCHECK_TOL = 1e-5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _int_list(text):
    return [int(t) for t in str(text).split(",") if t]


def _add_model_opts(p):
    p.add_argument("--preset", default="desk", choices=sorted(PRESETS))
    p.add_argument("--input-height", type=int)
    p.add_argument("--input-width", type=int)
    p.add_argument("--conv-kernels", type=_int_list)
    p.add_argument("--dense-units", type=_int_list)
    p.add_argument("--padding", choices=["valid", "same"])
    p.add_argument("--dropout-ratio", type=float)


def build_parser():
    parser = _Parser(prog="pocketnet", description="Unburned-pocket CNN classifier pipeline.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value option file")
        p.add_argument("--threads", type=int, help="BLAS threads (default: all cores; 1 = serial)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = add("synth", "generate a synthetic PGM corpus and manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--easy", action="store_true", help="start from the low-noise desk-scale preset")
    for f in ("count", "height", "width", "seed", "pocket_min", "pocket_max"):
        p.add_argument("--" + f.replace("_", "-"), type=int)
    for f in ("positive_fraction", "noise_sigma", "pocket_axis_min", "pocket_axis_max",
              "apex_row", "half_angle", "plume_halfwidth", "wrinkle_amplitude", "wrinkle_wavelength"):
        p.add_argument("--" + f.replace("_", "-"), type=float)

    p = add("split", "assign train/val/test splits to a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="output manifest (default: overwrite input)")
    p.add_argument("--ratios", default="0.8,0.1,0.1")
    p.add_argument("--seed", type=int, default=0)

    p = add("train", "train a model from a split manifest")
    _add_model_opts(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory for checkpoints and log")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=0.001)
    p.add_argument("--decay-rate", type=float, default=0.9)
    p.add_argument("--stabilizer", type=float, default=1e-7)
    p.add_argument("--weight-decay", type=float, default=0.0005)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--augment", choices=["minority", "all", "none"], default="minority")

    p = add("eval", "confusion matrix and accuracy of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", help="train, val, test or all")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", help="optional JSON report path")

    p = add("predict", "per-image probabilities as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="all")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = add("gradcheck", "finite-difference check of every gradient")
    _add_model_opts(p)
    p.set_defaults(preset="micro")
    p.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    p.add_argument("--tol", type=float, default=GRADCHECK_TOL)

    p = add("inspect", "per-layer shapes and parameter counts")
    _add_model_opts(p)
    p.add_argument("--checkpoint")
    return parser


# --- option resolution ----------------------------------------------------

def read_config_file(path):
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            k, v = line.split("=", 1)
            values[k.strip().replace("-", "_")] = v.strip()
    return values


def _prescan(argv, choices):
    """Find the subcommand and ``--config`` path before full parsing."""
    command = config = None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            config = next(it, None)
        elif tok.startswith("--config="):
            config = tok.split("=", 1)[1]
        elif command is None and not tok.startswith("-") and tok in choices:
            command = tok
    return command, config


def resolve(parser, argv):
    """Parse ``argv`` with config-file and environment defaults applied."""
    argv = list(sys.argv[1:] if argv is None else argv)
    choices = parser._subparsers._group_actions[0].choices
    command, config = _prescan(argv, choices)
    if command is not None:
        subparser = choices[command]
        dests = {a.dest: a for a in subparser._actions if a.dest not in ("help", "config")}
        layered = read_config_file(config) if config else {}
        unknown = sorted(set(layered) - set(dests))
        if unknown:
            raise UsageError(f"unknown option key(s) for '{command}': {', '.join(unknown)}")
        # environment keys are shared across subcommands; apply only those that exist here
        for k, v in os.environ.items():
            key = k[len(ENV_PREFIX):].lower()
            if k.startswith(ENV_PREFIX) and key in dests:
                layered[key] = v
        defaults = {}
        for k, v in layered.items():
            action = dests[k]
            try:
                if action.nargs == 0:
                    defaults[k] = str(v).lower() in ("1", "true", "yes", "on")
                else:
                    defaults[k] = action.type(v) if action.type else v
            except ValueError as exc:
                raise UsageError(f"bad value for {k}: {v!r}") from exc
            if action.choices is not None and defaults[k] not in action.choices:
                raise UsageError(f"bad value for {k}: {v!r} (choose from {list(action.choices)})")
            action.required = False
        subparser.set_defaults(**defaults)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise UsageError("a subcommand is required")
    return args


def _model_config(args):
    overrides = {k: getattr(args, k) for k in
                 ("input_height", "input_width", "conv_kernels", "dense_units", "padding", "dropout_ratio")
                 if getattr(args, k, None) is not None}
    return preset(args.preset, **overrides)


def _banner(args):
    opts = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    print(f"pocketnet {args.command} " + " ".join(f"{k}={v}" for k, v in opts.items()), file=sys.stderr)


def _set_threads(n):
    if n is None:
        return
    from threadpoolctl import threadpool_limits
    threadpool_limits(limits=int(n))


# --- subcommands ----------------------------------------------------------

def cmd_synth(args):
    base = easy_spec() if args.easy else SynthSpec()
    fields = {f: getattr(args, f) for f in vars(base) if getattr(args, f, None) is not None}
    spec = SynthSpec(**{**vars(base), **fields})
    t0 = time.time()
    entries = generate_dataset(spec, args.out)
    n_pos = sum(e.label for e in entries)
    log.info("wrote %d images (%d positive) to %s in %.1fs", len(entries), n_pos, args.out, time.time() - t0)


def cmd_split(args):
    ratios = tuple(float(r) for r in args.ratios.split(","))
    entries = split_dataset(read_manifest(args.manifest), ratios, args.seed)
    out = args.out or args.manifest
    if os.path.dirname(os.path.abspath(out)) != os.path.dirname(os.path.abspath(args.manifest)):
        raise UsageError("--out must be in the manifest's directory (image paths are manifest-relative)")
    write_manifest(entries, out)
    for s in ("train", "val", "test"):
        part = select(entries, s)
        log.info("%s: %d images, %d positive", s, len(part), sum(e.label for e in part))


def cmd_train(args):
    cfg = _model_config(args)
    root = os.path.dirname(os.path.abspath(args.manifest))
    entries = read_manifest(args.manifest)
    train_entries = select(entries, "train")
    if args.augment != "none":
        train_entries = augment_minority(train_entries, all_classes=args.augment == "all")
    val_entries = select(entries, "val")
    if not train_entries or not val_entries:
        raise PocketNetError("manifest needs train and val splits; run 'split' first")
    os.makedirs(args.out, exist_ok=True)
    tcfg = TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, threshold=args.threshold, seed=args.seed,
        optimizer=OptimConfig(args.learning_rate, args.decay_rate, args.stabilizer, args.weight_decay),
        log_path=os.path.join(args.out, "train_log.csv"),
        checkpoint_path=os.path.join(args.out, "final.pckt"),
        best_checkpoint_path=os.path.join(args.out, "best_val.pckt"),
    )
    h, w = cfg.input_height, cfg.input_width
    model = build_model(cfg, args.seed)
    _, history = fit(model, load_arrays(train_entries, root, h, w), load_arrays(val_entries, root, h, w), tcfg)
    if history:
        last = history[-1]
        log.info("final epoch %d: val_acc %.4f val_loss %.4f", last.epoch, last.val_acc, last.val_loss)


def _entries_for(args):
    entries = read_manifest(args.manifest)
    if args.split == "all":
        return entries, "full manifest"
    if args.split not in ("train", "val", "test"):
        raise UsageError(f"--split must be train, val, test or all, not {args.split!r}")
    return select(entries, args.split), f"{args.split} split"


def cmd_eval(args):
    model = load_checkpoint(args.checkpoint)
    entries, population = _entries_for(args)
    if not entries:
        raise PocketNetError(f"no entries in {population}")
    c = model.config
    x, y = load_arrays(entries, os.path.dirname(os.path.abspath(args.manifest)), c.input_height, c.input_width)
    cm = evaluate(model, x, y, args.threshold)
    sys.stdout.write(format_report(cm, population))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump({"population": population, "tp": cm.tp, "tn": cm.tn, "fp": cm.fp, "fn": cm.fn,
                       "accuracy": round(accuracy(cm), 4), "threshold": args.threshold}, fh, indent=2)


def cmd_predict(args):
    model = load_checkpoint(args.checkpoint)
    entries, _ = _entries_for(args)
    c = model.config
    x, _ = load_arrays(entries, os.path.dirname(os.path.abspath(args.manifest)), c.input_height, c.input_width)
    probs, classes = predict(model, x, args.threshold)
    write_predictions(args.out, entries, probs, classes)
    log.info("wrote %d predictions to %s", len(entries), args.out)


def cmd_gradcheck(args):
    cfg = _model_config(args)
    ok = True
    for seed in args.seeds:
        res = check_network(cfg, seed)
        ok = ok and res.passed(args.tol)
        status = "PASS" if res.passed(args.tol) else "FAIL"
        print(f"seed {seed}: max relative error {res.max_rel_error:.3e} over {res.checked} values  {status}")
        for name, err in res.per_tensor.items():
            print(f"    {name:<16s} {err:.3e}")
        if res.dead:
            print(f"    no loss gradient reaches: {', '.join(res.dead)}")
    return 0 if ok else 1


def cmd_inspect(args):
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
        cfg = model.config
    else:
        cfg = _model_config(args)
    print(f"input: {cfg.input_channels}x{cfg.input_height}x{cfg.input_width}  padding={cfg.padding}")
    print(f"{'Layer':<6}{'Type':<22}{'Kernels':<9}{'Output':<16}{'Parameters':>12}")
    for idx, kind, kernels, shape, n in layer_rows(cfg):
        shape_txt = "x".join(map(str, shape))
        print(f"{idx:<6}{kind:<22}{'-' if kernels is None else kernels!s:<9}{shape_txt:<16}{n:>12d}")
    _, total = count_parameters(cfg)
    print(f"{'':<6}{'Total':<22}{'':<9}{'':<16}{total:>12d}")


COMMANDS = {
    "synth": cmd_synth, "split": cmd_split, "train": cmd_train, "eval": cmd_eval,
    "predict": cmd_predict, "gradcheck": cmd_gradcheck, "inspect": cmd_inspect,
}


def run(argv=None):
    parser = build_parser()
    try:
        args = resolve(parser, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose or args.command in ("synth", "split", "train")
                        else logging.WARNING, format="%(message)s", stream=sys.stderr)
    _banner(args)
    try:
        _set_threads(args.threads)
        return COMMANDS[args.command](args) or 0
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except (PocketNetError, OSError) as exc:
        print(f"pocketnet {args.command}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
