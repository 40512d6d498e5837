"""Command-line entry point: ``freqamc {gen,train,attack,eval,sweep}``.

Every subcommand resolves its configuration from built-in defaults, the
selected ``--profile``, an optional JSON ``--config`` file and explicit flags
(in increasing priority) and writes ``<output>.manifest.json`` next to its main
output. Exit codes: 0 success, 1 usage error, 2 data or protocol error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, amcd
from .attacks import METHODS, NORM_CONVENTIONS, AttackConfig, effective_radius, perturb_dataset
from .errors import AmcError, ConfigurationError, InputError
from .evalharness import budget_sweep, evaluate, split
from .features import transform_dataset
from .sigsynth import ChannelConfig, synthesize_dataset
from .zoo import ARCHITECTURES, Model, TrainConfig, build_model, train, write_history_csv

log = logging.getLogger("freqamc")

PROFILES = {
    "desk": {"per_class": 1500, "epochs": 40},
    "full": {"per_class": 6000, "epochs": 75},
}

DEFAULTS = {
    "gen": {"per_class": None, "snr_db": 18.0, "frame_len": 128, "seed": 0,
            "cfo": 0.0, "sro_ppm": 0.0, "random_phase": True},
    "train": {"arch": "CNN", "domain": "time", "epochs": None, "batch": 64, "seed": 0,
              "learning_rate": 1e-3, "split_seed": None, "fractions": [0.70, 0.15, 0.15],
              "width_divisor": 1, "history": None},
    "attack": {"method": "FGSM", "budget": 0.02, "alpha": None, "iters": 10,
               "norm_convention": "radius", "subset": "test", "split_seed": None,
               "fractions": [0.70, 0.15, 0.15]},
    "eval": {"subset": "auto", "split_seed": None, "fractions": [0.70, 0.15, 0.15],
             "confusion": None},
    "sweep": {"method": "FGSM", "budget": 0.02, "alpha": None, "iters": 10,
              "norm_convention": "radius", "grid": None, "grid_steps": 11, "subset": "test",
              "split_seed": None, "fractions": [0.70, 0.15, 0.15], "report": None},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _common(p: argparse.ArgumentParser):
    # SUPPRESS keeps unset flags out of the namespace so the config file can fill them.
    S = argparse.SUPPRESS
    p.add_argument("--config", default=S, metavar="JSON",
                   help="JSON file of option values; explicit flags take precedence")
    p.add_argument("--profile", choices=sorted(PROFILES), default=S,
                   help="scale preset: desk (1500/class, 40 epochs) or full (6000/class, 75 epochs)")
    p.add_argument("--deterministic", action="store_true", default=S,
                   help="pin numerical libraries to one thread so outputs are byte-reproducible")
    p.add_argument("-v", "--verbose", action="store_true", default=S, help="log progress to stderr")


def _split_flags(p):
    S = argparse.SUPPRESS
    p.add_argument("--split-seed", type=int, default=S,
                   help="seed of the stratified split (default: the dataset seed)")
    p.add_argument("--fractions", type=_float_list, default=S, metavar="TR,VA,TE",
                   help="train/val/test fractions (default 0.70,0.15,0.15)")


def _attack_flags(p):
    S = argparse.SUPPRESS
    p.add_argument("--method", type=str.upper, choices=METHODS, default=S, help="FGSM or BIM")
    p.add_argument("--budget", type=float, default=S, help="perturbation budget P_T (default 0.02)")
    p.add_argument("--alpha", type=float, default=S,
                   help="BIM step size (default: effective radius / iterations)")
    p.add_argument("--iters", type=int, default=S, help="BIM iterations (default 10)")
    p.add_argument("--norm-convention", choices=NORM_CONVENTIONS, default=S,
                   help="radius: ||delta|| <= P_T; power: ||delta||^2 <= P_T")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="freqamc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen", help="synthesize a labeled dataset (.amcd)")
    p.add_argument("--per-class", type=int, default=S, help="frames per modulation class")
    p.add_argument("--snr-db", type=float, default=S, help="signal-to-noise ratio in dB (default 18)")
    p.add_argument("--frame-len", type=int, default=S, help="samples per frame (default 128)")
    p.add_argument("--seed", type=int, default=S, help="dataset seed (default 0)")
    p.add_argument("--cfo", type=float, default=S, help="carrier offset, cycles per sample")
    p.add_argument("--sro-ppm", type=float, default=S, help="sample-rate offset in ppm")
    p.add_argument("--random-phase", action=argparse.BooleanOptionalAction, default=S,
                   help="draw a uniform carrier phase per frame (default on)")
    p.add_argument("-o", "--output", required=True, help="output .amcd path")
    _common(p)

    p = sub.add_parser("train", help="train a classifier and write a checkpoint")
    p.add_argument("--data", required=True, help="time-domain .amcd dataset")
    p.add_argument("--arch", type=str.upper, choices=ARCHITECTURES, default=S, help="architecture")
    p.add_argument("--domain", choices=("time", "freq"), default=S,
                   help="input domain; freq applies the DFT on load")
    p.add_argument("--epochs", type=int, default=S, help="training epochs")
    p.add_argument("--batch", type=int, default=S, help="mini-batch size (default 64)")
    p.add_argument("--seed", type=int, default=S, help="initialization and shuffling seed")
    p.add_argument("--learning-rate", type=float, default=S, help="Adam learning rate (default 1e-3)")
    p.add_argument("--width-divisor", type=int, default=S, help="shrink hidden widths by this factor")
    p.add_argument("--history", default=S, help="history CSV path (default <output>.history.csv)")
    p.add_argument("-o", "--output", required=True, help="output .ckpt path")
    _split_flags(p)
    _common(p)

    p = sub.add_parser("attack", help="perturb a dataset through a time-domain surrogate")
    p.add_argument("--model", required=True, help="surrogate checkpoint")
    p.add_argument("--data", required=True, help="clean time-domain .amcd dataset")
    _attack_flags(p)
    p.add_argument("--subset", choices=("test", "all"), default=S,
                   help="frames to perturb (default: the test partition)")
    p.add_argument("-o", "--output", required=True, help="output .amcd path")
    _split_flags(p)
    _common(p)

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p.add_argument("--model", required=True, help="checkpoint to evaluate")
    p.add_argument("--data", required=True, help=".amcd dataset (clean or perturbed)")
    p.add_argument("--subset", choices=("auto", "test", "all"), default=S,
                   help="auto: every frame of a perturbed file, else the test partition")
    p.add_argument("--confusion", default=S, help="confusion CSV path (default <output>.confusion.csv)")
    p.add_argument("-o", "--output", required=True, help="output report.json path")
    _split_flags(p)
    _common(p)

    p = sub.add_parser("sweep", help="transfer accuracy over a budget or step-size grid")
    p.add_argument("--pair", nargs=2, metavar=("SURROGATE", "TARGET"), default=S,
                   help="surrogate and target checkpoints")
    p.add_argument("--target", action="append", default=S,
                   help="additional target checkpoint (repeatable)")
    p.add_argument("--data", required=True, help="clean time-domain .amcd dataset")
    _attack_flags(p)
    p.add_argument("--grid", type=_float_list, default=S,
                   help="comma-separated budgets (FGSM) or step sizes (BIM)")
    p.add_argument("--grid-steps", type=int, default=S,
                   help="points of the default grid: 0 to the budget (FGSM) or to radius/iters (BIM); default 11")
    p.add_argument("--subset", choices=("test", "all"), default=S, help="frames to attack")
    p.add_argument("--report", default=S, help="also write the full sweep report as JSON")
    p.add_argument("-o", "--output", required=True, help="output sweep.csv path")
    _split_flags(p)
    _common(p)
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, profile, config file and flags into one config dict."""
    given = vars(args).copy()
    command = given.pop("command")
    cfg = {"command": command, "profile": "desk", "deterministic": False, "verbose": False}
    cfg.update(DEFAULTS[command])
    file_cfg = {}
    if "config" in given:
        path = Path(given.pop("config"))
        try:
            file_cfg = json.loads(path.read_text())
        except FileNotFoundError:
            raise InputError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}")
        if not isinstance(file_cfg, dict):
            raise UsageError(f"config file {path} must hold a JSON object")
        file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
        file_cfg.pop("command", None)
        unknown = set(file_cfg) - set(cfg) - set(given) - {"output", "data", "model", "pair", "target"}
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    profile = given.get("profile", file_cfg.get("profile", "desk"))
    if profile not in PROFILES:
        raise UsageError(f"unknown profile {profile!r}")
    for key, value in PROFILES[profile].items():
        if key in cfg:
            cfg[key] = value
    cfg.update(file_cfg)
    cfg.update(given)
    cfg["profile"] = profile
    return cfg


def _write_manifest(output, cfg: dict, extra=None):
    record = {"tool": "freqamc", "version": __version__, "config": cfg}
    if extra:
        record.update(extra)
    Path(f"{output}.manifest.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")


def _read_dataset(path):
    return amcd.read(path)


def _attack_config(cfg: dict) -> AttackConfig:
    if cfg["method"] == "BIM" and cfg["alpha"] is None:
        # iters aligned steps exactly spend the budget
        cfg["alpha"] = effective_radius(cfg["budget"], cfg["norm_convention"]) / cfg["iters"]
    return AttackConfig(cfg["method"], cfg["budget"], cfg["alpha"], cfg["iters"],
                        cfg["norm_convention"])


def _select(ds, cfg: dict, which: str):
    if which == "all":
        return ds
    seed = ds.seed if cfg["split_seed"] is None else cfg["split_seed"]
    return ds.subset(split(ds, cfg["fractions"], seed).test)


def cmd_gen(cfg: dict) -> None:
    channel = ChannelConfig(snr_db=cfg["snr_db"], cfo_hz_normalized=cfg["cfo"],
                            sro_ppm=cfg["sro_ppm"], random_phase=cfg["random_phase"])
    ds = synthesize_dataset(cfg["per_class"], cfg["frame_len"], cfg=channel, seed=cfg["seed"])
    amcd.write(ds, cfg["output"])
    _write_manifest(cfg["output"], cfg, {"frames": len(ds)})
    log.info("wrote %d frames to %s", len(ds), cfg["output"])


def cmd_train(cfg: dict) -> None:
    ds = _read_dataset(cfg["data"])
    if ds.attack is not None:
        log.warning("training on a perturbed dataset")
    if cfg["domain"] == "freq":
        ds = transform_dataset(ds)
    model = build_model(cfg["arch"], cfg["domain"], ds.frame_len, ds.num_classes, cfg["seed"],
                        cfg["width_divisor"], class_names=ds.class_names)
    tcfg = TrainConfig(cfg["epochs"], cfg["batch"], tuple(cfg["fractions"]), cfg["seed"],
                       cfg["learning_rate"], cfg["split_seed"])
    train(model, ds, tcfg)
    model.save(cfg["output"])
    history = cfg["history"] or f"{cfg['output']}.history.csv"
    write_history_csv(model, history)
    cfg["history"] = history
    _write_manifest(cfg["output"], cfg, {"final": model.history[-1]})


def cmd_attack(cfg: dict) -> None:
    acfg = _attack_config(cfg)
    surrogate = Model.load(cfg["model"])
    ds = _select(_read_dataset(cfg["data"]), cfg, cfg["subset"])
    adv = perturb_dataset(surrogate, ds, acfg)
    amcd.write(adv, cfg["output"])
    _write_manifest(cfg["output"], cfg, {"attack": adv.attack, "frames": len(adv)})


def cmd_eval(cfg: dict) -> None:
    model = Model.load(cfg["model"])
    ds = _read_dataset(cfg["data"])
    which = cfg["subset"]
    if which == "auto":
        which = "all" if ds.attack is not None else "test"
    ds = _select(ds, cfg, which)
    if model.domain == "freq" and ds.domain == "time":
        ds = transform_dataset(ds)
    report = evaluate(model, ds, {"data": str(cfg["data"]), "subset": which})
    report.write_json(cfg["output"])
    confusion = cfg["confusion"] or f"{cfg['output']}.confusion.csv"
    report.write_confusion_csv(confusion)
    cfg["confusion"] = confusion
    _write_manifest(cfg["output"], cfg, {"accuracy": report.accuracy})
    print(f"{model.name} accuracy {report.accuracy:.4f} on {len(ds)} frames")


def cmd_sweep(cfg: dict) -> None:
    if not cfg.get("pair"):
        raise UsageError("sweep needs --pair SURROGATE TARGET")
    acfg = _attack_config(cfg)
    surrogate = Model.load(cfg["pair"][0])
    targets = [Model.load(p) for p in [cfg["pair"][1], *(cfg.get("target") or [])]]
    grid = cfg["grid"]
    if grid is None:
        top = acfg.power_budget if acfg.method == "FGSM" else acfg.radius / acfg.iterations
        grid = np.linspace(0.0, top, cfg["grid_steps"]).tolist()
        cfg["grid"] = grid
    test = _select(_read_dataset(cfg["data"]), cfg, cfg["subset"])
    report = budget_sweep(surrogate, targets, test, grid, acfg)
    report.write_sweep_csv(cfg["output"])
    if cfg["report"]:
        report.write_json(cfg["report"])
    _write_manifest(cfg["output"], cfg)


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "attack": cmd_attack, "eval": cmd_eval,
            "sweep": cmd_sweep}


def _single_thread():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        return contextlib.nullcontext()
    return threadpool_limits(limits=1)


def run(argv=None) -> int:
    """Run one subcommand and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve(args)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"freqamc: error: {exc}", file=sys.stderr)
        return 1
    except AmcError as exc:
        print(f"freqamc: error: {exc}", file=sys.stderr)
        return exc.exit_code
    logging.basicConfig(level=logging.INFO if cfg["verbose"] else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    guard = _single_thread() if cfg["deterministic"] else contextlib.nullcontext()
    try:
        with guard:
            COMMANDS[cfg["command"]](cfg)
    except UsageError as exc:
        print(f"freqamc: error: {exc}", file=sys.stderr)
        return 1
    except AmcError as exc:
        print(f"freqamc: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"freqamc: error: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (KeyError, TypeError, ValueError) as exc:
        print(f"freqamc: error: invalid configuration: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
