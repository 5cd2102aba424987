"""``soundloc`` command line: gen-data, train, eval, sweep, report.

Every ExperimentConfig field is also a flag (``--n-train 64``, ``--methods
neural multilat``, ``--model '{"embed_dim": 16}'``). ``--config file.json``
supplies a base configuration and explicit flags override it. The default
output directory comes from ``$SOUNDLOC_OUTPUT_DIR`` (else ``./results``).

Exit codes: 0 success, 2 configuration error, 3 experiment failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

from ..errors import ConfigError, SoundLocError
from .config import METHODS, SCENARIOS, ExperimentConfig, load_config
from .experiment import generate_splits, obtain_splits, run_experiment, run_sweep, save_splits, train_neural
from .metrics import summarize
from .results import FORMATS, read_trials, render_report

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3
log = logging.getLogger("soundloc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _json_arg(text):
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc}") from exc
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return value


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    for f in fields(ExperimentConfig):
        if f.name == "format_version":
            continue
        flag = "--" + f.name.replace("_", "-")
        kw = {"dest": f.name, "default": None}
        if f.name == "methods":
            kw.update(nargs="+", choices=METHODS)
        elif f.name == "scenario":
            kw.update(choices=SCENARIOS)
        elif f.name in ("model", "solver", "room"):
            kw.update(type=_json_arg, metavar="JSON")
        elif f.type in ("int", int):
            kw.update(type=int)
        elif f.type in ("float", float):
            kw.update(type=float)
        p.add_argument(flag, **kw)


def config_from_args(args) -> ExperimentConfig:
    base = load_config(args.config).to_dict() if args.config else {}
    names = [f.name for f in fields(ExperimentConfig) if f.name != "format_version"]
    overrides = {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}
    if "output" not in overrides and "output" not in base:
        overrides["output"] = ExperimentConfig().output
    return ExperimentConfig.from_dict({**base, **overrides})


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="soundloc", description="Sound source localization experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("gen-data", "render train/val/test datasets into <output>/data"),
                       ("train", "train the neural model; writes <output>/model.ckpt"),
                       ("eval", "evaluate methods on the test split; writes report and trial records")):
        _add_config_flags(sub.add_parser(name, help=text))
    sp = sub.add_parser("sweep", help="run one full experiment per value of a field")
    _add_config_flags(sp)
    sp.add_argument("--param", required=True, help="ExperimentConfig field to vary, e.g. M")
    sp.add_argument("--values", required=True, nargs="+", type=_scalar)
    rp = sub.add_parser("report", help="recompute a report from a trials.jsonl file or experiment directory")
    rp.add_argument("input")
    rp.add_argument("--format", choices=FORMATS, default="csv")
    rp.add_argument("--out", help="write here instead of stdout")
    rp.add_argument("--scenario", default=None)
    rp.add_argument("--eval-seed", type=int, default=0)
    return parser


def _scalar(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _cmd_gen_data(cfg: ExperimentConfig) -> None:
    path = save_splits(generate_splits(cfg), Path(cfg.output) / "data")
    print(f"wrote datasets to {path}")


def _cmd_train(cfg: ExperimentConfig) -> None:
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    _, result, val = train_neural(cfg, obtain_splits(cfg), out)
    print(f"trained {len(result.loss_curve)} epochs: loss {result.initial_loss:.4g} -> {result.final_loss:.4g}"
          f"; checkpoint {out / 'model.ckpt'}")
    if val:
        print(f"validation loss {val['total']:.4g}")


def _cmd_eval(cfg: ExperimentConfig) -> None:
    """Evaluate with ``--checkpoint`` or ``<output>/model.ckpt``; trains first when neither exists."""
    default = Path(cfg.output) / "model.ckpt"
    if "neural" in cfg.methods and not cfg.checkpoint and default.exists():
        cfg = replace(cfg, checkpoint=str(default))
    report, _, _ = run_experiment(cfg)
    print(render_report(report, "csv"), end="")


def _cmd_sweep(cfg: ExperimentConfig, param: str, values) -> None:
    for value, report in run_sweep(cfg, param, values):
        print(f"# {param}={value}")
        print(render_report(report, "csv"), end="")


def _cmd_report(args) -> None:
    path = Path(args.input)
    trials = path / "trials.jsonl" if path.is_dir() else path
    if not trials.exists():
        raise ConfigError(f"no trial records at {trials}")
    scenario = args.scenario
    manifest_path = trials.parent / "manifest.json"
    if scenario is None and manifest_path.exists():
        scenario = json.loads(manifest_path.read_text())["config"]["scenario"]
    report = summarize(read_trials(trials), scenario or "unknown", seed=args.eval_seed)
    text = render_report(report, args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "report":
            _cmd_report(args)
            return EXIT_OK
        cfg = config_from_args(args)
        if args.command == "gen-data":
            _cmd_gen_data(cfg)
        elif args.command == "train":
            _cmd_train(cfg)
        elif args.command == "eval":
            _cmd_eval(cfg)
        elif args.command == "sweep":
            _cmd_sweep(cfg, args.param, args.values)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SoundLocError, OSError) as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
