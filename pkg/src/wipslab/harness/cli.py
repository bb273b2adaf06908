"""Command-line entry point: one subcommand per experiment kind, plus ``rerun``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from ..errors import ConfigError, WipsError
from .config import KINDS, config_from_dict, parse_config
from .runner import rerun, run

log = logging.getLogger("wipslab")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def _int_list(text: str) -> list[int]:
    return [int(float(t)) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    return key.strip(), val


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output root directory (default: from config, else ./runs)")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wipslab",
                                 description="Reproducible experiments on discrete-time mean-field particle systems.")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", help="strict JSON experiment config")
        p.add_argument("--seed", type=_u64, help="override the config seed")
        p.add_argument("--model", help="builtin model name (when no config is given)")
        p.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE",
                       help="builtin model parameter; repeatable")
        p.add_argument("--N", type=_int_list, help="comma-separated particle counts")
        p.add_argument("--n", type=_int_list, help="comma-separated time indices")
        p.add_argument("--eps", type=_float_list, help="comma-separated thresholds")
        p.add_argument("--replicates", type=int)
        p.add_argument("--T", type=int, help="time horizon (simulate, chaos)")
        _common(p)
    p = sub.add_parser("rerun", help="re-run the experiment recorded in a manifest")
    p.add_argument("manifest", help="manifest.json or the directory holding it")
    _common(p)
    return ap


def _config_from_args(args):
    over = {"kind": args.command}
    if args.seed is not None:
        over["seed"] = args.seed
    for name in ("N", "n", "eps", "replicates", "T", "out"):
        v = getattr(args, name)
        if v is not None:
            over[name] = v
    if args.model or args.param:
        over["model"] = {"builtin": args.model or "mean-field-gaussian", "params": dict(args.param)}
    if args.config:
        del over["kind"]
        cfg = parse_config(args.config, over, default_kind=args.command)
        if cfg.kind != args.command:
            raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
        return cfg
    if "seed" not in over:
        raise ConfigError("seed is mandatory: pass --seed or a config file")
    return config_from_dict(over)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "rerun":
            table, same = rerun(args.manifest, out=args.out, threads=args.threads)
            if not args.quiet:
                print(f"{table.directory}: {'identical' if same else 'DIFFERS'}")
            if not same:
                log.error("rerun table differs from the recorded results")
                return 4
            return 0
        cfg = _config_from_args(args)
        table = run(cfg, threads=args.threads)
    except WipsError as err:
        log.error("error: %s", err)
        return err.exit_code
    if not args.quiet:
        if cfg.kind == "validate":
            for key, val in table.manifest["validation"].items():
                if key.endswith("_regime"):
                    print(f"{key}={'true' if val else 'false'}")
        print(f"wrote {table.directory}/results.csv ({len(table.rows)} rows)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
