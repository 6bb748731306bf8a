"""Command-line entry point: ``hypersharp {synth,sharpen,eval,crop,all}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..io import CampaignConfig, load_config, save_config
from .campaign import CampaignError, cmd_eval, cmd_sharpen, cmd_synth
from .crop import cmd_crop

log = logging.getLogger("hypersharp")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="campaign configuration (JSON)")
    common.add_argument("--scale", choices=("rr", "fr"), help="restrict to one scale")
    common.add_argument("--methods", help="comma-separated method names")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--threads", type=int,
                        help="scene-level workers (default: $HYPERSHARP_THREADS or 1)")
    common.add_argument("--repeats", type=int, help="timing repeats at RR scale")
    common.add_argument("--seed", type=int, help="synthetic generator seed")
    tv = common.add_argument_group("tv")
    tv.add_argument("--lambda", dest="tv_lambda", type=float, help="TV regularization weight")
    tv.add_argument("--max-iters", type=int, help="TV outer iterations")
    tv.add_argument("--tol", type=float, help="TV relative objective decrease to stop")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="hypersharp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("synth", "generate synthetic scenes"),
                       ("sharpen", "run fusion methods"),
                       ("eval", "score fusion outputs and write tables"),
                       ("crop", "write visual crops"),
                       ("all", "synth, sharpen, eval and crop")):
        sub.add_parser(name, parents=[common], help=text)
    return parser


def make_config(args) -> CampaignConfig:
    config = load_config(args.config) if args.config else CampaignConfig()
    d = config.to_dict()
    if args.out:
        d["output_dir"] = str(args.out)
    if args.seed is not None:
        d["seed"] = args.seed
    if args.repeats is not None:
        d["repeats"] = args.repeats
    if args.threads is not None:
        d["threads"] = args.threads
    if args.methods:
        old = {m["name"]: m["params"] for m in d["methods"]}
        d["methods"] = [{"name": n, "params": old.get(n, {})}
                        for n in (s.strip() for s in args.methods.split(",")) if n]
    tv = {k: v for k, v in (("lam", args.tv_lambda), ("max_iters", args.max_iters),
                            ("tol", args.tol)) if v is not None}
    for m in d["methods"]:
        if m["name"] == "tv":
            m["params"] = {**m["params"], **tv}
    return CampaignConfig.from_dict(d)


def run(args) -> int:
    config = make_config(args)
    scales = (args.scale,) if args.scale else ("rr", "fr")
    failed = False
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.command in ("synth", "all"):
        save_config(config, out / "config.json")
        cmd_synth(config)
    if args.command in ("sharpen", "all"):
        for scale in scales:
            records = cmd_sharpen(config, scale, args.threads, args.repeats)
            failed |= any(not r.ok for r in records)
    if args.command in ("eval", "all"):
        for scale in scales:
            result = cmd_eval(config, scale, args.threads)
            failed |= not result.ok
    if args.command in ("crop", "all"):
        for scale in scales:
            cmd_crop(config, scale)
    return 1 if failed else 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (CampaignError, ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
