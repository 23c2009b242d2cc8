"""Command line entry point.

Exit codes: 0 ok, 1 config error, 2 I/O error, 3 protocol error,
4 validation threshold not met.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

from . import config as config_mod
from . import pipeline, savings
from .errors import ConfigError, ParseError, PrepassError, ProtocolError

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_PROTOCOL, EXIT_THRESHOLD = 0, 1, 2, 3, 4


def _load_config(args) -> config_mod.ExperimentConfig:
    cfg = config_mod.load(args.config) if args.config else config_mod.ExperimentConfig()
    if args.seed is not None:
        cfg.federated.seed = args.seed
    if args.out is not None:
        cfg.output.dir = args.out
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    for i, path in enumerate(pipeline.gen_data(cfg, cfg.output.dir)):
        part = pipeline.formats.labeled_from_bytes(path.read_bytes())
        print(f"partition {i}: {len(part)} rows -> {path}")
    return EXIT_OK


def cmd_prepass(args) -> int:
    cfg = _load_config(args)
    collabs, agg, histories = pipeline.prepass(cfg, cfg.output.dir)
    for cid, h in sorted(histories.items()):
        print(f"collaborator {cid}: S={len(collabs[cid].weights)} "
              f"ae loss {h.loss[0]:.4g} -> {h.loss[-1]:.4g}")
    return EXIT_OK


def cmd_federate(args) -> int:
    cfg = _load_config(args)
    _, summary = pipeline.federate(cfg, cfg.output.dir, threads=args.threads)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load_config(args)
    summary = pipeline.validate(cfg, cfg.output.dir, identity=args.identity_codec)
    print(json.dumps(summary, indent=2))
    return EXIT_OK if summary["passed"] else EXIT_THRESHOLD


def cmd_savings(args) -> int:
    scenario = savings.SavingsScenario(
        original_size=args.original,
        compressed_size=args.compressed,
        comm_rounds=args.rounds,
        collabs=args.collabs,
        ae_size=args.ae,
        num_decoders=None if args.per_collab_decoders else args.decoders,
        decoder_size_mode=args.mode,
        zero_cost=args.zero_cost,
    )
    if args.sweep:
        table = savings.sweep(scenario, args.sweep, args.start, args.stop, args.steps, log=args.log)
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow([args.sweep, "sr"])
        for x, sr in table:
            w.writerow([repr(x), repr(sr)])
        return EXIT_OK
    result = {
        "savings_ratio": savings.savings_ratio(scenario),
        "decoder_cost": savings.decoder_cost(scenario),
        "compression_ratio": args.original / args.compressed,
    }
    if args.break_even == "rounds":
        result["break_even_rounds"] = savings.break_even_rounds(scenario)
    elif args.break_even == "collabs":
        result["break_even_collaborators"] = savings.break_even_collaborators(scenario)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment JSON config")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, help="overrides federated.seed")
    common.add_argument("--threads", type=int, default=1, help="collaborators trained in parallel")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="aefl", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write per-collaborator FWDA files")
    p.set_defaults(func=cmd_gen_data)
    p = sub.add_parser("prepass", parents=[common], help="local training, snapshots, AE, decoder shipment")
    p.set_defaults(func=cmd_prepass)
    p = sub.add_parser("federate", parents=[common], help="federated rounds; rounds.csv + summary.json")
    p.set_defaults(func=cmd_federate)
    p = sub.add_parser("validate", parents=[common], help="replay snapshots through the trained AE")
    p.add_argument("--identity-codec", action="store_true",
                   help="dry run with reconstruction == original")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("savings", parents=[common], help="savings ratio, break-even points, sweeps")
    p.add_argument("--original", type=float, required=True, help="parameters per raw update")
    p.add_argument("--compressed", type=float, required=True, help="latent floats per update")
    p.add_argument("--ae", type=float, default=1.0, help="autoencoder parameter count")
    p.add_argument("--rounds", type=float, default=1.0)
    p.add_argument("--collabs", type=float, default=1.0)
    dec = p.add_mutually_exclusive_group()
    dec.add_argument("--decoders", type=float, default=1.0)
    dec.add_argument("--per-collab-decoders", action="store_true")
    p.add_argument("--mode", choices=savings.MODES, default="half_ae")
    p.add_argument("--zero-cost", action="store_true", help="ignore decoder shipment cost")
    p.add_argument("--break-even", choices=["rounds", "collabs"])
    p.add_argument("--sweep", choices=["rounds", "collabs"])
    p.add_argument("--start", type=float, default=1.0)
    p.add_argument("--stop", type=float, default=1000.0)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--log", action="store_true", help="geometric grid")
    p.set_defaults(func=cmd_savings)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ProtocolError, PrepassError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (OSError, ParseError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (savings.InfeasibleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
