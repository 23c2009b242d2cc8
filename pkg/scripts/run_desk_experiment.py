"""Desk-scale reenactment: pre-pass, compressed FL, uncompressed baseline, replay validation.

    python scripts/run_desk_experiment.py --config configs/desk.json --out runs/desk

Writes the usual pipeline artifacts under ``<out>/compressed`` and
``<out>/baseline`` plus ``<out>/comparison.json``.
"""
from __future__ import annotations

import argparse
import json
import time
from dataclasses import dataclass
from pathlib import Path

from aefl import config as config_mod
from aefl import pipeline


@dataclass
class RunSettings:
    config: str | None = None
    out: str = "runs/desk"
    threads: int = 2
    seed: int | None = None


def load(settings: RunSettings, compression: str) -> config_mod.ExperimentConfig:
    cfg = config_mod.load(settings.config) if settings.config else config_mod.ExperimentConfig()
    if settings.seed is not None:
        cfg.federated.seed = settings.seed
    cfg.federated.compression = compression
    return cfg


def main(argv=None) -> dict:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--config")
    parser.add_argument("--out", default=RunSettings.out)
    parser.add_argument("--threads", type=int, default=RunSettings.threads)
    parser.add_argument("--seed", type=int)
    settings = RunSettings(**vars(parser.parse_args(argv)))
    root = Path(settings.out)

    results = {}
    for mode, compression in (("compressed", "on"), ("baseline", "off")):
        cfg = load(settings, compression)
        out = root / mode
        t0 = time.perf_counter()
        pipeline.gen_data(cfg, out)
        if cfg.compression:
            pipeline.prepass(cfg, out)
        _, summary = pipeline.federate(cfg, out, threads=settings.threads)
        if cfg.compression:
            summary["validation"] = pipeline.validate(cfg, out)
        summary["seconds"] = round(time.perf_counter() - t0, 1)
        results[mode] = summary
        print(f"{mode}: final accuracy {summary['final_accuracy']} in {summary['seconds']}s")

    comp, base = results["compressed"], results["baseline"]
    results["accuracy_gap"] = {
        cid: abs(comp["final_accuracy"][cid] - base["final_accuracy"][cid]) for cid in base["final_accuracy"]
    }
    results["uplink_reduction"] = base["total_uplink_bytes"] / comp["total_uplink_bytes"]
    root.mkdir(parents=True, exist_ok=True)
    (root / "comparison.json").write_text(json.dumps(results, indent=2))
    print(f"accuracy gap {results['accuracy_gap']}, uplink reduction {results['uplink_reduction']:.3f}x")
    return results


if __name__ == "__main__":
    main()
