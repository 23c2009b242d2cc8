"""Savings-ratio curves for the large-model scenario (O=550,570, C=320).

Emits two CSV tables into ``--out``:

* ``sr_vs_collaborators.csv``: single shared decoder, fixed rounds, N swept.
* ``sr_vs_rounds.csv``: one decoder per collaborator, fixed N, R swept.

and prints the closed-form break-even points.
"""
from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass, replace
from pathlib import Path

from aefl import savings
from aefl.autoencoder import ae_param_count


@dataclass
class CurveSettings:
    original: int = 550_570
    latent: int = 320
    rounds_for_collab_curve: float = 8.0
    collabs_for_round_curve: float = 1000.0
    steps: int = 200
    out: str = "runs/savings"


def write_table(path: Path, axis: str, table) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([axis, "sr"])
        w.writerows((f"{x:.6g}", f"{sr:.6g}") for x, sr in table)


def main(argv=None) -> None:
    s = CurveSettings()
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--out", default=s.out)
    parser.add_argument("--steps", type=int, default=s.steps)
    parser.add_argument("--rounds", type=float, default=s.rounds_for_collab_curve,
                        help="rounds used for the collaborator sweep")
    args = parser.parse_args(argv)
    s = replace(s, out=args.out, steps=args.steps, rounds_for_collab_curve=args.rounds)

    ae = ae_param_count(s.original, s.latent)
    out = Path(s.out)
    out.mkdir(parents=True, exist_ok=True)

    shared = savings.SavingsScenario(s.original, s.latent, comm_rounds=s.rounds_for_collab_curve, ae_size=ae)
    write_table(out / "sr_vs_collaborators.csv", "collabs",
                savings.sweep(shared, "collabs", 1, 10_000, s.steps, log=True))
    per_collab = savings.SavingsScenario(s.original, s.latent, collabs=s.collabs_for_round_curve,
                                         ae_size=ae, num_decoders=None)
    write_table(out / "sr_vs_rounds.csv", "rounds",
                savings.sweep(per_collab, "rounds", 1, 10_000, s.steps, log=True))

    print(f"autoencoder parameters: {ae:,}")
    print(f"compression ratio O/C: {s.original / s.latent:.4f}")
    print(f"break-even collaborators (R={s.rounds_for_collab_curve:g}, one decoder): "
          f"{savings.break_even_collaborators(shared):.4f}")
    print(f"break-even rounds (decoder per collaborator): {savings.break_even_rounds(per_collab):.4f}")
    sr = savings.savings_ratio(savings.SavingsScenario(s.original, s.latent, 40, 1000, ae))
    print(f"SR at R=40, N=1000, one decoder: {sr:.4f}")
    print(f"tables written to {out}")


if __name__ == "__main__":
    main()
