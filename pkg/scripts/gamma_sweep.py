"""Kinetic vs macroscopic error as the exchange rate grows, for saturating and constant fitness."""

import argparse
from pathlib import Path

from exk.exchange import UniformFraction, steady_state
from exk.experiments import gamma_sweep
from exk.kinetic import ConstantFitness, KineticParams, PopulationState, SaturatingFitness
from exk.measures import PointMass, make_rng
from exk.output import write_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--gammas", type=float, nargs="+", default=[10.0, 40.0, 160.0])
    ap.add_argument("--replicates", type=int, default=3)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--out", type=Path, default=Path("out/scripts/gamma_sweep"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    # dt fixed by the largest gamma
    dt = 1e-3
    u1_bar = steady_state(1.0, UniformFraction(), args.n, make_rng(args.seed, 0))
    init = PopulationState(0.0, 0.5, u1_bar.scaled(2.0))
    for label, alpha in (("saturating", SaturatingFitness(1.0, 1.0)), ("constant", ConstantFitness(0.5))):
        params = KineticParams(1.0, 1.0, args.gammas[0], alpha, PointMass(1.0), UniformFraction())
        pts = gamma_sweep(params, args.gammas, init, 3.0, dt, dt, 0.05, args.replicates, args.seed, u1_bar, threads=args.threads)
        rows = [(p.gamma, p.sup_error, p.sup_w2, p.sup_n, len(p.reports)) for p in pts]
        write_table(args.out / f"summary_{label}.csv", ["gamma", "sup_error", "sup_w2", "sup_n", "replicates"], rows)
        for r in rows:
            print(f"{label:>10} gamma {r[0]:>6g}: sup_error {r[1]:.4f}  w2 {r[2]:.4f}  n {r[3]:.2e}")


if __name__ == "__main__":
    main()
