"""Decay rate of W2^2 to the steady state under the pure exchange flow, for several fraction laws."""

import argparse

from exk.config import parse_fraction_law
from exk.experiments import relaxation_experiment
from exk.output import write_plot_data, write_table
from pathlib import Path

LAWS = {
    "uniform01": {"kind": "uniform01"},
    "beta_2_2": {"kind": "beta", "a": 2.0, "b": 2.0},
    "beta_05_05": {"kind": "beta", "a": 0.5, "b": 0.5},
    "triangular_02": {"kind": "triangular", "mode": 0.2},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--t-end", type=float, default=15.0)
    ap.add_argument("--replicates", type=int, default=2)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", type=Path, default=Path("out/scripts/relaxation"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name, doc in LAWS.items():
        res = relaxation_experiment(parse_fraction_law(doc), 1.0, args.n, args.t_end, 0.01, args.replicates, args.seed)
        f = res.fit
        rows.append((name, f.fitted_rate, f.r_squared, f.predictions["c"], f.predictions["2c"], *f.window))
        write_plot_data(args.out / f"w2sq_{name}.csv", res.series)
        print(f"{name:>14}: rate {f.fitted_rate:.4f}  r^2 {f.r_squared:.4f}  c {f.predictions['c']:.4f}  2c {f.predictions['2c']:.4f}")
    write_table(args.out / "summary.csv", ["law", "fitted_rate", "r_squared", "c", "two_c", "t_start", "t_stop"], rows)


if __name__ == "__main__":
    main()
