#!/usr/bin/env python3
"""Generate a synthetic smile/rates CSV pair from known cumulant sets.

Each maturity gets its own (sigma, kappa_3, kappa_4): the quotes are
self-consistent five-delta vols of the expansion model, so calibrating the
emitted files must recover the table below — handy as an end-to-end
fixture and for the knock-out grid study on data with a known answer.
"""

from __future__ import annotations

import argparse
import csv
import math
from pathlib import Path

from nongauss.calibration import synthetic_slice
from nongauss.expansion import CumulantSet
from nongauss.martingale import RateSpec, solve_drift

# months -> (sigma, kappa3, kappa4); skew fades and vol grows with maturity
PARAM_TABLE = {
    1: (0.210, 0.020, -0.008),
    3: (0.220, 0.045, -0.015),
    6: (0.230, 0.065, -0.022),
    12: (0.245, 0.085, -0.030),
    18: (0.255, 0.095, -0.034),
}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default=".", help="where smile.csv / rates.csv land")
    ap.add_argument("--s0", type=float, default=100.0)
    ap.add_argument("--rate", type=float, default=0.03, help="annual accrual rate")
    ap.add_argument("--date", default="2024-01-02")
    ap.add_argument(
        "--maturities", default="1,3,6,12,18",
        help="comma list of maturities in months (subset of the built-in table)",
    )
    args = ap.parse_args()

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    months_list = [int(m) for m in args.maturities.split(",")]

    smile_rows, rate_rows = [], []
    for months in months_list:
        sigma, k3, k4 = PARAM_TABLE[months]
        t_n = months / 12.0
        r_acc = args.rate * t_n
        c = CumulantSet(sigma, t_n, (k3, k4))
        c = c.with_alpha(solve_drift(c, RateSpec(r_acc, t_n, sigma)))
        quotes, rate_row = synthetic_slice(
            c, s0=args.s0, r_acc=r_acc, date=args.date, maturity_months=months
        )
        smile_rows += [(q.date, q.maturity_months, q.delta, q.vol) for q in quotes]
        rate_rows.append((rate_row.date, rate_row.maturity_months, rate_row.r_acc, rate_row.forward))
        print(
            f"{months:3d}m  sigma={sigma:.3f}  kappa3={k3:+.3f}  kappa4={k4:+.3f}  "
            f"alpha={c.alpha:+.5f}  F={rate_row.forward:.4f}"
        )

    with open(out / "smile.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "maturity_months", "delta", "vol"])
        for row in smile_rows:
            w.writerow([row[0], row[1], f"{row[2]:.12g}", f"{row[3]:.12g}"])
    with open(out / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "maturity_months", "r_acc", "forward"])
        for row in rate_rows:
            w.writerow([row[0], row[1], f"{row[2]:.12g}", f"{row[3]:.12g}"])
    print(f"wrote {out / 'smile.csv'} ({len(smile_rows)} quotes) and {out / 'rates.csv'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
