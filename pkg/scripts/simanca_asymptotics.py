"""Asymptotic constants of the Simanca potentials for m = 3..6.

Prints the slope ``lam``, its stability across two ODE tolerances, the decay
slopes of ``A - lam s + c s^(2-m)`` for the literal ``c = lam^(2-m)`` and the
corrected ``c = lam^(2-m)/(m-2)``, and the coefficient of ``|u|^(4-2m)`` after
rescaling to unit slope. With ``--csv`` each decay table is also written.
"""
import argparse
from pathlib import Path

import numpy as np

from cscx.ale_models import ale_rescale, fit_refined_asymptotics, simanca_decay, solve_simanca_ode


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, nargs="+", default=[3, 4, 5, 6])
    ap.add_argument("--csv", type=Path, default=None, help="directory for decay tables")
    args = ap.parse_args()
    print(f"{'m':>2} {'lambda':>22} {'dlambda':>9} {'literal':>9} {'corrected':>9} "
          f"{'coef':>9} {'-2^(m-2)/(m-2)':>14}")
    for m in args.m:
        p = solve_simanca_ode(m, 1e4, 1e-12)
        q = solve_simanca_ode(m, 1e4, 1e-10)
        rep = simanca_decay(p)
        R = np.geomspace(3, 100, 40)
        fit = fit_refined_asymptotics(R, ale_rescale(p.A, p.lam)(R**2) - R**2 / 2, m)
        print(f"{m:>2} {p.lam:22.17g} {abs(p.lam - q.lam):9.1e} {rep.slope_literal:9.4f} "
              f"{rep.slope_corrected:9.4f} {fit.c_decay:9.4f} {-(2.0 ** (m - 2)) / (m - 2):14.4f}")
        if args.csv:
            args.csv.mkdir(parents=True, exist_ok=True)
            (args.csv / f"simanca_m{m}_decay.csv").write_text(rep.to_csv())


if __name__ == "__main__":
    main()
