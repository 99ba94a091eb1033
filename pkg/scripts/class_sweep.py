"""Average scalar curvature of blown-up classes and the zero-curvature parameter.

Sweeps ``eps`` for a few base classes, reports where monotonicity first
breaks, and tabulates the root ``t(eps)`` of a linear base family against its
closed form.
"""
import argparse

import numpy as np

from cscx.class_arithmetic import (BaseFamily, BlowupClassData, linear_family_root,
                                   monotonicity_check, scal_sweep, zero_scal_solve)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps-max", type=float, default=0.6)
    args = ap.parse_args()
    for data in (BlowupClassData(2, 1.0, 0.0, (1.0,)), BlowupClassData(2, 1.0, -2.0, (0.5, 0.5)),
                 BlowupClassData(3, 2.0, 1.0, (1.0,)), BlowupClassData(4, 1.0, 0.5, (0.3, 0.3, 0.3))):
        try:
            rep = monotonicity_check(data, args.eps_max)
            mono = "decreasing" if rep.decreasing else f"turns at eps = {rep.first_violation:.4g}"
        except Exception as exc:  # volume can vanish before eps_max
            mono = f"stopped: {exc}"
        rows = scal_sweep(data, min(args.eps_max, 0.3), 4)
        print(f"m={data.m} vol={data.vol_class} chern={data.chern_pair} weights={data.weights}: {mono}")
        print("    " + "  ".join(f"s({r[0]:.2f})={r[3]:+.6f}" for r in rows))
    tmpl = BlowupClassData(3, 1.0, 0.0, (1.0,))
    print("linear family s(t) = t, m=3:")
    for eps in np.geomspace(1e-2, 0.3, 5):
        t = zero_scal_solve(BaseFamily.linear(), tmpl, eps)
        print(f"    eps={eps:.4f}  t={t:.6e}  closed form {linear_family_root(tmpl, eps):.6e}")


if __name__ == "__main__":
    main()
