"""Indicial roots of the bi-Laplacian per invariant mode, and the gap check.

For each ``m`` and group, prints the roots up to ``--gamma-max`` and whether
any falls in the excluded window ``{5-2m, ..., -1}``.
"""
import argparse

from cscx.mode_analysis import GroupDescriptor, indicial_roots


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, nargs="+", default=[2, 3, 4, 5, 6])
    ap.add_argument("--groups", nargs="+", default=["trivial", "z2", "z3"])
    ap.add_argument("--gamma-max", type=int, default=8)
    args = ap.parse_args()
    for m in args.m:
        for name in args.groups:
            table = indicial_roots(m, GroupDescriptor.parse(name, m), args.gamma_max)
            window = set(range(5 - 2 * m, 0))
            hit = sorted(window & set(table.roots))
            print(f"m={m} {name:8s} modes {[row[0] for row in table.rows]}")
            print(f"    roots {table.roots}")
            print(f"    excluded window {sorted(window) or '{}'}: {'hit ' + str(hit) if hit else 'clear'}")


if __name__ == "__main__":
    main()
