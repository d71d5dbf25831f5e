"""Run every method on the 33-bus feeder and print a results table sorted by NPF.

    python3 demos/compare_33_bus.py [--with-morton]

Morton's exhaustive search evaluates all 50,751 spanning trees (about ten
seconds) and is the reference optimum; it is skipped unless asked for.
"""

import sys

from dnr import bench
from dnr.caseio import load_fixture


def main():
    fx = load_fixture("case33")
    methods = list(bench.METHODS if "--with-morton" in sys.argv else bench.COMPARE_DEFAULT)
    rep = bench.compare(fx, methods, bench.RunSettings())
    print(f"{'method':<9} {'losses kW':>10} {'v_min':>7} {'NPF':>7} {'ms':>8}  open branches")
    for r in sorted(rep.rows, key=lambda r: r.npf):
        if not r.ok:
            print(f"{r.method:<9} {'no solution':>10}  {r.reason}")
            continue
        print(f"{r.method:<9} {r.losses_kw:10.3f} {r.v_min:7.4f} {r.npf:7d} {r.wall_ms:8.1f}  {' '.join(r.config)}")


if __name__ == "__main__":
    main()
