"""Aggregate loss totals across the loss-balancing weight, next to reported mPQ.

Components come from the loss kernels evaluated on random score tensors, so
the totals show how the semantic term is weighted; the mPQ column is the
reference fixture, not something computed here.

    python scripts/lambda_sweep.py --seed 0 --size 8x8x3
"""

import argparse
import json
from pathlib import Path

from occluseg import loss_kernels as lk
from occluseg.cli import LAMBDA_SWEEP, _parse_sizes, _sweep_components

REFERENCE = Path(__file__).resolve().parents[1] / "fixtures" / "reference_mpq.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--size", type=_parse_sizes, default=_parse_sizes("8x8x3"))
    args = ap.parse_args()

    ref = json.loads(REFERENCE.read_text())
    comps = _sweep_components(args.seed, args.size[0])
    for k, v in comps.items():
        print(f"{k:<12} {v:.6f}")
    print()
    print(f"{'lambda':>7} {'l_ins':>10} {'l_sem':>10} {'total':>10} {'ref mPQ':>8}")
    print(f"{'0':>7} {lk.aggregate(comps, 0.0).total:>32.6f} {ref['instance_only']:>8.1f}")
    for lam in LAMBDA_SWEEP:
        b = lk.aggregate(comps, lam)
        mpq = ref["joint_by_lambda"].get(f"{lam:g}")
        print(f"{lam:>7g} {b.l_ins:>10.6f} {b.l_sem:>10.6f} {b.total:>10.6f} {mpq:>8.1f}")
    best = max(ref["joint_by_lambda"], key=ref["joint_by_lambda"].get)
    print(f"\nbest reported lambda: {best} (default {lk.DEFAULT_LAMBDA:g})")


if __name__ == "__main__":
    main()
