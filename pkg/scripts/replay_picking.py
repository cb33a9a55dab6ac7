"""Simulate emptying random bins with the random-pick policy.

Each scene is a synthetic video; after every pick the labels are regenerated
from the true stacking order and the graph is rebuilt. Reports how often the
policy had to fall back (no instance under the visibility threshold) and
whether it ever took an instance that something still covered.

    python scripts/replay_picking.py --scenes 500 --eps 0 0.02 0.1
"""

import argparse

import numpy as np

from occluseg.occlusion_planner import DEFAULT_EDGE_THRESHOLD, replay_random_picking
from occluseg.synth import random_video


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenes", type=int, default=200)
    ap.add_argument("--size", type=int, default=24)
    ap.add_argument("--max-instances", type=int, default=6)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.0, 0.02, 0.1])
    ap.add_argument("--edge-threshold", type=float, default=DEFAULT_EDGE_THRESHOLD)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'eps':>6} {'picks':>7} {'degraded':>9} {'covered':>8}")
    for eps in args.eps:
        rng = np.random.default_rng(args.seed)
        picks = degraded = covered = 0
        for _ in range(args.scenes):
            video = random_video(rng, args.size, args.size, max_instances=args.max_instances)
            steps = replay_random_picking(video, args.size, args.size, eps, args.edge_threshold)
            picks += len(steps)
            degraded += sum(s.degraded for s in steps)
            covered += sum(s.had_occluder for s in steps)
        print(f"{eps:>6g} {picks:>7d} {degraded:>9d} {covered:>8d}")


if __name__ == "__main__":
    main()
