"""Error floor of the fused output as a function of the class-reference weight.

With a perfect classifier and a perfect value head, the fused estimate is
still off by ``alpha * |ref(group) - truth|``. This script prints that floor
for uniformly spread labels, which bounds what any training run can reach at
a given ``model.alpha``.

    python3 scripts/fusion_floor.py --target SBP
"""

import argparse

import numpy as np

from stmbp.estimator import ModelConfig
from stmbp.sampler import GroupBoundaries, assign_group
from stmbp.synthetic import SynthSpec, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--target", choices=["SBP", "DBP"], default="SBP")
    ap.add_argument("--n", type=int, default=5000)
    args = ap.parse_args()

    spec = SynthSpec(n_samples=args.n, T=1, noise_sd=0.0, seed=0)
    truths = np.array([r.value(args.target) for r in generate(spec).records])
    refs = np.array(ModelConfig().refs(args.target))
    bounds = GroupBoundaries().for_target(args.target)
    gap = np.abs(refs[[assign_group(v, bounds) - 1 for v in truths]] - truths)
    print(f"{args.target}: labels {truths.min():.1f}..{truths.max():.1f}, mean |ref - truth| = {gap.mean():.3f}")
    print("alpha\tMAE floor")
    for alpha in (0.0, 0.1, 0.25, 0.5, 0.75, 1.0):
        print(f"{alpha:.2f}\t{alpha * gap.mean():.3f}")


if __name__ == "__main__":
    main()
