"""Fit the maximum-principle factor on the linear calibration family and print it.

The factor is ``safety * max(E[lhs] / E[data terms])`` over the family; freeze
it as ``experiment.factor`` in the maximum-principle config.
"""
import argparse
import dataclasses

from ospde.config import load
from ospde.suites import calibrate_factor


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/max_principle.cfg")
    ap.add_argument("--seeds", type=int, default=32)
    args = ap.parse_args()
    cfg = load(args.config)
    cfg = dataclasses.replace(cfg, experiment=dataclasses.replace(cfg.experiment, factor=0.0))
    factor, ratios = calibrate_factor(cfg, args.seeds)
    for i, r in enumerate(ratios):
        print(f"member {i}: E[lhs]/E[data] = {r:.6g}")
    print(f"experiment.factor = {factor!r}")


if __name__ == "__main__":
    main()
