"""Obstacle heat benchmark: error against the closed form, contact time and reflection mass."""
import argparse
import time

from ospde.analysis.benchmarks import CONTACT_TIME, obstacle_heat_mass
from ospde.config import load
from ospde.suites import benchmark_report, penalization_report


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/benchmark.cfg")
    args = ap.parse_args()
    cfg = load(args.config)
    t0 = time.perf_counter()
    rep = benchmark_report(cfg)
    elapsed = time.perf_counter() - t0
    r = rep.rows[0]
    print(f"sup error      {r['sup_error']:.3e}")
    print(f"contact time   {r['contact_time']:.6f}  (exact {CONTACT_TIME:.6f})")
    print(f"nu mass        {r['nu_mass']:.6f}  (exact {obstacle_heat_mass(cfg.solver.T):.6f})")
    print(f"runtime        {elapsed:.2f} s")
    pen = penalization_report(cfg)
    for row in pen.rows:
        print(f"eps {row['eps']:.0e}  sup distance to projection {row['sup_distance']:.3e}")
    print("status", rep.status, pen.status)


if __name__ == "__main__":
    main()
