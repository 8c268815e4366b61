"""Right-satellite suppression and cross-detector mass of the feedback curve versus latency."""

import argparse

import numpy as np

from hom_feedback.event_sim import Scenario, ScenarioKind
from hom_feedback.feedback import LatencyBudget, error_rate


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--max-ns", type=float, default=225.0)
    p.add_argument("--num", type=int, default=10)
    args = p.parse_args()
    sc = Scenario(ScenarioKind.FEEDBACK)
    print(f"budget total: {LatencyBudget().total_ns:.1f} ns")
    print("latency_ns,cross_probability,left_satellite_per_ns,right_satellite_per_ns,error_rate")
    for L in np.linspace(0.0, args.max_ns, args.num):
        curve = sc.curve(latency=L * 1e-9)
        left, right = (curve.cross_at(s * sc.duration / 2) * 1e-9 for s in (-1, 1))
        print(f"{L:.1f},{curve.cross_probability():.5f},{left:.3e},{right:.3e},{error_rate(L / 450):.5f}")


if __name__ == "__main__":
    main()
