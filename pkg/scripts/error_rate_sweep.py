"""Feedback error rate versus dead-time fraction, with a Monte Carlo cross-check."""

import argparse

import numpy as np

from hom_feedback.event_sim import ExperimentConfig, Scenario, ScenarioKind, run_experiment
from hom_feedback.feedback import error_rate


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--num", type=int, default=21)
    p.add_argument("--n-cycles", type=int, default=400_000)
    p.add_argument("--output", default="error_rate_sweep.csv")
    args = p.parse_args()
    rows = []
    for tt in np.linspace(0.0, 1.0, args.num):
        cfg = ExperimentConfig(
            emission_probability=1.0, delay_transmission=1.0, detector_efficiency=1.0, dark_rate=0.0,
            repump_light_rate=0.0, scenario=Scenario(ScenarioKind.FEEDBACK), feedback_latency=tt * 450e-9,
        )
        bad, trials = run_experiment(cfg, args.n_cycles).ground_truth.violation_fraction()
        rows.append((tt, error_rate(tt), bad / trials, np.sqrt(max(bad, 1)) / trials))
        print("t~={:.3f} quadrature={:.5f} simulated={:.5f} +- {:.5f}".format(*rows[-1]))
    np.savetxt(args.output, rows, delimiter=",", header="t_tilde,quadrature,simulated,sigma", comments="")


if __name__ == "__main__":
    main()
