"""Visibilities recovered by the analysis pipeline as a function of the coherence mu."""

import argparse

import numpy as np

from hom_feedback.analysis import analyze_dataset, visibilities
from hom_feedback.event_sim import ExperimentConfig, Scenario, ScenarioKind, run_experiment

CROSS_BIN = ("C1D2", "C2D1")


def visibilities_at(mu, n_cycles, seed):
    r = {}
    for i, kind in enumerate(ScenarioKind):
        cfg = ExperimentConfig(rng_seed=seed + i, scenario=Scenario(kind, mu=mu))
        res = run_experiment(cfg, n_cycles)
        r[kind.panel] = analyze_dataset(res.stream_c, res.stream_d, n_cycles, cfg.period_ps, cfg.delay_transmission)
    return visibilities(
        n_par_cross_bin=r["b"].aggregate(CROSS_BIN), n_perp_cross_bin=r["a"].aggregate(CROSS_BIN),
        n_0=r["b"].aggregate(CROSS_BIN), n_pi=r["c"].aggregate(CROSS_BIN),
        n_d1c2=r["d"].aggregate(("C2D1",)), n_c1d2=r["d"].aggregate(("C1D2",)),
    )


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--mu", type=float, nargs="+", default=list(np.round(np.linspace(0, 1, 6), 2)))
    p.add_argument("--n-cycles", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=100)
    args = p.parse_args()
    print("mu,V_ref,V_phi,V_feed")
    for mu in args.mu:
        v = visibilities_at(mu, args.n_cycles, args.seed)
        print(f"{mu:.2f}," + ",".join(f"{v[k].value:.3f}+-{v[k].sigma:.3f}" for k in ("V_ref", "V_phi", "V_feed")))


if __name__ == "__main__":
    main()
