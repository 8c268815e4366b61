"""Theory curves, simulated streams and analysis for all four scenarios."""

import argparse
import json
import sys

from hom_feedback.cli import run


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n-cycles", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-dir", default="out/figures")
    args = p.parse_args()
    rc = run(["reproduce-all", "--n-cycles", str(args.n_cycles), "--seed", str(args.seed), "--output-dir", args.output_dir])
    if rc == 0:
        with open(f"{args.output_dir}/summary.json") as fh:
            summary = json.load(fh)
        for panel, s in summary["scenarios"].items():
            chi = s["analysis"].get("chi2_vs_theory", {})
            print(f"{panel}: snr={s['analysis']['snr']:.2f} chi2/dof={chi.get('per_dof', float('nan')):.2f}")
        for k, v in summary["visibilities"].items():
            print(f"{k} = {v['value']:.3f} +- {v['sigma']:.3f}")
    sys.exit(rc)


if __name__ == "__main__":
    main()
