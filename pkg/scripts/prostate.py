"""Stepwise p-values on the prostate cancer data.

The data are not bundled.  Pass a CSV (comma or tab separated) with columns
lcavol, lweight, age, lbph, svi, lcp, gleason, pgg45 and lpsa; other columns
such as a row index or ``train`` are ignored.

    python scripts/prostate.py prostate.csv --mode equicorr
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from corrstop.procedure import SelectionConfig, run_selection  # noqa: E402
from test_acceptance import load_prostate  # noqa: E402


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("csv")
    parser.add_argument("--method", default="lars", choices=["fsr", "lars", "lasso"])
    parser.add_argument("--mode", default="equicorr", choices=["auto", "iid", "equicorr", "perm"])
    parser.add_argument("--q", type=int, default=500)
    args = parser.parse_args()

    data = load_prostate(args.csv)
    cfg = SelectionConfig(method=args.method, gamma=1 - 1e-9, test_mode=args.mode, permutation_q=args.q)
    trace = run_selection(data, cfg)
    print(f"rho_hat = {trace.rho_hat}")
    print(f"{'k':>3}  {'event':<6}{'variable':<10}{'p-value':>10}")
    for r in trace.steps:
        p = "" if r.p_value is None else f"{r.p_value:.4f}"
        print(f"{r.step:>3}  {r.event:<6}{r.name:<10}{p:>10}")
    for gamma in (0.05, 0.1, 0.5):
        chosen = run_selection(data, SelectionConfig(method=args.method, gamma=gamma, test_mode=args.mode)).selected_names
        print(f"gamma={gamma}: {', '.join(chosen) or '(none)'}")


if __name__ == "__main__":
    main()
