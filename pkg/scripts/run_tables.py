"""Run the bundled desk-scale experiments and write one report per spec.

    python scripts/run_tables.py                       # all bundled table specs
    python scripts/run_tables.py example1_table2 --reps 10 --out-dir results
"""

import argparse
import dataclasses
import time
from pathlib import Path

from corrstop.simbench import bundled_specs, load_spec, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("specs", nargs="*", help="bundled spec names or spec files")
    parser.add_argument("--reps", type=int, help="override the replication count")
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--out-dir", default="results")
    args = parser.parse_args()

    names = args.specs or [s for s in bundled_specs() if s != "example1_smoke"]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in names:
        spec = load_spec(name)
        if args.reps is not None:
            spec = dataclasses.replace(spec, reps=args.reps)
        started = time.perf_counter()
        report = run_experiment(spec, threads=args.threads)
        stem = Path(name).stem
        (out / f"{stem}.csv").write_text(report.to_csv())
        (out / f"{stem}.json").write_text(report.to_json())
        print(f"== {stem}: {spec.reps} reps, n={spec.n}, p={spec.p} ({time.perf_counter() - started:.0f}s)")
        print(f"{'method':<12}{'gamma':>7}{'MSE':>14}{'FN':>14}{'FP':>14}{'time':>10}")
        for r in report.rows:
            g = "-" if r.gamma is None else f"{r.gamma:g}"
            print(
                f"{r.method:<12}{g:>7}{r.mse:>8.2f} ({r.se_mse:.2f}){r.fn:>8.2f} ({r.se_fn:.2f})"
                f"{r.fp:>8.2f} ({r.se_fp:.2f}){r.time:>9.3f}s"
            )
        for f in report.failures:
            print("failure:", *f)


if __name__ == "__main__":
    main()
