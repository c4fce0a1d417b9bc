"""Compare the fast readouts on the default synthetic seasonal study.

Run with ``python3 demos/compare_methods.py [OUT_DIR]``. Writes the
comparison table plus per-method calibration curves and quantile
trajectories to OUT_DIR (default ``demo_out``).
"""

import sys

from rcprob.experiment import compare_methods, comparison_rows, default_study


def main(out_dir="demo_out"):
    reports = compare_methods([default_study(m) for m in ("qr", "dropout", "vi")], out_dir)
    print(f"{'method':>8} {'mse':>9} {'cal':>8} {'cal recal':>10} {'width95':>8} {'cov95':>6} {'time':>7}")
    for row in comparison_rows(reports):
        recal = row.get("cal_recal")
        recal_s = "-" if recal is None else f"{recal:.4f}"
        print(f"{row['method']:>8} {row['mse']:>9.5f} {row['cal']:>8.4f} {recal_s:>10} {row['width95']:>8.3f} "
              f"{row['coverage95']:>6.3f} {row['train_time']:>6.2f}s")
    print(f"outputs written to {out_dir}/")


if __name__ == "__main__":
    main(*sys.argv[1:2])
