"""Run the bundled merge once per planner and print the obstacle's metrics side by side.

The obstacle starts in the upper lane, slightly ahead of a faster ego in the
lane that ends. Under PF_CS it holds its speed and swerves around the
merging ego; under PF_ISO it reads the ego's shared path, slows down a
little earlier and stays straighter.

Usage::

    python demos/compare_planners.py [out_dir]
"""

import sys
import time

from pfiso.cli import cmd_compare

COLUMNS = [
    ("max_abs_yaw_rate", "max |r| [rad/s]"),
    ("max_abs_beta", "max |beta| [rad]"),
    ("min_speed", "min v [m/s]"),
    ("path_length", "path [m]"),
    ("lateral_oscillation_rms", "osc RMS [m]"),
    ("min_separation", "min gap [m]"),
]


def main(out_dir="demo_out/compare"):
    t0 = time.perf_counter()
    report = cmd_compare(None, ["PF_CS", "PF_SP", "PF_ISO"], out_dir)
    print(f"three runs in {time.perf_counter() - t0:.1f} s, artifacts in {out_dir}/\n")
    print(f"{'obstacle':<10}" + "".join(f"{label:>18}" for _, label in COLUMNS))
    for planner in report.planners:
        m = report.metrics[planner]["obstacle"]
        print(f"{planner:<10}" + "".join(f"{getattr(m, key):>18.5f}" for key, _ in COLUMNS))
    print("\nlowest value per metric:", report.verdicts["obstacle"])


if __name__ == "__main__":
    main(*sys.argv[1:])
