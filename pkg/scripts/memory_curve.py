"""Activation-memory comparison between the dual-path architecture and a
full-resolution channel-attention baseline.

Prints the estimated activation footprint at a few patch sides and the
largest feasible training patch for a range of memory budgets.

Usage:
    python3 scripts/memory_curve.py [--budgets-gb 1 2 4 8 12 16]
"""

import argparse

from hern.memory import (
    estimate_memory,
    hern_arch_spec,
    max_feasible_patch,
    rcan_like_arch_spec,
)


def gb(n: int) -> float:
    return n / 2**30


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--budgets-gb", type=float, nargs="+", default=[1, 2, 4, 8, 12, 16]
    )
    args = parser.parse_args()

    dual = hern_arch_spec()
    baseline = rcan_like_arch_spec()

    print("activation footprint (batch 1, forward only):")
    print(f"{'side':>6} {'dual-path GB':>14} {'baseline GB':>14}")
    for side in (64, 144, 224, 312):
        d = estimate_memory(dual, side).total_bytes
        b = estimate_memory(baseline, side).total_bytes
        print(f"{side:>6} {gb(d):>14.3f} {gb(b):>14.3f}")

    print("\nlargest feasible patch side per budget:")
    print(f"{'budget GB':>10} {'dual-path':>10} {'baseline':>10} {'ratio':>7}")
    for budget_gb in args.budgets_gb:
        budget = int(budget_gb * 2**30)
        d = max_feasible_patch(dual, budget)
        b = max_feasible_patch(baseline, budget)
        print(f"{budget_gb:>10.1f} {d:>10} {b:>10} {d / b:>7.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
