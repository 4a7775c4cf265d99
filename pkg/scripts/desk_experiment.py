"""Desk-scale experiment: progressive-resolution training vs a single-stage
run with the same total epoch budget, on a tiny synthetic dataset.

Trains the small CPU preset twice from the same initialization and prints a
timing/loss table. Runs in a couple of minutes on one core.

Usage:
    python3 scripts/desk_experiment.py [--out runs/desk-experiment] [--seed 0]
"""

import argparse
import time
from pathlib import Path

from hern.dataset import generate_dataset, load_dataset
from hern.model import init_params
from hern.presets import desk_preset
from hern.training import TrainSchedule, TrainStage, progressive_train, write_metrics_csv


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/desk-experiment")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preset = desk_preset(root=str(out / "data"))
    generate_dataset(
        preset.data.root,
        preset.data.count,
        preset.data.size,
        preset.data.gains,
        preset.data.sigma,
        seed=args.seed,
    )
    dataset = load_dataset(preset.data.root)

    runs = {
        "progressive": TrainSchedule(
            (TrainStage(16, 200, 3e-3, 1), TrainStage(32, 400, 1e-3, 1))
        ),
        "single-res": TrainSchedule((TrainStage(32, 600, 1e-3, 1),)),
    }
    rows = []
    for label, schedule in runs.items():
        model = init_params(preset.model, args.seed + 1)
        t0 = time.perf_counter()
        timeline = progressive_train(model, dataset, schedule, seed=args.seed + 2)
        elapsed = time.perf_counter() - t0
        write_metrics_csv(timeline, out / f"{label}-metrics.csv")
        rows.append((label, timeline[-1]["mean_l1"], elapsed))

    print(f"{'run':<12} {'final L1':>10} {'seconds':>8}")
    for label, loss, secs in rows:
        print(f"{label:<12} {loss:>10.5f} {secs:>8.1f}")
    print(f"per-epoch metrics written under {out}/")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
