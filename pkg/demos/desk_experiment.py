"""The bundled desk-scale experiment, stage by stage.

Runs the full pipeline on the shipped config (six training groups, two
held-out groups), prints the learned group weights, compares the model
trained on the reweighted 5,000-example sample with the one trained on all
30,000 examples, and finishes with the only/exclude ablation of the planted
group.  Takes about a minute on one core.

    python3 demos/desk_experiment.py [output-dir]
"""

from __future__ import annotations

import json
import sys
import time

from cardmix.pipeline import Workbench, desk_config


def main(out: str = "desk-run") -> None:
    wb = Workbench(desk_config(), out)
    for stage in ("gen", "label", "compute_stats", "train_reference", "dro", "sample", "train_simplified", "eval"):
        t0 = time.perf_counter()
        getattr(wb, stage)()
        print(f"{stage:17s} {time.perf_counter() - t0:6.1f}s")

    print("\ngroup weights:")
    for name, w in wb.load_weights().as_dict().items():
        print(f"  {name:10s} {w:.4f}")

    meta = json.loads((wb.out / "reports" / "comparison.json").read_text())
    med = meta["median_q_error"]
    print(f"\nheld-out median q-error: all {meta['full_size']} examples {med['reference']:.3f}, "
          f"reweighted {meta['simplified_size']} examples {med['simplified']:.3f}")
    print(f"training time: {wb.train_seconds('reference'):.1f}s vs {wb.train_seconds('simplified'):.1f}s")

    planted = wb.config.planted
    for mode in ("only", "exclude"):
        report = wb.ablate(mode, planted)
        print(f"{mode}:{planted} median q-error {report.median_q(f'ablate_{mode}_{planted}'):.3f}")
    print(f"\nreports under {wb.out / 'reports'}")


if __name__ == "__main__":
    main(*sys.argv[1:2])
