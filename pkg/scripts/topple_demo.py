"""Two trackers in parallel: one part topples, the other stays put.

usage: python3 scripts/topple_demo.py [strategy]
"""

import sys

from depowder.config import TrackerConfig
from depowder.harness.trials import StaticTrialConfig, ToppleTrialConfig, run_parallel_demo


def main(strategy="cuicp"):
    cfgs = [ToppleTrialConfig(), StaticTrialConfig("cube", 0.6, 0, duration=3.0)]
    for cfg, res in zip(cfgs, run_parallel_demo(cfgs, strategy, TrackerConfig(), workers=2)):
        print(f"{type(cfg).__name__:18s} {res.part_id:6s} final {res.final_R_err:6.2f} deg "
              f"{res.final_t_err:5.2f} cm  success={res.success}")


if __name__ == "__main__":
    main(*sys.argv[1:])
