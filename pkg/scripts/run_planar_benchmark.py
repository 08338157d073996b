#!/usr/bin/env python3
"""End-to-end demo: train PPO, TD3 and the random baseline on the planar
reach task, evaluate all three, and emit the benchmark comparison chart.

Desk-scale budgets (a few minutes on a laptop CPU); pass --full for the
budgets used in the acceptance suite.
"""

import argparse
import sys

from reachrl.cli import main as cli


def run(argv):
    code = cli(argv)
    if code != 0:
        sys.exit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workspace", default="experiments")
    parser.add_argument("--full", action="store_true", help="acceptance-scale budgets")
    args = parser.parse_args()

    ws = ["--workspace", args.workspace]
    ppo_steps = "150000" if args.full else "30000"
    td3_steps = "100000" if args.full else "10000"

    run(["train", "--algo", "ppo", "--env", "reach-planar-v1",
         "--n-timesteps", ppo_steps, "--n-seeds", "3", "--parallel", "3", *ws])
    run(["train", "--algo", "td3", "--env", "reach-planar-v1",
         "--n-timesteps", td3_steps, "--n-seeds", "2", "--parallel", "2", *ws])
    run(["train", "--algo", "random", "--env", "reach-planar-v1",
         "--n-timesteps", "10000", "--n-seeds", "2", "--parallel", "2", *ws])
    for exp_id in ("1", "2", "3"):
        run(["evaluate", "--exp-id", exp_id, *ws])
        run(["plot", "--exp-id", exp_id, *ws])
    run(["evaluate", "--exp-id", "1", "--log-episode", *ws])
    run(["benchmark", "--exp-ids", "1,2,3", "--metric", "mean_return", *ws])
    run(["benchmark", "--exp-ids", "1,2,3", "--metric", "success_ratio_50mm", *ws])


if __name__ == "__main__":
    main()
