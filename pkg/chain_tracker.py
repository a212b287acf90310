#!/usr/bin/env python3
"""
Chain Tracker

Orientation tracking for chains of IMUs (arm, boom, full body) without
gravity or magnetometer references:
1. Every sensor dead-reckons its orientation from its gyro
2. At each joint, the child's predicted base acceleration is compared with
   the parent's tip acceleration in the world frame
3. A fraction of the angle between them, scaled by signal-to-noise, is
   rotated out of the child's estimate
4. A hub walks the chain over a simulated bus and publishes the latest
   poses as JSON

Everything runs on simulated sensors: a ground-truth simulator produces
the IMU traces, and the evaluation harness reproduces the drift, prediction,
correction and yaw-recovery experiments.

USAGE:
    python chain_tracker.py simulate --config boom_config.yml
    python chain_tracker.py evaluate --experiment yaw_recovery --config boom_config.yml
    python chain_tracker.py serve --config boom_config.yml --realtime
"""

import sys

from cli_interface import cli_run


def main() -> int:
    """Main execution flow."""
    return cli_run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
