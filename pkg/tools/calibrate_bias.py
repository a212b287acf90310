#!/usr/bin/env python3
"""
Calibrate Bias - Find the gyro bias that reproduces a target drift time.

Bisects the bias magnitude until the mean simulated time for static dead
reckoning to drift 1 degree matches the target, then prints the bias to
put in the config's noise section.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from config_processor import ConfigError, default_run_config, load_run_config
from evalkit import calibrate_gyro_bias


def main():
    parser = argparse.ArgumentParser(description="Calibrate gyro bias to a drift time")
    parser.add_argument('--config', help='Run config YAML (noise section supplies sigma and direction)')
    parser.add_argument('--target', type=float, help='Target mean time to 1 degree in seconds')
    parser.add_argument('--runs', type=int, default=5, help='Seeded runs per evaluation')
    parser.add_argument('--tolerance', type=float, default=0.1, help='Acceptable error in seconds')
    args = parser.parse_args()

    try:
        config = load_run_config(args.config) if args.config else default_run_config()
    except (FileNotFoundError, ConfigError) as e:
        print(f"[!] {e}")
        sys.exit(2)

    target = args.target or config.experiment.target_time_to_1deg_s
    print(f"[*] Target mean time to 1 deg: {target:g} s over {args.runs} run(s)")
    bias, achieved = calibrate_gyro_bias(config, target_s=target, runs=args.runs, tolerance_s=args.tolerance)

    print(f"[+] Achieved: {achieved:.2f} s")
    print(f"[+] gyro_bias: [{bias.x:.6g}, {bias.y:.6g}, {bias.z:.6g}]  (|b| = {bias.norm():.4g} rad/s)")


if __name__ == "__main__":
    main()
