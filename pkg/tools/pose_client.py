#!/usr/bin/env python3
"""
Pose Client - Polls the hub's GET /pose endpoint and prints the quaternions.

Any client (a renderer, a logger) reads the poses the same way.
"""

import argparse
import os
import sys
import time

import requests
from dotenv import load_dotenv

load_dotenv()


def fetch_pose(url: str) -> dict:
    """
    Fetch one snapshot.

    Args:
        url: Full endpoint URL, e.g. http://127.0.0.1:8080/pose

    Returns:
        Parsed JSON payload {"sensors": [...]}
    """
    response = requests.get(url, timeout=(10, 30))  # (connect, read) timeout
    response.raise_for_status()
    return response.json()


def format_snapshot(payload: dict) -> str:
    lines = []
    for sensor in payload.get("sensors", []):
        w, x, y, z = sensor["q"]
        lines.append(f"  sensor {sensor['id']:>2}  t={sensor['t_us']:>10} us  "
                     f"q=({w:+.4f}, {x:+.4f}, {y:+.4f}, {z:+.4f})")
    return "\n".join(lines) if lines else "  (no sensors yet)"


def main():
    host = os.getenv("CHAIN_TRACKER_HOST", "127.0.0.1")
    port = os.getenv("CHAIN_TRACKER_PORT", "8080")

    parser = argparse.ArgumentParser(description="Poll the pose endpoint")
    parser.add_argument('--url', default=f"http://{host}:{port}/pose", help='Endpoint URL')
    parser.add_argument('--interval', type=float, default=0.5, help='Seconds between polls')
    parser.add_argument('--count', type=int, default=0, help='Number of polls (0 = until Ctrl+C)')
    args = parser.parse_args()

    print(f"[*] Polling {args.url}")
    polls = 0
    try:
        while args.count == 0 or polls < args.count:
            try:
                payload = fetch_pose(args.url)
            except requests.RequestException as e:
                print(f"[!] Request failed: {e}")
                sys.exit(1)
            polls += 1
            print(f"[{polls}]")
            print(format_snapshot(payload))
            time.sleep(args.interval)
    except KeyboardInterrupt:
        print("\n[*] Stopped")


if __name__ == "__main__":
    main()
