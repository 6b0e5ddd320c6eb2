#!/usr/bin/env python
"""Run one named scenario from scenarios.json through the twophase CLI"""

import json
import subprocess
import sys
from pathlib import Path

SCENARIOS = Path(__file__).resolve().parent / "scenarios.json"


def build_command(scenario: dict) -> list[str]:
    return [
        "twophase", "simulate",
        "--scenario", scenario["scenario"],
        "--profile", scenario["profile"],
        "--methods", scenario["methods"],
        "--seed", str(scenario["seed"]),
        "--out", scenario["out"],
        "--jobs", str(scenario.get("jobs", -1)),
    ]


def main(argv: list[str]) -> int:
    with open(SCENARIOS) as f:
        scenarios = json.load(f)

    # pick by id on the command line, default to the first entry
    wanted = argv[0] if argv else scenarios[0]["id"]
    matches = [s for s in scenarios if s["id"] == wanted]
    if not matches:
        print(f"Unknown scenario id {wanted!r}; known: {[s['id'] for s in scenarios]}")
        return 1
    scenario = matches[0]

    print(f"Running scenario: {scenario['id']}")
    print(f"Profile: {scenario['profile']}")
    print(f"Methods: {scenario['methods']}\n")

    cmd = build_command(scenario)
    print(f"Executing: {' '.join(cmd)}\n")
    return subprocess.run(cmd).returncode


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
