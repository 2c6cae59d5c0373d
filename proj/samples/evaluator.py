#!/usr/bin/env python3
# Toy external evaluator: reads the architecture JSON named on the command
# line and prints a score on the last line of standard output.
import json
import sys

with open(sys.argv[1]) as f:
    arch = json.load(f)
units = [l.get("units", 0) for l in arch["layers"]]
print("layers", len(arch["layers"]))
print(-abs(sum(units) - 400) / 100.0)
