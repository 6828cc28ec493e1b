"""Constant versus diminishing step sizes on the toy transfer problem.

Runs the bundled ``toy_fig1.cfg`` configuration through the command-line
driver (two schedules, n in {500, 1000}, five seeds each) and prints the
seed-averaged upper objective and distance ``|X - Xhat|_F`` at a few
checkpoints from ``panel_compare.csv``.  Takes about a minute.

Usage: ``python demos/toy_fig1.py [output directory]``
"""

import csv
import os
import sys

from aidstab.cli import main

out = sys.argv[1] if len(sys.argv) > 1 else "out/toy_fig1"
code = main(["run", "--config", "toy_fig1.cfg", "--out-dir", out])
if code:
    sys.exit(code)

with open(os.path.join(out, "panel_compare.csv")) as fh:
    rows = list(csv.DictReader(fh))
columns = [c for c in rows[0] if c != "t"]
print(f"{'t':>6}  " + "  ".join(f"{c:>22}" for c in columns))
for row in rows[:: max(1, len(rows) // 10)] + [rows[-1]]:
    print(f"{row['t']:>6}  " + "  ".join(f"{float(row[c]):22.4f}" for c in columns))
