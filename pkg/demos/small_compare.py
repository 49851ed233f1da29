"""Baseline, Q-learning and rolling MILP on two weeks of synthetic prices."""

from pathlib import Path

from eafsched import bench

cfg = bench.load_config(Path(__file__).parent / "small.json")
report = bench.run_compare(cfg)
for row in report.table:
    print(row)
print("outputs in", report.out)
