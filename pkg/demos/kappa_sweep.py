"""Test profit of short Q-learning runs over a few startup smoothing values."""

from pathlib import Path

from eafsched import bench

cfg = bench.load_config(Path(__file__).parent / "small.json", out="out/sweep")
for row in bench.run_kappa_sweep(cfg, [11.0, 13.0, 15.0, 17.0]):
    print(row)
