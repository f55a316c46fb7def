"""
A full small experiment
=======================

Generate a drifting maze-like field, scan it with overlapping three-spin
windows, and track the reconstruction error frame by frame.  The same run is
available from the command line as ``nvqhl run --config configs/desk.cfg``.
Runtime is about a minute.
"""

from nvqhl.config import desk_config
from nvqhl.pipeline import make_truth, run_experiment

cfg = desk_config(**{"grid.height": 12, "grid.width": 12, "run.frames": 3})
truth = make_truth(cfg)
print(f"field levels {truth.B_base * 1e6:.0f} / {(truth.B_base + truth.B_amp) * 1e6:.0f} uT, "
      f"J = {truth.J_true:.0f} Hz")

result = run_experiment(cfg, truth, progress=print)
print(f"{result.window_count} windows per frame")
for s in result.summaries:
    print(f"frame {s.frame}: RMSE {s.rmse_T * 1e6:.3f} uT, Dice {s.dice:.3f}, "
          f"J {s.J_mean_Hz:.0f} +- {s.J_std_Hz:.0f} Hz")
