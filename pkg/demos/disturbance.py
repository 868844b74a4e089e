"""Replay the constrained half turn under random twist kicks.

Each of 1000 samples adds ``0.001 w`` (``w`` standard normal) to the twist
at every step. Open loop replays the optimized inputs; feedback adds the
time-varying gains from the final backward pass. The printout compares the
spread of the terminal error state.

Run with ``python3 demos/disturbance.py``.
"""

import numpy as np

from lieddp.harness import monte_carlo
from lieddp.scenario import fixture_path, load_scenario
from lieddp.solver import solve

scenario = load_scenario(fixture_path("se3_disturbance"))
nominal = solve(scenario.problem(), scenario.solver)
print(f"nominal: {nominal.status}, cost {nominal.final_cost:.4f}")

labels = ["psi_x", "psi_y", "psi_z", "psi_px", "psi_py", "psi_pz",
          "dw_x", "dw_y", "dw_z", "dv_x", "dv_y", "dv_z"]
stats = {}
for mode in ("open_loop", "feedback"):
    stats[mode] = monte_carlo(scenario.model, nominal, scenario.noise, scenario.monte_carlo.samples, mode)

print(f"\n{'component':<10}{'open loop':>14}{'feedback':>14}")
for i, label in enumerate(labels):
    print(f"{label:<10}{stats['open_loop'].variance[-1, i]:>14.3e}{stats['feedback'].variance[-1, i]:>14.3e}")
ratio = stats["feedback"].terminal_trace / stats["open_loop"].terminal_trace
print(f"\nterminal covariance trace: feedback / open loop = {ratio:.2e}")
