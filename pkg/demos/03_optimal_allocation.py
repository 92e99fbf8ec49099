"""
Optimal power and bandwidth per beam
====================================

The exact solver picks one catalog option per beam under the total power and
per-color bandwidth caps. A brute-force search checks it on small cases.
"""

import time

import numpy as np

from satrrm.demand import BeamDemand, default_demand_params, generate_demands
from satrrm.optimizer import (
    SystemScenario,
    check_feasible,
    label_dataset,
    nearest_config,
    objective,
    oracle_check,
    solve_exact,
)

s = SystemScenario.default()
print("beams", s.n_beams, "colors", s.color_of_beam, "power cap", s.p_max_total, "W")

d = generate_demands(default_demand_params(0), s.geometry, 1)[0]
t = time.perf_counter()
a = solve_exact(d, s)
print("\nsolved in %.1f ms" % ((time.perf_counter() - t) * 1e3))
print("options   ", a.option_index)
print("demand    ", np.round(d.requested / 1e6))
print("offered   ", np.round(a.offered / 1e6))
rep = check_feasible(a, d, s)
print("power used %.1f W of %.0f, objective %.4f" % (a.power.sum(), s.p_max_total, objective(a, d, s)))
print("per-color bandwidth slack [MHz]:", rep.color_slack / 1e6)

# A flat 300 Mbps everywhere is just above option 1, so option 2 or better
# must be chosen on every beam.
flat = solve_exact(BeamDemand(np.full(10, 300e6)), s)
print("\nflat 300 Mbps ->", flat.option_index)

# Map an arbitrary capacity wish list onto the closest admissible assignment.
wish = np.linspace(250e6, 1000e6, 10)
print("nearest to a ramp:", nearest_config(wish, None, s).option_index)

labels = label_dataset(generate_demands(default_demand_params(1), s.geometry, 300), s)
print("\n300 samples ->", len(labels.class_table), "distinct optimal assignments,", len(labels.infeasible), "infeasible")

check = oracle_check(100, seed=1)
print("exact vs brute force on 100 random small systems:", "agree" if check.passed else check.mismatches[:3])
