"""
Synthetic traffic and per-beam demand
=====================================

A 64x64 demand grid over Europe is summed into the ten beams that cover it.
"""

import numpy as np

from satrrm.demand import (
    BeamGeometry,
    aggregate,
    cell_beam_map,
    default_demand_params,
    generate_demands,
    out_of_coverage_mass,
    sample_grid,
)

geom = BeamGeometry.default()
params = default_demand_params(seed=0)
print(params)

grid = sample_grid(params, geom, sample_id=0)
print("grid", grid.values.shape, "total %.3g bps" % grid.values.sum())

# Which beam serves which cell (-1 = nobody).
labels = cell_beam_map(grid.spec, geom)
print("cells per beam:", np.bincount(labels[labels >= 0], minlength=geom.n_beams))

d = aggregate(grid, geom)
print("beam demand [Mbps]:", np.round(d.requested / 1e6, 1))
print("traffic outside every beam: %.3g bps" % out_of_coverage_mass(grid, geom))

# Every sample has its own seed, so any one of them can be rebuilt alone.
again = aggregate(sample_grid(params, geom, 0), geom)
print("sample 0 reproducible:", np.array_equal(again.requested, d.requested))

R = np.array([x.requested for x in generate_demands(params, geom, 2000)]) / 1e6
print("\nbeam   min   median   max   [Mbps, 2000 samples]")
for b in range(geom.n_beams):
    print("%4d %6.0f %7.0f %6.0f" % (b + 1, R[:, b].min(), np.median(R[:, b]), R[:, b].max()))
