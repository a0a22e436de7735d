"""
Calibrating phosphene intensities
=================================

The Receiver's phosphene threshold is found with a PEST staircase, then a
clearly visible and a clearly invisible intensity are found by stepping
5% at a time until 10 responses in a row agree.
"""

import numpy as np

from brainnet_sim.agents import PhospheneModel, derive_stim_levels, pest_calibrate

model = PhospheneModel(true_threshold=0.6, psychometric_slope=20.0, lapse_rate=0.0)
rng = np.random.default_rng(1)
res = pest_calibrate(model, rng, history=True)
print(f"PEST finished after {len(res.levels)} pulses at {res.estimate:.3f}")
for level, seen in list(zip(res.levels, res.responses))[:12]:
    print(f"  {level:.3f} {'seen' if seen else '-'}")

# %%
levels = derive_stim_levels(res.estimate, model, rng)
print(f"no = {levels.no_intensity:.2f}  threshold = {levels.threshold:.3f}  yes = {levels.yes_intensity:.2f}")
print(f"P(phosphene): no {model.probability(levels.no_intensity):.3f}, yes {model.probability(levels.yes_intensity):.3f}")

# %%
# Steeper psychometric functions give tighter estimates.

for slope in (5.0, 20.0, 80.0, float("inf")):
    m = PhospheneModel(0.6, slope, 0.0)
    err = [abs(pest_calibrate(m, np.random.default_rng(s)) - 0.6) for s in range(200)]
    print(f"slope {slope:>5}: mean |error| {np.mean(err):.4f}, within 0.05 {np.mean(np.array(err) <= 0.05):.2f}")
