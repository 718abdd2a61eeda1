"""Walk through the GSD: how psi and rho shape the five score probabilities."""

import numpy as np

from gsdcheck import GsdParams, gsd_moments, gsd_pmf, sample, variance_bounds

np.set_printoptions(precision=3, suppress=True)

# psi is the mean score, rho controls the spread
for rho in (0.95, 0.81, 0.61, 0.38):
    print(f"psi=2.1 rho={rho:.2f}", gsd_pmf(GsdParams(2.1, rho)))

# variance moves linearly from V_max (rho -> 0) to V_min (rho = 1)
for psi in (1.5, 2.1, 3.0):
    vmin, vmax = variance_bounds(psi)
    print(f"psi={psi}: V_min={vmin:.3f} V_max={vmax:.3f}")
    for rho in (1.0, 0.5, 0.01):
        mean, var = gsd_moments(GsdParams(psi, rho))
        print(f"  rho={rho:<4} mean={mean:.3f} var={var:.3f} "
              f"(rho*V_min + (1-rho)*V_max = {rho * vmin + (1 - rho) * vmax:.3f})")

# rho = 1 puts everything on the two categories around psi
print("psi=3 rho=1", gsd_pmf(GsdParams(3.0, 1.0)))
print("psi=3.4 rho=1", gsd_pmf(GsdParams(3.4, 1.0)))

# a panel of 24 subjects rating one stimulus
counts = sample(GsdParams(3.6, 0.7), 24, seed=1)
print("24 simulated scores per category:", counts)
