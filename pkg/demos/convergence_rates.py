"""Self-refinement and analytic-oracle convergence studies.

Prints the error table of the half-line sweep against its closed form
(first order observed on this piecewise-smooth problem) and of the
rotating cap against a finer run of itself, then writes gnuplot-ready
`h error` data files.
"""

import math

from manisweep import run_rate_study
from manisweep.scenario import bundled_scenario

halfline = bundled_scenario("halfline")
study = run_rate_study(halfline, [2.0**-k for k in range(4, 11)], reference="analytic")
print("half-line sweep vs analytic solution")
print(study.table())
print()

# the paper-style sqrt(h) envelope holds with a calibrated constant
K = 0.1
print("errors against the sqrt envelope K sqrt(h), K = 0.1:")
for h, e in zip(study.steps, study.errors):
    print(f"  h = {h:9.3e}: error {e:9.3e} <= {K * math.sqrt(h):9.3e}")

with open("halfline_rates.dat", "w") as fh:
    fh.write(study.gnuplot_data())
print("wrote halfline_rates.dat\n")

cap = bundled_scenario("sphere_rotating_cap")
cap_study = run_rate_study(cap, [0.04, 0.02, 0.01, 0.005], reference="finest")
print("rotating cap vs finest-step self-reference")
print(cap_study.table())
with open("cap_rates.dat", "w") as fh:
    fh.write(cap_study.gnuplot_data())
print("wrote cap_rates.dat")
