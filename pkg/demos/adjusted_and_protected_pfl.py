"""Incurred CVA and bought protection against PFL and its limit.

aPFL subtracts the incurred CVA X from every path's loss before the tail
average, and the limit is shifted down by the same X. paPFL also subtracts the
protection payout, which only helps on paths whose loss exceeds it.
"""

import tempfile

import numpy as np

from pfl.cli import run_scenario
from pfl.scenario_config import load_scenario, shipped_scenarios

with tempfile.TemporaryDirectory() as tmp:
    sc = load_scenario(shipped_scenarios()["usd_irs_uncollat"], [f"output_dir={tmp}"])
    rep = run_scenario(sc)

t = sc.grid.points
pfl = rep.profiles[("PFL", 0.95)].values
apfl = rep.profiles[("aPFL", 0.95)].values
papfl = rep.profiles[("paPFL", 0.95)].values
y = sc.protection_profile().y
print(f"incurred CVA X = {rep.incurred_cva / 1e6:.3f}M, protection payout {y.max() / 1e6:.1f}M to 5y")
print(f"{'t':>6s}{'PFL':>10s}{'aPFL':>10s}{'paPFL':>10s}{'PFL-aPFL':>10s}{'aPFL-paPFL':>12s}")
for year in (0.5, 1, 2, 3, 4, 5, 6, 8):
    i = int(np.argmin(np.abs(t - year)))
    print(f"{t[i]:6.2f}{pfl[i] / 1e6:10.3f}{apfl[i] / 1e6:10.3f}{papfl[i] / 1e6:10.3f}"
          f"{(pfl[i] - apfl[i]) / 1e6:10.3f}{(apfl[i] - papfl[i]) / 1e6:12.3f}")
for b in rep.breaches:
    print(f"{b['metric']:>6s} limit {b['limit'] / 1e6:.1f}M  breached={b['breached']}  "
          f"max utilization {b['max_utilization']:.2f}")
