"""PFE and PFL profiles for a 10Y at-the-money payer swap, three collateral setups."""

import tempfile

import numpy as np

from pfl.cli import run_scenario
from pfl.scenario_config import load_scenario, shipped_scenarios

with tempfile.TemporaryDirectory() as tmp:
    for name in ("usd_irs_uncollat", "usd_irs_collat", "usd_irs_im_netting"):
        sc = load_scenario(shipped_scenarios()[name], [f"output_dir={tmp}/{name}"])
        rep = run_scenario(sc)
        pfe = rep.profiles[("PFE", 0.95)].values
        pfl = rep.profiles[("PFL", 0.95)].values
        ratio = rep.ratios[0.95]
        t = sc.grid.points
        print(f"{name}: {sc.n_paths} paths, {len(t)} dates")
        for year in (1, 2, 5, 8):
            i = int(np.argmin(np.abs(t - year)))
            print(f"  t={t[i]:5.2f}  PFE {pfe[i] / 1e6:7.3f}M  PFL {pfl[i] / 1e6:7.3f}M  (PFL-PFE)/PFE {ratio[i]: .3f}")
        print(f"  peak PFE {pfe.max() / 1e6:.3f}M at {t[pfe.argmax()]:.2f}y, peak PFL {pfl.max() / 1e6:.3f}M\n")
