"""Split a bank-wide loss appetite into counterparty PFL limits and check one."""

import tempfile

from pfl import allocate_appetite, check_paired
from pfl.cli import run_scenario
from pfl.scenario_config import load_scenario, shipped_scenarios

appetite = 50e6
book = [("CPTY_A", 3.0), ("CPTY_B", 1.5), ("CPTY_C", 0.5)]
specs = allocate_appetite(appetite, book, metric="PFL", q=0.95)
for s in specs:
    print(f"{s.counterparty}: PFL(95%) limit {s.limit / 1e6:.1f}M")

with tempfile.TemporaryDirectory() as tmp:
    sc = load_scenario(shipped_scenarios()["usd_irs_uncollat"], [f"output_dir={tmp}"])
    rep = run_scenario(sc)

pfl = rep.profiles[("PFL", 0.95)]
for s in specs:
    r = check_paired(pfl, s)
    status = f"breach from {r.first_breach:.2f}y" if r.breached else "within limit"
    print(f"{s.counterparty} with the 10Y payer swap: {status}, peak utilization {r.max_utilization:.0%}")
