"""
Adversarial safety campaign and trace replay
============================================

"""

import os
import tempfile

from dpow.sim import SimConfig, replay, run_safety_campaign, write_trace

# one equivocating verifier out of four, 20% message loss, random latency
cfg = SimConfig(byzantine=[(3, "equivocate")], drop_rate=0.2, latency=(0.01, 0.3), runs=100)
report = run_safety_campaign(cfg)
print("runs:", report.runs, "violations:", len(report.violations),
      "heights committed:", report.committed_heights,
      "delayed-vote scenario:", "ok" if report.scenario_ok else "FAILED")

# every run is a pure function of the config, so a trace can be re-executed
with tempfile.TemporaryDirectory() as d:
    path = os.path.join(d, "run7.jsonl")
    write_trace(cfg, 7, path)
    print("replay reproduces run 7:", replay(path).matches)

# the checker itself is tested with a planted conflicting commit
bad = SimConfig(byzantine=[(3, "equivocate")], runs=3, inject_double_commit=True)
print("planted conflict detected:", not run_safety_campaign(bad).ok)
