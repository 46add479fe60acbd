"""
The verifier group: propose, prevote, precommit, commit
=======================================================

"""

from dpow.pbft import Timeouts, VerifierGroup
from dpow.sim import (SimConfig, delayed_vote_scenario, mine_block, run_consensus,
                      run_experiment_2)

# four verifiers finalise a chain of three blocks over a lossy network
group = VerifierGroup(("v0", "v1", "v2", "v3"))
print("quorum of", group.size, "is", group.quorum)

pool = {}


def candidates(verifier, height, tip):
    if (height, tip) not in pool:
        pool[(height, tip)] = [mine_block(0, j, height, tip, 64) for j in range(2)]
    return pool[(height, tip)]


run = run_consensus(group, seed=0, latency=(0.01, 0.2), drop_rate=0.1, timeouts=Timeouts(),
                    max_step=20, target_height=3, candidates=candidates)
for v in run.verifiers:
    print(v.id, "committed (height, round):", [(h, r) for h, r, _ in v.committed])
print(f"{run.sent} messages sent, {run.dropped} dropped, finished at t={run.end_time:.2f}s")

# a verifier that saw a prevote quorum keeps voting for that block until it
# commits; here A commits early while its votes are delayed, D proposes a
# different block, and the others refuse it
run, x, y = delayed_vote_scenario()
for v in run.verifiers:
    print(v.id, "committed round", v.committed[0][1], "block", x.hash == v.committed[0][2])

# groups with 1, 2 or 3 bad verifiers out of 4, valid (A) and invalid (B) blocks
print(run_experiment_2(SimConfig()).table())
