import random

import pytest
from hypothesis import given, settings, strategies as st

from dpow.chain import ZERO_HASH
from dpow.events import EventQueue, Network
from dpow.pbft import (EMPTY_HASH, CommitCertificate, ConsensusState, MacSigner, Phase, Proposal,
                       StepOutcome, Timeouts, Verifier, VerifierGroup, Vote, accept_proposal,
                       consensus_step, make_proposal, quorum, sign_proposal, sign_vote,
                       vote_is_authentic)
from dpow.sim import STRATEGIES, check_run, invalidate, mine_block, run_consensus, verifier_names

GROUP = VerifierGroup(("v0", "v1", "v2", "v3"))
SIGNER = MacSigner.for_members(GROUP.members, seed=1)
X = mine_block(1, 0, 1, ZERO_HASH, 16)
Y = mine_block(1, 1, 1, ZERO_HASH, 16)


def test_quorum_values():
    assert quorum(4) == 3
    assert [quorum(m) for m in (1, 2, 3, 7, 10)] == [1, 2, 3, 5, 7]


@given(st.integers(1, 10_000))
def test_quorum_is_smallest_count_above_two_thirds(m):
    q = quorum(m)
    assert 3 * q > 2 * m and 3 * (q - 1) <= 2 * m


def test_primary_rotates_over_height_plus_round():
    assert GROUP.primary_for(1, 0) == "v1"
    assert GROUP.primary_for(1, 1) == "v2"
    assert GROUP.primary_for(2, 3) == "v1"
    assert GROUP.max_faulty == 1


def test_groups_reject_duplicates():
    with pytest.raises(ValueError):
        VerifierGroup(("a", "a"))
    with pytest.raises(ValueError):
        VerifierGroup(())


def test_signatures_bind_content_and_identity():
    v = sign_vote(SIGNER, "v0", Phase.PREVOTE, 1, 0, X.hash)
    assert vote_is_authentic(GROUP, SIGNER, v)
    forged = Vote(v.phase, v.height, v.round, Y.hash, v.voter, v.signature)
    assert not vote_is_authentic(GROUP, SIGNER, forged)
    impostor = Vote(v.phase, v.height, v.round, v.block_hash, "v1", v.signature)
    assert not vote_is_authentic(GROUP, SIGNER, impostor)
    assert not SIGNER.verify("nobody", b"m", b"s")


def test_message_codecs_roundtrip():
    p = sign_proposal(SIGNER, "v1", 1, 0, X)
    assert Proposal.decode(p.encode()) == p
    empty = sign_proposal(SIGNER, "v1", 1, 0, None)
    assert Proposal.decode(empty.encode()) == empty
    v = sign_vote(SIGNER, "v2", Phase.PRECOMMIT, 3, 2, X.hash)
    assert Vote.decode(v.encode()) == v
    cert = CommitCertificate(X, 1, 0, tuple(sign_vote(SIGNER, m, Phase.PRECOMMIT, 1, 0, X.hash)
                                            for m in ("v0", "v1", "v2")))
    assert CommitCertificate.decode(cert.encode()) == cert


def test_certificate_verification():
    pcs = [sign_vote(SIGNER, m, Phase.PRECOMMIT, 1, 0, X.hash) for m in ("v0", "v1", "v2")]
    assert CommitCertificate(X, 1, 0, tuple(pcs)).verify(GROUP, SIGNER)
    assert not CommitCertificate(X, 1, 0, tuple(pcs[:2])).verify(GROUP, SIGNER)
    assert not CommitCertificate(X, 1, 0, tuple(pcs[:2] + pcs[:1])).verify(GROUP, SIGNER)
    assert not CommitCertificate(Y, 1, 0, tuple(pcs)).verify(GROUP, SIGNER)
    assert not CommitCertificate(X, 1, 1, tuple(pcs)).verify(GROUP, SIGNER)


def test_proposal_acceptance_rules():
    st_ = ConsensusState(GROUP)
    assert accept_proposal(st_, sign_proposal(SIGNER, "v1", 1, 0, X), SIGNER) == X
    assert accept_proposal(st_, sign_proposal(SIGNER, "v2", 1, 0, X), SIGNER) is None  # not primary
    assert accept_proposal(st_, sign_proposal(SIGNER, "v1", 1, 1, X), SIGNER) is None  # wrong round
    assert accept_proposal(st_, sign_proposal(SIGNER, "v1", 1, 0, invalidate(X)), SIGNER) is None
    tampered = Proposal(1, 0, Y, "v1", sign_proposal(SIGNER, "v1", 1, 0, X).signature)
    assert accept_proposal(st_, tampered, SIGNER) is None


def test_invalid_blocks_are_rejected_for_every_reason():
    st_ = ConsensusState(GROUP, min_difficulty=32)
    assert not st_.is_valid_block(X)  # below minimum difficulty
    st_ = ConsensusState(GROUP, genesis_hash=b"\x01" * 32)
    assert not st_.is_valid_block(X)  # wrong parent
    assert not ConsensusState(GROUP).is_valid_block(invalidate(X))
    assert ConsensusState(GROUP).is_valid_block(X)


class Scripted:
    """Lockstep environment: the other members vote as scripted per round."""

    def __init__(self, me, prevotes, precommits, proposals=None, candidates=(X,)):
        self.me, self.pv, self.pc = me, prevotes, precommits
        self.proposals = proposals or {}
        self.cands = list(candidates)
        self.own = {Phase.PREVOTE: [], Phase.PRECOMMIT: []}

    def candidates(self, state):
        return self.cands

    def proposal(self, state, own):
        if own is not None:
            return own
        block = self.proposals.get(state.round)
        return sign_proposal(SIGNER, state.primary, state.height, state.round, block)

    def exchange(self, phase, state, own):
        self.own[phase].append(own.block_hash)
        table = self.pv if phase is Phase.PREVOTE else self.pc
        values = table[state.round]
        others = [m for m in GROUP.members if m != self.me]
        return [sign_vote(SIGNER, m, phase, state.height, state.round, h)
                for m, h in zip(others, values) if h is not None]


def test_lockstep_commit_with_quorum():
    st_ = ConsensusState(GROUP)
    env = Scripted("v0", {0: [X.hash] * 3}, {0: [X.hash] * 3}, {0: X})
    res = consensus_step(st_, "v0", SIGNER, env)
    assert res.outcome is StepOutcome.COMMITTED and res.block == X
    assert st_.height == 2 and st_.chain == [X] and st_.locked_block is None
    assert st_.certificates[0].verify(GROUP, SIGNER)


def test_lock_forces_empty_votes_until_commit():
    st_ = ConsensusState(GROUP)
    env = Scripted("v0", {0: [X.hash] * 3, 1: [Y.hash, EMPTY_HASH, EMPTY_HASH], 2: [X.hash] * 3},
                   {0: [EMPTY_HASH] * 3, 1: [EMPTY_HASH] * 3, 2: [X.hash] * 3},
                   {0: X, 1: Y, 2: X}, candidates=(Y, X))
    # round 0: prevote quorum for X locks it, precommits fall short
    assert consensus_step(st_, "v0", SIGNER, env).outcome is StepOutcome.ROUND_ADVANCED
    assert st_.locked_block == X and env.own[Phase.PRECOMMIT][-1] == X.hash
    # round 1: v2 proposes Y; the locked node refuses it in both phases
    assert consensus_step(st_, "v0", SIGNER, env).outcome is StepOutcome.ROUND_ADVANCED
    assert env.own[Phase.PREVOTE][-1] == EMPTY_HASH
    assert env.own[Phase.PRECOMMIT][-1] == EMPTY_HASH
    assert st_.locked_block == X
    # round 2: X again, committed, lock released
    res = consensus_step(st_, "v0", SIGNER, env)
    assert res.outcome is StepOutcome.COMMITTED and res.block == X
    assert st_.locked_block is None


def test_locked_primary_reproposes_its_lock():
    st_ = ConsensusState(GROUP)
    st_.locked_block = X
    st_.known_blocks[X.hash] = X
    p = make_proposal(st_, "v1", SIGNER, [Y])
    assert p.block == X


def test_max_step_aborts():
    st_ = ConsensusState(GROUP, max_step=2)
    env = Scripted("v0", {r: [EMPTY_HASH] * 3 for r in range(3)},
                   {r: [EMPTY_HASH] * 3 for r in range(3)})
    assert consensus_step(st_, "v0", SIGNER, env).outcome is StepOutcome.ROUND_ADVANCED
    assert consensus_step(st_, "v0", SIGNER, env).outcome is StepOutcome.ABORTED
    assert consensus_step(st_, "v0", SIGNER, env).outcome is StepOutcome.ABORTED


def honest_run(seed=0, heights=3, drop=0.0, group=GROUP, byz=None):
    cands = {}

    def source(v, h, tip):
        if (h, tip) not in cands:
            cands[(h, tip)] = [mine_block(seed, j, h, tip, 16) for j in range(2)]
        return cands[(h, tip)]

    return run_consensus(group, seed=seed, latency=(0.01, 0.2), drop_rate=drop,
                         timeouts=Timeouts(), max_step=30, target_height=heights,
                         candidates=source, byzantine=byz)


def test_event_driven_group_commits_same_chain():
    run = honest_run(heights=3)
    chains = {tuple(b.hash for b in v.state.chain) for v in run.verifiers}
    assert len(chains) == 1 and len(next(iter(chains))) == 3
    assert all(v.phase == "done" for v in run.verifiers)
    assert not check_run(run)
    # every height decided in round 0 on a clean network
    assert all(r == 0 for v in run.verifiers for _, r, *_ in v.committed)


def test_invalid_only_candidates_yield_empty_rounds():
    bad = invalidate(X)
    q = EventQueue()
    net = Network(q, random.Random(0), (0.01, 0.05))
    vs = []
    for m in GROUP.members:
        v = Verifier(m, ConsensusState(GROUP, max_step=2), SIGNER, net,
                     lambda v, h, tip: [bad], target_height=1)
        net.register(m, v)
        vs.append(v)
    for v in vs:
        v.start()
    while q:
        net.dispatch(q.pop())
    assert all(v.phase == "aborted" and not v.committed for v in vs)
    assert all(v.saw_empty_quorum for v in vs)


def test_withholding_member_does_not_stop_progress():
    run = honest_run(heights=2, byz={2: "withhold"})
    assert all(v.state.height == 3 for v in run.honest)
    assert not check_run(run)


def test_laggard_catches_up_from_certificates():
    # v3 is cut off for the first 20 seconds, then rejoins
    def hook(src, dst, msg, now):
        if now < 20 and "v3" in (src, dst):
            return 25.0 - now
        return None

    cands = {}

    def source(v, h, tip):
        if (h, tip) not in cands:
            cands[(h, tip)] = [mine_block(3, 0, h, tip, 16)]
        return cands[(h, tip)]

    run = run_consensus(GROUP, seed=3, latency=(0.01, 0.1), drop_rate=0.0, timeouts=Timeouts(),
                        max_step=60, target_height=2, candidates=source, delay_hook=hook)
    assert all(v.state.height == 3 for v in run.verifiers)
    assert not check_run(run)


@settings(max_examples=25)
@given(st.integers(0, 10**6), st.sampled_from(STRATEGIES), st.sampled_from([0.0, 0.1, 0.3]),
       st.integers(0, 3))
def test_one_byzantine_of_four_never_breaks_safety(seed, strategy, drop, who):
    run = honest_run(seed=seed, heights=2, drop=drop, byz={who: strategy})
    assert check_run(run) == []


@settings(max_examples=10)
@given(st.integers(0, 10**6), st.sampled_from(STRATEGIES))
def test_two_byzantine_of_seven_never_break_safety(seed, strategy):
    group = VerifierGroup(verifier_names(7))
    run = honest_run(seed=seed, heights=2, drop=0.1, group=group, byz={5: strategy, 6: "equivocate"})
    assert check_run(run) == []


def test_honest_progress_is_monotone():
    run = honest_run(seed=5, heights=3, drop=0.2)
    for v in run.honest:
        assert v.progress == sorted(v.progress)


class Recorder:
    def __init__(self):
        self.sent, self.t = [], 0.0

    def send(self, sender, receiver, msg):
        self.sent.append((receiver, msg))

    def set_timer(self, owner, delay, key):
        pass

    def now(self):
        return self.t


def test_precommit_quorum_from_an_earlier_round_still_commits():
    net = Recorder()
    v = Verifier("v0", ConsensusState(GROUP), SIGNER, net, lambda v, h, tip: [X],
                 target_height=1)
    v.start()
    v.on_timer((1, 0, "propose"))
    v.on_timer((1, 0, "prevote"))
    v.on_timer((1, 0, "precommit"))
    assert v.state.round == 1 and not v.committed
    for m in ("v1", "v2", "v3"):
        v.receive(m, sign_vote(SIGNER, m, Phase.PRECOMMIT, 1, 0, X.hash))
    assert v.committed == [(1, 0, X.hash)] and v.phase == "done"


def test_equivocator_tells_peers_different_things():
    run = run_consensus(GROUP, seed=2, latency=(0.01, 0.05), drop_rate=0.0, timeouts=Timeouts(),
                        max_step=5, target_height=1, candidates=lambda v, h, tip: [X, Y],
                        byzantine={0: "equivocate"}, trace=True)
    seen = {e["msg"].split()[-1] for e in run.trace
            if e["src"] == "v0" and e["msg"].startswith("prevote")}
    assert {X.hash.hex()[:16], Y.hash.hex()[:16]} <= seen
    assert not check_run(run)
