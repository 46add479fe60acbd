"""Verifier-group consensus: propose, prevote, precommit, commit.

The phase logic lives in small functions over :class:`ConsensusState` so it
can be driven two ways: synchronously through :func:`consensus_step` with a
scripted environment, or message by message through :class:`Verifier`
inside the discrete-event simulator.

Locking: a verifier that sees a prevote quorum for a block locks it,
precommits it, and re-proposes it whenever it is primary. The lock is only
released by committing a block at that height. A locked verifier prevotes
the empty hash for any other block and never precommits a second block.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Sequence, Tuple

from . import wire
from .chain import ZERO_HASH, Block, Hash256
from .puzzle import check_pow, target_from_difficulty

EMPTY_HASH: Hash256 = ZERO_HASH
DEFAULT_MAX_STEP = 20

TAG_PROPOSAL = 0x10
TAG_VOTE = 0x11
TAG_CERTIFICATE = 0x12


def quorum(m: int) -> int:
    """Smallest vote count strictly greater than 2m/3."""
    return 2 * m // 3 + 1


class Phase(enum.Enum):
    PREVOTE = "prevote"
    PRECOMMIT = "precommit"


_PHASE_CODE = {Phase.PREVOTE: 1, Phase.PRECOMMIT: 2}
_CODE_PHASE = {v: k for k, v in _PHASE_CODE.items()}


@dataclass(frozen=True)
class VerifierGroup:
    members: Tuple[str, ...]

    def __post_init__(self):
        if not self.members:
            raise ValueError("verifier group must be non-empty")
        if len(set(self.members)) != len(self.members):
            raise ValueError("duplicate verifier identity")

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def quorum(self) -> int:
        return quorum(len(self.members))

    @property
    def max_faulty(self) -> int:
        return self.size - self.quorum

    def primary_for(self, height: int, round_: int) -> str:
        return self.members[(height + round_) % len(self.members)]

    def index(self, identity: str) -> int:
        return self.members.index(identity)


def primary_for(group: VerifierGroup, height: int, round_: int) -> str:
    return group.primary_for(height, round_)


class MacSigner:
    """Keyed-MAC stand-in for real signatures.

    Every identity has a secret key; ``sign`` is HMAC-SHA256 under it. Good
    enough to make forged or altered messages detectable inside a
    simulation, which is all the protocol needs from it.
    """

    def __init__(self, keys: Dict[str, bytes]):
        self._keys = dict(keys)

    @classmethod
    def for_members(cls, members: Sequence[str], seed: int = 0) -> "MacSigner":
        return cls({m: hashlib.sha256(f"dpow-key/{seed}/{m}".encode()).digest()
                    for m in members})

    def sign(self, identity: str, message: bytes) -> bytes:
        return hmac.new(self._keys[identity], message, hashlib.sha256).digest()

    def verify(self, identity: str, message: bytes, signature: bytes) -> bool:
        key = self._keys.get(identity)
        if key is None:
            return False
        expected = hmac.new(key, message, hashlib.sha256).digest()
        return hmac.compare_digest(expected, signature)


@dataclass(frozen=True)
class Proposal:
    height: int
    round: int
    block: Optional[Block]
    proposer: str
    signature: bytes = b""

    def _fields(self) -> List[bytes]:
        return [wire.u64(self.height), wire.u32(self.round),
                self.block.encode() if self.block is not None else b"",
                self.proposer.encode()]

    def signing_bytes(self) -> bytes:
        return wire.encode_record(TAG_PROPOSAL, self._fields())

    def encode(self) -> bytes:
        return wire.encode_record(TAG_PROPOSAL, self._fields() + [self.signature])

    @classmethod
    def decode(cls, data: bytes) -> "Proposal":
        tag, f = wire.decode_record(data)
        if tag != TAG_PROPOSAL or len(f) != 5:
            raise wire.WireError("not a proposal record")
        block = Block.decode(f[2]) if f[2] else None
        return cls(int.from_bytes(f[0], "big"), int.from_bytes(f[1], "big"), block,
                   f[3].decode(), f[4])


@dataclass(frozen=True)
class Vote:
    phase: Phase
    height: int
    round: int
    block_hash: Hash256
    voter: str
    signature: bytes = b""

    def _fields(self) -> List[bytes]:
        return [bytes([_PHASE_CODE[self.phase]]), wire.u64(self.height),
                wire.u32(self.round), self.block_hash, self.voter.encode()]

    def signing_bytes(self) -> bytes:
        return wire.encode_record(TAG_VOTE, self._fields())

    def encode(self) -> bytes:
        return wire.encode_record(TAG_VOTE, self._fields() + [self.signature])

    @classmethod
    def decode(cls, data: bytes) -> "Vote":
        tag, f = wire.decode_record(data)
        if tag != TAG_VOTE or len(f) != 6:
            raise wire.WireError("not a vote record")
        return cls(_CODE_PHASE[f[0][0]], int.from_bytes(f[1], "big"),
                   int.from_bytes(f[2], "big"), f[3], f[4].decode(), f[5])


def sign_proposal(signer, identity: str, height: int, round_: int,
                  block: Optional[Block]) -> Proposal:
    p = Proposal(height, round_, block, identity)
    return Proposal(height, round_, block, identity, signer.sign(identity, p.signing_bytes()))


def sign_vote(signer, identity: str, phase: Phase, height: int, round_: int,
              block_hash: Hash256) -> Vote:
    v = Vote(phase, height, round_, block_hash, identity)
    return Vote(phase, height, round_, block_hash, identity,
                signer.sign(identity, v.signing_bytes()))


def vote_is_authentic(group: VerifierGroup, signer, vote: Vote) -> bool:
    return (vote.voter in group.members
            and len(vote.block_hash) == 32
            and signer.verify(vote.voter, vote.signing_bytes(), vote.signature))


@dataclass(frozen=True)
class CommitCertificate:
    """A committed block plus the quorum of precommits that finalised it."""

    block: Block
    height: int
    round: int
    precommits: Tuple[Vote, ...]

    def verify(self, group: VerifierGroup, signer) -> bool:
        voters = set()
        for v in self.precommits:
            if (v.phase is not Phase.PRECOMMIT or v.height != self.height
                    or v.round != self.round or v.block_hash != self.block.hash):
                return False
            if not vote_is_authentic(group, signer, v):
                return False
            voters.add(v.voter)
        return len(voters) >= group.quorum

    def encode(self) -> bytes:
        return wire.encode_record(TAG_CERTIFICATE, [
            self.block.encode(), wire.u64(self.height), wire.u32(self.round),
            wire.encode_list(v.encode() for v in self.precommits),
        ])

    @classmethod
    def decode(cls, data: bytes) -> "CommitCertificate":
        tag, f = wire.decode_record(data)
        if tag != TAG_CERTIFICATE or len(f) != 4:
            raise wire.WireError("not a certificate record")
        return cls(Block.decode(f[0]), int.from_bytes(f[1], "big"),
                   int.from_bytes(f[2], "big"),
                   tuple(Vote.decode(v) for v in wire.decode_list(f[3])))


@dataclass
class ConsensusState:
    group: VerifierGroup
    genesis_hash: Hash256 = ZERO_HASH
    max_step: int = DEFAULT_MAX_STEP
    min_difficulty: int = 1
    height: int = 1
    round: int = 0
    locked_block: Optional[Block] = None
    chain: List[Block] = field(default_factory=list)
    certificates: List[CommitCertificate] = field(default_factory=list)
    known_blocks: Dict[Hash256, Block] = field(default_factory=dict)
    aborted: bool = False

    @property
    def tip_hash(self) -> Hash256:
        return self.chain[-1].hash if self.chain else self.genesis_hash

    @property
    def primary(self) -> str:
        return self.group.primary_for(self.height, self.round)

    def is_valid_block(self, block: Optional[Block]) -> bool:
        if block is None:
            return False
        h = block.header
        return (h.prev_hash == self.tip_hash
                and h.difficulty >= self.min_difficulty
                and block.root_matches()
                and check_pow(h, target_from_difficulty(h.difficulty)))


class StepOutcome(enum.Enum):
    COMMITTED = "committed"
    ROUND_ADVANCED = "round_advanced"
    ABORTED = "aborted"


@dataclass(frozen=True)
class StepResult:
    outcome: StepOutcome
    block: Optional[Block] = None


def make_proposal(state: ConsensusState, identity: str, signer,
                  candidates: Sequence[Block]) -> Optional[Proposal]:
    """Primary side: the locked block if any, else the first valid candidate."""
    block = state.locked_block
    if block is None:
        block = next((b for b in candidates if state.is_valid_block(b)), None)
    if block is None:
        return None
    return sign_proposal(signer, identity, state.height, state.round, block)


def accept_proposal(state: ConsensusState, proposal: Optional[Proposal],
                    signer) -> Optional[Block]:
    """Receiver side: the proposed block if everything checks out, else None."""
    if proposal is None or proposal.block is None:
        return None
    if (proposal.height, proposal.round) != (state.height, state.round):
        return None
    if proposal.proposer != state.primary:
        return None
    if not signer.verify(proposal.proposer, proposal.signing_bytes(), proposal.signature):
        return None
    if not state.is_valid_block(proposal.block):
        return None
    state.known_blocks[proposal.block.hash] = proposal.block
    return proposal.block


def propose(state: ConsensusState, identity: str, signer, *,
            candidates: Sequence[Block] = (),
            received: Optional[Proposal] = None) -> Optional[Proposal]:
    """One verifier's view of the propose stage. None means an empty proposal."""
    if identity == state.primary:
        received = make_proposal(state, identity, signer, candidates)
    return received if accept_proposal(state, received, signer) is not None else None


def prevote_choice(state: ConsensusState, block: Optional[Block]) -> Hash256:
    if block is None:
        return EMPTY_HASH
    if state.locked_block is not None and state.locked_block.hash != block.hash:
        return EMPTY_HASH
    return block.hash


def valid_votes(state: ConsensusState, votes, phase: Phase, signer) -> Dict[str, Vote]:
    """First authentic vote per voter for the current height, round and phase."""
    out: Dict[str, Vote] = {}
    for v in votes:
        if v.phase is not phase or v.height != state.height or v.round != state.round:
            continue
        if v.voter in out:
            continue
        if not vote_is_authentic(state.group, signer, v):
            continue
        out[v.voter] = v
    return out


def count_votes(votes: Dict[str, Vote]) -> Dict[Hash256, int]:
    counts: Dict[Hash256, int] = {}
    for v in votes.values():
        counts[v.block_hash] = counts.get(v.block_hash, 0) + 1
    return counts


def quorum_value(state: ConsensusState, votes: Dict[str, Vote]) -> Optional[Hash256]:
    q = state.group.quorum
    for h, n in count_votes(votes).items():
        if n >= q:
            return h
    return None


def tally(state: ConsensusState, votes, phase: Phase, signer) -> Hash256:
    r = quorum_value(state, valid_votes(state, votes, phase, signer))
    return EMPTY_HASH if r is None else r


def prevote(state: ConsensusState, inbox, signer) -> Hash256:
    """Hash holding a prevote quorum, else the empty hash."""
    return tally(state, inbox, Phase.PREVOTE, signer)


def precommit_choice(state: ConsensusState, prevote_result: Hash256) -> Hash256:
    """Own precommit after the prevote count; locks the block on a quorum."""
    if prevote_result == EMPTY_HASH:
        return EMPTY_HASH
    block = state.known_blocks.get(prevote_result)
    if block is None:
        return EMPTY_HASH
    if state.locked_block is not None and state.locked_block.hash != prevote_result:
        return EMPTY_HASH
    state.locked_block = block
    return block.hash


def precommit(state: ConsensusState, inbox, signer) -> Hash256:
    return tally(state, inbox, Phase.PRECOMMIT, signer)


def commit(state: ConsensusState, block: Block, round_: int,
           precommits: Sequence[Vote]) -> CommitCertificate:
    cert = CommitCertificate(block, state.height, round_, tuple(precommits))
    state.chain.append(block)
    state.certificates.append(cert)
    state.height += 1
    state.round = 0
    state.locked_block = None
    state.known_blocks.clear()
    return cert


def advance_round(state: ConsensusState) -> StepResult:
    state.round += 1
    if state.round >= state.max_step:
        state.aborted = True
        return StepResult(StepOutcome.ABORTED)
    return StepResult(StepOutcome.ROUND_ADVANCED)


def quorum_precommits(state: ConsensusState, votes, block_hash: Hash256,
                      signer) -> List[Vote]:
    return [v for v in valid_votes(state, votes, Phase.PRECOMMIT, signer).values()
            if v.block_hash == block_hash]


class Environment(Protocol):
    """What one synchronous round needs from the outside world."""

    def candidates(self, state: ConsensusState) -> Sequence[Block]: ...

    def proposal(self, state: ConsensusState,
                 own: Optional[Proposal]) -> Optional[Proposal]: ...

    def exchange(self, phase: Phase, state: ConsensusState, own: Vote) -> Sequence[Vote]: ...


def consensus_step(state: ConsensusState, identity: str, signer,
                   env: Environment) -> StepResult:
    """Run one full round for ``identity`` against ``env``."""
    if state.aborted:
        return StepResult(StepOutcome.ABORTED)
    own = None
    if identity == state.primary:
        own = make_proposal(state, identity, signer, env.candidates(state))
    block = accept_proposal(state, env.proposal(state, own), signer)

    pv = sign_vote(signer, identity, Phase.PREVOTE, state.height, state.round,
                   prevote_choice(state, block))
    result = prevote(state, [pv, *env.exchange(Phase.PREVOTE, state, pv)], signer)

    pc = sign_vote(signer, identity, Phase.PRECOMMIT, state.height, state.round,
                   precommit_choice(state, result))
    pcs = [pc, *env.exchange(Phase.PRECOMMIT, state, pc)]
    decided = precommit(state, pcs, signer)

    if decided != EMPTY_HASH:
        blk = state.known_blocks.get(decided)
        if blk is not None and state.is_valid_block(blk):
            commit(state, blk, state.round, quorum_precommits(state, pcs, decided, signer))
            return StepResult(StepOutcome.COMMITTED, blk)
    return advance_round(state)


@dataclass(frozen=True)
class Timeouts:
    propose: float = 1.0
    prevote: float = 1.0
    precommit: float = 1.0


class Transport(Protocol):
    def send(self, sender: str, receiver: str, msg) -> None: ...

    def set_timer(self, owner: str, delay: float, key) -> None: ...

    def now(self) -> float: ...


CandidateSource = Callable[["Verifier", int, Hash256], Sequence[Block]]


class Verifier:
    """Event-driven verifier.

    Feed it with :meth:`receive` and :meth:`on_timer`; it talks back through
    the transport. Subclasses override the ``choose_*`` hooks to misbehave.
    """

    honest = True

    def __init__(self, identity: str, state: ConsensusState, signer, transport: Transport,
                 candidates: CandidateSource, timeouts: Timeouts = Timeouts(),
                 target_height: Optional[int] = None):
        self.id = identity
        self.state = state
        self.signer = signer
        self.net = transport
        self.candidates = candidates
        self.timeouts = timeouts
        self.target_height = target_height
        self.phase = "idle"
        self._proposals: Dict[Tuple[int, int], Proposal] = {}
        self._votes: Dict[Tuple[int, int, Phase], Dict[str, Vote]] = {}
        self._future_senders: Dict[Tuple[int, int], set] = {}
        self._pending_certs: Dict[int, CommitCertificate] = {}
        self._helped: set = set()
        self._block: Optional[Block] = None
        # audit trail
        self.signed_precommits: Dict[int, List[Hash256]] = {}
        self.signed_prevotes: Dict[Tuple[int, int], Hash256] = {}
        self.committed: List[Tuple[int, int, Hash256]] = []
        self.saw_empty_quorum = False
        self.progress: List[Tuple[int, int]] = []

    @property
    def group(self) -> VerifierGroup:
        return self.state.group

    @property
    def done(self) -> bool:
        return self.phase in ("done", "aborted")

    # -- hooks ---------------------------------------------------------------

    def choose_proposal(self, recipient: str) -> Optional[Proposal]:
        return self._own_proposal

    def choose_prevote(self, block: Optional[Block], recipient: str) -> Hash256:
        return prevote_choice(self.state, block)

    def choose_precommit(self, prevote_result: Hash256, recipient: str) -> Hash256:
        return self._own_precommit

    def accepts_commit(self, block: Block) -> bool:
        return self.state.is_valid_block(block)

    def remember_block(self, block: Block) -> None:
        if self.state.is_valid_block(block):
            self.state.known_blocks[block.hash] = block

    # -- lifecycle -----------------------------------------------------------

    def start(self) -> None:
        self._enter_round()

    def _current(self) -> Tuple[int, int]:
        return self.state.height, self.state.round

    def _broadcast(self, make) -> None:
        for m in self.group.members:
            if m == self.id:
                continue
            msg = make(m)
            if msg is not None:
                self.net.send(self.id, m, msg)

    def _signed(self, phase: Phase, value: Optional[Hash256]) -> Optional[Vote]:
        # None means "say nothing" (a withholding node)
        if value is None:
            return None
        h, r = self._current()
        return sign_vote(self.signer, self.id, phase, h, r, value)

    def _enter_round(self) -> None:
        st = self.state
        if self.target_height is not None and st.height > self.target_height:
            self.phase = "done"
            return
        self.progress.append(self._current())
        self.phase = "propose"
        self._block = None
        for b in self.candidates(self, st.height, st.tip_hash):
            self.remember_block(b)
        h, r = self._current()
        self.net.set_timer(self.id, self.timeouts.propose, (h, r, "propose"))
        if self.id == st.primary:
            cands = self.candidates(self, st.height, st.tip_hash)
            self._own_proposal = make_proposal(st, self.id, self.signer, cands)
            self._broadcast(self.choose_proposal)
            self._handle_proposal(self.choose_proposal(self.id))
        else:
            self._own_proposal = None
            pending = self._proposals.pop((h, r), None)
            if pending is not None:
                self._handle_proposal(pending)

    def _handle_proposal(self, proposal: Optional[Proposal]) -> None:
        if self.phase != "propose":
            return
        block = None
        if proposal is not None:
            if proposal.block is not None:
                self.remember_block(proposal.block)
            block = accept_proposal(self.state, proposal, self.signer)
            if block is None and not self.honest:
                block = self._lenient_accept(proposal)
        self._block = block
        self._cast_prevote()

    def _lenient_accept(self, proposal: Proposal) -> Optional[Block]:
        st = self.state
        if (proposal.height, proposal.round) == self._current() and proposal.proposer == st.primary:
            if proposal.block is not None:
                st.known_blocks[proposal.block.hash] = proposal.block
            return proposal.block
        return None

    def _cast_prevote(self) -> None:
        h, r = self._current()
        self.phase = "prevote"
        own = self.choose_prevote(self._block, self.id)
        if own is not None:
            self.signed_prevotes[(h, r)] = own
            self._store_vote(sign_vote(self.signer, self.id, Phase.PREVOTE, h, r, own))
        self._broadcast(lambda m: self._signed(Phase.PREVOTE, self.choose_prevote(self._block, m)))
        self.net.set_timer(self.id, self.timeouts.prevote, (h, r, "prevote"))
        self._check_prevotes(timed_out=False)

    def _check_prevotes(self, timed_out: bool) -> None:
        if self.phase != "prevote":
            return
        h, r = self._current()
        votes = self._votes.get((h, r, Phase.PREVOTE), {})
        q = quorum_value(self.state, votes)
        if q is None and not timed_out and len(votes) < self.group.size:
            return
        result = EMPTY_HASH if q is None else q
        self._conclude_prevotes(result)

    def _conclude_prevotes(self, result: Hash256) -> None:
        h, r = self._current()
        self.phase = "precommit"
        self._own_precommit = precommit_choice(self.state, result) if self.honest else result
        own = self.choose_precommit(result, self.id)
        if own is not None:
            if own != EMPTY_HASH:
                self.signed_precommits.setdefault(h, []).append(own)
            self._store_vote(sign_vote(self.signer, self.id, Phase.PRECOMMIT, h, r, own))
        self._broadcast(lambda m: self._signed(Phase.PRECOMMIT, self.choose_precommit(result, m)))
        self.net.set_timer(self.id, self.timeouts.precommit, (h, r, "precommit"))
        self._check_precommits(timed_out=False)

    def _check_precommits(self, timed_out: bool) -> None:
        if self.phase != "precommit":
            return
        h, r = self._current()
        votes = self._votes.get((h, r, Phase.PRECOMMIT), {})
        q = quorum_value(self.state, votes)
        if q is not None and q != EMPTY_HASH:
            block = self.state.known_blocks.get(q)
            if block is not None and self.accepts_commit(block):
                pcs = [v for v in votes.values() if v.block_hash == q]
                self._do_commit(block, r, pcs)
                return
        if q is None and not timed_out and len(votes) < self.group.size:
            return
        if q == EMPTY_HASH:
            self.saw_empty_quorum = True
        self._next_round()

    def _do_commit(self, block: Block, round_: int, precommits: Sequence[Vote]) -> None:
        h = self.state.height
        cert = commit(self.state, block, round_, precommits)
        self.committed.append((h, round_, block.hash))
        self._broadcast(lambda m: cert)
        self._drop_below(self.state.height)
        self._enter_round()
        nxt = self._pending_certs.pop(self.state.height, None)
        if nxt is not None:
            self._adopt_certificate(nxt)

    def _next_round(self, to_round: Optional[int] = None) -> None:
        st = self.state
        target = st.round + 1 if to_round is None else to_round
        st.round = target - 1
        res = advance_round(st)
        if res.outcome is StepOutcome.ABORTED:
            self.phase = "aborted"
            return
        self._enter_round()

    def _drop_below(self, height: int) -> None:
        for d in (self._proposals, self._votes, self._future_senders):
            for k in [k for k in d if k[0] < height]:
                del d[k]

    def _store_vote(self, v: Vote) -> None:
        box = self._votes.setdefault((v.height, v.round, v.phase), {})
        box.setdefault(v.voter, v)

    # -- inputs --------------------------------------------------------------

    def on_timer(self, key) -> None:
        if self.done:
            return
        h, r, what = key
        if (h, r) != self._current():
            return
        if what == "propose" and self.phase == "propose":
            self._handle_proposal(None)
        elif what == "prevote":
            self._check_prevotes(timed_out=True)
        elif what == "precommit":
            self._check_precommits(timed_out=True)

    def receive(self, sender: str, msg) -> None:
        if isinstance(msg, CommitCertificate):
            self._receive_certificate(msg)
            return
        if self.phase == "aborted":
            return
        st = self.state
        if isinstance(msg, Proposal):
            key = (msg.height, msg.round)
            if msg.proposer != sender:
                return
        elif isinstance(msg, Vote):
            key = (msg.height, msg.round)
            if msg.voter != sender or not vote_is_authentic(st.group, self.signer, msg):
                return
        else:
            return
        if key[0] < st.height:
            self._help_laggard(sender, key)
            return
        if self.phase == "done":
            return
        if key < self._current():
            if isinstance(msg, Vote) and msg.phase is Phase.PRECOMMIT:
                self._late_precommit(msg)
            return
        if key > self._current():
            if isinstance(msg, Proposal):
                self._proposals.setdefault(key, msg)
            else:
                self._store_vote(msg)
            if key[0] == st.height:
                self._maybe_skip(sender, key)
            return
        if isinstance(msg, Proposal):
            if self.phase == "propose":
                self._handle_proposal(msg)
            return
        self._store_vote(msg)
        if msg.phase is Phase.PREVOTE:
            self._check_prevotes(timed_out=False)
        else:
            self._check_precommits(timed_out=False)

    def _late_precommit(self, v: Vote) -> None:
        # a quorum that completes after we moved on still decides the height
        self._store_vote(v)
        votes = self._votes.get((v.height, v.round, Phase.PRECOMMIT), {})
        q = quorum_value(self.state, votes)
        if q is None or q == EMPTY_HASH:
            return
        block = self.state.known_blocks.get(q)
        if block is not None and self.accepts_commit(block):
            self._do_commit(block, v.round, [x for x in votes.values() if x.block_hash == q])

    def _maybe_skip(self, sender: str, key: Tuple[int, int]) -> None:
        # f+1 distinct senders already in a later round: at least one is honest
        senders = self._future_senders.setdefault(key, set())
        senders.add(sender)
        if len(senders) > self.group.max_faulty:
            self._next_round(to_round=key[1])

    def _help_laggard(self, sender: str, key: Tuple[int, int]) -> None:
        h = key[0]
        if (sender, key) in self._helped or h - 1 >= len(self.state.certificates):
            return
        self._helped.add((sender, key))
        self.net.send(self.id, sender, self.state.certificates[h - 1])

    def _receive_certificate(self, cert: CommitCertificate) -> None:
        st = self.state
        if self.done or cert.height < st.height:
            return
        if not cert.verify(st.group, self.signer):
            return
        if cert.height > st.height:
            self._pending_certs.setdefault(cert.height, cert)
            return
        self._adopt_certificate(cert)

    def _adopt_certificate(self, cert: CommitCertificate) -> None:
        if self.done or cert.height != self.state.height:
            return
        if not self.accepts_commit(cert.block):
            return
        self._do_commit(cert.block, cert.round, cert.precommits)
