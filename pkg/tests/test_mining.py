import math
import threading

import pytest
from hypothesis import given, strategies as st

from dpow.chain import ZERO_HASH, CoinbaseTx, Transaction, apply_branch, merkle_root, tx_leaves
from dpow.mining import (EXTRA_LEN, MINER_ID_LEN, MinerStats, ShardAssignment, ShardingServer,
                         Verdict, WorkResult, collision_probability, extra_for, mine_shard,
                         miner_id_from_name)
from dpow.puzzle import check_pow, target_from_difficulty

TXS = [Transaction(b"pay alice"), Transaction(b"pay bob"), Transaction(b"pay carol")]
ids = st.binary(min_size=MINER_ID_LEN, max_size=MINER_ID_LEN)


def server(difficulty=64, **kw):
    return ShardingServer(b"\x42" * 32, difficulty, 1000, b"pool", TXS, **kw)


def test_map_shards_assigns_one_shard_per_miner_and_bumps_epoch():
    s = server()
    miners = [miner_id_from_name(n) for n in ("a", "b", "c")]
    shards = s.map_shards(miners)
    assert [a.miner_id for a in shards] == miners
    assert {a.epoch for a in shards} == {1}
    assert s.remap()[0].epoch == 2


@pytest.mark.parametrize("miners", [[], [b"short"], [b"\x01" * 20, b"\x01" * 20]])
def test_map_shards_rejects_bad_miner_lists(miners):
    with pytest.raises(ValueError):
        server().map_shards(miners)


def test_branch_from_server_rebuilds_full_block_root():
    s = server()
    a = s.map_shards([miner_id_from_name("m")])[0]
    cb = CoinbaseTx(a.miner_id, extra_for(5), a.coinbase_receiver)
    assert apply_branch(cb.id, a.coinbase_branch) == merkle_root(tx_leaves(cb, TXS))


def test_mined_block_is_accepted_and_complete():
    s = server(difficulty=64)
    a = s.map_shards([miner_id_from_name("m")])[0]
    stats = MinerStats()
    w = mine_shard(a, stats=stats)
    assert stats.hashes_tried >= 1 and stats.solutions_found == 1
    assert s.verify_submission(w) is Verdict.ACCEPTED
    blk = s.build_block(w)
    assert blk.root_matches()
    assert check_pow(blk.header, target_from_difficulty(64))


def test_rejections():
    s = server(difficulty=64)
    a = s.map_shards([miner_id_from_name("m")])[0]
    w = mine_shard(a)
    forged = WorkResult(w.assignment_epoch, CoinbaseTx(w.coinbase.miner_id, w.coinbase.extra,
                                                       b"thief"), w.nonce, w.claimed_root)
    assert s.verify_submission(forged) is Verdict.INVALID
    stranger = CoinbaseTx(miner_id_from_name("x"), w.coinbase.extra, b"pool")
    assert s.verify_submission(WorkResult(1, stranger, w.nonce, w.claimed_root)) is Verdict.INVALID
    assert s.verify_submission(WorkResult(1, w.coinbase, w.nonce, ZERO_HASH)) is Verdict.INVALID
    assert s.verify_submission(WorkResult(2, w.coinbase, w.nonce, w.claimed_root)) is Verdict.INVALID
    with pytest.raises(ValueError):
        s.build_block(forged)
    s.remap()
    assert s.verify_submission(w) is Verdict.STALE


def test_wrong_nonce_fails_pow():
    s = server(difficulty=2**20)
    a = s.map_shards([miner_id_from_name("m")])[0]
    w = WorkResult(1, CoinbaseTx(a.miner_id, extra_for(0), b"pool"), 0,
                   apply_branch(CoinbaseTx(a.miner_id, extra_for(0), b"pool").id,
                                a.coinbase_branch))
    # nonce 0 is overwhelmingly unlikely to meet a 2^-20 target
    assert s.verify_submission(w) is Verdict.INVALID


def test_difficulty_one_takes_first_extra_and_nonce_zero():
    s = server(difficulty=1)
    w = mine_shard(s.map_shards([miner_id_from_name("m")])[0])
    assert w.nonce == 0 and w.coinbase.extra == extra_for(0)
    assert s.verify_submission(w) is Verdict.ACCEPTED


def test_perturbed_nonce_of_accepted_result_is_invalid():
    s = server(difficulty=2**16)
    w = mine_shard(s.map_shards([miner_id_from_name("m")])[0])
    assert s.verify_submission(w) is Verdict.ACCEPTED
    bumped = WorkResult(w.assignment_epoch, w.coinbase, w.nonce + 1, w.claimed_root)
    assert s.verify_submission(bumped) is Verdict.INVALID


def test_mean_hashes_per_solution_matches_difficulty():
    # each hash succeeds with ~1/d, so hashes per find is Geometric with mean d
    d, runs = 64, 200
    counts = []
    for i in range(runs):
        s = ShardingServer(i.to_bytes(32, "big"), d, 1000, b"pool", TXS)
        stats = MinerStats()
        mine_shard(s.map_shards([miner_id_from_name("m")])[0], stats=stats)
        counts.append(stats.hashes_tried)
    sigma = math.sqrt(d * (d - 1) / runs)
    assert abs(sum(counts) / runs - d) < 3 * sigma


def test_extras_roll_over_when_nonce_space_is_exhausted():
    s = server(difficulty=2**12)
    a = s.map_shards([miner_id_from_name("m")])[0]
    w = mine_shard(a, nonce_limit=16)
    assert int.from_bytes(w.coinbase.extra, "big") > 0
    assert s.verify_submission(w) is Verdict.ACCEPTED
    assert mine_shard(a, nonce_limit=1, max_extras=1) is None


def test_stop_signal():
    stop = threading.Event()
    stop.set()
    a = server(difficulty=2**40).map_shards([miner_id_from_name("m")])[0]
    assert mine_shard(a, stop) is None


def test_codecs_roundtrip():
    s = server()
    a = s.map_shards([miner_id_from_name("m")])[0]
    assert ShardAssignment.decode(a.encode()) == a
    w = mine_shard(a)
    assert WorkResult.decode(w.encode()) == w


@given(ids, ids, st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1))
def test_distinct_miners_never_share_a_coinbase(m1, m2, c1, c2):
    if m1 == m2:
        return
    a = CoinbaseTx(m1, extra_for(c1), b"pool").serialize()
    b = CoinbaseTx(m2, extra_for(c2), b"pool").serialize()
    assert a != b


def test_collision_table_values():
    # probabilities as tabulated for m = 2^16 ... 2^128
    table = {16: 2.0**-225, 32: 2.0**-193, 64: 2.0**-129, 96: 2.0**-65, 127: 0.125, 128: 0.5}
    for k, expected in table.items():
        assert collision_probability(2**k) == pytest.approx(expected, rel=0.05)


def test_collision_exponential_form():
    assert collision_probability(2**128, "exp") == pytest.approx(-math.expm1(-0.5), rel=1e-9)
    assert collision_probability(2**16, "exp") == pytest.approx(2.0**-225, rel=1e-3)
    assert collision_probability(1) == 0.0
    assert collision_probability(2**200) == 1.0
    with pytest.raises(ValueError):
        collision_probability(-1)
    with pytest.raises(ValueError):
        collision_probability(10, "bogus")


@given(st.integers(2, 2**140))
def test_collision_forms_ordered(m):
    assert collision_probability(m, "exp") <= collision_probability(m) + 1e-15


def test_extra_is_fixed_width():
    assert len(extra_for(0)) == EXTRA_LEN and len(extra_for(2**64 - 1)) == EXTRA_LEN
