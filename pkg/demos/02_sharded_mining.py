"""
Sharded mining: one server, many miners, no overlap
===================================================

"""

from dpow.chain import Transaction
from dpow.mining import MinerStats, ShardingServer, Verdict, mine_shard, miner_id_from_name
from dpow.sim import SimConfig, run_experiment_1

# the sharding server builds the block template and gives each miner a
# unique coinbase prefix, so their search spaces are disjoint
server = ShardingServer(prev_hash=b"\x00" * 32, difficulty=2000, timestamp=1_600_000_000,
                        receiver=b"pool-address", txs=[Transaction(b"tx-1"), Transaction(b"tx-2")])
miners = [miner_id_from_name(f"miner-{i}") for i in range(3)]
shards = server.map_shards(miners)

# every miner searches its own shard; the first to finish reports back
for shard in shards:
    stats = MinerStats()
    work = mine_shard(shard, stats=stats)
    print(shard.miner_id.hex()[:8], "found nonce", work.nonce, "after", stats.hashes_tried,
          "hashes:", server.verify_submission(work).value)

block = server.build_block(work)
print("block root matches:", block.root_matches())

# a remap (for instance after a timeout) makes old work stale
server.remap()
print("old submission now:", server.verify_submission(work).value)
assert server.verify_submission(work) is Verdict.STALE

# solo vs sharded in virtual time; hashing costs n / rate seconds
res = run_experiment_1(SimConfig(miners=7, trials=300, seed=1))
print(f"solo mean {res.solo.mean:.2f}s, sharded mean {res.sharded.mean:.2f}s, "
      f"ratio {res.ratio:.2f}, p = {res.p_value:.2g}")
