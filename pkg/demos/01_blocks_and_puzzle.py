"""
Blocks, Merkle branches and the hash puzzle
===========================================

"""

from dpow.chain import (ZERO_HASH, BlockHeader, CoinbaseTx, Transaction, apply_branch,
                        merkle_branch, merkle_root, tx_leaves)
from dpow.puzzle import search_nonce, target_from_difficulty

# a block commits to its transactions through one Merkle root;
# the coinbase (reward) transaction is always leaf 0
txs = [Transaction(b"alice->bob 5"), Transaction(b"bob->carol 2")]
coinbase = CoinbaseTx(b"\x01" * 20, (0).to_bytes(8, "big"), b"pool-address")
leaves = tx_leaves(coinbase, txs)
root = merkle_root(leaves)
print("tx root      ", root.hex())

# the branch of leaf 0 is all a miner needs to recompute the root
# after changing the coinbase
branch = merkle_branch(leaves, 0)
new_coinbase = CoinbaseTx(b"\x01" * 20, (1).to_bytes(8, "big"), b"pool-address")
print("branch length", len(branch.siblings))
print("new root     ", apply_branch(new_coinbase.id, branch).hex())

# the header is a fixed 84-byte record; a valid block hashes below the target
header = BlockHeader(ZERO_HASH, 5000, 1_600_000_000, root)
sol = search_nonce(header, target_from_difficulty(5000))
print("nonce        ", sol.nonce)
print("block hash   ", sol.header.hash.hex())
