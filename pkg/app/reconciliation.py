"""
Parity-block reconciliation with exact leakage accounting.

Bob corrects his key towards Alice's. Each pass shuffles positions (the
first pass keeps natural order), splits them into blocks twice the size of
the previous pass's, compares block parities and bisects every mismatched
block to flip one bit. A flip turns the blocks holding that bit in the
other passes odd, so those are bisected too until every block seen so far
agrees. Passes repeat until two consecutive passes find no mismatched
block. A final run of random-subset parity checks verifies the result.
Every parity Alice announces is counted, and one key bit is discarded for
each of them.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.bits import parity, require_same_length
from app.errors import ConfigError, ReconciliationError
from app.rng import RandomStream

logger = logging.getLogger(__name__)

VERIFICATION_ROUNDS = 64
CLEAN_PASSES_REQUIRED = 2
DEFAULT_MAX_PASSES = 32
# Cascade's rule of thumb: about 0.73 expected errors per first-pass block
BLOCK_ERROR_TARGET = 0.73
MIN_ERROR_RATE = 1e-4


def default_block_size(error_rate: float, n: int) -> int:
    rate = max(error_rate, MIN_ERROR_RATE)
    return int(min(max(2, math.ceil(BLOCK_ERROR_TARGET / rate)), max(2, n)))


@dataclass
class ParityLedger:
    """Every subset whose parity was made public, in announcement order."""

    alice: np.ndarray
    subsets: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.subsets)

    def reveal(self, indices: np.ndarray) -> int:
        self.subsets.append(indices)
        return parity(self.alice[indices])

    def reveal_blocks(self, blocks: list[np.ndarray]) -> None:
        self.subsets.extend(blocks)


@dataclass
class ReconciliationResult:
    alice_key: np.ndarray
    bob_key: np.ndarray
    corrected_bob: np.ndarray  # full length, before discarding
    parity_bits: int
    corrected: int
    passes: int
    verified: bool

    @property
    def shared_key(self) -> Optional[np.ndarray]:
        return self.alice_key if self.verified else None


def locate_error(alice: np.ndarray, bob: np.ndarray, block: np.ndarray, ledger: ParityLedger) -> int:
    """Bisect a block with odd parity difference down to one bad position.

    Reveals ceil(log2 |block|) parities and returns the key index found.
    """
    lo, hi = 0, block.size
    while hi - lo > 1:
        mid = (lo + hi) // 2
        left = block[lo:mid]
        if ledger.reveal(left) != parity(bob[left]):
            hi = mid
        else:
            lo = mid
    return int(block[lo])


@dataclass
class PassLayout:
    """Blocks of one pass and the parities Alice announced for them."""

    blocks: list[np.ndarray]
    block_of: np.ndarray  # key position -> block index
    alice_parities: np.ndarray

    @classmethod
    def announce(cls, alice: np.ndarray, order: np.ndarray, block_size: int,
                 ledger: ParityLedger) -> "PassLayout":
        starts = np.arange(0, order.size, block_size)
        blocks = np.split(order, starts[1:])
        ledger.reveal_blocks(blocks)
        block_of = np.empty(order.size, dtype=np.int64)
        block_of[order] = np.arange(order.size) // block_size
        return cls(blocks, block_of, np.bitwise_xor.reduceat(alice[order], starts))

    def is_odd(self, bob: np.ndarray, block: int) -> bool:
        return parity(bob[self.blocks[block]]) != int(self.alice_parities[block])


def cascade(alice: np.ndarray, bob: np.ndarray, layouts: list[PassLayout], start: tuple[int, int],
            ledger: ParityLedger) -> int:
    """Correct an odd block and every block a resulting flip turns odd.

    ``start`` is (pass index, block index). Returns flips made in ``bob``.
    """
    pending = [start]
    flips = 0
    while pending:
        j, b = pending.pop()
        layout = layouts[j]
        if not layout.is_odd(bob, b):
            continue
        position = locate_error(alice, bob, layout.blocks[b], ledger)
        bob[position] ^= 1
        flips += 1
        pending.extend((i, int(other.block_of[position])) for i, other in enumerate(layouts) if i != j)
    return flips


def parity_pass(
    alice: np.ndarray,
    bob: np.ndarray,
    order: np.ndarray,
    block_size: int,
    ledger: ParityLedger,
    layouts: Optional[list[PassLayout]] = None,
) -> int:
    """One pass over ``order``; corrects ``bob`` in place, returns flips made.

    The new pass's layout is appended to ``layouts`` and flips are
    cascaded back through the layouts already there.
    """
    layouts = [] if layouts is None else layouts
    layout = PassLayout.announce(alice, order, block_size, ledger)
    layouts.append(layout)
    current = len(layouts) - 1
    starts = np.arange(0, order.size, block_size)
    mismatched = np.flatnonzero(np.bitwise_xor.reduceat(bob[order], starts) != layout.alice_parities)
    flips = 0
    for b in mismatched:
        flips += cascade(alice, bob, layouts, (current, int(b)), ledger)
    return flips


def verify(alice: np.ndarray, bob: np.ndarray, rng: RandomStream, ledger: ParityLedger,
           rounds: int = VERIFICATION_ROUNDS) -> bool:
    """Compare parities of random subsets; False on the first disagreement."""
    for r in range(rounds):
        subset = np.flatnonzero(rng.split("round", r).bernoulli(0.5, alice.size))
        if ledger.reveal(subset) != parity(bob[subset]):
            return False
    return True


def discard_revealed(n: int, ledger: ParityLedger) -> np.ndarray:
    """Keep-mask dropping one position per revealed parity.

    Each subset loses its last still-kept position; a subset with none left
    costs the last kept position of the whole key instead.
    """
    keep = np.ones(n, dtype=bool)
    tail = n - 1
    for subset in ledger.subsets:
        candidates = subset[keep[subset]]
        if candidates.size:
            keep[candidates[-1]] = False
            continue
        while tail >= 0 and not keep[tail]:
            tail -= 1
        if tail < 0:
            break
        keep[tail] = False
    return keep


def reconcile(
    alice_key: np.ndarray,
    bob_key: np.ndarray,
    rng: RandomStream,
    error_rate: float = 0.0,
    block_size: Optional[int] = None,
    max_passes: int = DEFAULT_MAX_PASSES,
    strict: bool = False,
) -> ReconciliationResult:
    """Make Bob's key equal to Alice's and account for what was revealed.

    ``error_rate`` is the estimated mismatch rate used to size blocks when
    ``block_size`` is not given. With ``strict`` a failed verification
    raises :class:`ReconciliationError` instead of returning an unverified
    result.
    """
    require_same_length("alice_key", alice_key, "bob_key", bob_key)
    n = int(alice_key.size)
    if n < 1:
        raise ConfigError("reconciliation needs keys of length at least 1")
    alice = alice_key.astype(np.uint8)
    bob = bob_key.astype(np.uint8).copy()
    k = block_size if block_size is not None else default_block_size(error_rate, n)
    ledger = ParityLedger(alice=alice)
    layouts: list[PassLayout] = []

    corrected = 0
    clean = 0
    passes = 0
    while passes < max_passes and clean < CLEAN_PASSES_REQUIRED:
        order = np.arange(n) if passes == 0 else rng.split("pass", passes).permutation(n)
        size = min(k * 2 ** passes, n)
        flips = parity_pass(alice, bob, order, size, ledger, layouts)
        corrected += flips
        clean = clean + 1 if flips == 0 else 0
        passes += 1
        logger.debug("Reconciliation pass %d: block=%d flips=%d parities=%d", passes, size, flips, len(ledger))

    verified = verify(alice, bob, rng.split("verify"), ledger)
    keep = discard_revealed(n, ledger)
    result = ReconciliationResult(
        alice_key=alice[keep],
        bob_key=bob[keep],
        corrected_bob=bob,
        parity_bits=len(ledger),
        corrected=corrected,
        passes=passes,
        verified=verified,
    )
    logger.info(
        "Reconciled %d bits: %d corrections, %d parities, %d passes, verified=%s",
        n, corrected, result.parity_bits, passes, verified,
    )
    if strict and not verified:
        raise ReconciliationError(f"residual mismatch after {passes} passes")
    return result
