"""
Privacy amplification with the binary Toeplitz hash family.

A hash ``{0,1}^n -> {0,1}^k`` is described by ``n + k - 1`` public bits
placed on the diagonals of a k x n matrix, entry (i, j) being
``diagonals[i - j + n - 1]``. The family is 2-universal, so hashing a
reconciled string on which Eve holds at most ``l`` deterministic bits down
to ``n - l - s`` bits leaves her less than ``2^-s / ln 2`` bits of expected
information.
"""
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.linalg import toeplitz
from scipy.signal import fftconvolve

from app.errors import ConfigError, LengthMismatchError
from app.rng import RandomStream

logger = logging.getLogger(__name__)

# Above this many matrix entries the product goes through an FFT convolution
DENSE_LIMIT = 1 << 22

EXHAUSTIVE_MAX_N = 6
EXHAUSTIVE_MAX_K = 3


@dataclass(frozen=True)
class ToeplitzHash:
    n: int
    k: int
    diagonals: np.ndarray

    def __post_init__(self):
        if not 1 <= self.k <= self.n:
            raise ConfigError(f"hash output length must satisfy 1 <= k <= n, got n={self.n}, k={self.k}")
        if self.diagonals.size != self.n + self.k - 1:
            raise LengthMismatchError(
                f"Toeplitz hash needs {self.n + self.k - 1} diagonal bits, got {self.diagonals.size}"
            )

    def matrix(self) -> np.ndarray:
        """The k x n matrix as uint8."""
        first_column = self.diagonals[self.n - 1:]
        first_row = self.diagonals[self.n - 1::-1]
        return toeplitz(first_column, first_row).astype(np.uint8)


def sample_toeplitz(n: int, k: int, rng: RandomStream) -> ToeplitzHash:
    """Draw a hash uniformly from the family; the description is public."""
    if not 1 <= k <= n:
        raise ConfigError(f"hash output length must satisfy 1 <= k <= n, got n={n}, k={k}")
    return ToeplitzHash(n=n, k=k, diagonals=rng.bits(n + k - 1))


def apply_hash(h: ToeplitzHash, x: np.ndarray) -> np.ndarray:
    """Toeplitz matrix-vector product over GF(2)."""
    if x.size != h.n:
        raise LengthMismatchError(f"hash expects {h.n} input bits, got {x.size}")
    if h.n * h.k <= DENSE_LIMIT:
        product = h.matrix().astype(np.int64) @ x.astype(np.int64)
        return (product % 2).astype(np.uint8)
    # y_i = sum_j d[i - j + n - 1] x_j is a slice of the full convolution d * x
    conv = fftconvolve(h.diagonals.astype(np.float64), x.astype(np.float64))
    window = conv[h.n - 1:h.n - 1 + h.k]
    return (np.rint(window).astype(np.int64) % 2).astype(np.uint8)


# ---------------------------------------------------------------------------
# Sizing
# ---------------------------------------------------------------------------

def eve_info_bound(s: int) -> float:
    """Bound on Eve's expected information about the hashed key, in bits."""
    return math.ldexp(1.0, -s) / math.log(2)


@dataclass(frozen=True)
class AmplificationPlan:
    n: int
    l: int
    s: int

    @property
    def out_len(self) -> int:
        return self.n - self.l - self.s

    @property
    def viable(self) -> bool:
        return self.out_len >= 1

    @property
    def info_bound(self) -> float:
        return eve_info_bound(self.s)


def make_plan(n: int, l: int, s: int) -> AmplificationPlan:
    """Size the hash output as n - l - s; non-viable plans are flagged, not clamped."""
    if n < 1:
        raise ConfigError(f"reconciled length must be at least 1, got {n}")
    if l < 0:
        raise ConfigError(f"leakage must be non-negative, got {l}")
    if s < 1:
        raise ConfigError(f"security parameter must be at least 1, got {s}")
    plan = AmplificationPlan(n=n, l=l, s=s)
    if not plan.viable:
        logger.info("Amplification plan not viable: n=%d l=%d s=%d", n, l, s)
    return plan


def _exact(value: float) -> Fraction:
    # Decimal reading of the float, so 0.06 + 0.01 sums to exactly 7/100
    return Fraction(repr(float(value)))


def leakage_bound(eve_fraction_cap: float, n_photons: int, delta: float, parity_bits: int) -> int:
    """Bits of Eve's information to remove: ceil(N (cap + delta)) + parities."""
    for name, value in (("eve_fraction_cap", eve_fraction_cap), ("delta", delta),
                        ("N", n_photons), ("parity_bits", parity_bits)):
        if value < 0:
            raise ConfigError(f"{name} must be non-negative, got {value}")
    share = n_photons * (_exact(eve_fraction_cap) + _exact(delta))
    return math.ceil(share) + parity_bits


# ---------------------------------------------------------------------------
# Family self-tests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniversalityReport:
    n: int
    k: int
    mode: str
    worst_fraction: float
    tolerance: float = 0.0

    @property
    def bound(self) -> float:
        return math.ldexp(1.0, -self.k)

    @property
    def passed(self) -> bool:
        return self.worst_fraction <= self.bound + self.tolerance


def _enumerate_bits(width: int) -> np.ndarray:
    """All 2^width bit vectors as rows, most significant bit first."""
    shifts = np.arange(width - 1, -1, -1)
    return ((np.arange(1 << width)[:, None] >> shifts) & 1).astype(np.uint8)


def _diagonal_index(n: int, k: int) -> np.ndarray:
    rows = np.arange(k)[:, None]
    cols = np.arange(n)[None, :]
    return rows - cols + n - 1


def _hash_outputs(diagonals: np.ndarray, inputs: np.ndarray, n: int, k: int) -> np.ndarray:
    """Outputs of every hash on every input, shape (hashes, inputs, k)."""
    matrices = diagonals[:, _diagonal_index(n, k)].astype(np.int64)
    return np.einsum("hkn,xn->hxk", matrices, inputs.astype(np.int64)) % 2


def _output_codes(diagonals: np.ndarray, inputs: np.ndarray, n: int, k: int) -> np.ndarray:
    """Hash outputs packed as integers, shape (hashes, inputs)."""
    outputs = _hash_outputs(diagonals, inputs, n, k)
    weights = 1 << np.arange(k - 1, -1, -1)
    return outputs @ weights


def exhaustive_universality(n: int, k: int) -> UniversalityReport:
    """Worst collision fraction over every pair x != y and the whole family."""
    if not 1 <= k <= n:
        raise ConfigError(f"hash output length must satisfy 1 <= k <= n, got n={n}, k={k}")
    if n > EXHAUSTIVE_MAX_N or k > EXHAUSTIVE_MAX_K:
        raise ConfigError(
            f"exhaustive mode supports n <= {EXHAUSTIVE_MAX_N} and k <= {EXHAUSTIVE_MAX_K}; "
            "use sampled mode for larger hashes"
        )
    family = _enumerate_bits(n + k - 1)
    codes = _output_codes(family, _enumerate_bits(n), n, k)
    worst = 0.0
    for x in range(codes.shape[1] - 1):
        collisions = (codes[:, x + 1:] == codes[:, [x]]).mean(axis=0)
        worst = max(worst, float(collisions.max()))
    return UniversalityReport(n=n, k=k, mode="exhaustive", worst_fraction=worst)


def sampled_universality(
    n: int, k: int, rng: RandomStream, pairs: int = 64, hashes: int = 4096
) -> UniversalityReport:
    """Monte Carlo estimate of the worst collision fraction over random pairs.

    The pass tolerance is five binomial standard deviations above 2^-k.
    """
    if not 1 <= k <= n:
        raise ConfigError(f"hash output length must satisfy 1 <= k <= n, got n={n}, k={k}")
    chunk = max(1, DENSE_LIMIT // (n * k))
    worst = 0.0
    for pair in range(pairs):
        pair_rng = rng.split("pair", pair)
        x = pair_rng.bits(n)
        y = pair_rng.bits(n)
        if not np.any(x != y):
            y[0] ^= 1
        inputs = np.stack([x, y])
        collisions = 0
        remaining = hashes
        while remaining:
            batch = min(chunk, remaining)
            diagonals = pair_rng.bits(batch * (n + k - 1)).reshape(batch, n + k - 1)
            outputs = _hash_outputs(diagonals, inputs, n, k)
            collisions += int(np.all(outputs[:, 0] == outputs[:, 1], axis=-1).sum())
            remaining -= batch
        worst = max(worst, collisions / hashes)
    p = math.ldexp(1.0, -k)
    tolerance = 5 * math.sqrt(p * (1 - p) / hashes)
    return UniversalityReport(n=n, k=k, mode="sampled", worst_fraction=worst, tolerance=tolerance)


def check_universality(
    n: int, k: int, mode: str = "exhaustive", rng: Optional[RandomStream] = None
) -> UniversalityReport:
    if mode == "exhaustive":
        return exhaustive_universality(n, k)
    if mode == "sampled":
        return sampled_universality(n, k, rng if rng is not None else RandomStream(0))
    raise ConfigError(f"unknown universality mode {mode!r}")
