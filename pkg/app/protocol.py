"""
Session pipeline for the efficient biased-basis scheme.

prepare -> intercept -> noise -> measure -> announce bases -> sift ->
estimate errors (naive and refined) -> verdicts -> reconcile -> amplify.

Eve's stage runs before any basis is announced and receives no basis
information. Every stage draws from its own labeled child of the session
stream, so a session is a pure function of (config, attack).
"""
import hashlib
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from app.adversary import EveLog, eve_known_fraction, intercept_many
from app.analytics import hoeffding_delta
from app.bits import require_same_length
from app.config import settings
from app.errors import InsufficientSampleError
from app.models import (
    AbortReason,
    BiasedAttackParams,
    BitString,
    EstimateDocument,
    EveRecordsDocument,
    HashDocument,
    PlanDocument,
    PopulationDocument,
    ProtocolConfig,
    SessionSummary,
    SiftedDocument,
    SummaryDocument,
    TranscriptDocument,
    Verdict,
)
from app.privacy import AmplificationPlan, ToeplitzHash, apply_hash, leakage_bound, make_plan, sample_toeplitz
from app.quantum import Basis, apply_noise_many, encode_many, measure_many
from app.reconciliation import ReconciliationResult, reconcile
from app.rng import RandomStream

logger = logging.getLogger(__name__)

BasisSequence = Union[np.ndarray, Sequence[Basis]]


@dataclass(frozen=True)
class SiftedPartition:
    rect_indices: np.ndarray
    diag_indices: np.ndarray
    discarded_indices: np.ndarray

    @property
    def size(self) -> int:
        return int(self.rect_indices.size + self.diag_indices.size + self.discarded_indices.size)

    @property
    def sifted_indices(self) -> np.ndarray:
        return np.union1d(self.rect_indices, self.diag_indices)

    @property
    def sift_fraction(self) -> float:
        if self.size == 0:
            return 0.0
        return (self.rect_indices.size + self.diag_indices.size) / self.size


@dataclass(frozen=True)
class ErrorEstimate:
    """Test-sample mismatch counts.

    The pooled naive rate weights each per-basis estimate by the size of its
    sifted subset, estimating the error rate of the whole sifted string from
    the same two samples. It equals (r1 + r2) / (m1 + m2) when the samples
    are proportional to the subsets.
    """

    m1: int
    m2: int
    r1: int
    r2: int
    sample_indices: np.ndarray
    rect_size: int
    diag_size: int

    @property
    def e1_hat(self) -> float:
        return self.r1 / self.m1

    @property
    def e2_hat(self) -> float:
        return self.r2 / self.m2

    @property
    def e_bar_hat(self) -> float:
        total = self.rect_size + self.diag_size
        return (self.rect_size * self.e1_hat + self.diag_size * self.e2_hat) / total


@dataclass(frozen=True)
class PopulationErrors:
    """Mismatch counts over every sifted position, known only to the simulator."""

    rect_size: int
    rect_errors: int
    diag_size: int
    diag_errors: int

    @property
    def e1(self) -> float:
        return self.rect_errors / self.rect_size if self.rect_size else 0.0

    @property
    def e2(self) -> float:
        return self.diag_errors / self.diag_size if self.diag_size else 0.0

    @property
    def e_bar(self) -> float:
        total = self.rect_size + self.diag_size
        return (self.rect_errors + self.diag_errors) / total if total else 0.0


@dataclass
class SessionTranscript:
    config: ProtocolConfig
    attack: Optional[BiasedAttackParams]
    alice_bits: np.ndarray
    alice_bases: np.ndarray
    bob_bases: np.ndarray
    bob_outcomes: np.ndarray
    eve_records: Optional[EveLog]
    sifted: SiftedPartition
    population: PopulationErrors
    estimate: Optional[ErrorEstimate]
    verdict_refined: Verdict
    verdict_naive: Verdict
    raw_key_alice: np.ndarray
    raw_key_bob: np.ndarray
    abort_reason: Optional[AbortReason] = None
    reconciliation: Optional[ReconciliationResult] = None
    reconciled_key: Optional[np.ndarray] = None
    leakage_bits: Optional[int] = None
    plan: Optional[AmplificationPlan] = None
    hash: Optional[ToeplitzHash] = None
    final_key: Optional[np.ndarray] = None
    eve_expected_info_bound: Optional[float] = None

    @property
    def sift_fraction(self) -> float:
        return self.sifted.sift_fraction

    @property
    def raw_key_len(self) -> int:
        return int(self.raw_key_alice.size)

    @property
    def reconciled_len(self) -> int:
        return 0 if self.reconciled_key is None else int(self.reconciled_key.size)

    @property
    def final_key_len(self) -> int:
        return 0 if self.final_key is None else int(self.final_key.size)

    @property
    def parity_bits(self) -> Optional[int]:
        return None if self.reconciliation is None else self.reconciliation.parity_bits

    @property
    def eve_known_fraction(self) -> float:
        if self.eve_records is None:
            return 0.0
        return eve_known_fraction(self.eve_records, self.alice_bases)

    @property
    def accepted(self) -> bool:
        return self.verdict_refined is Verdict.ACCEPT and self.final_key is not None

    def to_document(self) -> TranscriptDocument:
        estimate = None
        if self.estimate is not None:
            estimate = EstimateDocument(
                m1=self.estimate.m1,
                m2=self.estimate.m2,
                r1=self.estimate.r1,
                r2=self.estimate.r2,
                e1_hat=self.estimate.e1_hat,
                e2_hat=self.estimate.e2_hat,
                e_bar_hat=self.estimate.e_bar_hat,
                sample_indices=[int(i) for i in self.estimate.sample_indices],
            )
        eve = None
        if self.eve_records is not None:
            eve = EveRecordsDocument(
                length=len(self.eve_records),
                measured=BitString.from_bits(self.eve_records.measured.astype(np.uint8)),
                eve_bases=BitString.from_bits(self.eve_records.eve_bases),
                observed_bits=BitString.from_bits(self.eve_records.observed),
            )
        plan = None
        if self.plan is not None:
            plan = PlanDocument(
                n=self.plan.n, l=self.plan.l, s=self.plan.s,
                out_len=self.plan.out_len, viable=self.plan.viable, info_bound=self.plan.info_bound,
            )
        hash_doc = None
        if self.hash is not None:
            hash_doc = HashDocument(n=self.hash.n, k=self.hash.k, diagonals=BitString.from_bits(self.hash.diagonals))
        return TranscriptDocument(
            config=self.config,
            attack=self.attack,
            alice_bits=BitString.from_bits(self.alice_bits),
            alice_bases=BitString.from_bits(self.alice_bases),
            bob_bases=BitString.from_bits(self.bob_bases),
            bob_outcomes=BitString.from_bits(self.bob_outcomes),
            eve_records=eve,
            sifted=SiftedDocument(
                rect_count=int(self.sifted.rect_indices.size),
                diag_count=int(self.sifted.diag_indices.size),
                discarded_count=int(self.sifted.discarded_indices.size),
            ),
            population=PopulationDocument(
                rect_size=self.population.rect_size,
                rect_errors=self.population.rect_errors,
                diag_size=self.population.diag_size,
                diag_errors=self.population.diag_errors,
                e1=self.population.e1,
                e2=self.population.e2,
                e_bar=self.population.e_bar,
            ),
            estimate=estimate,
            verdict_refined=self.verdict_refined,
            verdict_naive=self.verdict_naive,
            abort_reason=self.abort_reason,
            raw_key_alice=BitString.from_bits(self.raw_key_alice),
            raw_key_bob=BitString.from_bits(self.raw_key_bob),
            reconciled_key=None if self.reconciled_key is None else BitString.from_bits(self.reconciled_key),
            leakage_bits=self.leakage_bits,
            parity_bits=self.parity_bits,
            plan=plan,
            hash=hash_doc,
            final_key=None if self.final_key is None else BitString.from_bits(self.final_key),
            eve_expected_info_bound=self.eve_expected_info_bound,
            summary=SummaryDocument(
                sift_fraction=self.sift_fraction,
                raw_key_len=self.raw_key_len,
                reconciled_len=self.reconciled_len,
                reconciled_fraction=self.reconciled_len / self.config.n,
                final_key_len=self.final_key_len,
                eve_known_fraction=self.eve_known_fraction,
            ),
        )

    def to_json(self) -> str:
        return self.to_document().model_dump_json(indent=2)

    def summary(self) -> SessionSummary:
        """Compact record for tables and the archive; ``digest`` fingerprints the JSON."""
        estimate = self.estimate
        return SessionSummary(
            seed=self.config.seed,
            config=self.config,
            attack=self.attack,
            verdict_refined=self.verdict_refined,
            verdict_naive=self.verdict_naive,
            abort_reason=self.abort_reason,
            e1_hat=None if estimate is None else estimate.e1_hat,
            e2_hat=None if estimate is None else estimate.e2_hat,
            e_bar_hat=None if estimate is None else estimate.e_bar_hat,
            population_e_bar=self.population.e_bar,
            sift_fraction=self.sift_fraction,
            raw_key_len=self.raw_key_len,
            reconciled_len=self.reconciled_len,
            final_key_len=self.final_key_len,
            leakage_bits=self.leakage_bits,
            digest=hashlib.sha256(self.to_json().encode("utf-8")).hexdigest(),
        )


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------

def choose_bases(epsilon: float, n: int, rng: RandomStream) -> np.ndarray:
    """Rectilinear with probability ``epsilon``, diagonal otherwise."""
    return np.where(rng.bernoulli(epsilon, n), Basis.RECTILINEAR, Basis.DIAGONAL).astype(np.uint8)


def sift(alice_bases: BasisSequence, bob_bases: BasisSequence) -> SiftedPartition:
    """Split positions by (Alice basis, Bob basis); mismatches are discarded."""
    require_same_length("alice_bases", alice_bases, "bob_bases", bob_bases)
    alice = np.asarray(alice_bases, dtype=np.uint8)
    bob = np.asarray(bob_bases, dtype=np.uint8)
    same = alice == bob
    return SiftedPartition(
        rect_indices=np.flatnonzero(same & (alice == Basis.RECTILINEAR)),
        diag_indices=np.flatnonzero(same & (alice == Basis.DIAGONAL)),
        discarded_indices=np.flatnonzero(~same),
    )


def population_errors(alice_bits: np.ndarray, bob_outcomes: np.ndarray, sifted: SiftedPartition) -> PopulationErrors:
    mismatch = alice_bits != bob_outcomes
    return PopulationErrors(
        rect_size=int(sifted.rect_indices.size),
        rect_errors=int(mismatch[sifted.rect_indices].sum()),
        diag_size=int(sifted.diag_indices.size),
        diag_errors=int(mismatch[sifted.diag_indices].sum()),
    )


def estimate_errors(
    alice_bits: np.ndarray,
    bob_outcomes: np.ndarray,
    sifted: SiftedPartition,
    m1: int,
    m2: int,
    rng: RandomStream,
) -> ErrorEstimate:
    """Publicly compare uniform test samples drawn from each sifted subset.

    The sampled positions are sacrificed. The pooled naive rate reuses both
    samples.
    """
    if sifted.rect_indices.size < m1:
        raise InsufficientSampleError("rectilinear", int(sifted.rect_indices.size), m1)
    if sifted.diag_indices.size < m2:
        raise InsufficientSampleError("diagonal", int(sifted.diag_indices.size), m2)
    rect_sample = rng.split("rect").sample_without_replacement(sifted.rect_indices, m1)
    diag_sample = rng.split("diag").sample_without_replacement(sifted.diag_indices, m2)
    mismatch = alice_bits != bob_outcomes
    return ErrorEstimate(
        m1=m1,
        m2=m2,
        r1=int(mismatch[rect_sample].sum()),
        r2=int(mismatch[diag_sample].sum()),
        sample_indices=np.union1d(rect_sample, diag_sample),
        rect_size=int(sifted.rect_indices.size),
        diag_size=int(sifted.diag_indices.size),
    )


def verdict_refined(estimate: ErrorEstimate, e_max: float) -> Verdict:
    """Accept only if both per-basis estimates are strictly below ``e_max``."""
    if estimate.e1_hat < e_max and estimate.e2_hat < e_max:
        return Verdict.ACCEPT
    return Verdict.ABORT


def verdict_naive(estimate: ErrorEstimate, e_max: float) -> Verdict:
    """Accept if the single pooled estimate is strictly below ``e_max``."""
    return Verdict.ACCEPT if estimate.e_bar_hat < e_max else Verdict.ABORT


def raw_keys(
    alice_bits: np.ndarray, bob_outcomes: np.ndarray, sifted: SiftedPartition, sacrificed: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    positions = np.setdiff1d(sifted.sifted_indices, sacrificed, assume_unique=True)
    return alice_bits[positions].astype(np.uint8), bob_outcomes[positions].astype(np.uint8)


def default_delta(config: ProtocolConfig) -> float:
    if config.delta is not None:
        return config.delta
    return hoeffding_delta(min(config.m1, config.m2), config.confidence)


# ---------------------------------------------------------------------------
# Sessions
# ---------------------------------------------------------------------------

def run_session(config: ProtocolConfig, attack: Optional[BiasedAttackParams] = None) -> SessionTranscript:
    """Run one complete session; deterministic given (config, attack)."""
    rng = RandomStream(config.seed)
    n = config.n

    alice_bases = choose_bases(config.epsilon_alice, n, rng.split("alice", "bases"))
    alice_bits = rng.split("alice", "bits").bits(n)
    photons = encode_many(alice_bits, alice_bases)

    eve_log = None
    if attack is not None:
        photons, eve_log = intercept_many(photons, attack, rng.split("eve"))
    photons = apply_noise_many(photons, config.eta, rng.split("channel"))

    bob_bases = choose_bases(config.epsilon_bob, n, rng.split("bob", "bases"))
    bob_outcomes, _ = measure_many(photons, bob_bases, rng.split("bob", "measure"))

    # Bases are announced only now, after Bob has measured
    sifted = sift(alice_bases, bob_bases)
    population = population_errors(alice_bits, bob_outcomes, sifted)
    logger.debug("Sifted %d of %d photons (rect=%d diag=%d)",
                 n - sifted.discarded_indices.size, n, sifted.rect_indices.size, sifted.diag_indices.size)

    transcript = SessionTranscript(
        config=config,
        attack=attack,
        alice_bits=alice_bits,
        alice_bases=alice_bases,
        bob_bases=bob_bases,
        bob_outcomes=bob_outcomes,
        eve_records=eve_log,
        sifted=sifted,
        population=population,
        estimate=None,
        verdict_refined=Verdict.ABORT,
        verdict_naive=Verdict.ABORT,
        raw_key_alice=np.zeros(0, dtype=np.uint8),
        raw_key_bob=np.zeros(0, dtype=np.uint8),
    )

    try:
        estimate = estimate_errors(alice_bits, bob_outcomes, sifted, config.m1, config.m2, rng.split("sample"))
    except InsufficientSampleError as exc:
        logger.info("Session seed=%d aborted: %s", config.seed, exc)
        transcript.abort_reason = (
            AbortReason.INSUFFICIENT_RECT_SAMPLE if exc.subset == "rectilinear" else AbortReason.INSUFFICIENT_DIAG_SAMPLE
        )
        transcript.raw_key_alice, transcript.raw_key_bob = raw_keys(
            alice_bits, bob_outcomes, sifted, np.zeros(0, dtype=np.int64)
        )
        return transcript

    transcript.estimate = estimate
    transcript.verdict_refined = verdict_refined(estimate, config.e_max)
    transcript.verdict_naive = verdict_naive(estimate, config.e_max)
    transcript.raw_key_alice, transcript.raw_key_bob = raw_keys(
        alice_bits, bob_outcomes, sifted, estimate.sample_indices
    )

    if transcript.verdict_refined is Verdict.ACCEPT:
        _distill(transcript, rng)
    else:
        transcript.abort_reason = AbortReason.ERROR_RATE

    logger.info(
        "Session seed=%d sift=%.4f e1_hat=%.4f e2_hat=%.4f naive=%s refined=%s final_key=%d",
        config.seed, transcript.sift_fraction, estimate.e1_hat, estimate.e2_hat,
        transcript.verdict_naive.value, transcript.verdict_refined.value, transcript.final_key_len,
    )
    return transcript


def _distill(transcript: SessionTranscript, rng: RandomStream) -> None:
    """Reconcile and privacy-amplify an accepted session in place."""
    config = transcript.config
    if transcript.raw_key_len == 0:
        transcript.abort_reason = AbortReason.KEY_TOO_SHORT
        return

    block_size = config.block_size if config.block_size is not None else settings.reconcile_block_size
    result = reconcile(
        transcript.raw_key_alice,
        transcript.raw_key_bob,
        rng.split("reconcile"),
        error_rate=transcript.estimate.e_bar_hat,
        block_size=block_size,
    )
    transcript.reconciliation = result
    if not result.verified:
        transcript.abort_reason = AbortReason.RECONCILIATION_FAILED
        return
    transcript.reconciled_key = result.shared_key
    if result.shared_key.size == 0:
        transcript.abort_reason = AbortReason.KEY_TOO_SHORT
        return

    # Eve's deterministic share is capped at 2 e_max per basis once e1, e2 < e_max
    transcript.leakage_bits = leakage_bound(2 * config.e_max, config.n, default_delta(config), result.parity_bits)
    plan = make_plan(int(result.shared_key.size), transcript.leakage_bits, config.s)
    transcript.plan = plan
    if not plan.viable:
        transcript.abort_reason = AbortReason.KEY_TOO_SHORT
        return

    transcript.hash = sample_toeplitz(plan.n, plan.out_len, rng.split("hash"))
    transcript.final_key = apply_hash(transcript.hash, result.shared_key)
    transcript.eve_expected_info_bound = plan.info_bound


def run_until_accept(
    config: ProtocolConfig, attack: Optional[BiasedAttackParams] = None, max_attempts: int = 10
) -> tuple[SessionTranscript, int]:
    """Restart from state preparation after every abort.

    Attempt 0 uses ``config.seed``; later attempts use seeds derived from it.
    Returns the first transcript that produced a key, or the last one, with
    the number of attempts made.
    """
    if max_attempts < 1:
        raise ValueError(f"max_attempts must be at least 1, got {max_attempts}")
    master = RandomStream(config.seed)
    transcript = None
    for attempt in range(max_attempts):
        attempt_config = config if attempt == 0 else config.with_seed(master.derive_seed("attempt", attempt))
        transcript = run_session(attempt_config, attack)
        if transcript.accepted:
            return transcript, attempt + 1
        logger.info("Attempt %d aborted (%s); restarting", attempt + 1,
                    transcript.abort_reason.value if transcript.abort_reason else "unknown")
    return transcript, max_attempts
