"""Tests for the session pipeline."""
import hashlib
import json

import numpy as np
import pytest

from app.errors import InsufficientSampleError, LengthMismatchError
from app.models import AbortReason, BiasedAttackParams, ProtocolConfig, Verdict
from app.privacy import eve_info_bound
from app.protocol import (
    ErrorEstimate,
    estimate_errors,
    population_errors,
    raw_keys,
    run_session,
    run_until_accept,
    sift,
    verdict_naive,
    verdict_refined,
)
from app.quantum import Basis
from app.rng import RandomStream

R, D = Basis.RECTILINEAR, Basis.DIAGONAL


@pytest.fixture
def small_config():
    """A fast noiseless session at equal bases."""
    return ProtocolConfig(n=20_000, epsilon=0.5, m1=500, m2=500, seed=11)


def _estimate(r1, r2, m=100, rect_size=1000, diag_size=1000):
    return ErrorEstimate(m1=m, m2=m, r1=r1, r2=r2, sample_indices=np.arange(0),
                         rect_size=rect_size, diag_size=diag_size)


def test_sift_partition():
    """Matching bases split by basis; the rest are discarded."""
    partition = sift([R, R, D, D], [R, D, D, R])
    assert partition.rect_indices.tolist() == [0]
    assert partition.diag_indices.tolist() == [2]
    assert partition.discarded_indices.tolist() == [1, 3]
    assert partition.sift_fraction == pytest.approx(0.5)


def test_sift_length_mismatch():
    """Basis sequences must align."""
    with pytest.raises(LengthMismatchError):
        sift([R, D], [R])


def test_estimate_errors_insufficient_sample():
    """A subset smaller than its test sample raises."""
    partition = sift([R, R, D, D], [R, R, D, D])
    bits = np.zeros(4, dtype=np.uint8)
    with pytest.raises(InsufficientSampleError) as excinfo:
        estimate_errors(bits, bits, partition, 3, 1, RandomStream(0))
    assert excinfo.value.subset == "rectilinear"
    assert excinfo.value.available == 2


def test_estimate_samples_and_sacrifice():
    """Samples come from their own subsets and leave the raw keys."""
    rng = RandomStream(1)
    n = 4000
    alice_bases = rng.split("a").bits(n)
    bob_bases = rng.split("b").bits(n)
    alice_bits = rng.split("bits").bits(n)
    bob_bits = alice_bits ^ rng.split("noise").bernoulli(0.1, n).astype(np.uint8)
    partition = sift(alice_bases, bob_bases)
    estimate = estimate_errors(alice_bits, bob_bits, partition, 200, 150, rng.split("sample"))
    assert estimate.sample_indices.size == 350
    assert np.isin(estimate.sample_indices, partition.sifted_indices).all()
    assert np.isin(estimate.sample_indices, partition.rect_indices).sum() == 200
    raw_a, raw_b = raw_keys(alice_bits, bob_bits, partition, estimate.sample_indices)
    assert raw_a.size == partition.sifted_indices.size - 350
    assert raw_a.size == raw_b.size


def test_verdicts_use_strict_inequality():
    """An estimate equal to e_max aborts."""
    estimate = _estimate(r1=3, r2=0)
    assert estimate.e1_hat == 0.03
    assert verdict_refined(estimate, 0.03) is Verdict.ABORT
    assert verdict_naive(estimate, 0.03) is Verdict.ACCEPT
    assert verdict_refined(_estimate(2, 2), 0.03) is Verdict.ACCEPT


def test_pooled_estimate_weights_subsets():
    """The naive rate weights each basis by its sifted share."""
    estimate = _estimate(r1=50, r2=0, rect_size=100, diag_size=8100)
    assert estimate.e1_hat == pytest.approx(0.5)
    assert estimate.e_bar_hat == pytest.approx(0.5 * 100 / 8200)
    equal = _estimate(r1=6, r2=2)
    assert equal.e_bar_hat == pytest.approx((6 + 2) / 200)


def test_refined_accept_implies_naive_accept():
    """Refined acceptance is the stricter test."""
    for r1 in range(0, 5):
        for r2 in range(0, 5):
            estimate = _estimate(r1, r2, rect_size=300, diag_size=1700)
            if verdict_refined(estimate, 0.03) is Verdict.ACCEPT:
                assert verdict_naive(estimate, 0.03) is Verdict.ACCEPT


def test_population_errors_count_all_sifted():
    """Population rates cover every sifted position."""
    partition = sift([R, R, D, D, R], [R, R, D, D, D])
    alice = np.array([0, 1, 0, 1, 0], dtype=np.uint8)
    bob = np.array([0, 0, 1, 1, 1], dtype=np.uint8)
    population = population_errors(alice, bob, partition)
    assert (population.rect_size, population.rect_errors) == (2, 1)
    assert (population.diag_size, population.diag_errors) == (2, 1)
    assert population.e_bar == pytest.approx(0.5)


def test_noiseless_session_accepts(small_config):
    """No Eve and no noise: identical raw keys, Accept, and a final key."""
    transcript = run_session(small_config)
    assert np.array_equal(transcript.raw_key_alice, transcript.raw_key_bob)
    assert transcript.estimate.e1_hat == 0.0
    assert transcript.estimate.e2_hat == 0.0
    assert transcript.verdict_refined is Verdict.ACCEPT
    assert transcript.verdict_naive is Verdict.ACCEPT
    assert transcript.abort_reason is None
    assert transcript.accepted
    plan = transcript.plan
    assert plan.out_len == transcript.reconciled_len - transcript.leakage_bits - small_config.s
    assert transcript.final_key_len == plan.out_len
    assert transcript.eve_expected_info_bound == pytest.approx(eve_info_bound(small_config.s), rel=1e-12)


def test_session_is_deterministic(small_config):
    """The same config produces byte-identical transcript JSON."""
    attack = BiasedAttackParams(p1=0.02, p2=0.02)
    assert run_session(small_config, attack).to_json() == run_session(small_config, attack).to_json()


def test_seed_changes_transcript(small_config):
    """Different seeds give different sessions."""
    assert run_session(small_config).to_json() != run_session(small_config.with_seed(12)).to_json()


def test_transcript_key_order(small_config):
    """Top-level keys follow the documented order."""
    document = json.loads(run_session(small_config).to_json())
    assert list(document) == [
        "schema_version", "config", "attack", "alice_bits", "alice_bases", "bob_bases",
        "bob_outcomes", "eve_records", "sifted", "population", "estimate",
        "verdict_refined", "verdict_naive", "abort_reason", "raw_key_alice",
        "raw_key_bob", "reconciled_key", "leakage_bits", "parity_bits", "plan",
        "hash", "final_key", "eve_expected_info_bound", "summary",
    ]
    assert document["alice_bits"]["length"] == small_config.n
    assert len(document["alice_bits"]["hex"]) == 2 * ((small_config.n + 7) // 8)


def test_summary_digest(small_config):
    """The summary digest fingerprints the transcript JSON."""
    transcript = run_session(small_config)
    summary = transcript.summary()
    assert summary.digest == hashlib.sha256(transcript.to_json().encode("utf-8")).hexdigest()
    assert summary.final_key_len == transcript.final_key_len


def test_hidden_diagonal_attack_passes_naive_check():
    """Attack (0, 1) at eps = 0.1 fools the pooled check but not the refined one."""
    config = ProtocolConfig(n=200_000, epsilon=0.1, m1=500, m2=500, e_max=0.03, seed=3)
    transcript = run_session(config, BiasedAttackParams(p1=0.0, p2=1.0))
    assert transcript.verdict_naive is Verdict.ACCEPT
    assert transcript.verdict_refined is Verdict.ABORT
    assert transcript.abort_reason is AbortReason.ERROR_RATE
    assert transcript.estimate.e1_hat == pytest.approx(0.5, abs=0.1)
    assert transcript.final_key is None
    assert transcript.population.e_bar == pytest.approx(0.01 / 1.64, abs=0.002)


def test_insufficient_sample_aborts():
    """Too small a bias leaves too few rectilinear matches."""
    config = ProtocolConfig(n=10_000, epsilon=0.1, m1=1000, m2=1000, seed=5)
    transcript = run_session(config)
    assert transcript.verdict_refined is Verdict.ABORT
    assert transcript.verdict_naive is Verdict.ABORT
    assert transcript.abort_reason is AbortReason.INSUFFICIENT_RECT_SAMPLE
    assert transcript.estimate is None
    assert transcript.raw_key_len == transcript.sifted.sifted_indices.size


def test_eve_records_only_with_attack(small_config):
    """Eve's log is present exactly when an attack runs."""
    assert run_session(small_config).eve_records is None
    attacked = run_session(small_config, BiasedAttackParams(p1=0.5, p2=0.5))
    assert len(attacked.eve_records) == small_config.n
    assert attacked.eve_known_fraction == pytest.approx(0.5, abs=0.02)


def test_run_until_accept_first_try(small_config):
    """An honest channel is accepted on the first attempt."""
    transcript, attempts = run_until_accept(small_config)
    assert attempts == 1
    assert transcript.accepted


def test_run_until_accept_gives_up():
    """A loud attacker exhausts the attempts."""
    config = ProtocolConfig(n=10_000, epsilon=0.5, m1=300, m2=300, seed=1)
    transcript, attempts = run_until_accept(config, BiasedAttackParams(p1=0.5, p2=0.5), max_attempts=3)
    assert attempts == 3
    assert not transcript.accepted
    assert transcript.config.seed != config.seed


def test_run_until_accept_rejects_zero_attempts(small_config):
    """At least one attempt is required."""
    with pytest.raises(ValueError):
        run_until_accept(small_config, max_attempts=0)


def test_channel_noise_shows_in_both_bases():
    """Without Eve, noise eta appears as the error rate of each basis."""
    config = ProtocolConfig(n=60_000, epsilon=0.5, m1=8000, m2=8000, eta=0.02, seed=21)
    estimate = run_session(config).estimate
    sigma = np.sqrt(0.02 * 0.98 / 8000)
    assert estimate.e1_hat == pytest.approx(0.02, abs=4 * sigma)
    assert estimate.e2_hat == pytest.approx(0.02, abs=4 * sigma)


def test_asymmetric_attack_error_rates():
    """Rectilinear errors follow p2/2 and diagonal errors follow p1/2."""
    config = ProtocolConfig(n=60_000, epsilon=0.5, m1=8000, m2=8000, seed=22)
    estimate = run_session(config, BiasedAttackParams(p1=0.3, p2=0.1)).estimate
    assert estimate.e1_hat == pytest.approx(0.05, abs=4 * np.sqrt(0.05 * 0.95 / 8000))
    assert estimate.e2_hat == pytest.approx(0.15, abs=4 * np.sqrt(0.15 * 0.85 / 8000))
