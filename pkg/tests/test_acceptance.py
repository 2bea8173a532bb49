"""
End-to-end acceptance checks against the closed-form oracles.

Runs with N = 10^6 photons are marked ``slow``; deselect them with
``pytest -m "not slow"``.
"""
import math

import numpy as np
import pytest
from scipy import stats

from app.analytics import avg_error_biased, min_epsilon
from app.models import AbortReason, BiasedAttackParams, ProtocolConfig, SweepAxis, Verdict
from app.privacy import eve_info_bound, exhaustive_universality
from app.protocol import run_session
from app.sweep import sweep

MILLION = 1_000_000


def _sigma(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n)


@pytest.mark.slow
def test_bb84_sift_fraction_is_one_half():
    """Equal bases keep half the photons."""
    transcript = run_session(ProtocolConfig(n=MILLION, epsilon=0.5, seed=101))
    assert transcript.sift_fraction == pytest.approx(0.5, abs=0.002)


@pytest.mark.slow
@pytest.mark.parametrize("eps,expected", [(0.1, 0.82), (0.05, 0.905)])
def test_biased_sift_fraction(eps, expected):
    """Biased bases agree with probability eps^2 + (1 - eps)^2."""
    transcript = run_session(ProtocolConfig(n=MILLION, epsilon=eps, seed=102))
    assert transcript.sift_fraction == pytest.approx(expected, abs=0.002)


@pytest.mark.slow
def test_bb84_pooled_error_under_diagonal_attack():
    """p2 = 9% at equal bases gives a pooled error of 2.25%."""
    transcript = run_session(ProtocolConfig(n=MILLION, epsilon=0.5, seed=103), BiasedAttackParams(p2=0.09))
    population = transcript.population
    sifted = population.rect_size + population.diag_size
    assert sifted >= 400_000
    assert abs(population.e_bar - 0.0225) < 3 * _sigma(0.0225, sifted)


@pytest.mark.slow
@pytest.mark.parametrize("eps", [0.3, 0.2, 0.1])
def test_biased_pooled_error_under_full_diagonal_attack(eps):
    """Attack (0, 1) leaves a pooled error of eps^2 / (2 [eps^2 + (1 - eps)^2])."""
    transcript = run_session(ProtocolConfig(n=MILLION, epsilon=eps, seed=104), BiasedAttackParams(p2=1.0))
    expected = eps ** 2 / (2 * (eps ** 2 + (1 - eps) ** 2))
    assert expected == pytest.approx(avg_error_biased(eps, 0.0, 1.0))
    population = transcript.population
    sifted = population.rect_size + population.diag_size
    assert abs(population.e_bar - expected) < 3 * _sigma(expected, sifted)
    if eps == 0.1:
        assert population.e_bar == pytest.approx(0.0061, abs=3e-4)


@pytest.mark.slow
def test_refined_rate_independent_of_bias():
    """Under attack (0.1, 0.1) e1_hat is 5% at eps = 0.5 and at eps = 0.05."""
    attack = BiasedAttackParams(p1=0.1, p2=0.1)
    estimates = []
    for eps in (0.5, 0.05):
        transcript = run_session(ProtocolConfig(n=MILLION, epsilon=eps, m1=1000, m2=1000, seed=105), attack)
        estimate = transcript.estimate
        assert abs(estimate.e1_hat - 0.05) < 3 * _sigma(0.05, estimate.m1)
        estimates.append(estimate)
    table = [[e.r1, e.m1 - e.r1] for e in estimates]
    _, p_value, _, _ = stats.chi2_contingency(table)
    assert p_value > 0.01


def _separations(config: ProtocolConfig, attack: BiasedAttackParams, seeds: range) -> int:
    count = 0
    for seed in seeds:
        transcript = run_session(config.with_seed(seed), attack)
        if transcript.verdict_naive is Verdict.ACCEPT and transcript.verdict_refined is Verdict.ABORT:
            count += 1
    return count


@pytest.mark.slow
def test_hidden_attack_separates_verdicts_at_small_bias():
    """Attack (0, 1) at eps = 0.1 passes the pooled check and fails the refined one."""
    config = ProtocolConfig(n=200_000, epsilon=0.1, m1=1000, m2=1000, e_max=0.03)
    assert _separations(config, BiasedAttackParams(p2=1.0), range(100)) >= 99


@pytest.mark.slow
def test_hidden_attack_separates_verdicts_in_bb84():
    """p2 = 9% at eps = 1/2 separates the verdicts at the binomially predicted rate."""
    attack = BiasedAttackParams(p2=0.09)
    config = ProtocolConfig(n=20_000, epsilon=0.5, m1=1000, m2=1000, e_max=0.03)
    # Refined aborts from r1 = 30; naive accepts up to r1 = 59 with near-equal subsets
    p_separate = stats.binom.cdf(59, 1000, 0.045) - stats.binom.cdf(29, 1000, 0.045)
    assert p_separate > 0.97
    floor = stats.binom.ppf(0.001, 100, p_separate)
    assert _separations(config, attack, range(100)) >= floor

    larger = ProtocolConfig(n=20_000, epsilon=0.5, m1=2000, m2=2000, e_max=0.03)
    assert _separations(larger, attack, range(100)) >= 99


@pytest.mark.slow
def test_final_key_beats_half_the_photons():
    """eps = 0.05 with light noise distils more than N/2 secret bits."""
    config = ProtocolConfig(n=MILLION, epsilon=0.05, eta=0.005, e_max=0.03, s=100,
                            m1=1000, m2=1000, confidence=1 - 1e-6, seed=107)
    transcript = run_session(config)
    assert transcript.verdict_refined is Verdict.ACCEPT
    assert transcript.final_key_len > 0.5 * MILLION


def test_too_small_bias_aborts_for_lack_of_samples():
    """eps^2 N < m1 aborts with the insufficient-sample reason."""
    eps, n, m1 = 0.28, 10_000, 1000
    assert eps < min_epsilon(m1, n)
    config = ProtocolConfig(n=n, epsilon=eps, m1=m1, m2=m1)
    aborted = 0
    for seed in range(100):
        transcript = run_session(config.with_seed(seed))
        if transcript.abort_reason is AbortReason.INSUFFICIENT_RECT_SAMPLE:
            assert transcript.verdict_refined is Verdict.ABORT
            aborted += 1
    assert aborted >= 95


def test_amplification_sizing_on_accepted_sessions():
    """Accepted sessions hash to n - l - s bits with the 2^-s / ln 2 bound."""
    config = ProtocolConfig(n=20_000, epsilon=0.3, m1=300, m2=300, eta=0.01, s=40)
    accepted = 0
    for seed in range(10):
        transcript = run_session(config.with_seed(seed))
        if not transcript.accepted:
            continue
        accepted += 1
        assert transcript.final_key_len == transcript.reconciled_len - transcript.leakage_bits - config.s
        assert transcript.plan.out_len == transcript.final_key_len
        assert transcript.eve_expected_info_bound == pytest.approx(2 ** -40 / math.log(2), rel=1e-12)
        assert transcript.eve_expected_info_bound == pytest.approx(eve_info_bound(40), rel=1e-12)
    assert accepted > 0


@pytest.mark.parametrize("n", range(1, 7))
def test_toeplitz_family_is_two_universal(n):
    """Every (n <= 6, k <= 3) family meets the 2^-k collision bound exactly."""
    for k in range(1, min(n, 3) + 1):
        report = exhaustive_universality(n, k)
        assert report.worst_fraction <= 2.0 ** -k


def test_noiseless_channel_always_accepts():
    """Without Eve or noise the raw keys agree and both verdicts accept."""
    config = ProtocolConfig(n=5000, epsilon=0.5, m1=200, m2=200, eta=0.0)
    for seed in range(100):
        transcript = run_session(config.with_seed(seed))
        assert np.array_equal(transcript.raw_key_alice, transcript.raw_key_bob)
        assert transcript.verdict_refined is Verdict.ACCEPT
        assert transcript.verdict_naive is Verdict.ACCEPT


def test_determinism_across_runs_and_threads():
    """Transcripts and sweep rows are reproducible regardless of worker count."""
    config = ProtocolConfig(n=6000, epsilon=0.4, m1=200, m2=200, eta=0.01, seed=2024)
    attack = BiasedAttackParams(p1=0.01, p2=0.02)
    assert run_session(config, attack).to_json() == run_session(config, attack).to_json()

    axis = SweepAxis(name="eta", start=0.0, stop=0.02, steps=3)
    rows_1, summaries_1 = sweep(config, attack, [axis], trials=2, threads=1)
    rows_8, summaries_8 = sweep(config, attack, [axis], trials=2, threads=8)
    assert rows_1 == rows_8
    assert [s.digest for s in summaries_1] == [s.digest for s in summaries_8]
