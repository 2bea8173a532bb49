"""
Closed-form error rates, efficiencies and key-size planning for the
biased-basis scheme.

These are the theoretical counterparts of the simulator's measurements and
serve as its oracle in tests and in the sweep/compare tables.
"""
import math
from dataclasses import dataclass
from typing import Optional

from app.errors import ConfigError
from app.models import Verdict
from app.quantum import check_probability


def _check_bias(name: str, epsilon: float) -> float:
    if not 0.0 < epsilon <= 0.5:
        raise ConfigError(f"{name} must satisfy 0 < epsilon <= 1/2, got {epsilon}")
    return epsilon


def _check_attack(p1: float, p2: float) -> None:
    check_probability("p1", p1)
    check_probability("p2", p2)
    if p1 + p2 > 1.0 + 1e-12:
        raise ConfigError(f"p1 + p2 must not exceed 1, got {p1 + p2}")


def avg_error_bb84(p1: float, p2: float) -> float:
    """Single pooled error rate under the biased attack at equal bases."""
    _check_attack(p1, p2)
    return (p1 + p2) / 4


def avg_error_biased(epsilon: float, p1: float, p2: float, epsilon_bob: Optional[float] = None) -> float:
    """Pooled error rate of the accepted data for bias ``epsilon``.

    Rectilinear matches (weight eps_a * eps_b) err at p2/2 and diagonal
    matches (weight (1-eps_a)(1-eps_b)) at p1/2. With equal biases this is
    (eps^2 p2 + (1-eps)^2 p1) / (2 [eps^2 + (1-eps)^2]).
    """
    _check_bias("epsilon", epsilon)
    eps_b = _check_bias("epsilon_bob", epsilon if epsilon_bob is None else epsilon_bob)
    _check_attack(p1, p2)
    w_rect = epsilon * eps_b
    w_diag = (1 - epsilon) * (1 - eps_b)
    return (w_rect * p2 + w_diag * p1) / (2 * (w_rect + w_diag))


def sift_efficiency(eps_a: float, eps_b: float) -> float:
    """Probability that Alice's and Bob's bases agree."""
    _check_bias("eps_a", eps_a)
    _check_bias("eps_b", eps_b)
    return eps_a * eps_b + (1 - eps_a) * (1 - eps_b)


def min_epsilon(m1: int, n: int) -> float:
    """Smallest bias leaving about ``m1`` rectilinear matches among ``n`` photons."""
    if m1 < 1:
        raise ConfigError(f"m1 must be at least 1, got {m1}")
    if m1 > n:
        raise ConfigError(f"m1 ({m1}) cannot exceed the photon count ({n})")
    return math.sqrt(m1 / n)


def naive_attack_bound(e_max: float) -> float:
    """Largest p1 + p2 the pooled check tolerates at equal bases."""
    return 4 * e_max


def refined_attack_bound(e_max: float) -> float:
    """Largest p1 and p2 the per-basis checks tolerate."""
    return 2 * e_max


def eve_information_fraction(eps_a: float, p1: float, p2: float) -> float:
    """Expected fraction of photons Eve measures in Alice's basis."""
    _check_bias("eps_a", eps_a)
    _check_attack(p1, p2)
    return p1 * eps_a + p2 * (1 - eps_a)


def hoeffding_delta(m: int, confidence: float) -> float:
    """Two-sided Hoeffding deviation of a rate estimated from ``m`` samples."""
    if m < 1:
        raise ConfigError(f"sample size must be at least 1, got {m}")
    if not 0.0 < confidence < 1.0:
        raise ConfigError(f"confidence must lie in (0, 1), got {confidence}")
    return math.sqrt(math.log(2 / (1 - confidence)) / (2 * m))


def required_sample_size(delta: float, confidence: float) -> int:
    """Smallest test sample whose Hoeffding deviation is at most ``delta``."""
    if delta <= 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    if not 0.0 < confidence < 1.0:
        raise ConfigError(f"confidence must lie in (0, 1), got {confidence}")
    return math.ceil(math.log(2 / (1 - confidence)) / (2 * delta * delta))


def expected_key_fraction(
    eps: float, e_max: float, delta: float, s: int, n: int, a_overhead: float
) -> float:
    """Planning estimate of final key length over N.

    The reconciled fraction is approximated as sift_efficiency * (1 - overhead),
    a rough model; simulated sessions report the realized fraction.
    """
    for name, value in (("e_max", e_max), ("delta", delta), ("a_overhead", a_overhead)):
        check_probability(name, value)
    if s < 1:
        raise ConfigError(f"s must be at least 1, got {s}")
    if n < 1:
        raise ConfigError(f"N must be at least 1, got {n}")
    a = sift_efficiency(eps, eps) * (1 - a_overhead)
    return max(0.0, a - 2 * e_max - delta - s / n)


def _verdict(accepted: bool) -> Verdict:
    return Verdict.ACCEPT if accepted else Verdict.ABORT


def detection_table(eps: float, p1: float, p2: float, e_max: float) -> tuple[Verdict, Verdict]:
    """Theoretical (naive, refined) verdicts for an attack at bias ``eps``."""
    naive = avg_error_biased(eps, p1, p2) < e_max
    refined = p2 / 2 < e_max and p1 / 2 < e_max
    return _verdict(naive), _verdict(refined)


@dataclass(frozen=True)
class TheoryPoint:
    epsilon: float
    p1: float
    p2: float
    e1: float
    e2: float
    e_bar: float
    sift_fraction: float
    min_epsilon: float


def theory_point(epsilon: float, p1: float, p2: float, m1: int, n: int) -> TheoryPoint:
    return TheoryPoint(
        epsilon=epsilon,
        p1=p1,
        p2=p2,
        e1=p2 / 2,
        e2=p1 / 2,
        e_bar=avg_error_biased(epsilon, p1, p2),
        sift_fraction=sift_efficiency(epsilon, epsilon),
        min_epsilon=min_epsilon(m1, n),
    )
