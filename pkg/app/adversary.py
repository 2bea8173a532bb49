"""
Biased intercept-resend eavesdropper.

For each photon Eve measures in the rectilinear basis with probability p1,
in the diagonal basis with probability p2, and otherwise lets the photon
pass. She resends the collapsed state. She sits between Alice and the noisy
part of the channel, so whenever she measures in Alice's basis her observed
bit equals Alice's bit.
"""
import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence, Union

import numpy as np

from app.bits import require_same_length
from app.models import BiasedAttackParams
from app.quantum import Basis, Polarization, measure, measure_many
from app.rng import RandomStream

logger = logging.getLogger(__name__)


class EveAction(IntEnum):
    PASSED = 0
    MEASURED_RECTILINEAR = 1
    MEASURED_DIAGONAL = 2

    @property
    def basis(self) -> Optional[Basis]:
        if self is EveAction.MEASURED_RECTILINEAR:
            return Basis.RECTILINEAR
        if self is EveAction.MEASURED_DIAGONAL:
            return Basis.DIAGONAL
        return None


@dataclass(frozen=True)
class EveRecord:
    action: EveAction
    observed_bit: Optional[int] = None

    def __post_init__(self):
        if (self.action is EveAction.PASSED) != (self.observed_bit is None):
            raise ValueError("observed_bit is present exactly when Eve measured")


@dataclass(frozen=True)
class EveLog:
    """Per-photon records of a whole batch in array form."""

    actions: np.ndarray
    observed: np.ndarray

    def __len__(self) -> int:
        return int(self.actions.size)

    @classmethod
    def from_records(cls, records: Sequence[EveRecord]) -> "EveLog":
        actions = np.fromiter((r.action for r in records), dtype=np.uint8, count=len(records))
        observed = np.fromiter((r.observed_bit or 0 for r in records), dtype=np.uint8, count=len(records))
        return cls(actions=actions, observed=observed)

    @property
    def measured(self) -> np.ndarray:
        return self.actions != EveAction.PASSED

    @property
    def eve_bases(self) -> np.ndarray:
        """Eve's basis per photon (rectilinear where she passed)."""
        return (self.actions == EveAction.MEASURED_DIAGONAL).astype(np.uint8)

    def record(self, index: int) -> EveRecord:
        action = EveAction(int(self.actions[index]))
        if action is EveAction.PASSED:
            return EveRecord(action)
        return EveRecord(action, int(self.observed[index]))

    def action_counts(self) -> dict[EveAction, int]:
        counts = np.bincount(self.actions, minlength=len(EveAction))
        return {action: int(counts[action]) for action in EveAction}


def _choose_action(u: float, params: BiasedAttackParams) -> EveAction:
    if u < params.p1:
        return EveAction.MEASURED_RECTILINEAR
    if u < params.p1 + params.p2:
        return EveAction.MEASURED_DIAGONAL
    return EveAction.PASSED


def intercept(
    photon: Polarization, params: BiasedAttackParams, rng: RandomStream
) -> tuple[Polarization, EveRecord]:
    """Apply the biased attack to a single photon."""
    action = _choose_action(float(rng.random()), params)
    if action is EveAction.PASSED:
        return Polarization(photon), EveRecord(action)
    outcome, collapsed = measure(photon, action.basis, rng)
    return collapsed, EveRecord(action, outcome)


def intercept_many(
    photons: np.ndarray, params: BiasedAttackParams, rng: RandomStream
) -> tuple[np.ndarray, EveLog]:
    """Vectorized :func:`intercept` over a photon batch."""
    u = rng.split("action").random(photons.size)
    actions = np.full(photons.size, EveAction.PASSED, dtype=np.uint8)
    actions[u < params.p1 + params.p2] = EveAction.MEASURED_DIAGONAL
    actions[u < params.p1] = EveAction.MEASURED_RECTILINEAR

    log_stub = EveLog(actions=actions, observed=np.zeros(photons.size, dtype=np.uint8))
    outcomes, collapsed = measure_many(photons, log_stub.eve_bases, rng.split("measure"))
    measured = log_stub.measured
    resent = np.where(measured, collapsed, photons).astype(np.uint8)
    observed = np.where(measured, outcomes, 0).astype(np.uint8)
    log = EveLog(actions=actions, observed=observed)
    logger.debug("Eve intercepted %d of %d photons", int(measured.sum()), photons.size)
    return resent, log


def eve_known_fraction(
    records: Union[EveLog, Sequence[EveRecord]], alice_bases: Union[np.ndarray, Sequence[Basis]]
) -> float:
    """Fraction of positions where Eve measured in Alice's basis.

    Only those positions give her the bit deterministically; partial
    information from wrong-basis measurements is not counted.
    """
    require_same_length("records", records, "alice_bases", alice_bases)
    log = records if isinstance(records, EveLog) else EveLog.from_records(records)
    if len(log) == 0:
        return 0.0
    bases = np.asarray(alice_bases, dtype=np.uint8)
    matched = log.measured & (log.eve_bases == bases)
    return float(matched.mean())
