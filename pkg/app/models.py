"""
Pydantic models for session parameters, attack parameters and the
transcript JSON document.
"""
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.bits import to_hex
from app.config import settings
from app.rng import SEED_MAX


class Verdict(str, Enum):
    ACCEPT = "Accept"
    ABORT = "Abort"


class AbortReason(str, Enum):
    INSUFFICIENT_RECT_SAMPLE = "insufficient_rect_sample"
    INSUFFICIENT_DIAG_SAMPLE = "insufficient_diag_sample"
    ERROR_RATE = "error_rate"
    RECONCILIATION_FAILED = "reconciliation_failed"
    KEY_TOO_SHORT = "key_too_short"


class BiasedAttackParams(BaseModel):
    """Eve's per-photon strategy: rectilinear with p1, diagonal with p2, else pass."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    p1: float = Field(default=0.0, ge=0.0, le=1.0)
    p2: float = Field(default=0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _check_total(self) -> "BiasedAttackParams":
        if self.p1 + self.p2 > 1.0 + 1e-12:
            raise ValueError(f"p1 + p2 must not exceed 1, got {self.p1 + self.p2}")
        return self

    @property
    def p_pass(self) -> float:
        return max(0.0, 1.0 - self.p1 - self.p2)

    @property
    def is_passive(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0


class ProtocolConfig(BaseModel):
    """All parameters of one session.

    ``epsilon`` is accepted on input as shorthand for equal biases.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    n: int = Field(default=100_000, ge=1)
    epsilon_alice: float = 0.5
    epsilon_bob: float = 0.5
    e_max: float = Field(default=0.03, ge=0.0, lt=0.5)
    m1: int = Field(default=1000, ge=1)
    m2: int = Field(default=1000, ge=1)
    s: int = Field(default=100, ge=1)
    eta: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = Field(default=0, ge=0, le=SEED_MAX)
    delta: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    confidence: float = Field(default_factory=lambda: settings.delta_confidence, gt=0.0, lt=1.0)
    block_size: Optional[int] = Field(default=None, ge=2)

    @model_validator(mode="before")
    @classmethod
    def _expand_epsilon(cls, data):
        if isinstance(data, dict) and "epsilon" in data:
            data = dict(data)
            epsilon = data.pop("epsilon")
            if epsilon is not None:
                data.setdefault("epsilon_alice", epsilon)
                data.setdefault("epsilon_bob", epsilon)
        return data

    @field_validator("epsilon_alice", "epsilon_bob")
    @classmethod
    def _check_bias(cls, value: float) -> float:
        # epsilon = 0 is the singular limit where Eve can follow the dominant basis
        if not 0.0 < value <= 0.5:
            raise ValueError(f"bias must satisfy 0 < epsilon <= 1/2, got {value}")
        return value

    @property
    def sift_probability(self) -> float:
        return self.epsilon_alice * self.epsilon_bob + (1 - self.epsilon_alice) * (1 - self.epsilon_bob)

    def with_seed(self, seed: int) -> "ProtocolConfig":
        return self.model_validate({**self.model_dump(), "seed": seed})


# ---------------------------------------------------------------------------
# Transcript document (schema_version 1, see docs/schemas.md)
# ---------------------------------------------------------------------------

TRANSCRIPT_SCHEMA_VERSION = 1


class BitString(BaseModel):
    length: int
    hex: str

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "BitString":
        return cls(length=int(bits.size), hex=to_hex(bits))


class EveRecordsDocument(BaseModel):
    length: int
    measured: BitString
    eve_bases: BitString
    observed_bits: BitString


class SiftedDocument(BaseModel):
    rect_count: int
    diag_count: int
    discarded_count: int


class PopulationDocument(BaseModel):
    rect_size: int
    rect_errors: int
    diag_size: int
    diag_errors: int
    e1: float
    e2: float
    e_bar: float


class EstimateDocument(BaseModel):
    m1: int
    m2: int
    r1: int
    r2: int
    e1_hat: float
    e2_hat: float
    e_bar_hat: float
    sample_indices: List[int]


class PlanDocument(BaseModel):
    n: int
    l: int
    s: int
    out_len: int
    viable: bool
    info_bound: float


class HashDocument(BaseModel):
    n: int
    k: int
    diagonals: BitString


class SummaryDocument(BaseModel):
    sift_fraction: float
    raw_key_len: int
    reconciled_len: int
    reconciled_fraction: float
    final_key_len: int
    eve_known_fraction: float


class TranscriptDocument(BaseModel):
    schema_version: int = TRANSCRIPT_SCHEMA_VERSION
    config: ProtocolConfig
    attack: Optional[BiasedAttackParams] = None
    alice_bits: BitString
    alice_bases: BitString
    bob_bases: BitString
    bob_outcomes: BitString
    eve_records: Optional[EveRecordsDocument] = None
    sifted: SiftedDocument
    population: PopulationDocument
    estimate: Optional[EstimateDocument] = None
    verdict_refined: Verdict
    verdict_naive: Verdict
    abort_reason: Optional[AbortReason] = None
    raw_key_alice: BitString
    raw_key_bob: BitString
    reconciled_key: Optional[BitString] = None
    leakage_bits: Optional[int] = None
    parity_bits: Optional[int] = None
    plan: Optional[PlanDocument] = None
    hash: Optional[HashDocument] = None
    final_key: Optional[BitString] = None
    eve_expected_info_bound: Optional[float] = None
    summary: SummaryDocument


# ---------------------------------------------------------------------------
# Session summaries and the archive
# ---------------------------------------------------------------------------

class SessionSummary(BaseModel):
    seed: int
    config: ProtocolConfig
    attack: Optional[BiasedAttackParams] = None
    verdict_refined: Verdict
    verdict_naive: Verdict
    abort_reason: Optional[AbortReason] = None
    e1_hat: Optional[float] = None
    e2_hat: Optional[float] = None
    e_bar_hat: Optional[float] = None
    population_e_bar: float
    sift_fraction: float
    raw_key_len: int
    reconciled_len: int
    final_key_len: int
    leakage_bits: Optional[int] = None
    digest: str


class ArchivedSession(BaseModel):
    id: str
    created_at: Optional[datetime] = None
    summary: SessionSummary


# ---------------------------------------------------------------------------
# Command-line runs
# ---------------------------------------------------------------------------

INTEGER_PARAMETERS = frozenset({"n", "m1", "m2", "s"})
SWEEPABLE_PARAMETERS = frozenset(
    {"n", "epsilon", "epsilon_alice", "epsilon_bob", "e_max", "m1", "m2", "s", "eta", "delta", "p1", "p2"}
)


class SweepAxis(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    start: float
    stop: float
    steps: int = Field(ge=2)
    scale: Literal["linear", "log"] = "linear"

    @field_validator("name")
    @classmethod
    def _check_name(cls, value: str) -> str:
        if value not in SWEEPABLE_PARAMETERS:
            raise ValueError(f"unknown sweep parameter {value!r}; choose from {sorted(SWEEPABLE_PARAMETERS)}")
        return value

    @model_validator(mode="after")
    def _check_log_range(self) -> "SweepAxis":
        if self.scale == "log" and (self.start <= 0 or self.stop <= 0):
            raise ValueError("log-scaled axes need positive start and stop")
        return self

    def values(self) -> list[float]:
        grid = np.geomspace if self.scale == "log" else np.linspace
        points = grid(self.start, self.stop, self.steps)
        if self.name in INTEGER_PARAMETERS:
            return [int(round(v)) for v in points]
        return [float(v) for v in points]


class RunSpec(BaseModel):
    command: Literal["run", "sweep", "compare", "hash-check"]
    config: ProtocolConfig = ProtocolConfig()
    attack: Optional[BiasedAttackParams] = None
    axes: List[SweepAxis] = []
    pairs: List[Tuple[float, float]] = []
    trials: int = Field(default=1, ge=1)
    output: Optional[Path] = None
    format: Literal["json", "csv"] = "csv"
    archive: Optional[Path] = None
    hash_n: int = Field(default=4, ge=1)
    hash_k: int = Field(default=2, ge=1)
    hash_mode: Literal["exhaustive", "sampled"] = "exhaustive"

    @model_validator(mode="after")
    def _check_command_inputs(self) -> "RunSpec":
        if self.command == "sweep" and not self.axes:
            raise ValueError("sweep needs at least one axis")
        if self.command == "compare" and not self.pairs:
            raise ValueError("compare needs at least one (p1, p2) pair")
        return self
