"""
Four-state polarization alphabet, basis measurement with collapse, and
channel noise.

A polarization is encoded as ``2 * basis + bit``, so ``basis_of`` and
``bit_of`` are a shift and a mask and whole photon batches can live in
uint8 arrays.
"""
from enum import IntEnum
from typing import Literal

import numpy as np

from app.errors import ConfigError, LengthMismatchError
from app.rng import RandomStream

Bit = Literal[0, 1]


class Basis(IntEnum):
    RECTILINEAR = 0
    DIAGONAL = 1

    def conjugate(self) -> "Basis":
        return Basis(1 - self.value)


class Polarization(IntEnum):
    HORIZONTAL = 0
    VERTICAL = 1
    DIAG45 = 2
    DIAG135 = 3

    @property
    def basis(self) -> Basis:
        return Basis(self.value >> 1)

    @property
    def bit(self) -> int:
        return self.value & 1


def check_probability(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return value


def basis_of(photon: Polarization) -> Basis:
    return Polarization(photon).basis


def bit_of(photon: Polarization) -> int:
    return Polarization(photon).bit


def encode(bit: int, basis: Basis) -> Polarization:
    """Polarization carrying ``bit`` in ``basis``."""
    if bit not in (0, 1):
        raise ConfigError(f"bit must be 0 or 1, got {bit}")
    return Polarization((int(basis) << 1) | bit)


def measure(photon: Polarization, basis: Basis, rng: RandomStream) -> tuple[int, Polarization]:
    """Measure ``photon`` in ``basis`` and return (outcome, collapsed state).

    A matched basis reads the bit back deterministically. A mismatched basis
    yields a fair coin and the photon collapses onto the measured basis.
    """
    photon = Polarization(photon)
    if photon.basis == basis:
        return photon.bit, photon
    outcome = rng.bit()
    return outcome, encode(outcome, basis)


def apply_noise(photon: Polarization, eta: float, rng: RandomStream) -> Polarization:
    """Flip the bit of ``photon`` within its basis with probability ``eta``."""
    check_probability("eta", eta)
    photon = Polarization(photon)
    if rng.random() < eta:
        return Polarization(photon.value ^ 1)
    return photon


# Batch forms used by the protocol engine. Photons, bases and bits are uint8
# arrays; every draw covers the full batch so position i always consumes the
# same random word.

def encode_many(bits: np.ndarray, bases: np.ndarray) -> np.ndarray:
    if bits.shape != bases.shape:
        raise LengthMismatchError(f"bits ({bits.size}) and bases ({bases.size}) differ in length")
    return ((bases.astype(np.uint8) << 1) | bits.astype(np.uint8)).astype(np.uint8)


def bases_of(photons: np.ndarray) -> np.ndarray:
    return (photons >> 1).astype(np.uint8)


def bits_of(photons: np.ndarray) -> np.ndarray:
    return (photons & 1).astype(np.uint8)


def measure_many(photons: np.ndarray, bases: np.ndarray, rng: RandomStream) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`measure`; returns (outcomes, collapsed photons)."""
    if photons.shape != bases.shape:
        raise LengthMismatchError(f"photons ({photons.size}) and bases ({bases.size}) differ in length")
    coins = rng.bits(photons.size)
    matched = bases_of(photons) == bases
    outcomes = np.where(matched, bits_of(photons), coins).astype(np.uint8)
    return outcomes, encode_many(outcomes, bases)


def apply_noise_many(photons: np.ndarray, eta: float, rng: RandomStream) -> np.ndarray:
    """Vectorized :func:`apply_noise`."""
    check_probability("eta", eta)
    flips = rng.bernoulli(eta, photons.size)
    return (photons ^ flips.astype(np.uint8)).astype(np.uint8)
