"""
Bit-string helpers: hex packing (most significant bit first) and parities.
"""
import numpy as np

from app.errors import LengthMismatchError


def to_hex(bits: np.ndarray) -> str:
    """Pack a 0/1 array into lowercase hex, zero-padded at the end to a byte."""
    if bits.size == 0:
        return ""
    return np.packbits(bits.astype(np.uint8)).tobytes().hex()


def from_hex(text: str, length: int) -> np.ndarray:
    """Inverse of :func:`to_hex` for a string of ``length`` bits."""
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    bits = np.unpackbits(raw)
    if bits.size < length:
        raise LengthMismatchError(f"hex string holds {bits.size} bits, expected {length}")
    return bits[:length].astype(np.uint8)


def parity(bits: np.ndarray) -> int:
    return int(np.bitwise_xor.reduce(bits.astype(np.uint8))) if bits.size else 0


def require_same_length(name_a: str, a, name_b: str, b) -> None:
    if len(a) != len(b):
        raise LengthMismatchError(f"{name_a} ({len(a)}) and {name_b} ({len(b)}) differ in length")
