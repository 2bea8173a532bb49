"""Tests for bit-string helpers."""
import numpy as np
import pytest

from app.bits import from_hex, parity, require_same_length, to_hex
from app.errors import LengthMismatchError


def test_to_hex_msb_first_with_padding():
    """Bits pack most significant first; the tail byte is zero-padded."""
    assert to_hex(np.array([1, 0, 1, 0, 0, 0, 0, 1], dtype=np.uint8)) == "a1"
    assert to_hex(np.array([1, 1, 1], dtype=np.uint8)) == "e0"
    assert to_hex(np.zeros(0, dtype=np.uint8)) == ""


def test_from_hex_trims_padding():
    """Decoding keeps only the stated length."""
    assert from_hex("e0", 3).tolist() == [1, 1, 1]
    with pytest.raises(LengthMismatchError):
        from_hex("e0", 9)


def test_parity():
    """Parity is the XOR of all bits; empty strings are even."""
    assert parity(np.array([1, 1, 0, 1], dtype=np.uint8)) == 1
    assert parity(np.zeros(0, dtype=np.uint8)) == 0


def test_require_same_length():
    """Misaligned sequences raise."""
    require_same_length("a", [1, 2], "b", [3, 4])
    with pytest.raises(LengthMismatchError, match="a \\(1\\) and b \\(2\\)"):
        require_same_length("a", [1], "b", [1, 2])
