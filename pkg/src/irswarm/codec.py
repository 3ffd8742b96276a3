"""Bit-exact codec for the on-air IR frames.

Wire format, 42 bits, most-significant bit first within each field:

    preamble   8 bits   10101010
    type       2 bits   00 = beacon, 01 = heading (10 and 11 reserved)
    sender     8 bits   robot id of the emitter
    target     8 bits   robot id, 0xFF = broadcast (beacons always carry 0xFF)
    payload    8 bits   quantized heading for heading frames, 0x00 for beacons
    crc        8 bits   CRC-8 over type..payload, front-padded to 4 bytes

The CRC is the plain CRC-8: polynomial 0x07 (x^8 + x^2 + x + 1), initial
value 0x00, no reflection, no final XOR.  Its input is the 26 content bits
type..payload prefixed with six zero bits so the checksummed region is
exactly four bytes.

Decoding a corrupted word is an expected, measured event, so failures are
returned as ``DecodeFailure`` values rather than raised.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence, Union

CODEWORD_BITS = 42
PREAMBLE = 0xAA
BROADCAST = 255
MAX_ROBOT_ID = 254

CRC8_POLY = 0x07
CRC8_INIT = 0x00

_TYPE_BEACON = 0b00
_TYPE_HEADING = 0b01


@dataclass(frozen=True)
class Beacon:
    """Presence announcement carrying only the sender's id."""

    sender: int


@dataclass(frozen=True)
class Heading:
    """Quantized-heading report addressed to one peer (or broadcast)."""

    sender: int
    target: int
    heading_q: int


Frame = Union[Beacon, Heading]


class FailureKind(enum.Enum):
    BAD_PREAMBLE = "bad-preamble"
    BAD_CRC = "bad-crc"
    BAD_TYPE = "bad-type"


@dataclass(frozen=True)
class DecodeFailure:
    """A received word that could not be read back into a frame."""

    kind: FailureKind


@dataclass(frozen=True)
class Codeword:
    """Immutable 42-bit on-air word.  Bit 0 is the first bit on air."""

    word: int

    def __post_init__(self) -> None:
        if not 0 <= self.word < (1 << CODEWORD_BITS):
            raise ValueError(f"codeword out of range: {self.word:#x}")

    def bit(self, i: int) -> int:
        if not 0 <= i < CODEWORD_BITS:
            raise IndexError(f"bit index {i} out of range")
        return (self.word >> (CODEWORD_BITS - 1 - i)) & 1

    def flipped(self, i: int) -> "Codeword":
        if not 0 <= i < CODEWORD_BITS:
            raise IndexError(f"bit index {i} out of range")
        return Codeword(self.word ^ (1 << (CODEWORD_BITS - 1 - i)))

    def __or__(self, other: "Codeword") -> "Codeword":
        return Codeword(self.word | other.word)

    @property
    def bitstring(self) -> str:
        return format(self.word, f"0{CODEWORD_BITS}b")


def crc8(payload: bytes | bytearray | Sequence[int]) -> int:
    """CRC-8 (poly 0x07, init 0x00, MSB first, no reflection, no final XOR).

    Accepts raw bytes, or a 0/1 bit sequence whose length is a multiple of
    eight; a non-byte-aligned bit sequence raises ValueError.
    """
    if not isinstance(payload, (bytes, bytearray)):
        payload = pack_bits(payload)
    crc = CRC8_INIT
    for byte in payload:
        crc ^= byte
        for _ in range(8):
            if crc & 0x80:
                crc = ((crc << 1) ^ CRC8_POLY) & 0xFF
            else:
                crc = (crc << 1) & 0xFF
    return crc


def pack_bits(bits: Sequence[int]) -> bytes:
    """Pack a 0/1 sequence, MSB first.  Length must be a multiple of 8."""
    if len(bits) % 8 != 0:
        raise ValueError(f"bit length {len(bits)} is not a multiple of 8")
    out = bytearray()
    for i in range(0, len(bits), 8):
        byte = 0
        for b in bits[i : i + 8]:
            if b not in (0, 1):
                raise ValueError(f"bit value {b!r} is not 0 or 1")
            byte = (byte << 1) | b
        out.append(byte)
    return bytes(out)


def quantize_heading(theta: float) -> int:
    """Quantize a heading in [0, 360) degrees to 256 levels."""
    if not 0.0 <= theta < 360.0:
        raise ValueError(f"heading {theta!r} not in [0, 360)")
    return round(theta * 256.0 / 360.0) % 256


def dequantize_heading(q: int) -> float:
    """Inverse of quantize_heading: level q back to degrees."""
    if not 0 <= q <= 255:
        raise ValueError(f"quantized heading {q!r} not in 0..255")
    return q * 360.0 / 256.0


def _frame_fields(frame: Frame) -> tuple[int, int, int, int]:
    """(type, sender, target, payload) for a frame, validating invariants."""
    if isinstance(frame, Beacon):
        type_bits, sender, target, payload = _TYPE_BEACON, frame.sender, BROADCAST, 0
    elif isinstance(frame, Heading):
        type_bits, sender, target, payload = (
            _TYPE_HEADING,
            frame.sender,
            frame.target,
            frame.heading_q,
        )
        if not 0 <= target <= 255:
            raise ValueError(f"target {target} out of range")
        if not 0 <= payload <= 255:
            raise ValueError(f"heading_q {payload} out of range")
    else:
        raise TypeError(f"not a frame: {frame!r}")
    if not 0 <= sender <= MAX_ROBOT_ID:
        raise ValueError(f"sender {sender} is not a valid robot id")
    return type_bits, sender, target, payload


def encode_frame(frame: Frame) -> Codeword:
    """Encode a valid frame into its 42-bit codeword."""
    type_bits, sender, target, payload = _frame_fields(frame)
    crc = crc8(bytes((type_bits, sender, target, payload)))
    word = PREAMBLE
    word = (word << 2) | type_bits
    word = (word << 8) | sender
    word = (word << 8) | target
    word = (word << 8) | payload
    word = (word << 8) | crc
    return Codeword(word)


def decode_frame(codeword: Codeword) -> Frame | DecodeFailure:
    """Decode a 42-bit word back into a frame.

    Checks run in order preamble, CRC, type; the first failing check names
    the failure.  Field values of a word that passes all three are taken at
    face value, garbage senders included: validity of the claimed sender is
    the receiver's database lookup, not the codec's business.
    """
    word = codeword.word
    crc_rx = word & 0xFF
    payload = (word >> 8) & 0xFF
    target = (word >> 16) & 0xFF
    sender = (word >> 24) & 0xFF
    type_bits = (word >> 32) & 0b11
    preamble = (word >> 34) & 0xFF

    if preamble != PREAMBLE:
        return DecodeFailure(FailureKind.BAD_PREAMBLE)
    if crc8(bytes((type_bits, sender, target, payload))) != crc_rx:
        return DecodeFailure(FailureKind.BAD_CRC)
    if type_bits == _TYPE_BEACON:
        return Beacon(sender=sender)
    if type_bits == _TYPE_HEADING:
        return Heading(sender=sender, target=target, heading_q=payload)
    return DecodeFailure(FailureKind.BAD_TYPE)
