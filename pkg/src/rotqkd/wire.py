"""Length-prefixed binary framing for the public sifting channel.

Frame layout::

    [length: u32 LE][type: u8][payload: length bytes]

``length`` counts payload bytes only. Bit strings are sent as a u32 LE bit
count followed by the bits packed most-significant-bit first; unused bits
in the last byte must be zero.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterator, Union

import numpy as np

_HEADER = struct.Struct("<IB")
_U32 = struct.Struct("<I")
_QBER = struct.Struct("<dII")


class FrameError(ValueError):
    """Malformed, truncated or unknown frame."""


class MessageType(enum.IntEnum):
    BASIS_ANNOUNCE = 0x01
    DETECTED_MASK = 0x02
    SAMPLE_INDICES = 0x03
    SAMPLE_BITS = 0x04
    QBER_REPORT = 0x05


def _bit_tuple(values) -> tuple[int, ...]:
    out = tuple(int(v) for v in values)
    if any(v not in (0, 1) for v in out):
        raise ValueError("bit values must be 0 or 1")
    return out


@dataclass(frozen=True)
class BasisAnnounce:
    """Per-round basis choices, 0 = Z and 1 = Y."""

    bases: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bases", _bit_tuple(self.bases))


@dataclass(frozen=True)
class DetectedMask:
    detected: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "detected", _bit_tuple(self.detected))


@dataclass(frozen=True)
class SampleIndices:
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(not 0 <= i < 2**32 for i in idx):
            raise ValueError("sample indices must fit in u32")
        object.__setattr__(self, "indices", idx)


@dataclass(frozen=True)
class SampleBits:
    bits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", _bit_tuple(self.bits))


@dataclass(frozen=True)
class QberReportMessage:
    qber: float
    sample_size: int
    error_count: int

    def __post_init__(self):
        for name in ("sample_size", "error_count"):
            if not 0 <= getattr(self, name) < 2**32:
                raise ValueError(f"{name} must fit in u32")


Message = Union[BasisAnnounce, DetectedMask, SampleIndices, SampleBits, QberReportMessage]

_BIT_FIELDS = {
    BasisAnnounce: (MessageType.BASIS_ANNOUNCE, "bases"),
    DetectedMask: (MessageType.DETECTED_MASK, "detected"),
    SampleBits: (MessageType.SAMPLE_BITS, "bits"),
}
_BIT_TYPES = {tag: (cls, field) for cls, (tag, field) in _BIT_FIELDS.items()}


def _pack_bits(bits: tuple[int, ...]) -> bytes:
    packed = np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="big").tobytes() if bits else b""
    return _U32.pack(len(bits)) + packed


def _unpack_bits(payload: bytes) -> tuple[int, ...]:
    if len(payload) < _U32.size:
        raise FrameError("bit payload shorter than its count field")
    (count,) = _U32.unpack_from(payload)
    body = payload[_U32.size :]
    if len(body) != (count + 7) // 8:
        raise FrameError(f"bit payload holds {len(body)} bytes for {count} bits")
    bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8), bitorder="big")
    if bits[count:].any():
        raise FrameError("nonzero padding bits")
    return tuple(int(b) for b in bits[:count])


def encode(msg: Message) -> bytes:
    """Serialize one message into a complete frame."""
    if type(msg) in _BIT_FIELDS:
        tag, field = _BIT_FIELDS[type(msg)]
        payload = _pack_bits(getattr(msg, field))
    elif isinstance(msg, SampleIndices):
        tag = MessageType.SAMPLE_INDICES
        payload = _U32.pack(len(msg.indices)) + struct.pack(f"<{len(msg.indices)}I", *msg.indices)
    elif isinstance(msg, QberReportMessage):
        tag = MessageType.QBER_REPORT
        payload = _QBER.pack(msg.qber, msg.sample_size, msg.error_count)
    else:
        raise TypeError(f"not a channel message: {msg!r}")
    return _HEADER.pack(len(payload), tag) + payload


def _decode_payload(tag: int, payload: bytes) -> Message:
    try:
        kind = MessageType(tag)
    except ValueError:
        raise FrameError(f"unknown message type 0x{tag:02x}") from None
    if kind in _BIT_TYPES:
        cls, _ = _BIT_TYPES[kind]
        return cls(_unpack_bits(payload))
    if kind == MessageType.SAMPLE_INDICES:
        if len(payload) < _U32.size:
            raise FrameError("index payload shorter than its count field")
        (count,) = _U32.unpack_from(payload)
        if len(payload) != _U32.size * (count + 1):
            raise FrameError(f"index payload length {len(payload)} does not match count {count}")
        return SampleIndices(struct.unpack_from(f"<{count}I", payload, _U32.size))
    if len(payload) != _QBER.size:
        raise FrameError(f"QBER report payload must be {_QBER.size} bytes, got {len(payload)}")
    return QberReportMessage(*_QBER.unpack(payload))


def decode(frame: bytes) -> Message:
    """Parse exactly one frame; trailing or missing bytes are errors."""
    frame = bytes(frame)
    if len(frame) < _HEADER.size:
        raise FrameError("frame shorter than header")
    length, tag = _HEADER.unpack_from(frame)
    if len(frame) != _HEADER.size + length:
        raise FrameError(f"declared payload length {length} but frame carries {len(frame) - _HEADER.size}")
    return _decode_payload(tag, frame[_HEADER.size :])


def iter_frames(buffer: bytes) -> Iterator[Message]:
    """Decode a concatenation of frames."""
    pos = 0
    while pos < len(buffer):
        if len(buffer) - pos < _HEADER.size:
            raise FrameError("truncated frame header")
        (length,) = _U32.unpack_from(buffer, pos)
        end = pos + _HEADER.size + length
        if end > len(buffer):
            raise FrameError("truncated frame payload")
        yield decode(buffer[pos:end])
        pos = end


def write_message(stream: BinaryIO, msg: Message) -> int:
    return stream.write(encode(msg))


def read_message(stream: BinaryIO) -> Message | None:
    """Read one frame from a byte stream; ``None`` on clean end of stream."""
    header = stream.read(_HEADER.size)
    if not header:
        return None
    if len(header) < _HEADER.size:
        raise FrameError("truncated frame header")
    (length,) = _U32.unpack_from(header)
    payload = stream.read(length)
    if len(payload) != length:
        raise FrameError("truncated frame payload")
    return decode(header + payload)
