"""Dynamixel protocol 1.0 instruction packets (RX-28 servos).

Wire form: ``FF FF id len inst params... chk`` with ``len = len(params) + 2``
and ``chk = ~(id + len + inst + sum(params)) & 0xFF``.
"""

from __future__ import annotations

from dataclasses import dataclass

BROADCAST_ID = 0xFE

INST_PING = 0x01
INST_READ = 0x02
INST_WRITE = 0x03
INST_REG_WRITE = 0x04
INST_ACTION = 0x05
INST_RESET = 0x06
INST_SYNC_WRITE = 0x83

ADDR_GOAL_POSITION = 0x1E

MAX_PARAMS = 250


class PacketError(ValueError):
    pass


class BadHeader(PacketError):
    pass


class TruncatedPacket(PacketError):
    pass


class BadChecksum(PacketError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"checksum 0x{got:02X}, expected 0x{expected:02X}")
        self.expected = expected
        self.got = got


@dataclass(frozen=True)
class DynamixelPacket:
    id: int
    instruction: int
    params: tuple = ()

    def encode(self) -> bytes:
        return encode(self.id, self.instruction, self.params)


def checksum(id: int, length: int, instruction: int, params) -> int:
    return ~(id + length + instruction + sum(params)) & 0xFF


def encode(id: int, instruction: int, params=()) -> bytes:
    params = bytes(params)
    if not 0 <= id <= BROADCAST_ID:
        raise PacketError(f"id {id} out of range 0..254")
    if not 0 <= instruction <= 0xFF:
        raise PacketError(f"instruction {instruction} is not a byte")
    if len(params) > MAX_PARAMS:
        raise PacketError(f"{len(params)} parameters, at most {MAX_PARAMS}")
    length = len(params) + 2
    return bytes([0xFF, 0xFF, id, length, instruction]) + params + bytes(
        [checksum(id, length, instruction, params)]
    )


def decode(data: bytes) -> DynamixelPacket:
    data = bytes(data)
    if len(data) < 2 or data[0] != 0xFF or data[1] != 0xFF:
        raise BadHeader(f"packet must start with FF FF, got {to_hex(data[:2])}")
    if len(data) < 6:
        raise TruncatedPacket(f"{len(data)} bytes, a packet has at least 6")
    id, length, instruction = data[2], data[3], data[4]
    if length < 2:
        raise PacketError(f"length field {length} below minimum 2")
    if len(data) < 4 + length:
        raise TruncatedPacket(f"length field says {4 + length} bytes, got {len(data)}")
    if len(data) > 4 + length:
        raise PacketError(f"{len(data) - 4 - length} trailing bytes")
    params = data[5 : 3 + length]
    got = data[3 + length]
    expected = checksum(id, length, instruction, params)
    if got != expected:
        raise BadChecksum(expected, got)
    return DynamixelPacket(id, instruction, tuple(params))


def to_hex(data: bytes) -> str:
    return " ".join(f"{b:02X}" for b in data)


def from_hex(text: str) -> bytes:
    return bytes(int(x, 16) for x in text.split())


def goal_position_packet(id: int, position: int) -> bytes:
    """WRITE_DATA of a 10-bit goal position (little endian) at 0x1E."""
    if not 0 <= position <= 1023:
        raise PacketError(f"goal position {position} out of range 0..1023")
    return encode(id, INST_WRITE, [ADDR_GOAL_POSITION, position & 0xFF, position >> 8])
