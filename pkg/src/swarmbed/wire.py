"""Optional framed byte transport for bus envelopes.

A stream starts with one header line naming the format version, then
carries frames of a 4-byte big-endian length followed by that many bytes of
UTF-8 JSON. Each record is flat: ``topic``, ``seq``, ``stamp_s`` and then
the payload fields in their declared order (non-mapping payloads go under
``value``).
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO, Iterator

from .bus import TopicEnvelope, TopicPath
from .errors import SwarmbedError

HEADER = b"SWARMBUS/1 u32be-length utf8-json fields=topic,seq,stamp_s,payload...\n"
_LEN = struct.Struct(">I")
_RESERVED = ("topic", "seq", "stamp_s")


class WireFormatError(SwarmbedError, ValueError):
    pass


def encode_record(env: TopicEnvelope) -> bytes:
    record = {"topic": str(env.topic), "seq": env.seq, "stamp_s": env.stamp_s}
    if isinstance(env.payload, dict):
        clash = set(env.payload) & set(_RESERVED)
        if clash:
            raise WireFormatError(f"payload uses reserved field names {sorted(clash)}")
        record.update(env.payload)
    else:
        record["value"] = env.payload
    return json.dumps(record, separators=(",", ":"), allow_nan=False).encode("utf-8")


def decode_record(data: bytes) -> TopicEnvelope:
    record = json.loads(data.decode("utf-8"))
    topic = TopicPath.parse(record.pop("topic"))
    seq = record.pop("seq")
    stamp = record.pop("stamp_s")
    payload = record["value"] if list(record) == ["value"] else record
    return TopicEnvelope(topic, seq, stamp, payload)


def encode_frame(env: TopicEnvelope) -> bytes:
    body = encode_record(env)
    return _LEN.pack(len(body)) + body


class WireWriter:
    def __init__(self, stream: BinaryIO):
        self._stream = stream
        stream.write(HEADER)

    def write(self, env: TopicEnvelope) -> None:
        self._stream.write(encode_frame(env))


def read_frames(stream: BinaryIO) -> Iterator[TopicEnvelope]:
    header = stream.readline()
    if header != HEADER:
        raise WireFormatError(f"unsupported stream header {header!r}")
    while True:
        prefix = stream.read(_LEN.size)
        if not prefix:
            return
        if len(prefix) < _LEN.size:
            raise WireFormatError("truncated frame length")
        (size,) = _LEN.unpack(prefix)
        body = stream.read(size)
        if len(body) < size:
            raise WireFormatError("truncated frame body")
        yield decode_record(body)
