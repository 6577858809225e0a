"""Messages, byte accounting and round transcripts.

Party 0 is the federator; clients are 1..n.  A message's wire size is a
fixed header plus its field elements at the modulus byte width, reals at
8 bytes and party ids at 4 bytes.  The transcript file stores every message
as a length-prefixed binary record (self-describing, so it can be decoded
again) next to a JSON index with per-party byte counts, verdicts and
exclusions.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .mac import TaggedArray

FEDERATOR = 0
HEADER_BYTES = 16  # iteration u32, step u8, seq u16, sender u16, receiver u16, kind u8, length u32

KINDS = (
    "GlobalModel",
    "FederatorUpdate",
    "MaskedUpdate",
    "OpeningShare",
    "OpenedValues",
    "NormShare",
    "Exclusion",
    "AggShare",
)

# payload kinds a step may carry
LEGAL = {
    1: {"GlobalModel"},
    2: {"FederatorUpdate", "MaskedUpdate"},
    3: {"OpeningShare", "OpenedValues", "NormShare", "Exclusion"},
    4: {"OpeningShare", "OpenedValues"},
    5: {"AggShare"},
}


class Real(np.ndarray):
    """Marker view for real-valued payload arrays."""


def real(x) -> Real:
    return np.asarray(x, dtype=np.float64).view(Real)


@dataclass
class Message:
    sender: int
    receiver: int
    g: int
    step: int
    seq: int
    kind: str
    payload: dict[str, Any]

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown payload kind {self.kind!r}")
        if self.kind not in LEGAL.get(self.step, ()):
            raise ValueError(f"{self.kind} is not legal in step {self.step}")

    def nbytes(self, width: int) -> int:
        return HEADER_BYTES + _payload_size(self.payload, width)


def _payload_size(obj, width: int) -> int:
    if isinstance(obj, Real):
        return 8 * obj.size
    if isinstance(obj, TaggedArray):
        return 2 * width * int(np.size(obj.values))
    if isinstance(obj, np.ndarray):
        return width * obj.size
    if isinstance(obj, dict):
        return sum(_payload_size(v, width) for v in obj.values())
    if isinstance(obj, (tuple, list)):
        return 4 * len(obj)
    if isinstance(obj, str):
        return 0  # round names are implied by the round tag
    if isinstance(obj, (int, np.integer)):
        return width
    if isinstance(obj, float):
        return 8
    raise TypeError(f"cannot size {type(obj).__name__}")


# ---------------------------------------------------------------------------
# binary encoding
# ---------------------------------------------------------------------------


def _enc(buf: io.BytesIO, obj, width: int) -> None:
    if isinstance(obj, Real):
        buf.write(b"R" + struct.pack(">B", obj.ndim))
        buf.write(b"".join(struct.pack(">I", s) for s in obj.shape))
        buf.write(np.ascontiguousarray(obj, dtype=">f8").tobytes())
    elif isinstance(obj, TaggedArray):
        buf.write(b"T")
        _enc(buf, np.asarray(obj.values, dtype=object), width)
        _enc(buf, np.asarray(obj.tags, dtype=object), width)
    elif isinstance(obj, np.ndarray):
        arr = np.asarray(obj, dtype=object)
        buf.write(b"F" + struct.pack(">B", arr.ndim))
        buf.write(b"".join(struct.pack(">I", s) for s in arr.shape))
        buf.write(b"".join(int(v).to_bytes(width, "big") for v in arr.ravel()))
    elif isinstance(obj, dict):
        buf.write(b"D" + struct.pack(">I", len(obj)))
        for key in sorted(obj, key=str):
            kb = str(key).encode()
            buf.write(struct.pack(">B", isinstance(key, int)) + struct.pack(">H", len(kb)) + kb)
            _enc(buf, obj[key], width)
    elif isinstance(obj, (tuple, list)):
        buf.write(b"L" + struct.pack(">I", len(obj)))
        buf.write(b"".join(struct.pack(">I", int(v)) for v in obj))
    elif isinstance(obj, str):
        sb = obj.encode()
        buf.write(b"S" + struct.pack(">H", len(sb)) + sb)
    elif isinstance(obj, (int, np.integer)):
        buf.write(b"I" + int(obj).to_bytes(width, "big"))
    elif isinstance(obj, float):
        buf.write(b"X" + struct.pack(">d", obj))
    else:
        raise TypeError(f"cannot encode {type(obj).__name__}")


def _shape(buf: io.BytesIO) -> tuple[int, ...]:
    (ndim,) = struct.unpack(">B", buf.read(1))
    return tuple(struct.unpack(">I", buf.read(4))[0] for _ in range(ndim))


def _dec(buf: io.BytesIO, width: int, p: int):
    tag = buf.read(1)
    if tag == b"R":
        shape = _shape(buf)
        count = int(np.prod(shape)) if shape else 1
        return real(np.frombuffer(buf.read(8 * count), dtype=">f8").astype(np.float64).reshape(shape))
    if tag == b"T":
        vals = _dec(buf, width, p)
        tags = _dec(buf, width, p)
        return TaggedArray(vals, tags, p)
    if tag == b"F":
        shape = _shape(buf)
        count = int(np.prod(shape)) if shape else 1
        raw = buf.read(width * count)
        vals = [int.from_bytes(raw[i : i + width], "big") for i in range(0, width * count, width)]
        return np.array(vals, dtype=object).reshape(shape)
    if tag == b"D":
        (count,) = struct.unpack(">I", buf.read(4))
        out = {}
        for _ in range(count):
            (is_int,) = struct.unpack(">B", buf.read(1))
            (ln,) = struct.unpack(">H", buf.read(2))
            key = buf.read(ln).decode()
            out[int(key) if is_int else key] = _dec(buf, width, p)
        return out
    if tag == b"L":
        (count,) = struct.unpack(">I", buf.read(4))
        return tuple(struct.unpack(">I", buf.read(4))[0] for _ in range(count))
    if tag == b"S":
        (ln,) = struct.unpack(">H", buf.read(2))
        return buf.read(ln).decode()
    if tag == b"I":
        return int.from_bytes(buf.read(width), "big")
    if tag == b"X":
        return struct.unpack(">d", buf.read(8))[0]
    raise ValueError(f"bad record tag {tag!r}")


def encode_message(msg: Message, width: int) -> bytes:
    body = io.BytesIO()
    _enc(body, msg.payload, width)
    payload = body.getvalue()
    head = struct.pack(
        ">IBHHHBI", msg.g, msg.step, msg.seq, msg.sender, msg.receiver, KINDS.index(msg.kind), len(payload)
    )
    return head + payload


def decode_message(data: bytes, width: int, p: int) -> Message:
    g, step, seq, sender, receiver, kind, ln = struct.unpack(">IBHHHBI", data[:16])
    payload = _dec(io.BytesIO(data[16 : 16 + ln]), width, p)
    return Message(sender, receiver, g, step, seq, KINDS[kind], payload)


# ---------------------------------------------------------------------------
# transcript
# ---------------------------------------------------------------------------


@dataclass
class RoundTranscript:
    g: int
    width: int
    messages: list[Message] = field(default_factory=list)
    sent: dict[int, int] = field(default_factory=dict)
    received: dict[int, int] = field(default_factory=dict)
    verdicts: list[dict] = field(default_factory=list)
    excluded: list[int] = field(default_factory=list)
    aborted: str | None = None
    _seq: int = 0

    def post(self, sender: int, receiver: int, step: int, kind: str, payload: dict) -> Message:
        msg = Message(sender, receiver, self.g, step, self._seq, kind, payload)
        self._seq += 1
        self.messages.append(msg)
        size = msg.nbytes(self.width)
        self.sent[sender] = self.sent.get(sender, 0) + size
        self.received[receiver] = self.received.get(receiver, 0) + size
        return msg

    def verdict(self, step: int, kind: str, sender: int, ok: bool, **extra) -> None:
        self.verdicts.append({"step": step, "kind": kind, "sender": sender, "ok": bool(ok), **extra})

    def bytes_of(self, party: int) -> int:
        return self.sent.get(party, 0) + self.received.get(party, 0)

    def select(self, *, sender=None, receiver=None, kind=None, step=None) -> list[Message]:
        return [
            m
            for m in self.messages
            if (sender is None or m.sender == sender)
            and (receiver is None or m.receiver == receiver)
            and (kind is None or m.kind == kind)
            and (step is None or m.step == step)
        ]

    def index(self) -> dict:
        return {
            "iteration": self.g,
            "messages": len(self.messages),
            "bytes_sent": {str(k): v for k, v in sorted(self.sent.items())},
            "bytes_received": {str(k): v for k, v in sorted(self.received.items())},
            "verdicts": self.verdicts,
            "excluded": sorted(self.excluded),
            "aborted": self.aborted,
        }

    def write(self, directory: str | Path, width: int | None = None) -> Path:
        width = width or self.width
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"round_{self.g}.bin"
        with open(path, "wb") as fh:
            for msg in self.messages:
                rec = encode_message(msg, width)
                fh.write(struct.pack(">I", len(rec)) + rec)
        with open(directory / f"round_{self.g}.json", "w") as fh:
            json.dump(self.index(), fh, indent=1, sort_keys=True)
        return path


def read_transcript(path: str | Path, p: int) -> list[Message]:
    width = (p.bit_length() + 7) // 8
    data = Path(path).read_bytes()
    out = []
    pos = 0
    while pos < len(data):
        (ln,) = struct.unpack(">I", data[pos : pos + 4])
        out.append(decode_message(data[pos + 4 : pos + 4 + ln], width, p))
        pos += 4 + ln
    return out
