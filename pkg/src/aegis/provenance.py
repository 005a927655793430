"""Tamper-evident, hash-chained ledger of pipeline events.

Records are canonically serialized (sorted keys, no whitespace, UTF-8, no
floats) so their SHA-256 hashes are reproducible bit-for-bit in any
language.  Each record commits to the previous record's hash; verification
re-hashes the whole chain.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

GENESIS_HASH = "0" * 64

MAX_DEPTH = 32


class ProvenanceError(Exception):
    pass


class FloatRejected(ProvenanceError):
    pass


class DepthExceeded(ProvenanceError):
    pass


class ParseError(ProvenanceError):
    pass


class VerificationFailed(ProvenanceError):
    def __init__(self, violation: "Violation"):
        super().__init__(f"ledger invalid: {violation.kind} at record {violation.index}")
        self.violation = violation


AGENTS = ("planner", "generator", "reviewer", "integrator", "protector", "human", "system")


def _check_tree(value, depth: int) -> None:
    if depth > MAX_DEPTH:
        raise DepthExceeded(f"nesting deeper than {MAX_DEPTH}")
    if isinstance(value, float):
        raise FloatRejected("floats are not permitted in ledger values; store scaled integers")
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str):
                raise ParseError("object keys must be strings")
            _check_tree(v, depth + 1)
    elif isinstance(value, (list, tuple)):
        for v in value:
            _check_tree(v, depth + 1)
    elif value is not None and not isinstance(value, (str, int, bool)):
        raise ParseError(f"unsupported value type {type(value).__name__}")


def canonical_serialize(value) -> bytes:
    """Canonical JSON bytes: bytewise-sorted keys, no whitespace, UTF-8."""
    _check_tree(value, 0)
    return json.dumps(
        value, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def object_hash(value) -> str:
    """SHA-256 hex of the canonical serialization of `value`."""
    return hashlib.sha256(canonical_serialize(value)).hexdigest()


EMPTY_OBJECT_HASH = object_hash({})


@dataclass(frozen=True)
class LedgerRecord:
    index: int
    timestamp: int  # UTC milliseconds
    session_id: str
    agent: str
    action: str
    input_hash: str
    output_hash: str
    params: dict
    prev_hash: str
    record_hash: str

    def body(self) -> dict:
        """The hashed portion of the record (everything but record_hash)."""
        return {
            "index": self.index,
            "timestamp": self.timestamp,
            "session_id": self.session_id,
            "agent": self.agent,
            "action": self.action,
            "input_hash": self.input_hash,
            "output_hash": self.output_hash,
            "params": self.params,
            "prev_hash": self.prev_hash,
        }

    def as_dict(self) -> dict:
        d = self.body()
        d["record_hash"] = self.record_hash
        return d


@dataclass(frozen=True)
class Violation:
    index: int
    kind: str  # hash_mismatch | chain_break | index_gap


@dataclass
class Ledger:
    session_id: str
    records: list[LedgerRecord] = field(default_factory=list)

    def last_hash(self) -> str:
        return self.records[-1].record_hash if self.records else GENESIS_HASH


def append(
    ledger: Ledger,
    *,
    timestamp: int,
    agent: str,
    action: str,
    input_obj=None,
    output_obj=None,
    params: dict | None = None,
) -> Ledger:
    """Return a new ledger extended by one record; the input is not mutated."""
    if agent not in AGENTS:
        raise ProvenanceError(f"unknown agent {agent!r}")
    params = dict(params or {})
    record = _seal(
        index=len(ledger.records),
        timestamp=int(timestamp),
        session_id=ledger.session_id,
        agent=agent,
        action=action,
        input_hash=object_hash(input_obj) if input_obj is not None else EMPTY_OBJECT_HASH,
        output_hash=object_hash(output_obj) if output_obj is not None else EMPTY_OBJECT_HASH,
        params=params,
        prev_hash=ledger.last_hash(),
    )
    return Ledger(ledger.session_id, ledger.records + [record])


def _seal(**fields) -> LedgerRecord:
    body = dict(fields)
    record_hash = hashlib.sha256(canonical_serialize(body)).hexdigest()
    return LedgerRecord(record_hash=record_hash, **fields)


def verify(ledger: Ledger) -> Violation | None:
    """Full re-hash scan; returns the first violation, or None when intact."""
    prev = GENESIS_HASH
    for i, rec in enumerate(ledger.records):
        if rec.index != i:
            return Violation(i, "index_gap")
        if rec.prev_hash != prev:
            return Violation(i, "chain_break")
        expected = hashlib.sha256(canonical_serialize(rec.body())).hexdigest()
        if rec.record_hash != expected:
            return Violation(i, "hash_mismatch")
        prev = rec.record_hash
    return None


def export(ledger: Ledger) -> bytes:
    """Newline-delimited canonical-JSON records (".provlog" format)."""
    lines = [canonical_serialize(rec.as_dict()) for rec in ledger.records]
    return b"".join(line + b"\n" for line in lines)


_RECORD_KEYS = {
    "index",
    "timestamp",
    "session_id",
    "agent",
    "action",
    "input_hash",
    "output_hash",
    "params",
    "prev_hash",
    "record_hash",
}


def import_ledger(data: bytes, verify_chain: bool = True) -> Ledger:
    """Parse a .provlog byte stream; verifies the chain on load."""
    records: list[LedgerRecord] = []
    session_id = ""
    for lineno, raw in enumerate(data.split(b"\n")):
        if raw == b"":
            continue
        try:
            obj = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        if not isinstance(obj, dict) or set(obj) != _RECORD_KEYS:
            raise ParseError(f"line {lineno}: not a ledger record")
        try:
            if canonical_serialize(obj) != raw:
                raise ParseError(f"line {lineno}: not in canonical form")
            rec = LedgerRecord(**obj)
        except ProvenanceError:
            raise
        except Exception as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        records.append(rec)
        session_id = rec.session_id
    ledger = Ledger(session_id, records)
    if verify_chain:
        violation = verify(ledger)
        if violation is not None:
            raise VerificationFailed(violation)
    return ledger
