"""Shared domain types: keys, operations, transaction descriptors, histories.

Keys are 64-bit ints and values are fixed-length byte strings.  Transaction
descriptors are owned by exactly one worker thread for their lifetime; the
only shared mutable object here is History, whose recording is serialized
behind a lock (recording is an opt-in mode used at desk scale only).
"""

from __future__ import annotations

import threading

# Operation kinds.  Plain ints keep the hot path cheap.
READ = 0
BLIND_WRITE = 1
READ_MODIFY_WRITE = 2
INSERT = 3

OP_NAMES = {READ: "READ", BLIND_WRITE: "WRITE", READ_MODIFY_WRITE: "RMW", INSERT: "INSERT"}

# Transaction states.
ACTIVE = 0
COMMITTED = 1
ABORTED = 2

# Outcome kinds.
COMMITTED_INSTALLED = 1
COMMITTED_OMITTED = 2
OUTCOME_ABORTED = 3

OUTCOME_NAMES = {
    COMMITTED_INSTALLED: "COMMIT",
    COMMITTED_OMITTED: "OMIT",
    OUTCOME_ABORTED: "ABORT",
}


class Operation:
    __slots__ = ("kind", "key", "value")

    def __init__(self, kind: int, key: int, value: bytes | None = None):
        if kind == READ and value is not None:
            raise ValueError("read operations carry no value")
        if kind != READ and value is None:
            raise ValueError("write operations carry exactly one value")
        self.kind = kind
        self.key = key
        self.value = value

    def __repr__(self):
        return f"Operation({OP_NAMES[self.kind]}, {self.key}, {self.value!r})"


class VersionMeta:
    """Identity of one installed version: protocol word, writer id, epoch.

    ``tid_word`` is the Silo TID for single-version storage and the
    timestamp word for multi-version storage.  Writer id 0 is reserved for
    the initial population.
    """

    __slots__ = ("tid_word", "writer", "write_epoch")

    def __init__(self, tid_word: int, writer: int, write_epoch: int):
        self.tid_word = tid_word
        self.writer = writer
        self.write_epoch = write_epoch

    def __eq__(self, other):
        return (
            isinstance(other, VersionMeta)
            and self.tid_word == other.tid_word
            and self.writer == other.writer
            and self.write_epoch == other.write_epoch
        )

    def __repr__(self):
        return f"VersionMeta(0x{self.tid_word:x}, writer={self.writer}, epoch={self.write_epoch})"


class ReadEntry:
    __slots__ = ("key", "meta")

    def __init__(self, key: int, meta: VersionMeta):
        self.key = key
        self.meta = meta


class WriteEntry:
    __slots__ = ("key", "value", "is_blind")

    def __init__(self, key: int, value: bytes, is_blind: bool):
        self.key = key
        self.value = value
        self.is_blind = is_blind


class TxnOutcome:
    __slots__ = ("kind", "commit_epoch")

    def __init__(self, kind: int, commit_epoch: int | None = None):
        self.kind = kind
        self.commit_epoch = commit_epoch

    @property
    def committed(self) -> bool:
        return self.kind in (COMMITTED_INSTALLED, COMMITTED_OMITTED)

    def __repr__(self):
        return f"TxnOutcome({OUTCOME_NAMES[self.kind]}, epoch={self.commit_epoch})"


class Txn:
    """Per-transaction descriptor; owned by a single worker thread.

    ``read_set`` keeps the exact version identity observed per key and
    ``read_cache`` makes repeated reads of the same key repeatable within
    the transaction.  ``write_set`` maps key -> WriteEntry (unique keys,
    last write wins).
    """

    __slots__ = ("txn_id", "epoch", "read_set", "write_set", "read_cache", "state")

    def __init__(self, txn_id: int, epoch: int):
        self.txn_id = txn_id
        self.epoch = epoch
        self.read_set: list[ReadEntry] = []
        self.write_set: dict[int, WriteEntry] = {}
        self.read_cache: dict[int, bytes] = {}
        self.state = ACTIVE

    def has_read(self, key: int) -> bool:
        return key in self.read_cache

    def has_blind_write(self) -> bool:
        for w in self.write_set.values():
            if w.is_blind:
                return True
        return False


def classify_write(txn: Txn, key: int) -> bool:
    """True iff a write to ``key`` by this transaction is blind.

    A write is blind when the transaction has not read the key before;
    once a key is read, no later write to it can be blind.
    """
    if txn.state != ACTIVE:
        raise ValueError("classify_write on a terminated transaction")
    return not txn.has_read(key)


class HistoryError(Exception):
    pass


class History:
    """Ordered record of operations and terminations for the verifier.

    Events are ``(wall_step, txn_id, kind, key, aux)`` tuples where ``aux``
    is the observed writer id for reads and the written value for writes.
    Termination events live in ``outcomes`` / ``epoch_of`` and also appear
    in ``events`` with key=-1 so wall-clock position is preserved.
    """

    def __init__(self):
        self.events: list[tuple[int, int, int, int, object]] = []
        self.outcomes: dict[int, TxnOutcome] = {}
        self.epoch_of: dict[int, int] = {}
        self._step = 0
        self._lock = threading.Lock()

    def _next_step(self) -> int:
        self._step += 1
        return self._step

    def record_op(self, txn_id: int, kind: int, key: int, aux) -> None:
        with self._lock:
            if txn_id in self.outcomes:
                raise HistoryError(f"event after termination of txn {txn_id}")
            self.events.append((self._next_step(), txn_id, kind, key, aux))

    def record_end(self, txn_id: int, outcome: TxnOutcome, epoch: int) -> None:
        with self._lock:
            if txn_id in self.outcomes:
                raise HistoryError(f"duplicate termination of txn {txn_id}")
            self.outcomes[txn_id] = outcome
            self.epoch_of[txn_id] = epoch
            self.events.append((self._next_step(), txn_id, -outcome.kind, -1, epoch))

    def read_events(self):
        for step, txn, kind, key, aux in self.events:
            if kind == READ:
                yield step, txn, key, aux

    def write_events(self):
        for step, txn, kind, key, aux in self.events:
            if kind in (BLIND_WRITE, READ_MODIFY_WRITE, INSERT):
                yield step, txn, key, aux

    def committed_ids(self) -> list[int]:
        return [t for t, o in self.outcomes.items() if o.committed]

    def to_lines(self) -> list[str]:
        """Serialize to the line-oriented interchange format.

        ``STEP TXN READ KEY OBSERVED_WRITER`` / ``STEP TXN WRITE KEY HEXVALUE``
        / ``STEP TXN COMMIT|OMIT|ABORT EPOCH``.  Read lines carry the writer
        id of the observed version so the verifier needs no protocol
        knowledge to reconstruct the reads-from relation.
        """
        out = []
        for step, txn, kind, key, aux in self.events:
            if kind < 0:
                out.append(f"{step} {txn} {OUTCOME_NAMES[-kind]} {aux}")
            elif kind == READ:
                out.append(f"{step} {txn} READ {key} {aux}")
            else:
                out.append(f"{step} {txn} {OP_NAMES[kind]} {key} {aux.hex()}")
        return out

    @classmethod
    def from_lines(cls, lines) -> "History":
        h = cls()
        for raw in lines:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 4:
                raise HistoryError(f"malformed history line: {line!r}")
            step, txn, op = int(parts[0]), int(parts[1]), parts[2]
            if op in ("COMMIT", "OMIT", "ABORT"):
                kind = {"COMMIT": COMMITTED_INSTALLED, "OMIT": COMMITTED_OMITTED,
                        "ABORT": OUTCOME_ABORTED}[op]
                epoch = int(parts[3])
                h.outcomes[txn] = TxnOutcome(kind, epoch)
                h.epoch_of[txn] = epoch
                h.events.append((step, txn, -kind, -1, epoch))
            elif op == "READ":
                h.events.append((step, txn, READ, int(parts[3]), int(parts[4])))
            elif op in ("WRITE", "RMW", "INSERT"):
                kind = {"WRITE": BLIND_WRITE, "RMW": READ_MODIFY_WRITE,
                        "INSERT": INSERT}[op]
                value = bytes.fromhex(parts[4]) if len(parts) > 4 else b""
                h.events.append((step, txn, kind, int(parts[3]), value))
            else:
                raise HistoryError(f"unknown op {op!r} in line {line!r}")
            h._step = max(h._step, step)
        return h
