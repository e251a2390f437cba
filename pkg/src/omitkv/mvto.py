"""Multi-version timestamp ordering with per-thread distributed timestamps.

Timestamp word: [32-bit epoch | 24-bit per-epoch counter | 8-bit worker id].
No central counter; uniqueness comes from the worker bits, monotonicity per
worker from the counter, cross-epoch ordering from the epoch bits.

Reads return the newest version at or below the transaction timestamp and
stamp it with the reader.  Commit applies the classical too-late rule (a
write is rejected when a younger reader already observed the version that
would become its predecessor) and re-validates reads the way the
single-version protocol does: each observed version must still be the
newest one visible at the transaction's timestamp.  That re-check is
stricter than plain timestamp ordering but keeps the two baselines
symmetric and compensates for the unlocked reader stamps.
"""

from __future__ import annotations

from . import core
from .core import (ABORTED, COMMITTED, COMMITTED_INSTALLED, OUTCOME_ABORTED,
                   ReadEntry, Txn, TxnOutcome, VersionMeta, WriteEntry,
                   classify_write)
from .epoch import EpochManager
from .silo import WorkerCtx
from .storage import DuplicateTimestamp, Store

WORKER_BITS = 8
COUNTER_BITS = 24
MAX_COUNTER = (1 << COUNTER_BITS) - 1


class TimestampOverflow(RuntimeError):
    """More than 2^24 transactions begun by one worker inside one epoch."""


def make_timestamp(ctx: WorkerCtx, epoch: int) -> int:
    if ctx.ts_epoch != epoch:
        ctx.ts_epoch = epoch
        ctx.ts_counter = 0
    ctx.ts_counter += 1
    if ctx.ts_counter > MAX_COUNTER:
        raise TimestampOverflow(f"worker {ctx.worker_id} exhausted epoch {epoch}")
    return (epoch << 32) | (ctx.ts_counter << WORKER_BITS) | ctx.worker_id


class MvtoProtocol:
    name = "mvto"
    multiversion = True

    def __init__(self, store: Store, epochs: EpochManager, history=None):
        self.store = store
        self.epochs = epochs
        self.history = history
        self._ts: dict[int, int] = {}   # txn_id -> timestamp

    def begin(self, ctx: WorkerCtx) -> Txn:
        epoch = self.epochs.begin_txn_epoch()
        txn = Txn(ctx.next_txn_id(), epoch)
        self._ts[txn.txn_id] = make_timestamp(ctx, epoch)
        return txn

    def timestamp_of(self, txn: Txn) -> int:
        return self._ts[txn.txn_id]

    def _terminate(self, txn: Txn, outcome: TxnOutcome) -> TxnOutcome:
        txn.state = COMMITTED if outcome.committed else ABORTED
        self._ts.pop(txn.txn_id, None)
        if self.history is not None:
            self.history.record_end(txn.txn_id, outcome, txn.epoch)
        self.epochs.end_txn_epoch(txn.epoch)
        return outcome

    def read(self, txn: Txn, key: int) -> bytes:
        w = txn.write_set.get(key)
        if w is not None:
            return w.value
        cached = txn.read_cache.get(key)
        if cached is not None:
            return cached
        rec = self.store.get(key)
        version = rec.read_mv(self._ts[txn.txn_id])
        if version is None:
            raise VisibilityAbort(key)
        txn.read_set.append(ReadEntry(key, VersionMeta(version.ts, version.writer,
                                                       version.write_epoch)))
        txn.read_cache[key] = version.value
        if self.history is not None:
            self.history.record_op(txn.txn_id, core.READ, key, version.writer)
        return version.value

    def write(self, txn: Txn, key: int, value: bytes) -> None:
        is_blind = classify_write(txn, key)
        txn.write_set[key] = WriteEntry(key, value, is_blind)
        if self.history is not None:
            kind = core.BLIND_WRITE if is_blind else core.READ_MODIFY_WRITE
            self.history.record_op(txn.txn_id, kind, key, value)

    def commit(self, ctx: WorkerCtx, txn: Txn) -> TxnOutcome:
        ctx.counters["attempts"] += 1
        ts = self._ts[txn.txn_id]
        store_get = self.store.get
        ws = txn.write_set

        # Too-late rule: a younger reader must not have observed the version
        # immediately preceding the one we are about to install.
        for key in ws:
            pred = store_get(key).predecessor_mv(ts)
            if pred is not None and pred.max_reader_ts > ts:
                ctx.counters["aborted"] += 1
                return self._terminate(txn, TxnOutcome(OUTCOME_ABORTED))

        # Optimistic read validation: observed version still newest <= ts.
        for entry in txn.read_set:
            node = store_get(entry.key).head
            while node is not None and node.ts > ts:
                node = node.next
            if node is None or node.ts != entry.meta.tid_word:
                ctx.counters["aborted"] += 1
                return self._terminate(txn, TxnOutcome(OUTCOME_ABORTED))

        if ws:
            try:
                for key, w in ws.items():
                    store_get(key).install_mv(w.value, ts, txn.txn_id, txn.epoch)
            except DuplicateTimestamp:
                ctx.counters["aborted"] += 1
                return self._terminate(txn, TxnOutcome(OUTCOME_ABORTED))
            ctx.counters["installed_updates"] += len(ws)
            if ctx.log is not None:
                ctx.counters["log_bytes"] += ctx.log.append(txn.txn_id, txn.epoch, ws)

        ctx.counters["committed"] += 1
        return self._terminate(txn, TxnOutcome(COMMITTED_INSTALLED, txn.epoch))

    def explicit_abort(self, ctx: WorkerCtx, txn: Txn) -> TxnOutcome:
        ctx.counters["attempts"] += 1
        ctx.counters["aborted"] += 1
        return self._terminate(txn, TxnOutcome(OUTCOME_ABORTED))


class VisibilityAbort(Exception):
    """No version visible at the transaction timestamp."""
