"""Single-version optimistic protocol: buffered writes, seqlock reads,
sorted write locking, read validation, epoch-stamped TIDs.

The commit TID packs [lock | 31-bit epoch | 32-bit sequence] and is chosen
strictly greater than every TID observed in the transaction's footprint and
the worker's previous TID, with the epoch bits set to the transaction's
epoch.  Locks are taken in key order, so there is no deadlock.
"""

from __future__ import annotations

import time

from . import core
from .core import (ABORTED, COMMITTED, COMMITTED_INSTALLED, OUTCOME_ABORTED,
                   ReadEntry, Txn, TxnOutcome, WriteEntry, classify_write)
from .epoch import EpochManager
from .storage import Store, pack_tid, tid_epoch, tid_locked, tid_seq

SPIN_YIELD = 64


class WorkerCtx:
    """Per-worker mutable state: id allocation, TID memory, counters, log."""

    __slots__ = ("worker_id", "txn_counter", "last_tid", "counters", "log", "ts_epoch", "ts_counter")

    def __init__(self, worker_id: int = 0, log=None):
        self.worker_id = worker_id
        self.txn_counter = 0
        self.last_tid = 0
        self.counters = {
            "attempts": 0,
            "committed": 0,
            "committed_omitted": 0,
            "aborted": 0,
            "installed_updates": 0,
            "log_bytes": 0,
        }
        self.log = log
        # per-epoch distributed timestamp state (multi-version protocol)
        self.ts_epoch = -1
        self.ts_counter = 0

    def next_txn_id(self) -> int:
        self.txn_counter += 1
        return (self.txn_counter << 8) | self.worker_id


class SiloProtocol:
    name = "silo"
    multiversion = False

    def __init__(self, store: Store, epochs: EpochManager, history=None):
        self.store = store
        self.epochs = epochs
        self.history = history

    # -- lifecycle ----------------------------------------------------------

    def begin(self, ctx: WorkerCtx) -> Txn:
        epoch = self.epochs.begin_txn_epoch()
        return Txn(ctx.next_txn_id(), epoch)

    def _terminate(self, txn: Txn, outcome: TxnOutcome) -> TxnOutcome:
        txn.state = COMMITTED if outcome.committed else ABORTED
        if self.history is not None:
            self.history.record_end(txn.txn_id, outcome, txn.epoch)
        self.epochs.end_txn_epoch(txn.epoch)
        return outcome

    # -- execute phase --------------------------------------------------------

    def read(self, txn: Txn, key: int) -> bytes:
        w = txn.write_set.get(key)
        if w is not None:
            return w.value
        cached = txn.read_cache.get(key)
        if cached is not None:
            return cached
        rec = self.store.get(key)
        value, meta = rec.read_1v()
        txn.read_set.append(ReadEntry(key, meta))
        txn.read_cache[key] = value
        if self.history is not None:
            self.history.record_op(txn.txn_id, core.READ, key, meta.writer)
        return value

    def write(self, txn: Txn, key: int, value: bytes) -> None:
        is_blind = classify_write(txn, key)
        txn.write_set[key] = WriteEntry(key, value, is_blind)
        if self.history is not None:
            kind = core.BLIND_WRITE if is_blind else core.READ_MODIFY_WRITE
            self.history.record_op(txn.txn_id, kind, key, value)

    # -- commit phase ----------------------------------------------------------

    def commit(self, ctx: WorkerCtx, txn: Txn) -> TxnOutcome:
        ctx.counters["attempts"] += 1
        store_get = self.store.get
        ws = txn.write_set

        # Phase 1: lock the write set in key order.
        locked: list[tuple] = []
        if ws:
            for key in sorted(ws):
                rec = store_get(key)
                spins = 0
                while True:
                    w = rec.try_lock_1v()
                    if w is not None:
                        break
                    spins += 1
                    if spins % SPIN_YIELD == 0:
                        time.sleep(0)
                locked.append((rec, w))

        # Phase 2: validate reads against the current words.
        for entry in txn.read_set:
            rec = store_get(entry.key)
            if entry.key in ws:
                # we hold the lock; compare the pre-lock word
                for lrec, lw in locked:
                    if lrec is rec:
                        current = lw
                        break
            else:
                current = rec.tid_word
                if tid_locked(current):
                    current = -1
            if current != entry.meta.tid_word:
                for rec2, w2 in locked:
                    rec2.unlock_1v(w2)
                ctx.counters["aborted"] += 1
                return self._terminate(txn, TxnOutcome(OUTCOME_ABORTED))

        outcome = TxnOutcome(COMMITTED_INSTALLED, txn.epoch)
        if ws:
            # Phase 3: commit TID, install, unlock, log.
            base = ctx.last_tid
            for _, w in locked:
                if w > base:
                    base = w
            for entry in txn.read_set:
                if entry.meta.tid_word > base:
                    base = entry.meta.tid_word
            if tid_epoch(base) == txn.epoch:
                tid = pack_tid(txn.epoch, tid_seq(base) + 1)
            else:
                tid = pack_tid(txn.epoch, 1)
            ctx.last_tid = tid

            for rec, _ in locked:
                rec.install_1v(ws[rec.key].value, tid, txn.txn_id, txn.epoch)
            ctx.counters["installed_updates"] += len(locked)
            if ctx.log is not None:
                ctx.counters["log_bytes"] += ctx.log.append(txn.txn_id, txn.epoch, ws)

        ctx.counters["committed"] += 1
        return self._terminate(txn, outcome)

    def explicit_abort(self, ctx: WorkerCtx, txn: Txn) -> TxnOutcome:
        ctx.counters["attempts"] += 1
        ctx.counters["aborted"] += 1
        return self._terminate(txn, TxnOutcome(OUTCOME_ABORTED))
