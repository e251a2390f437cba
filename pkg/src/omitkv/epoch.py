"""Global epoch counter and epoch-based group commit bookkeeping.

Wall-clock time is sliced into epochs; every transaction fetches its epoch
exactly once at begin.  Transactions sharing an epoch are treated as
concurrent, transactions in different epochs are not.  Commit
acknowledgements are delayed until the transaction's epoch is closed: the
counter has advanced past it and its active-transaction count has drained.

Tests drive the counter manually (``advance``); the benchmark runs a ticker
thread.  The counter is a plain int attribute: loads are atomic under the
interpreter lock, mutation happens under ``_lock`` and only the single
ticker calls ``advance``.
"""

from __future__ import annotations

import threading
import time

DEFAULT_EPOCH_MS = 40


class EpochManager:
    def __init__(self, period_ms: int = DEFAULT_EPOCH_MS, start: int = 1):
        self.period_ms = period_ms
        self.current = start
        self._lock = threading.Lock()
        self._active: dict[int, int] = {}
        self._ticker: threading.Thread | None = None
        self._stop = threading.Event()

    # -- transaction side --------------------------------------------------

    def begin_txn_epoch(self) -> int:
        with self._lock:
            e = self.current
            self._active[e] = self._active.get(e, 0) + 1
            return e

    def end_txn_epoch(self, epoch: int) -> None:
        with self._lock:
            n = self._active.get(epoch, 0) - 1
            if n <= 0:
                self._active.pop(epoch, None)
            else:
                self._active[epoch] = n

    # -- ticker side -------------------------------------------------------

    def advance(self) -> int:
        with self._lock:
            self.current += 1
            return self.current

    def is_closed(self, epoch: int) -> bool:
        """An epoch is closed once the counter passed it and it drained."""
        with self._lock:
            return self.current > epoch and self._active.get(epoch, 0) == 0

    def start_ticker(self) -> None:
        if self._ticker is not None:
            raise RuntimeError("ticker already running")
        self._stop.clear()

        def loop():
            period = self.period_ms / 1000.0
            while not self._stop.wait(period):
                self.advance()

        self._ticker = threading.Thread(target=loop, name="epoch-ticker", daemon=True)
        self._ticker.start()

    def stop_ticker(self) -> None:
        if self._ticker is None:
            return
        self._stop.set()
        self._ticker.join()
        self._ticker = None


def are_concurrent(e1: int, e2: int) -> bool:
    """Same epoch means same commit point, hence concurrent."""
    return e1 == e2


class AckTracker:
    """Group-commit acknowledgement gate for one worker.

    Committed transactions are acknowledged to the client only after their
    epoch has closed and the worker's log records for that epoch hit the
    file.  ``release`` returns the newly acknowledgeable transactions; the
    caller supplies the flush point it has reached.
    """

    def __init__(self, mgr: EpochManager):
        self._mgr = mgr
        self._pending: list[tuple[int, int]] = []  # (txn_id, epoch)
        self.acked: list[int] = []

    def commit_pending(self, txn_id: int, epoch: int) -> None:
        self._pending.append((txn_id, epoch))

    def release(self, flushed_epoch: int) -> list[int]:
        """Ack everything in epochs that are both closed and flushed."""
        out, keep = [], []
        for txn_id, epoch in self._pending:
            if epoch <= flushed_epoch and self._mgr.is_closed(epoch):
                out.append(txn_id)
            else:
                keep.append((txn_id, epoch))
        self._pending = keep
        self.acked.extend(out)
        return out

    @property
    def pending_count(self) -> int:
        return len(self._pending)


def sleep_ms(ms: float) -> None:
    time.sleep(ms / 1000.0)
