"""Concurrent key -> record index with single- and multi-version storage.

Every record carries three things:

* the single-version slot (``tid_word`` + ``value`` + ``meta``), protected
  by the Silo TID-word seqlock discipline: writers flip the lock bit via
  compare-and-swap, swap the value, then publish a new unlocked word;
  readers load word / value / word and retry on change or lock,
* the multi-version chain (``head``), a singly linked list in descending
  timestamp order with short per-record critical sections for linking,
* the 64-bit conflict tracker word used by the write-omission extension.
  It is always present, even when never used.

CPython attribute loads and stores are single bytecodes, so plain reads of
``tid_word`` / ``value`` / ``tracker`` are atomic; all read-modify-write
cycles go through the per-record lock, which stands in for a hardware CAS.

Tracker word layout (64 bits):

    [63:33] epoch (31 bits)   [32] anchor-present   [31:16] mRS   [15:0] mWS

The anchor-present bit records whether the epoch's first blind update has
actually been installed; footprint bits can accumulate for an epoch before
any anchor exists (see omission module).
"""

from __future__ import annotations

import threading

from .core import VersionMeta

LOCK_BIT = 1 << 63
EPOCH_MASK_31 = (1 << 31) - 1
SEQ_MASK = (1 << 32) - 1

# Tracker field layout.
TRK_EPOCH_SHIFT = 33
TRK_ANCHOR_BIT = 1 << 32
TRK_MRS_SHIFT = 16
MASK16 = 0xFFFF


def pack_tid(epoch: int, seq: int, locked: bool = False) -> int:
    word = ((epoch & EPOCH_MASK_31) << 32) | (seq & SEQ_MASK)
    return word | LOCK_BIT if locked else word


def tid_epoch(word: int) -> int:
    return (word >> 32) & EPOCH_MASK_31


def tid_seq(word: int) -> int:
    return word & SEQ_MASK


def tid_locked(word: int) -> bool:
    return bool(word & LOCK_BIT)


def pack_tracker(epoch: int, anchored: bool, mrs: int, mws: int) -> int:
    word = (epoch << TRK_EPOCH_SHIFT) | ((mrs & MASK16) << TRK_MRS_SHIFT) | (mws & MASK16)
    return word | TRK_ANCHOR_BIT if anchored else word


def tracker_epoch(word: int) -> int:
    return word >> TRK_EPOCH_SHIFT


def tracker_anchored(word: int) -> bool:
    return bool(word & TRK_ANCHOR_BIT)


def tracker_mrs(word: int) -> int:
    return (word >> TRK_MRS_SHIFT) & MASK16


def tracker_mws(word: int) -> int:
    return word & MASK16


class NotFound(KeyError):
    pass


class DuplicateTimestamp(Exception):
    pass


class Version:
    """One multi-version chain node.  ``max_reader_ts`` is bumped by readers
    (plain store; a lost maximum is compensated by commit-time read
    re-validation, and single-threaded runs are exact)."""

    __slots__ = ("ts", "value", "writer", "write_epoch", "max_reader_ts", "next")

    def __init__(self, ts, value, writer, write_epoch, nxt=None):
        self.ts = ts
        self.value = value
        self.writer = writer
        self.write_epoch = write_epoch
        self.max_reader_ts = 0
        self.next = nxt


class ItemRecord:
    __slots__ = ("key", "lock", "tid_word", "value", "meta", "head", "tracker")

    def __init__(self, key: int, value: bytes, base_meta: VersionMeta):
        self.key = key
        self.lock = threading.Lock()
        # single-version slot
        self.tid_word = base_meta.tid_word
        self.value = value
        self.meta = base_meta
        # multi-version chain seeded with the same base version
        self.head = Version(base_meta.tid_word, value, base_meta.writer, base_meta.write_epoch)
        # conflict tracker, epoch 0, no anchor, empty filters
        self.tracker = pack_tracker(0, False, 0, 0)

    # -- single-version slot ------------------------------------------------

    def read_1v(self) -> tuple[bytes, VersionMeta]:
        """Seqlock read: consistent (value, meta) snapshot or retry."""
        while True:
            w1 = self.tid_word
            if w1 & LOCK_BIT:
                continue
            value = self.value
            meta = self.meta
            if self.tid_word == w1 and meta.tid_word == w1:
                return value, meta

    def try_lock_1v(self) -> int | None:
        """Attempt to set the lock bit; returns the pre-lock word on success."""
        with self.lock:
            w = self.tid_word
            if w & LOCK_BIT:
                return None
            self.tid_word = w | LOCK_BIT
            return w

    def unlock_1v(self, word: int) -> None:
        # publish an unlocked word (either the old one on abort or the new TID)
        self.tid_word = word & ~LOCK_BIT

    def install_1v(self, value: bytes, tid_word: int, writer: int, epoch: int) -> None:
        """Caller must hold the lock bit.  Publishing the new word releases."""
        assert self.tid_word & LOCK_BIT, "install without lock bit"
        self.meta = VersionMeta(tid_word, writer, epoch)
        self.value = value
        self.tid_word = tid_word

    # -- multi-version chain -------------------------------------------------

    def install_mv(self, value: bytes, ts: int, writer: int, epoch: int) -> None:
        """Link a version preserving descending-timestamp order."""
        with self.lock:
            if self.head is None or ts > self.head.ts:
                self.head = Version(ts, value, writer, epoch, self.head)
                return
            node = self.head
            while True:
                if node.ts == ts:
                    raise DuplicateTimestamp(f"ts {ts} already on chain of {self.key}")
                if node.next is None or node.next.ts < ts:
                    node.next = Version(ts, value, writer, epoch, node.next)
                    return
                node = node.next

    def read_mv(self, at_ts: int) -> Version | None:
        """Newest version with ts <= at_ts; bumps its max reader stamp."""
        node = self.head
        while node is not None and node.ts > at_ts:
            node = node.next
        if node is None:
            return None
        if at_ts > node.max_reader_ts:
            node.max_reader_ts = at_ts
        return node

    def newest_mv(self) -> Version:
        return self.head

    def predecessor_mv(self, ts: int) -> Version | None:
        """Newest version with ts strictly below ``ts``."""
        node = self.head
        while node is not None and node.ts >= ts:
            node = node.next
        return node

    def gc_mv(self, watermark_epoch: int) -> int:
        """Unlink versions strictly older than the newest one whose epoch is
        at or below the watermark.  The newest visible version survives."""
        with self.lock:
            node = self.head
            keep = None
            while node is not None:
                if node.write_epoch <= watermark_epoch:
                    keep = node
                    break
                node = node.next
            if keep is None or keep.next is None:
                return 0
            freed = 0
            node = keep.next
            keep.next = None
            while node is not None:
                freed += 1
                node = node.next
            return freed

    # -- tracker word ---------------------------------------------------------

    def load_tracker(self) -> int:
        return self.tracker

    def cas_tracker(self, old: int, new: int) -> bool:
        """Single-word compare-exchange.  When new == old a plain load-verify
        suffices and no store is issued."""
        if new == old:
            return self.tracker == old
        with self.lock:
            if self.tracker == old:
                self.tracker = new
                return True
            return False


class Store:
    """Hash index over item records plus population bookkeeping.

    The spec's concurrent ordered map is realized as a dict (GIL-atomic
    get/set, insert-only after population) with explicit key sorting where
    order matters (deadlock-free lock acquisition, scans).
    """

    def __init__(self):
        self._index: dict[int, ItemRecord] = {}
        self._insert_lock = threading.Lock()

    def __len__(self):
        return len(self._index)

    def get(self, key: int) -> ItemRecord:
        rec = self._index.get(key)
        if rec is None:
            raise NotFound(key)
        return rec

    def try_get(self, key: int) -> ItemRecord | None:
        return self._index.get(key)

    def insert(self, key: int, value: bytes, writer: int = 0, epoch: int = 0) -> ItemRecord:
        with self._insert_lock:
            if key in self._index:
                raise ValueError(f"key {key} already present")
            rec = ItemRecord(key, value, VersionMeta(pack_tid(epoch, 0), writer, epoch))
            self._index[key] = rec
            return rec

    def keys(self):
        return sorted(self._index)

    def scan_count(self) -> int:
        return sum(1 for _ in self._index)

    def dump(self) -> list[tuple[int, bytes]]:
        """Current visible value per key, in key order (1V slot)."""
        return [(k, self._index[k].value) for k in sorted(self._index)]

    def dump_mv(self) -> list[tuple[int, bytes]]:
        return [(k, self._index[k].head.value) for k in sorted(self._index)]

    def gc(self, watermark_epoch: int) -> int:
        return sum(rec.gc_mv(watermark_epoch) for rec in self._index.values())
