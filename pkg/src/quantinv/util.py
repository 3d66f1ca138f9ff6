"""Cancellation tokens, clocks and the JSON-lines event log."""

from __future__ import annotations

import json
import threading
import time
from typing import Any, Callable, IO, List, Optional


class Cancelled(Exception):
    pass


class CancelToken:
    """A cancellation flag that can also poke running solvers.

    Tokens can be chained: a child is cancelled whenever its parent is.
    """

    def __init__(self, parent: Optional['CancelToken'] = None) -> None:
        self._event = threading.Event()
        self._lock = threading.Lock()
        self._callbacks: List[Callable[[], None]] = []
        self._parent = parent
        if parent is not None:
            parent.on_cancel(self.cancel)

    def cancel(self) -> None:
        with self._lock:
            if self._event.is_set():
                return
            self._event.set()
            callbacks = list(self._callbacks)
        for cb in callbacks:
            cb()

    @property
    def cancelled(self) -> bool:
        return self._event.is_set()

    def check(self) -> None:
        if self._event.is_set():
            raise Cancelled()

    def on_cancel(self, cb: Callable[[], None]) -> None:
        with self._lock:
            if not self._event.is_set():
                self._callbacks.append(cb)
                return
        cb()

    def remove_callback(self, cb: Callable[[], None]) -> None:
        with self._lock:
            if cb in self._callbacks:
                self._callbacks.remove(cb)

    def wait(self, timeout: float) -> bool:
        return self._event.wait(timeout)


class WallClock:
    """Seconds on the monotonic clock."""

    deterministic = False

    def now(self) -> float:
        return time.monotonic()

    def tick(self, units: float = 1.0) -> None:
        pass


class WorkClock:
    """A clock that only advances when work is charged to it.

    Used in sequential mode so that every time-based decision (category
    fairness, the multi-block budget, event timestamps) is reproducible.
    """

    deterministic = True

    def __init__(self) -> None:
        self._t = 0.0
        self._lock = threading.Lock()

    def now(self) -> float:
        return self._t

    def tick(self, units: float = 1.0) -> None:
        with self._lock:
            self._t += units


class EventLog:
    """Append-only JSON-lines log; a ``None`` sink turns logging off."""

    def __init__(self, sink: Optional[IO[str]] = None, clock: Any = None) -> None:
        self._sink = sink
        self._clock = clock or WallClock()
        self._t0 = self._clock.now()
        self._seq = 0
        self._lock = threading.Lock()
        self.events: List[dict] = []
        self.keep = True

    def emit(self, event: str, **fields: Any) -> None:
        with self._lock:
            self._seq += 1
            if self._clock.deterministic:
                t: Any = self._seq
            else:
                t = round(self._clock.now() - self._t0, 6)
            rec = {'seq': self._seq, 't': t, 'event': event}
            rec.update(fields)
            if self.keep:
                self.events.append(rec)
            if self._sink is not None:
                self._sink.write(json.dumps(rec, sort_keys=True) + '\n')
                self._sink.flush()

    def of_kind(self, event: str) -> List[dict]:
        return [e for e in self.events if e['event'] == event]
