"""Discrete-event core: a time-ordered queue and a lossy, latent network."""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple


@dataclass(order=True)
class SimEvent:
    time: float
    seq: int
    kind: str = field(compare=False)  # "deliver" | "timer" | "hash_batch"
    payload: Any = field(compare=False, default=None)


class EventQueue:
    """Min-heap on (time, insertion sequence); equal times pop in FIFO order."""

    def __init__(self):
        self._heap: List[SimEvent] = []
        self._seq = itertools.count()
        self.now = 0.0

    def push(self, time: float, kind: str, payload=None) -> SimEvent:
        if time < self.now:
            raise ValueError(f"cannot schedule in the past ({time} < {self.now})")
        ev = SimEvent(time, next(self._seq), kind, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def pop(self) -> SimEvent:
        ev = heapq.heappop(self._heap)
        self.now = ev.time
        return ev

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


# hook(sender, receiver, msg, now) -> delay override, or None to fall through;
# returning math.inf drops the message
DelayHook = Callable[[str, str, Any, float], Optional[float]]


class Network:
    """Point-to-point links with uniform latency and independent drops."""

    def __init__(self, queue: EventQueue, rng: random.Random,
                 latency: Tuple[float, float] = (0.01, 0.1), drop_rate: float = 0.0,
                 delay_hook: Optional[DelayHook] = None, trace: Optional[list] = None):
        if not 0 <= drop_rate < 1:
            raise ValueError("drop_rate must be in [0, 1)")
        lo, hi = latency
        if not 0 <= lo <= hi:
            raise ValueError("latency must satisfy 0 <= min <= max")
        self.queue = queue
        self.rng = rng
        self.latency = (lo, hi)
        self.drop_rate = drop_rate
        self.delay_hook = delay_hook
        self.trace = trace
        self.sent = 0
        self.dropped = 0
        self.bytes_sent = 0
        self.handlers: Dict[str, Any] = {}

    def register(self, identity: str, handler) -> None:
        self.handlers[identity] = handler

    def now(self) -> float:
        return self.queue.now

    def _log(self, **kw) -> None:
        if self.trace is not None:
            self.trace.append(kw)

    def send(self, sender: str, receiver: str, msg) -> None:
        self.sent += 1
        size = len(msg.encode()) if hasattr(msg, "encode") else 0
        self.bytes_sent += size
        # always draw both numbers so hooks do not shift the random stream
        drop = self.rng.random() < self.drop_rate
        delay = self.rng.uniform(*self.latency)
        if self.delay_hook is not None:
            override = self.delay_hook(sender, receiver, msg, self.queue.now)
            if override is not None:
                drop = override == float("inf")
                delay = override
        if drop:
            self.dropped += 1
            self._log(t=self.queue.now, ev="drop", src=sender, dst=receiver, msg=describe(msg))
            return
        self.queue.push(self.queue.now + delay, "deliver", (sender, receiver, msg))

    def set_timer(self, owner: str, delay: float, key) -> None:
        self.queue.push(self.queue.now + delay, "timer", (owner, key))

    def dispatch(self, ev: SimEvent) -> None:
        if ev.kind == "deliver":
            sender, receiver, msg = ev.payload
            self._log(t=ev.time, ev="deliver", src=sender, dst=receiver, msg=describe(msg))
            self.handlers[receiver].receive(sender, msg)
        elif ev.kind == "timer":
            owner, key = ev.payload
            self.handlers[owner].on_timer(key)
        else:
            raise ValueError(f"network cannot dispatch {ev.kind!r}")


def describe(msg) -> str:
    """Short, stable text form of a protocol message for trace logs."""
    name = type(msg).__name__
    if name == "Vote":
        return f"{msg.phase.value} h={msg.height} r={msg.round} {msg.block_hash.hex()[:16]}"
    if name == "Proposal":
        bh = msg.block.hash.hex()[:16] if msg.block is not None else "none"
        return f"proposal h={msg.height} r={msg.round} {bh}"
    if name == "CommitCertificate":
        return f"cert h={msg.height} r={msg.round} {msg.block.hash.hex()[:16]}"
    return name
