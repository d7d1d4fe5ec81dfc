"""In-process namespaced publish/subscribe bus with request/reply services.

Every robot owns a namespace (``/r1/odom``, ``/r1/cmd_vel`` ...); global
topics have none (``/global_position``). Delivery is synchronous and happens
in publish order, so a single-threaded simulation loop gets a delivery order
that is a pure function of its inputs. All public methods take one lock and
may be called from several threads.
"""

from __future__ import annotations

import collections
import itertools
import math
import re
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidInputError, OwnershipError, RemoteError, RequestTimeout, ShapeError

_NAME = re.compile(r"[a-z0-9_]+\Z")
_RATE_EPS = 1e-9

DEFAULT_QUEUE_DEPTH = 10

ROBOT_CHANNELS = ("odom", "cmd_vel", "position_cmd", "battery", "sensors/sound")
RESERVED_CHANNELS = ("sensors/imu", "sensors/color", "sensors/env")
GLOBAL_POSITION = "global_position"
CHARGING_REQUEST = "charging/request"
CHARGING_RELEASE = "charging/release"


@dataclass(frozen=True, order=True)
class TopicPath:
    namespace: str
    channel: str

    def __post_init__(self):
        if self.namespace and not _NAME.match(self.namespace):
            raise InvalidInputError(f"invalid namespace {self.namespace!r}: use [a-z0-9_]")
        parts = self.channel.split("/")
        if not self.channel or not all(_NAME.match(p) for p in parts):
            raise InvalidInputError(f"invalid channel {self.channel!r}")

    @classmethod
    def parse(cls, path: str) -> "TopicPath":
        """Parse ``/ns/channel`` or ``/channel`` (leading slash optional).

        A path whose first segment is a known global channel prefix is read
        as global; otherwise the first segment is the namespace.
        """
        parts = path.strip("/").split("/")
        if len(parts) == 1 or "/".join(parts) in (CHARGING_REQUEST, CHARGING_RELEASE):
            return cls("", "/".join(parts))
        return cls(parts[0], "/".join(parts[1:]))

    @classmethod
    def robot(cls, robot_id: str, channel: str) -> "TopicPath":
        return cls(robot_id, channel)

    @classmethod
    def global_(cls, channel: str) -> "TopicPath":
        return cls("", channel)

    def __str__(self):
        if self.namespace:
            return f"/{self.namespace}/{self.channel}"
        return f"/{self.channel}"


def _as_path(topic: TopicPath | str) -> TopicPath:
    return topic if isinstance(topic, TopicPath) else TopicPath.parse(topic)


@dataclass(frozen=True)
class TopicEnvelope:
    topic: TopicPath
    seq: int
    stamp_s: float
    payload: Any


class Subscription:
    """Bounded FIFO of envelopes for one topic; the oldest are dropped on overflow."""

    def __init__(self, bus: "Bus", topic: TopicPath, depth: int):
        self._bus = bus
        self.topic = topic
        self.depth = depth
        self._queue: collections.deque[TopicEnvelope] = collections.deque()
        self.enqueued = 0
        self.dropped = 0
        self.taken = 0

    def _push(self, env: TopicEnvelope) -> None:
        self.enqueued += 1
        if len(self._queue) >= self.depth:
            self._queue.popleft()
            self.dropped += 1
        self._queue.append(env)

    def poll(self) -> list[TopicEnvelope]:
        """Remove and return every queued envelope, oldest first."""
        with self._bus._lock:
            out = list(self._queue)
            self._queue.clear()
            self.taken += len(out)
            return out

    def take(self) -> TopicEnvelope | None:
        with self._bus._lock:
            if not self._queue:
                return None
            self.taken += 1
            return self._queue.popleft()

    def latest(self) -> TopicEnvelope | None:
        """Drain the queue and return only the newest envelope."""
        envs = self.poll()
        return envs[-1] if envs else None

    def __len__(self):
        return len(self._queue)

    def close(self) -> None:
        self._bus._unsubscribe(self)


class RateGate:
    """Lets one event through per 1/rate_hz interval on a fixed time grid.

    An event at time t passes if t has reached the next grid boundary; the
    boundary then moves to the first grid point after t. ``rate_hz=None``
    passes everything.
    """

    def __init__(self, rate_hz: float | None):
        self.rate_hz = rate_hz
        self._next_index = 0

    def due(self, now: float) -> bool:
        return self.rate_hz is None or now * self.rate_hz >= self._next_index - _RATE_EPS

    def mark(self, now: float) -> None:
        if self.rate_hz is not None:
            self._next_index = math.floor(now * self.rate_hz + _RATE_EPS) + 1

    def take(self, now: float) -> bool:
        """``due`` and ``mark`` in one call."""
        if self.due(now):
            self.mark(now)
            return True
        return False


class Publisher:
    """Handle returned by :meth:`Bus.advertise`.

    With a rate limit, offers between rate boundaries are coalesced: only the
    most recent one is delivered when the next boundary is reached.
    """

    def __init__(self, bus: "Bus", topic: TopicPath, rate_hz: float | None):
        self._bus = bus
        self.topic = topic
        self.rate_hz = rate_hz
        self._gate = RateGate(rate_hz)
        self._pending: Any = None
        self._has_pending = False
        self.offered = 0

    def due(self, now: float) -> bool:
        """True if a message offered at ``now`` would be delivered immediately."""
        return self._gate.due(now)

    def publish(self, payload: Any, stamp_s: float | None = None) -> TopicEnvelope | None:
        """Offer a message; returns the envelope if it was delivered now."""
        with self._bus._lock:
            now = self._bus.now() if stamp_s is None else stamp_s
            self.offered += 1
            if self.due(now):
                self._has_pending = False
                self._pending = None
                return self._deliver(payload, now)
            self._pending = payload
            self._has_pending = True
            return None

    def _deliver(self, payload: Any, now: float) -> TopicEnvelope:
        self._gate.mark(now)
        return self._bus._deliver(self.topic, payload, now)

    def _flush(self, now: float) -> None:
        if self._has_pending and self.due(now):
            payload = self._pending
            self._has_pending = False
            self._pending = None
            self._deliver(payload, now)

    def close(self) -> None:
        self._bus._unadvertise(self)


@dataclass
class PendingRequest:
    request_id: int
    service: TopicPath
    body: Any
    deadline_s: float
    done: bool = False
    reply: Any = None
    error: BaseException | None = field(default=None, repr=False)

    def result(self) -> Any:
        if not self.done:
            raise RuntimeError(f"request {self.request_id} still pending")
        if self.error is not None:
            raise self.error
        return self.reply


class Bus:
    """Topic registry, message router and service dispatcher.

    ``clock`` returns the current simulation time; by default the bus keeps
    its own clock, advanced with :meth:`set_time` or :meth:`spin`.
    """

    def __init__(self, clock: Callable[[], float] | None = None,
                 default_depth: int = DEFAULT_QUEUE_DEPTH):
        self._lock = threading.RLock()
        self._time = 0.0
        self._clock = clock
        self.default_depth = default_depth
        self._publishers: dict[TopicPath, Publisher] = {}
        self._subscribers: dict[TopicPath, list[Subscription]] = collections.defaultdict(list)
        self._seq: dict[TopicPath, int] = collections.defaultdict(int)
        self._latest: dict[TopicPath, TopicEnvelope] = {}
        self._responders: dict[TopicPath, Callable[[Any], Any]] = {}
        self._pending: list[PendingRequest] = []
        self._request_ids = itertools.count(1)
        self._taps: list[Callable[[TopicEnvelope], None]] = []

    # -- time -------------------------------------------------------------
    def now(self) -> float:
        return self._clock() if self._clock is not None else self._time

    def set_time(self, t: float) -> None:
        self._time = t

    # -- topics -----------------------------------------------------------
    def advertise(self, topic: TopicPath | str, rate_hz: float | None = None) -> Publisher:
        topic = _as_path(topic)
        if rate_hz is not None and not rate_hz > 0:
            raise InvalidInputError(f"rate must be positive, got {rate_hz!r}")
        with self._lock:
            if topic in self._publishers:
                raise OwnershipError(f"{topic} already has a publisher")
            pub = Publisher(self, topic, rate_hz)
            self._publishers[topic] = pub
            return pub

    def _unadvertise(self, pub: Publisher) -> None:
        with self._lock:
            if self._publishers.get(pub.topic) is pub:
                del self._publishers[pub.topic]

    def subscribe(self, topic: TopicPath | str, depth: int | None = None) -> Subscription:
        topic = _as_path(topic)
        depth = self.default_depth if depth is None else depth
        if depth < 1:
            raise InvalidInputError("queue depth must be at least 1")
        with self._lock:
            sub = Subscription(self, topic, depth)
            self._subscribers[topic].append(sub)
            return sub

    def _unsubscribe(self, sub: Subscription) -> None:
        with self._lock:
            subs = self._subscribers.get(sub.topic, [])
            if sub in subs:
                subs.remove(sub)

    def add_tap(self, fn: Callable[[TopicEnvelope], None]) -> None:
        """Call ``fn`` on every delivered envelope (for logging/transport)."""
        self._taps.append(fn)

    def _deliver(self, topic: TopicPath, payload: Any, stamp: float) -> TopicEnvelope:
        self._seq[topic] += 1
        env = TopicEnvelope(topic, self._seq[topic], stamp, payload)
        self._latest[topic] = env
        for sub in self._subscribers.get(topic, ()):
            sub._push(env)
        for tap in self._taps:
            tap(env)
        return env

    def published_count(self, topic: TopicPath | str) -> int:
        return self._seq.get(_as_path(topic), 0)

    def latest(self, topic: TopicPath | str) -> TopicEnvelope | None:
        with self._lock:
            return self._latest.get(_as_path(topic))

    def forget(self, topic: TopicPath | str) -> None:
        """Drop the cached latest value of a topic (e.g. a removed robot)."""
        with self._lock:
            self._latest.pop(_as_path(topic), None)

    def topics(self) -> list[TopicPath]:
        with self._lock:
            return sorted(set(self._publishers) | set(self._latest))

    # -- services ---------------------------------------------------------
    def serve(self, service: TopicPath | str, handler: Callable[[Any], Any]) -> None:
        service = _as_path(service)
        with self._lock:
            if service in self._responders:
                raise OwnershipError(f"{service} already has a responder")
            self._responders[service] = handler

    def unserve(self, service: TopicPath | str) -> None:
        with self._lock:
            self._responders.pop(_as_path(service), None)

    def call(self, service: TopicPath | str, body: Any, timeout_s: float) -> PendingRequest:
        """Queue a request; it is answered or timed out by :meth:`spin`."""
        service = _as_path(service)
        with self._lock:
            req = PendingRequest(next(self._request_ids), service, body, self.now() + timeout_s)
            self._pending.append(req)
            return req

    def _answer(self, req: PendingRequest, handler: Callable[[Any], Any]) -> None:
        try:
            req.reply = handler(req.body)
        except Exception as exc:
            err = RemoteError(f"{req.service} failed: {exc}")
            err.__cause__ = exc
            req.error = err
        req.done = True

    def request(self, service: TopicPath | str, body: Any, timeout_s: float) -> Any:
        """Blocking request/reply.

        In this in-process bus a registered responder answers immediately;
        without one the call fails with :class:`RequestTimeout` stamped at
        ``now + timeout_s``.
        """
        service = _as_path(service)
        with self._lock:
            req = PendingRequest(next(self._request_ids), service, body, self.now() + timeout_s)
            handler = self._responders.get(service)
            if handler is None:
                raise RequestTimeout(str(service), req.deadline_s)
            self._answer(req, handler)
        return req.result()

    def spin(self, now: float | None = None) -> None:
        """Advance to ``now``: flush coalesced messages and settle requests.

        Publishers are flushed in topic order and requests in id order, so
        the result does not depend on registration history.
        """
        with self._lock:
            if now is not None:
                self._time = now
            t = self.now()
            for topic in sorted(self._publishers):
                self._publishers[topic]._flush(t)
            still = []
            for req in self._pending:
                handler = self._responders.get(req.service)
                if handler is not None:
                    self._answer(req, handler)
                elif t >= req.deadline_s - _RATE_EPS:
                    req.error = RequestTimeout(str(req.service), req.deadline_s)
                    req.done = True
                else:
                    still.append(req)
            self._pending = still


@dataclass
class AggregateMatrix:
    """Latest values of one message type across robots.

    ``data`` is M x N (fields x robots); columns of robots that have not
    published are NaN and flagged False in ``present``.
    """

    data: np.ndarray
    robots: list[str]
    present: np.ndarray
    stamps: np.ndarray

    def column(self, robot_id: str) -> np.ndarray:
        return self.data[:, self.robots.index(robot_id)]


def _payload_values(payload: Any, fields: Sequence[str] | None) -> list[float]:
    if fields is not None:
        return [float(payload[f]) for f in fields]
    if isinstance(payload, dict):
        return [float(v) for v in payload.values()]
    if isinstance(payload, (list, tuple, np.ndarray)):
        return [float(v) for v in payload]
    return [float(payload)]


def aggregate_matrix(bus: Bus, topics: Iterable[TopicPath | str], field_count: int,
                     fields: Sequence[str] | None = None) -> AggregateMatrix:
    """Stack the latest payload of each topic into an M x N matrix.

    Columns follow namespace sort order. ``fields`` selects named payload
    entries; otherwise every payload value is used in declared order.
    """
    paths = sorted((_as_path(t) for t in topics), key=lambda p: (p.namespace, p.channel))
    if fields is not None and len(fields) != field_count:
        raise ShapeError(f"{len(fields)} field names for M={field_count}")
    n = len(paths)
    data = np.full((field_count, n), np.nan)
    present = np.zeros(n, dtype=bool)
    stamps = np.full(n, np.nan)
    for col, path in enumerate(paths):
        env = bus.latest(path)
        if env is None:
            continue
        try:
            values = _payload_values(env.payload, fields)
        except (KeyError, TypeError) as exc:
            raise ShapeError(f"{path}: payload does not match fields: {exc}") from exc
        if len(values) != field_count:
            raise ShapeError(f"{path}: payload has {len(values)} fields, expected {field_count}")
        data[:, col] = values
        present[col] = True
        stamps[col] = env.stamp_s
    return AggregateMatrix(data, [p.namespace for p in paths], present, stamps)
