"""Hierarchical message broker.

Clients attach to a broker under a name; brokers form a tree. Two kinds of
traffic flow through it:

* point-to-point ``SEND`` frames routed by client name. Names registered
  anywhere in a subtree are advertised upward, so a broker delivers
  locally, hands the frame to the child that advertised the name, or
  passes it to its parent when it does not know the name.
* publish/subscribe ``PUB`` frames routed by topic. Every broker tells each
  neighbour which topic patterns are wanted on its side of the tree, so a
  publication crosses a broker link only when a matching subscriber exists
  beyond it.

The routing core (:class:`Broker`) is transport agnostic. Two transports
are provided: an in-process fabric with deterministic, queue-driven
delivery and per-link frame logs (used by the simulator and tests), and a
TCP transport for ``broker run``.

Wire format, all integers big-endian::

    u32 length of the rest | u8 version (=1) | u8 command |
    u16 len + source | u16 len + destination/topic | u16 len + correlation id |
    u16 len + payload

Control conventions on broker-to-broker links: ``HELLO`` with destination
``#broker`` opens the link, ``HELLO``/``BYE`` with destination ``#name``
advertise or withdraw a client name, and ``SUB``/``UNSUB`` carry topic
interest in both directions.
"""

from __future__ import annotations

import enum
import itertools
import logging
import queue
import socket
import struct
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

VERSION = 1
BROKER_ROLE = "#broker"
NAME_ADVERT = "#name"
PARENT = "^"
MAX_NAME = 255
MAX_FIELD = 0xFFFF


class Command(enum.IntEnum):
    HELLO = 1
    HELLO_OK = 2
    SEND = 3
    DELIVER = 4
    PUB = 5
    DELIVER_PUB = 6
    SUB = 7
    UNSUB = 8
    PING = 9
    PONG = 10
    ERROR = 11
    BYE = 12


class FrameError(ValueError):
    pass


class NameTaken(ValueError):
    pass


class InvalidName(ValueError):
    pass


class InvalidPattern(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    command: Command
    source: str = ""
    dest: str = ""
    corr: str = ""
    payload: bytes = b""
    version: int = VERSION

    def encode(self) -> bytes:
        return encode(self)

    @property
    def text(self) -> str:
        return self.payload.decode("utf-8", errors="replace")


def _field(value: bytes, what: str) -> bytes:
    if len(value) > MAX_FIELD:
        raise FrameError(f"{what} longer than {MAX_FIELD} bytes")
    return struct.pack(">H", len(value)) + value


def encode(frame: Frame) -> bytes:
    body = (struct.pack(">BB", frame.version, int(frame.command))
            + _field(frame.source.encode("utf-8"), "source")
            + _field(frame.dest.encode("utf-8"), "destination")
            + _field(frame.corr.encode("utf-8"), "correlation id")
            + _field(bytes(frame.payload), "payload"))
    return struct.pack(">I", len(body)) + body


def decode(buf: bytes) -> tuple[Frame, int]:
    """Decode one frame from the start of ``buf``; return it and bytes used."""
    if len(buf) < 4:
        raise FrameError("truncated length prefix")
    (n,) = struct.unpack_from(">I", buf, 0)
    if len(buf) < 4 + n:
        raise FrameError("truncated frame")
    body = memoryview(buf)[4:4 + n]
    if n < 2:
        raise FrameError("frame too short")
    version, cmd = body[0], body[1]
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    try:
        command = Command(cmd)
    except ValueError:
        raise FrameError(f"unknown command {cmd}") from None
    pos, fields = 2, []
    for _ in range(4):
        if pos + 2 > n:
            raise FrameError("truncated field length")
        (ln,) = struct.unpack_from(">H", body, pos)
        pos += 2
        if pos + ln > n:
            raise FrameError("truncated field")
        fields.append(bytes(body[pos:pos + ln]))
        pos += ln
    if pos != n:
        raise FrameError("trailing bytes in frame")
    try:
        src, dst, corr = (f.decode("utf-8") for f in fields[:3])
    except UnicodeDecodeError:
        raise FrameError("name fields must be UTF-8") from None
    return Frame(command, src, dst, corr, fields[3], version), 4 + n


class FrameDecoder:
    """Incremental decoder for a byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Frame]:
        self._buf += data
        out = []
        while len(self._buf) >= 4:
            (n,) = struct.unpack_from(">I", self._buf, 0)
            if len(self._buf) < 4 + n:
                break
            frame, used = decode(bytes(self._buf[:4 + n]))
            del self._buf[:used]
            out.append(frame)
        return out


def validate_name(name: str) -> None:
    if not name or len(name.encode("utf-8")) > MAX_NAME or "/" in name or name.startswith("#"):
        raise InvalidName(f"invalid client name {name!r}")


def validate_topic(topic: str) -> None:
    if not topic or "*" in topic or any(seg == "" for seg in topic.split("/")):
        raise InvalidPattern(f"invalid topic {topic!r}")


def validate_pattern(pattern: str) -> None:
    """Exact topic, or a prefix pattern with a single trailing ``*``."""
    if pattern == "*":
        return
    if pattern.endswith("*"):
        stem = pattern[:-1]
        if "*" in stem or not stem or stem.startswith("/") or "//" in stem:
            raise InvalidPattern(f"invalid pattern {pattern!r}")
        return
    try:
        validate_topic(pattern)
    except InvalidPattern:
        raise InvalidPattern(f"invalid pattern {pattern!r}") from None


def topic_matches(pattern: str, topic: str) -> bool:
    if pattern.endswith("*"):
        return topic.startswith(pattern[:-1])
    return pattern == topic


# -- routing core ----------------------------------------------------------------

class Session:
    """One side of a connection as seen by a broker."""

    def send(self, frame: Frame) -> None:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass
class BrokerStats:
    delivered: int = 0
    published: int = 0
    errors: int = 0
    forwarded: int = 0


class Broker:
    """Routing tables and frame handling for one broker.

    All table mutations happen under one lock, so a broker may be fed
    from many transport threads.
    """

    def __init__(self, broker_id: str):
        self.id = broker_id
        self._lock = threading.RLock()
        self._sessions: dict[Session, tuple] = {}  # session -> (role, key)
        self.clients: dict[str, Session] = {}
        self.children: dict[str, Session] = {}
        self.parent: Session | None = None
        self.child_names: dict[str, str] = {}  # name -> child broker id
        self.local_subs: dict[str, set] = defaultdict(set)  # pattern -> client names
        self.remote_interest: dict[str, set] = defaultdict(set)  # neighbour -> patterns
        self.advertised: dict[str, set] = defaultdict(set)  # neighbour -> patterns sent
        self.stats = BrokerStats()

    # session lifecycle

    def attach_parent(self, session: Session) -> None:
        """Open the uplink: introduce ourselves, then push names and interests."""
        with self._lock:
            self.parent = session
            self._sessions[session] = ("parent", PARENT)
            session.send(Frame(Command.HELLO, self.id, BROKER_ROLE))
            for name in sorted(self._all_names()):
                session.send(Frame(Command.HELLO, name, NAME_ADVERT))
            self._refresh_interest()

    def session_closed(self, session: Session) -> None:
        with self._lock:
            role, key = self._sessions.pop(session, (None, None))
            if role == "client":
                self._drop_client(key)
            elif role == "child":
                self.children.pop(key, None)
                for name in [n for n, b in self.child_names.items() if b == key]:
                    del self.child_names[name]
                    self._withdraw_up(name)
                self.remote_interest.pop(key, None)
                self.advertised.pop(key, None)
                self._refresh_interest()
            elif role == "parent":
                self.parent = None
                self.remote_interest.pop(PARENT, None)
                self.advertised.pop(PARENT, None)
                self._refresh_interest()

    def _drop_client(self, name: str) -> None:
        self.clients.pop(name, None)
        for pattern in list(self.local_subs):
            self.local_subs[pattern].discard(name)
            if not self.local_subs[pattern]:
                del self.local_subs[pattern]
        self._withdraw_up(name)
        self._refresh_interest()

    def _all_names(self) -> set:
        return set(self.clients) | set(self.child_names)

    def _advertise_up(self, name: str) -> None:
        if self.parent is not None:
            self.parent.send(Frame(Command.HELLO, name, NAME_ADVERT))

    def _withdraw_up(self, name: str) -> None:
        if self.parent is not None and name not in self._all_names():
            self.parent.send(Frame(Command.BYE, name, NAME_ADVERT))

    # interest propagation

    def _neighbours(self) -> list[tuple[str, Session]]:
        out = sorted(self.children.items())
        if self.parent is not None:
            out.append((PARENT, self.parent))
        return out

    def _refresh_interest(self) -> None:
        local = {p for p, names in self.local_subs.items() if names}
        for key, sess in self._neighbours():
            want = set(local)
            for other, pats in self.remote_interest.items():
                if other != key:
                    want |= pats
            have = self.advertised[key]
            for p in sorted(want - have):
                sess.send(Frame(Command.SUB, self.id, p))
            for p in sorted(have - want):
                sess.send(Frame(Command.UNSUB, self.id, p))
            self.advertised[key] = want

    # frame handling

    def handle(self, session: Session, frame: Frame) -> None:
        with self._lock:
            role, key = self._sessions.get(session, (None, None))
            if role is None:
                self._handle_new(session, frame)
            elif role == "client":
                self._handle_client(session, key, frame)
            else:
                self._handle_broker(session, key, frame)

    def _handle_new(self, session: Session, frame: Frame) -> None:
        if frame.command != Command.HELLO:
            session.send(Frame(Command.ERROR, self.id, frame.source, frame.corr, b"NotRegistered"))
            return
        if frame.dest == BROKER_ROLE:
            bid = frame.source
            if bid in self.children:
                session.send(Frame(Command.ERROR, self.id, bid, frame.corr, b"NameTaken"))
                return
            self.children[bid] = session
            self._sessions[session] = ("child", bid)
            session.send(Frame(Command.HELLO_OK, self.id, bid, frame.corr))
            self._refresh_interest()
            return
        name = frame.source
        try:
            validate_name(name)
        except InvalidName:
            session.send(Frame(Command.ERROR, self.id, name, frame.corr, b"InvalidName"))
            return
        if name in self.clients:
            session.send(Frame(Command.ERROR, self.id, name, frame.corr, b"NameTaken"))
            return
        if frame.payload:
            log.info("client %s tenant %s", name, frame.text)
        self.clients[name] = session
        self._sessions[session] = ("client", name)
        session.send(Frame(Command.HELLO_OK, self.id, name, frame.corr))
        if name not in self.child_names:
            self._advertise_up(name)

    def _handle_client(self, session: Session, name: str, frame: Frame) -> None:
        cmd = frame.command
        if cmd == Command.SEND:
            self._route_send(Frame(Command.SEND, name, frame.dest, frame.corr, frame.payload), None)
        elif cmd == Command.PUB:
            try:
                validate_topic(frame.dest)
            except InvalidPattern:
                session.send(Frame(Command.ERROR, self.id, name, frame.corr, b"InvalidTopic"))
                return
            self.stats.published += 1
            self._route_pub(Frame(Command.PUB, name, frame.dest, frame.corr, frame.payload), None)
        elif cmd in (Command.SUB, Command.UNSUB):
            try:
                validate_pattern(frame.dest)
            except InvalidPattern:
                session.send(Frame(Command.ERROR, self.id, name, frame.corr, b"InvalidPattern"))
                return
            if cmd == Command.SUB:
                self.local_subs[frame.dest].add(name)
            else:
                subs = self.local_subs.get(frame.dest)
                if subs is not None:
                    subs.discard(name)
                    if not subs:
                        del self.local_subs[frame.dest]
            self._refresh_interest()
        elif cmd == Command.PING:
            session.send(Frame(Command.PONG, self.id, name, frame.corr))
        elif cmd == Command.BYE:
            self._sessions.pop(session, None)
            self._drop_client(name)
        elif cmd == Command.PONG:
            pass
        else:
            session.send(Frame(Command.ERROR, self.id, name, frame.corr, b"UnexpectedCommand"))

    def _handle_broker(self, session: Session, key: str, frame: Frame) -> None:
        cmd = frame.command
        if cmd == Command.HELLO and frame.dest == NAME_ADVERT and key != PARENT:
            name = frame.source
            if name not in self.clients and name not in self.child_names:
                self.child_names[name] = key
                self._advertise_up(name)
        elif cmd == Command.BYE and frame.dest == NAME_ADVERT and key != PARENT:
            if self.child_names.get(frame.source) == key:
                del self.child_names[frame.source]
                self._withdraw_up(frame.source)
        elif cmd == Command.SUB:
            self.remote_interest[key].add(frame.dest)
            self._refresh_interest()
        elif cmd == Command.UNSUB:
            self.remote_interest[key].discard(frame.dest)
            self._refresh_interest()
        elif cmd in (Command.SEND, Command.ERROR):
            self._route_send(frame, key)
        elif cmd == Command.PUB:
            self._route_pub(frame, key)
        elif cmd == Command.PING:
            session.send(Frame(Command.PONG, self.id, frame.source, frame.corr))
        # HELLO_OK / PONG on broker links need no action

    def _route_send(self, frame: Frame, came_from: str | None) -> None:
        dest = frame.dest
        local = self.clients.get(dest)
        if local is not None:
            cmd = Command.DELIVER if frame.command == Command.SEND else Command.ERROR
            local.send(Frame(cmd, frame.source, dest, frame.corr, frame.payload))
            self.stats.delivered += cmd == Command.DELIVER
            return
        child = self.child_names.get(dest)
        if child is not None and child != came_from:
            self.stats.forwarded += 1
            self.children[child].send(frame)
            return
        if self.parent is not None and came_from != PARENT:
            self.stats.forwarded += 1
            self.parent.send(frame)
            return
        if frame.command == Command.SEND:
            self.stats.errors += 1
            err = Frame(Command.ERROR, self.id, frame.source, frame.corr,
                        f"UnknownDestination:{dest}".encode())
            self._route_send(err, None)

    def _route_pub(self, frame: Frame, came_from: str | None) -> None:
        topic = frame.dest
        targets = set()
        for pattern, names in self.local_subs.items():
            if topic_matches(pattern, topic):
                targets |= names
        for name in sorted(targets):
            self.clients[name].send(Frame(Command.DELIVER_PUB, frame.source, topic, frame.corr, frame.payload))
            self.stats.delivered += 1
        for key, sess in self._neighbours():
            if key == came_from:
                continue
            if any(topic_matches(p, topic) for p in self.remote_interest.get(key, ())):
                self.stats.forwarded += 1
                sess.send(frame)


# -- client endpoint ---------------------------------------------------------------

class ClientCore:
    """Frame construction and inbox handling shared by both transports."""

    def __init__(self, name: str, tenant: str = ""):
        validate_name(name)
        self.name = name
        self.tenant = tenant
        self.registered = False
        self.error: str | None = None
        self.inbox: deque = deque()
        self._corr = itertools.count(1)
        self.on_frame = None

    def _next_corr(self) -> str:
        return str(next(self._corr))

    def _receive(self, frame: Frame) -> None:
        if frame.command == Command.HELLO_OK:
            self.registered = True
        elif frame.command == Command.ERROR and not self.registered:
            self.error = frame.text
        self.inbox.append(frame)
        if self.on_frame is not None:
            self.on_frame(frame)

    def messages(self, *commands: Command) -> list[Frame]:
        return [f for f in self.inbox if not commands or f.command in commands]


# -- in-process fabric -------------------------------------------------------------

class _Handle(Session):
    """One end of an in-process connection.

    ``send`` queues the frame for the endpoint holding the peer handle; that
    endpoint sees it arrive on its own handle, which is also what it replies
    through.
    """

    def __init__(self, fabric: "InProcFabric", owner, direction: str | None = None,
                 link: tuple | None = None):
        self.fabric = fabric
        self.owner = owner
        self.peer: _Handle | None = None
        self.direction = direction
        self.link = link
        self.closed = False

    def send(self, frame: Frame) -> None:
        if not self.closed:
            self.fabric._enqueue(self, frame)

    def close(self) -> None:
        self.closed = True
        if self.peer is not None:
            self.peer.closed = True

    __hash__ = object.__hash__

    def __eq__(self, other):
        return self is other


class InProcClient(ClientCore):
    def __init__(self, fabric: "InProcFabric", name: str, tenant: str = ""):
        super().__init__(name, tenant)
        self.fabric = fabric
        self.broker_id: str | None = None
        self._handle: _Handle | None = None

    def _out(self, frame: Frame) -> None:
        self._handle.send(frame)
        self.fabric.pump()

    def send(self, to: str, payload: bytes | str = b"", corr: str | None = None) -> str:
        corr = corr or self._next_corr()
        self._out(Frame(Command.SEND, self.name, to, corr, _bytes(payload)))
        return corr

    def publish(self, topic: str, payload: bytes | str = b"") -> None:
        self._out(Frame(Command.PUB, self.name, topic, self._next_corr(), _bytes(payload)))

    def subscribe(self, pattern: str) -> None:
        self._out(Frame(Command.SUB, self.name, pattern))

    def unsubscribe(self, pattern: str) -> None:
        self._out(Frame(Command.UNSUB, self.name, pattern))

    def ping(self) -> None:
        self._out(Frame(Command.PING, self.name))

    def close(self) -> None:
        self.fabric.disconnect(self)


def _bytes(p) -> bytes:
    return p.encode("utf-8") if isinstance(p, str) else bytes(p)


@dataclass
class LinkLog:
    """Frames seen on one child-parent broker link."""

    child: str
    parent: str
    frames: list = field(default_factory=list)  # (direction "up"/"down", Frame)

    def count(self, *commands: Command, direction: str | None = None) -> int:
        return sum(1 for d, f in self.frames
                   if (direction is None or d == direction) and (not commands or f.command in commands))


class InProcFabric:
    """Deterministic in-process broker tree.

    Every frame goes through one FIFO queue that :meth:`pump` drains; client
    calls pump automatically. Frames on broker-broker links are recorded in
    :attr:`links`, keyed by (child id, parent id).
    """

    def __init__(self):
        self.brokers: dict[str, Broker] = {}
        self.parent_of: dict[str, str] = {}
        self.links: dict[tuple, LinkLog] = {}
        self.clients: dict[str, InProcClient] = {}
        self._queue: deque = deque()
        self._pumping = False

    def _connect(self, a, b, link: tuple | None = None) -> tuple[_Handle, _Handle]:
        ha = _Handle(self, a, "up" if link else None, link)
        hb = _Handle(self, b, "down" if link else None, link)
        ha.peer, hb.peer = hb, ha
        return ha, hb

    def _enqueue(self, handle: _Handle, frame: Frame) -> None:
        if handle.link is not None:
            self.links[handle.link].frames.append((handle.direction, frame))
        self._queue.append((handle.peer, frame))

    def pump(self) -> int:
        """Deliver queued frames until the fabric is quiet; return the count."""
        if self._pumping:
            return 0
        self._pumping = True
        n = 0
        try:
            while self._queue:
                handle, frame = self._queue.popleft()
                if handle.closed:
                    continue
                n += 1
                if isinstance(handle.owner, Broker):
                    handle.owner.handle(handle, frame)
                else:
                    handle.owner._receive(frame)
        finally:
            self._pumping = False
        return n

    def add_broker(self, broker_id: str, parent: str | None = None) -> Broker:
        if broker_id in self.brokers:
            raise ValueError(f"broker {broker_id!r} exists")
        b = Broker(broker_id)
        self.brokers[broker_id] = b
        if parent is not None:
            key = (broker_id, parent)
            self.parent_of[broker_id] = parent
            self.links[key] = LinkLog(broker_id, parent)
            up, _down = self._connect(b, self.brokers[parent], key)
            b.attach_parent(up)
            self.pump()
        return b

    def add_client(self, name: str, broker_id: str, tenant: str = "") -> InProcClient:
        """Attach a client; check ``registered``/``error`` for the outcome."""
        c = InProcClient(self, name, tenant)
        hc, _hb = self._connect(c, self.brokers[broker_id])
        c._handle, c.broker_id = hc, broker_id
        hc.send(Frame(Command.HELLO, name, "", "0", tenant.encode()))
        self.pump()
        if c.registered:
            self.clients[name] = c
        return c

    def disconnect(self, client: InProcClient) -> None:
        h = client._handle
        self.brokers[client.broker_id].session_closed(h.peer)
        h.close()
        if self.clients.get(client.name) is client:
            del self.clients[client.name]
        self.pump()

    def link(self, child: str) -> LinkLog:
        return self.links[(child, self.parent_of[child])]

    def total_link_frames(self) -> int:
        return sum(len(lg.frames) for lg in self.links.values())

    def hops(self, a: str, b: str) -> int:
        """Number of broker links on the tree path between two brokers."""
        def chain(x):
            out = [x]
            while x in self.parent_of:
                x = self.parent_of[x]
                out.append(x)
            return out
        ca, cb = chain(a), chain(b)
        common = next(x for x in ca if x in cb)
        return ca.index(common) + cb.index(common)


# -- TCP transport -----------------------------------------------------------------

class SocketSession(Session):
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self._wlock = threading.Lock()
        self.closed = False

    def send(self, frame: Frame) -> None:
        if self.closed:
            return
        data = encode(frame)
        try:
            with self._wlock:
                self.sock.sendall(data)
        except OSError:
            self.closed = True

    def close(self) -> None:
        self.closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()

    __hash__ = object.__hash__

    def __eq__(self, other):
        return self is other


def _read_frames(sock: socket.socket, on_frame, on_close) -> None:
    dec = FrameDecoder()
    try:
        while True:
            data = sock.recv(65536)
            if not data:
                break
            for frame in dec.feed(data):
                on_frame(frame)
    except (OSError, FrameError) as exc:
        log.debug("connection ended: %s", exc)
    finally:
        on_close()


def parse_address(text: str, default_host: str = "127.0.0.1") -> tuple[str, int]:
    """``host:port`` or ``:port``."""
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {text!r}")
    return (host or default_host), int(port)


class TcpBroker:
    """Serve a :class:`Broker` over TCP, optionally attached to a parent."""

    def __init__(self, broker_id: str, listen: tuple[str, int] = ("127.0.0.1", 0),
                 parent: tuple[str, int] | None = None, ping_interval: float | None = None):
        self.broker = Broker(broker_id)
        self._srv = socket.create_server(listen)
        self.address = self._srv.getsockname()[:2]
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()
        self._sessions: dict[SocketSession, float] = {}
        self.ping_interval = ping_interval
        if parent is not None:
            sess = SocketSession(socket.create_connection(parent))
            self._spawn(_read_frames, sess.sock,
                        lambda f, s=sess: self._on_frame(s, f),
                        lambda s=sess: self._on_close(s))
            self.broker.attach_parent(sess)

    def _spawn(self, fn, *args) -> None:
        t = threading.Thread(target=fn, args=args, daemon=True)
        t.start()
        self._threads.append(t)

    def _on_frame(self, sess: SocketSession, frame: Frame) -> None:
        self._sessions[sess] = _now()
        self.broker.handle(sess, frame)

    def _on_close(self, sess: SocketSession) -> None:
        self._sessions.pop(sess, None)
        self.broker.session_closed(sess)
        sess.closed = True

    def start(self) -> "TcpBroker":
        self._spawn(self._accept_loop)
        if self.ping_interval:
            self._spawn(self._ping_loop)
        return self

    def _accept_loop(self) -> None:
        self._srv.settimeout(0.2)
        while not self._stop.is_set():
            try:
                conn, _ = self._srv.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            sess = SocketSession(conn)
            self._sessions[sess] = _now()
            self._spawn(_read_frames, conn,
                        lambda f, s=sess: self._on_frame(s, f),
                        lambda s=sess: self._on_close(s))

    def _ping_loop(self) -> None:
        while not self._stop.wait(self.ping_interval):
            cutoff = _now() - 2 * self.ping_interval
            for sess, seen in list(self._sessions.items()):
                if seen < cutoff:
                    sess.close()
                else:
                    sess.send(Frame(Command.PING, self.broker.id))

    def serve_forever(self) -> None:
        self.start()
        try:
            while not self._stop.wait(0.5):
                pass
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        self._srv.close()
        for sess in list(self._sessions):
            sess.close()


def _now() -> float:
    return time.monotonic()


class TcpClient(ClientCore):
    """Blocking client for a :class:`TcpBroker`."""

    def __init__(self, name: str, address: tuple[str, int], tenant: str = "", timeout: float = 5.0):
        super().__init__(name, tenant)
        self._q: queue.Queue = queue.Queue()
        self._sess = SocketSession(socket.create_connection(address, timeout=timeout))
        self._sess.sock.settimeout(None)
        self._reader = threading.Thread(target=_read_frames, daemon=True,
                                        args=(self._sess.sock, self._incoming, lambda: self._q.put(None)))
        self._reader.start()
        self._sess.send(Frame(Command.HELLO, name, "", "0", tenant.encode()))
        reply = self.recv(timeout)
        if reply is None or reply.command != Command.HELLO_OK:
            self.close()
            reason = reply.text if reply is not None else "no reply"
            if "NameTaken" in reason:
                raise NameTaken(name)
            raise InvalidName(f"{name}: {reason}")

    def _incoming(self, frame: Frame) -> None:
        if frame.command == Command.PING:
            self._sess.send(Frame(Command.PONG, self.name, frame.source, frame.corr))
            return
        self._receive(frame)
        self._q.put(frame)

    def recv(self, timeout: float | None = None) -> Frame | None:
        try:
            return self._q.get(timeout=timeout)
        except queue.Empty:
            return None

    def send(self, to: str, payload: bytes | str = b"", corr: str | None = None) -> str:
        corr = corr or self._next_corr()
        self._sess.send(Frame(Command.SEND, self.name, to, corr, _bytes(payload)))
        return corr

    def publish(self, topic: str, payload: bytes | str = b"") -> None:
        self._sess.send(Frame(Command.PUB, self.name, topic, self._next_corr(), _bytes(payload)))

    def subscribe(self, pattern: str) -> None:
        self._sess.send(Frame(Command.SUB, self.name, pattern))

    def unsubscribe(self, pattern: str) -> None:
        self._sess.send(Frame(Command.UNSUB, self.name, pattern))

    def close(self) -> None:
        if not self._sess.closed:
            self._sess.send(Frame(Command.BYE, self.name))
            self._sess.close()
