"""Broker wire format, routing locality, delivery guarantees and TCP transport."""

import random
import time
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from obskit import broker as bk
from obskit.broker import Command, Frame


# -- wire format -------------------------------------------------------------------

names = st.text(st.characters(blacklist_categories=("Cs",)), max_size=40)
frames = st.builds(Frame, st.sampled_from(list(Command)), names, names, names, st.binary(max_size=300))


@given(frames)
def test_frame_round_trip(f):
    data = bk.encode(f)
    g, used = bk.decode(data)
    assert g == f and used == len(data)


def test_frame_layout_is_bit_exact():
    data = Frame(Command.SEND, "a", "bc", "7", b"\x00\xff").encode()
    assert data == (b"\x00\x00\x00\x10" b"\x01\x03" b"\x00\x01a" b"\x00\x02bc" b"\x00\x017"
                    b"\x00\x02\x00\xff")


@given(st.lists(frames, min_size=1, max_size=8), st.integers(1, 50))
def test_decoder_reassembles_arbitrary_chunking(fs, step):
    stream = b"".join(f.encode() for f in fs)
    dec = bk.FrameDecoder()
    got = []
    for i in range(0, len(stream), step):
        got += dec.feed(stream[i:i + step])
    assert got == fs


@pytest.mark.parametrize("data", [
    b"\x00\x00",
    b"\x00\x00\x00\x05\x01\x03",
    b"\x00\x00\x00\x0a\x02\x03" + b"\x00\x00" * 4,     # wrong version
    b"\x00\x00\x00\x0a\x01\x63" + b"\x00\x00" * 4,     # unknown command
    b"\x00\x00\x00\x0b\x01\x03" + b"\x00\x00" * 4 + b"x",  # trailing byte
])
def test_malformed_frames_rejected(data):
    with pytest.raises(bk.FrameError):
        bk.decode(data)


def test_topic_patterns():
    assert bk.topic_matches("alarm/*", "alarm/congestion")
    assert not bk.topic_matches("alarm/congestion", "alarm/port")
    assert bk.topic_matches("*", "x/y")
    for bad in ("a/*/b*", "", "a//b", "/x*"):
        with pytest.raises(bk.InvalidPattern):
            bk.validate_pattern(bad)


# -- registration ------------------------------------------------------------------

def test_register_and_name_taken():
    fab = bk.InProcFabric()
    fab.add_broker("b")
    c = fab.add_client("ratemon.port1", "b")
    assert c.registered and c.messages(Command.HELLO_OK)
    dup = fab.add_client("ratemon.port1", "b")
    assert not dup.registered and dup.error == "NameTaken"


@pytest.mark.parametrize("name", ["", "a/b", "x" * 256])
def test_invalid_names(name):
    with pytest.raises(bk.InvalidName):
        bk.validate_name(name)


# -- three-broker tree --------------------------------------------------------------

@pytest.fixture
def tree():
    fab = bk.InProcFabric()
    fab.add_broker("R")
    fab.add_broker("A", "R")
    fab.add_broker("B", "R")
    return fab


def _mark(fab):
    return {k: len(v.frames) for k, v in fab.links.items()}


def _new_frames(fab, mark):
    return {k: v.frames[mark[k]:] for k, v in fab.links.items()}


def test_same_broker_send_stays_local(tree):
    a1, a2 = tree.add_client("a1", "A"), tree.add_client("a2", "A")
    m = _mark(tree)
    a1.send("a2", "hi")
    assert [f.text for f in a2.messages(Command.DELIVER)] == ["hi"]
    assert all(not v for v in _new_frames(tree, m).values())


def test_same_broker_pub_stays_local(tree):
    a1, a2 = tree.add_client("a1", "A"), tree.add_client("a2", "A")
    a2.subscribe("alarm/congestion")
    m = _mark(tree)
    a1.publish("alarm/congestion", "x")
    assert len(a2.messages(Command.DELIVER_PUB)) == 1
    assert all(not v for v in _new_frames(tree, m).values())


def test_cross_sibling_send_crosses_parent_once(tree):
    a1, b1 = tree.add_client("a1", "A"), tree.add_client("b1", "B")
    m = _mark(tree)
    a1.send("b1", "hello")
    new = _new_frames(tree, m)
    assert [(d, f.command) for d, f in new[("A", "R")]] == [("up", Command.SEND)]
    assert [(d, f.command) for d, f in new[("B", "R")]] == [("down", Command.SEND)]
    assert [f.text for f in b1.messages(Command.DELIVER)] == ["hello"]
    assert tree.brokers["R"].stats.forwarded == 1


def test_unknown_destination(tree):
    a1 = tree.add_client("a1", "A")
    tree.add_client("b1", "B")
    a1.send("nobody", "x", corr="42")
    errs = a1.messages(Command.ERROR)
    assert len(errs) == 1
    assert errs[0].text == "UnknownDestination:nobody" and errs[0].corr == "42"


def test_no_subscriber_publication_has_no_link_frames(tree):
    a1 = tree.add_client("a1", "A")
    tree.add_client("b1", "B")
    m = _mark(tree)
    a1.publish("metrics/x", "1")
    assert all(not v for v in _new_frames(tree, m).values())


def test_two_child_subscribers_fan_out_at_children(tree):
    pub = tree.add_client("pub", "R")
    sa, sb = tree.add_client("sa", "A"), tree.add_client("sb", "B")
    sa.subscribe("alarm/*")
    sb.subscribe("alarm/*")
    m = _mark(tree)
    pub.publish("alarm/port", "p")
    new = _new_frames(tree, m)
    assert [f.command for _, f in new[("A", "R")]] == [Command.PUB]
    assert [f.command for _, f in new[("B", "R")]] == [Command.PUB]
    assert len(sa.messages(Command.DELIVER_PUB)) == len(sb.messages(Command.DELIVER_PUB)) == 1


def test_ten_thousand_publications_exactly_once(tree):
    pub = tree.add_client("pub", "A")
    subs = [tree.add_client(n, b) for n, b in
            [("s1", "A"), ("s2", "A"), ("s3", "B"), ("s4", "B"), ("s5", "R")]]
    for s in subs:
        s.subscribe("metrics/*")
    for i in range(10_000):
        pub.publish(f"metrics/ratemon.risk/port{i % 4}", str(i))
    for s in subs:
        got = Counter(f.text for f in s.messages(Command.DELIVER_PUB))
        assert len(got) == 10_000 and set(got.values()) == {1}
    # B hosts two subscribers but the publication crosses its uplink once
    assert tree.link("B").count(Command.PUB) == 10_000


def test_name_gone_after_close(tree):
    a1, b1 = tree.add_client("a1", "A"), tree.add_client("b1", "B")
    a1.send("b1", "one")
    b1.close()
    a1.send("b1", "two")
    assert [f.text for f in a1.messages(Command.ERROR)] == ["UnknownDestination:b1"]
    # the name is free again
    assert tree.add_client("b1", "A").registered


def test_subscription_withdrawn_on_close(tree):
    pub = tree.add_client("pub", "A")
    s = tree.add_client("s", "B")
    s.subscribe("t/*")
    s.close()
    m = _mark(tree)
    pub.publish("t/x")
    assert all(not any(f.command == Command.PUB for _, f in v)
               for v in _new_frames(tree, m).values())


def test_per_pair_fifo(tree):
    a1, b1 = tree.add_client("a1", "A"), tree.add_client("b1", "B")
    for i in range(200):
        a1.send("b1", str(i))
    assert [f.text for f in b1.messages(Command.DELIVER)] == [str(i) for i in range(200)]


# -- random trees ------------------------------------------------------------------

def _random_tree(rng, n_brokers, n_clients):
    fab = bk.InProcFabric()
    fab.add_broker("b0")
    for i in range(1, n_brokers):
        fab.add_broker(f"b{i}", f"b{rng.randrange(i)}")
    clients = [fab.add_client(f"c{j}", f"b{rng.randrange(n_brokers)}") for j in range(n_clients)]
    return fab, clients


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_send_frames_follow_tree_path(seed):
    rng = random.Random(seed)
    fab, clients = _random_tree(rng, rng.randint(1, 9), rng.randint(2, 8))
    for _ in range(10):
        a, b = rng.sample(clients, 2)
        before = fab.total_link_frames()
        n_before = len(b.messages(Command.DELIVER))
        a.send(b.name, "m")
        assert fab.total_link_frames() - before == fab.hops(a.broker_id, b.broker_id)
        assert len(b.messages(Command.DELIVER)) == n_before + 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_publication_exactly_once_and_no_link_reuse(seed):
    rng = random.Random(seed)
    fab, clients = _random_tree(rng, rng.randint(1, 9), rng.randint(2, 8))
    topics = ["x/a", "x/b", "y/a"]
    subs = {}
    for c in clients:
        pats = rng.sample(["x/*", "x/a", "y/a", "*"], rng.randint(0, 2))
        for p in pats:
            c.subscribe(p)
        subs[c.name] = pats
    for k in range(20):
        pub = rng.choice(clients)
        topic = rng.choice(topics + ["z/none"])
        before = _mark(fab)
        pub.publish(topic, str(k))
        want = {c.name for c in clients if any(bk.topic_matches(p, topic) for p in subs[c.name])}
        new = _new_frames(fab, before)
        for lk, frs in new.items():
            assert sum(f.command == Command.PUB for _, f in frs) <= 1, lk
        # a publication crosses exactly the links of the subtree spanning
        # the publisher and the matching subscribers
        ends = {pub.broker_id} | {fab.clients[n].broker_id for n in want}
        used = sum(1 for frs in new.values() if frs)
        assert used == _steiner_edges(fab, ends)
        for c in clients:
            got = [f for f in c.messages(Command.DELIVER_PUB) if f.text == str(k)]
            assert len(got) == int(c.name in want)


def _steiner_edges(fab, ends):
    below = {b: {b} for b in fab.brokers}
    for b in fab.brokers:
        x = b
        while x in fab.parent_of:
            x = fab.parent_of[x]
            below[x].add(b)
    return sum(1 for child in fab.parent_of
               if below[child] & ends and ends - below[child])


# -- TCP transport ---------------------------------------------------------------

def _wait_for(pred, timeout=3.0):
    end = time.monotonic() + timeout
    while time.monotonic() < end:
        if pred():
            return True
        time.sleep(0.01)
    return False


def _next(client, cmd, timeout=3.0):
    end = time.monotonic() + timeout
    while time.monotonic() < end:
        f = client.recv(timeout=max(0.0, end - time.monotonic()))
        if f is None:
            return None
        if f.command == cmd:
            return f
    return None


@pytest.fixture
def tcp_tree():
    root = bk.TcpBroker("R").start()
    a = bk.TcpBroker("A", parent=root.address).start()
    b = bk.TcpBroker("B", parent=root.address).start()
    assert _wait_for(lambda: set(root.broker.children) == {"A", "B"})
    yield root, a, b
    for x in (a, b, root):
        x.stop()


def test_tcp_loopback_send():
    tb = bk.TcpBroker("solo").start()
    try:
        c1 = bk.TcpClient("c1", tb.address)
        c2 = bk.TcpClient("c2", tb.address)
        c1.send("c2", "ping")
        f = _next(c2, Command.DELIVER)
        assert f is not None and f.text == "ping" and f.source == "c1"
        with pytest.raises(bk.NameTaken):
            bk.TcpClient("c1", tb.address)
        c1.close()
        c2.close()
    finally:
        tb.stop()


def test_tcp_tree_routing(tcp_tree):
    root, a, b = tcp_tree
    ca = bk.TcpClient("ca", a.address)
    cb = bk.TcpClient("cb", b.address)
    assert _wait_for(lambda: "cb" in root.broker.child_names)
    cb.subscribe("alarm/*")
    assert _wait_for(lambda: any(root.broker.remote_interest.get("B", ())))
    ca.send("cb", "hello")
    ca.publish("alarm/congestion", "hot")
    assert _next(cb, Command.DELIVER).text == "hello"
    assert _next(cb, Command.DELIVER_PUB).text == "hot"
    ca.send("ghost", "x")
    assert _next(ca, Command.ERROR).text == "UnknownDestination:ghost"
    cb.close()
    assert _wait_for(lambda: "cb" not in root.broker.child_names)
    ca.send("cb", "late")
    assert _next(ca, Command.ERROR).text == "UnknownDestination:cb"
    ca.close()


def test_tcp_silent_session_is_dropped_after_ping_interval():
    tb = bk.TcpBroker("p", ping_interval=0.1).start()
    try:
        live = bk.TcpClient("live", tb.address)   # answers PING automatically
        import socket
        raw = socket.create_connection(tb.address)
        raw.sendall(Frame(Command.HELLO, "mute").encode())
        assert _wait_for(lambda: "mute" in tb.broker.clients)
        # the raw socket never answers PING, so it is reaped
        assert _wait_for(lambda: "mute" not in tb.broker.clients, timeout=2.0)
        assert "live" in tb.broker.clients
        live.close()
        raw.close()
    finally:
        tb.stop()
