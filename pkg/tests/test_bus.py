import threading

import pytest

from fogweaver.bus import (
    FULLY_SCHEMAS,
    HOP_LOG_COLUMNS,
    NO_MATING,
    SEMI_SCHEMAS,
    Bus,
    decode,
    encode,
    validate_pattern,
    validate_payload,
)
from fogweaver.errors import ProtocolError, SchemaError


def collecting(bus, client_id, device_id):
    received = []
    bus.register(client_id, device_id, received.append)
    return received


def test_wildcard_subscription_and_hop_cost(line_graph):
    bus = Bus(line_graph, SEMI_SCHEMAS)
    collecting(bus, "coordinator", 5)
    inbox = collecting(bus, "worker-0", 4)
    bus.subscribe("worker-0", "command/0/+")
    bus.publish("coordinator", "command/0/sendSolution", {"solutionId": 7, "target": 1}, mating_index=3)
    assert bus.run_until_idle() == 1
    (msg,) = inbox
    assert msg.payload == {"solutionId": 7, "target": 1}
    assert msg.hop_cost == 3
    assert msg.mating_index == 3


def test_non_matching_topic_not_delivered(line_graph):
    bus = Bus(line_graph, SEMI_SCHEMAS)
    collecting(bus, "coordinator", 5)
    inbox = collecting(bus, "worker-1", 1)
    bus.subscribe("worker-1", "command/1/+")
    bus.publish("coordinator", "command/0/removeSolutions", {"ids": [1]})
    bus.run_until_idle()
    assert inbox == []
    assert bus.log == []


def test_fan_out_creates_one_record_per_subscriber(line_graph):
    bus = Bus(line_graph, FULLY_SCHEMAS)
    collecting(bus, "context-provider", 5)
    inboxes = [collecting(bus, f"worker-{i}", i) for i in range(3)]
    for i in range(3):
        bus.subscribe(f"worker-{i}", "command/stopOptimization")
        bus.subscribe(f"worker-{i}", "command/#")
    records = bus.publish("context-provider", "command/stopOptimization", {})
    bus.run_until_idle()
    assert [r.seq_no for r in records] == [1, 2, 3]
    assert [r.hop_cost for r in records] == [3, 2, 1]
    assert all(len(inbox) == 1 for inbox in inboxes)
    assert all(r.mating_index == NO_MATING for r in records)


def test_deterministic_fifo_order(line_graph):
    bus = Bus(line_graph, SEMI_SCHEMAS)
    order = []
    bus.register("worker-0", 0, lambda m: order.append(m.payload["ids"][0]))
    bus.register("coordinator", 5, lambda m: None)
    bus.subscribe("worker-0", "command/0/removeSolutions")
    for i in range(5):
        bus.publish("coordinator", "command/0/removeSolutions", {"ids": [i]})
    assert bus.pending() == 5
    bus.run_until_idle()
    assert order == [0, 1, 2, 3, 4]


def test_handlers_can_publish_during_drain(line_graph):
    bus = Bus(line_graph, FULLY_SCHEMAS)
    answers = collecting(bus, "worker-0", 0)
    bus.register(
        "worker-1",
        4,
        lambda m: bus.publish("worker-1", f"solution/{m.payload['requester']}", {"chromosome": "01"}, m.mating_index),
    )
    bus.subscribe("worker-0", "solution/0")
    bus.subscribe("worker-1", "command/1/sendSolution")
    bus.publish("worker-0", "command/1/sendSolution", {"requester": 0}, mating_index=0)
    assert bus.run_until_idle() == 2
    assert answers[0].payload == {"chromosome": "01"}
    assert [m.hop_cost for m in bus.log] == [4, 4]


def test_payload_schema_enforced(line_graph):
    bus = Bus(line_graph, SEMI_SCHEMAS)
    collecting(bus, "coordinator", 5)
    with pytest.raises(SchemaError) as err:
        bus.publish("coordinator", "command/0/sendSolution", {"solutionId": 1})
    assert err.value.missing == ["target"]
    with pytest.raises(SchemaError):
        bus.publish("coordinator", "command/0/sendSolution", {"solutionId": 1, "target": 0, "x": 1})
    with pytest.raises(SchemaError):
        bus.publish("coordinator", "unknown/topic", {})
    with pytest.raises(SchemaError):
        bus.publish("coordinator", "command/+/sendSolution", {"solutionId": 1, "target": 0})


def test_scenario_families_differ():
    validate_payload("command/2/sendSolution", {"requester": 1}, FULLY_SCHEMAS)
    with pytest.raises(SchemaError):
        validate_payload("command/2/sendSolution", {"requester": 1}, SEMI_SCHEMAS)
    with pytest.raises(SchemaError):
        validate_payload("fitness/2/newChildren", {"workerId": 2, "solutionIds": [], "fitness": []}, FULLY_SCHEMAS)


@pytest.mark.parametrize("pattern", ["", "a/#/b", "a/b+", "a#"])
def test_malformed_patterns(pattern):
    with pytest.raises(SchemaError):
        validate_pattern(pattern)


def test_canonical_encoding():
    assert encode({"b": 1, "a": [1, 2]}) == b'{"a":[1,2],"b":1}'
    with pytest.raises(SchemaError):
        decode(b"{broken")
    with pytest.raises(SchemaError):
        decode(b"[1, 2]")


def test_each_recipient_gets_its_own_payload(line_graph):
    bus = Bus(line_graph, SEMI_SCHEMAS)
    collecting(bus, "coordinator", 5)
    seen = []

    def mutate(message):
        seen.append(list(message.payload["ids"]))
        message.payload["ids"].append(99)

    for i in range(2):
        bus.register(f"worker-{i}", i, mutate)
        bus.subscribe(f"worker-{i}", "command/+/removeSolutions")
    bus.publish("coordinator", "command/0/removeSolutions", {"ids": [1]})
    bus.run_until_idle()
    assert seen == [[1], [1]]


def test_duplicate_client_rejected(line_graph):
    bus = Bus(line_graph, SEMI_SCHEMAS)
    bus.register("worker-0", 0, lambda m: None)
    with pytest.raises(ProtocolError):
        bus.register("worker-0", 1, lambda m: None)


def test_hop_log_frame(line_graph):
    bus = Bus(line_graph, SEMI_SCHEMAS)
    collecting(bus, "coordinator", 5)
    collecting(bus, "worker-0", 0)
    bus.subscribe("coordinator", "command/join")
    bus.publish("worker-0", "command/join", {"workerId": 0})
    frame = bus.hop_log_frame()
    assert list(frame.columns) == HOP_LOG_COLUMNS
    assert frame.iloc[0].to_dict() == {
        "seqNo": 1, "topic": "command/join", "srcDevice": 0, "dstDevice": 5, "hops": 3, "matingIndex": -1,
    }


def test_concurrent_mode_delivers_everything(line_graph):
    bus = Bus(line_graph, SEMI_SCHEMAS, mode="concurrent")
    collecting(bus, "coordinator", 5)
    got, lock = [], threading.Lock()

    def record(message):
        with lock:
            got.append((message.dst_client, message.payload["ids"][0]))

    for i in range(3):
        bus.register(f"worker-{i}", i, record)
        bus.subscribe(f"worker-{i}", f"command/{i}/removeSolutions")
    bus.start()
    for n in range(30):
        bus.publish("coordinator", f"command/{n % 3}/removeSolutions", {"ids": [n]})
    bus.shutdown()
    bus.join()
    assert len(got) == 30
    # per-sender order is kept at each recipient
    for i in range(3):
        mine = [n for dst, n in got if dst == f"worker-{i}"]
        assert mine == sorted(mine)


def test_concurrent_handler_error_surfaces(line_graph):
    bus = Bus(line_graph, SEMI_SCHEMAS, mode="concurrent")
    collecting(bus, "coordinator", 5)

    def fail(message):
        raise ProtocolError("boom", ["#1 command/0/removeSolutions"])

    bus.register("worker-0", 0, fail)
    bus.subscribe("worker-0", "command/0/removeSolutions")
    bus.start()
    bus.publish("coordinator", "command/0/removeSolutions", {"ids": [1]})
    assert bus.wait(timeout=5)
    bus.shutdown()
    with pytest.raises(ProtocolError) as err:
        bus.join()
    assert "recent messages" in str(err.value)
