"""
In-process publish/subscribe bus with MQTT topic strings and wildcard
subscriptions, canonical JSON payloads, and a hop log costing every
publisher-to-subscriber transfer over the infrastructure graph.
"""

import json
import logging
import queue
import threading
from collections import deque
from functools import lru_cache
from dataclasses import dataclass, replace
from typing import Callable, Dict, FrozenSet, List, Optional, Tuple

import pandas as pd
from paho.mqtt.client import topic_matches_sub

from .errors import ProtocolError, SchemaError
from .topology import InfrastructureGraph

logger = logging.getLogger(__name__)

HOP_LOG_COLUMNS = ["seqNo", "topic", "srcDevice", "dstDevice", "hops", "matingIndex"]

# hop-log rows outside any mating (init and stop traffic)
NO_MATING = -1


@dataclass(frozen=True)
class TopicSchema:
    pattern: str
    attributes: FrozenSet[str]
    publisher: str
    description: str


def _schema(pattern, attributes, publisher, description):
    return TopicSchema(pattern, frozenset(attributes), publisher, description)


TEMPLATE_ATTRIBUTES = ("subPopulationSize", "chromosomeShape", "infrastructure")

# Topic design of the semi-distributed protocol
SEMI_SCHEMAS = (
    _schema("command/+/solutionTemplate", TEMPLATE_ATTRIBUTES, "coordinator", "Answer for a joining request"),
    _schema("command/+/removeSolutions", ("ids",), "coordinator", "Solutions removed from the global objective space"),
    _schema("command/+/sendSolution", ("solutionId", "target"), "coordinator", "Request for a solution's decision space"),
    _schema("solution/+", ("chromosome",), "worker", "Answer to a solution request"),
    _schema("command/stopOptimization", (), "coordinator", "End of the optimization"),
    _schema("command/join", ("workerId",), "worker", "Request to join the optimization"),
    _schema("fitness/+/newPopulation", ("workerId", "solutionIds", "fitness"), "worker", "Objectives of the initial sub-population"),
    _schema("fitness/+/newChildren", ("workerId", "solutionIds", "fitness"), "worker", "Objectives of the two children of a mating"),
)

# Topic design of the fully-distributed and neighbor-aware protocols
FULLY_SCHEMAS = (
    _schema("command/+/sendSolution", ("requester",), "worker", "Request for one solution of a remote worker"),
    _schema("solution/+", ("chromosome",), "worker", "Answer to a solution request"),
    _schema("command/stopOptimization", (), "context provider", "End of the optimization"),
    _schema("command/+/solutionTemplate", TEMPLATE_ATTRIBUTES, "context provider", "Answer for a joining request"),
    _schema("command/join", ("workerId",), "worker", "Request to join the optimization"),
)


@dataclass(frozen=True)
class Message:
    seq_no: int
    topic: str
    payload: dict
    src_client: str
    dst_client: str
    src_device: int
    dst_device: int
    hop_cost: int
    mating_index: int = NO_MATING

    def log_row(self) -> dict:
        return {
            "seqNo": self.seq_no,
            "topic": self.topic,
            "srcDevice": self.src_device,
            "dstDevice": self.dst_device,
            "hops": self.hop_cost,
            "matingIndex": self.mating_index,
        }


@dataclass(frozen=True)
class Subscription:
    client_id: str
    pattern: str


def encode(payload: dict) -> bytes:
    """Canonical UTF-8 JSON: sorted keys, no whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def decode(data: bytes) -> dict:
    try:
        payload = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SchemaError(f"Malformed payload document: {e}") from e
    if not isinstance(payload, dict):
        raise SchemaError("Payload document must be a key-value object")
    return payload


def validate_pattern(pattern: str):
    if not pattern:
        raise SchemaError("Empty topic pattern")
    levels = pattern.split("/")
    for k, level in enumerate(levels):
        if level in ("+", "#"):
            if level == "#" and k != len(levels) - 1:
                raise SchemaError(f"'#' must be the last level in {pattern!r}")
            continue
        if "+" in level or "#" in level:
            raise SchemaError(f"Wildcards must occupy a whole level in {pattern!r}")


def schema_for(topic: str, schemas) -> TopicSchema:
    if "+" in topic or "#" in topic:
        raise SchemaError(f"Cannot publish to a wildcard topic {topic!r}")
    for schema in schemas:
        if _matches(schema.pattern, topic):
            return schema
    raise SchemaError(f"Topic {topic!r} is not part of the topic design")


def validate_payload(topic: str, payload: dict, schemas) -> TopicSchema:
    schema = schema_for(topic, schemas)
    keys = set(payload)
    missing, extra = schema.attributes - keys, keys - schema.attributes
    if missing or extra:
        raise SchemaError(
            f"Payload for {topic!r} does not match {schema.pattern!r}: "
            f"missing={sorted(missing)} extra={sorted(extra)}",
            missing,
            extra,
        )
    return schema


@lru_cache(maxsize=8192)
def _matches(pattern: str, topic: str) -> bool:
    return topic_matches_sub(pattern, topic)


Handler = Callable[[Message], None]


class Bus:
    """
    Deterministic mode: every delivery goes through one FIFO queue drained
    by `run_until_idle`. Concurrent mode: each client drains its own inbox
    on its own thread; deliveries from one sender keep their order.
    """

    def __init__(self, graph: InfrastructureGraph, schemas=SEMI_SCHEMAS, mode: str = "deterministic"):
        if mode not in ("deterministic", "concurrent"):
            raise ValueError(f"Unknown bus mode: {mode}")
        self.graph = graph
        self.schemas = tuple(schemas)
        self.mode = mode
        self.log: List[Message] = []
        self._clients: Dict[str, Tuple[int, Handler]] = {}
        self._subscriptions: List[Subscription] = []
        self._seq = 0
        self._lock = threading.RLock()
        self._events = deque()
        self._inboxes: Dict[str, queue.Queue] = {}
        self._threads: List[threading.Thread] = []
        self.errors: List[BaseException] = []
        self._stopped = threading.Event()

    def register(self, client_id: str, device_id: int, handler: Handler):
        with self._lock:
            if client_id in self._clients:
                raise ProtocolError(f"Client {client_id} is already connected")
            self._clients[client_id] = (device_id, handler)
            self._inboxes[client_id] = queue.Queue()

    def device_of(self, client_id: str) -> int:
        return self._clients[client_id][0]

    def subscribe(self, client_id: str, pattern: str) -> Subscription:
        validate_pattern(pattern)
        if client_id not in self._clients:
            raise ProtocolError(f"Unknown client {client_id}")
        sub = Subscription(client_id, pattern)
        with self._lock:
            self._subscriptions.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription):
        with self._lock:
            self._subscriptions.remove(sub)

    def _recipients(self, topic: str) -> List[str]:
        seen = []
        for sub in self._subscriptions:
            if sub.client_id not in seen and _matches(sub.pattern, topic):
                seen.append(sub.client_id)
        return seen

    def publish(self, client_id: str, topic: str, payload: dict, mating_index: int = NO_MATING) -> List[Message]:
        """Validates, encodes and fans a payload out to every matching subscriber."""
        validate_payload(topic, payload, self.schemas)
        data = encode(payload)
        src_device = self.device_of(client_id)
        records = []
        with self._lock:
            for dst in self._recipients(topic):
                dst_device = self.device_of(dst)
                self._seq += 1
                record = Message(
                    seq_no=self._seq,
                    topic=topic,
                    payload=payload,
                    src_client=client_id,
                    dst_client=dst,
                    src_device=src_device,
                    dst_device=dst_device,
                    hop_cost=self.graph.hops_between(src_device, dst_device),
                    mating_index=mating_index,
                )
                self.log.append(record)
                records.append(record)
                if self.mode == "deterministic":
                    self._events.append((record, data))
                else:
                    self._inboxes[dst].put((record, data))
        if not records:
            logger.debug("No subscriber for %s, message dropped", topic)
        return records

    def _deliver(self, record: Message, data: bytes):
        # every recipient decodes its own copy of the payload
        delivered = replace(record, payload=decode(data))
        self._clients[record.dst_client][1](delivered)

    def run_until_idle(self) -> int:
        """Drains the deterministic event queue. Returns the number of deliveries."""
        count = 0
        while self._events:
            record, data = self._events.popleft()
            self._deliver(record, data)
            count += 1
        return count

    def pending(self) -> int:
        return len(self._events)

    def _client_loop(self, client_id: str):
        inbox = self._inboxes[client_id]
        while True:
            item = inbox.get()
            if item is None:
                return
            try:
                self._deliver(*item)
            except BaseException as e:
                logger.error("Client %s failed on %s: %s", client_id, item[0].topic, e)
                with self._lock:
                    self.errors.append(e)
                self._stopped.set()
                return

    def start(self):
        if self.mode != "concurrent":
            return
        for client_id in list(self._clients):
            t = threading.Thread(target=self._client_loop, args=(client_id,), name=f"bus-{client_id}", daemon=True)
            self._threads.append(t)
            t.start()

    def shutdown(self):
        """Signals every client thread to finish once its inbox is drained."""
        self._stopped.set()
        for inbox in self._inboxes.values():
            inbox.put(None)

    def wait(self, timeout: Optional[float] = None) -> bool:
        return self._stopped.wait(timeout)

    def join(self, timeout: Optional[float] = None):
        for t in self._threads:
            t.join(timeout)
        if self.errors:
            raise self.errors[0]

    def hop_log_frame(self) -> pd.DataFrame:
        return hop_log_frame(self.log)


def hop_log_frame(records: List[Message]) -> pd.DataFrame:
    return pd.DataFrame([r.log_row() for r in records], columns=HOP_LOG_COLUMNS)
