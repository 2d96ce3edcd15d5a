"""The one-shot augmentation exchange between a server and its devices.

Flow of a run: the server announces target labels, per-device quotas and
blend parameters; each device answers once with a buffer of encoded samples;
the server decodes them against its own dummy-label base samples, trains on
the now balanced set and broadcasts the model. All traffic goes through an
in-process :class:`MessageBus` that keeps an ordered log.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .blending import BlendParams, blend_chain
from .classifier import ModelParams, evaluate, train
from .config import ExperimentConfig, RunReport
from .dataset import NUM_CLASSES, Dataset, LabelInventory, Partition, inventory, partition
from .errors import MissingDummyBase, MissingLabel, NothingToRequest, QuotaShortfall
from .privacy import score_augmented, summarize
from .seeding import substream
from .xorcodec import MIX, XOR, DecodedSample, EncodedSample, decode, encode, mix_encode

SERVER = "server"
BROADCAST = "*"


def device_name(i: int) -> str:
    return f"device-{i}"


# --- messages ---------------------------------------------------------------

@dataclass(frozen=True)
class AnnounceRequest:
    device: int
    target_labels: tuple[int, ...]
    quota: dict[int, int]
    alpha: float
    p: int
    dummy_labels: tuple[int, ...]
    kind = "AnnounceRequest"

    def payload(self) -> bytes:
        return json.dumps({"device": self.device, "target_labels": list(self.target_labels),
                           "quota": {str(k): v for k, v in sorted(self.quota.items())},
                           "alpha": self.alpha, "p": self.p, "dummy_labels": list(self.dummy_labels)},
                          sort_keys=True).encode()


@dataclass(frozen=True, eq=False)
class UploadBuffer:
    device: int
    samples: list[EncodedSample]
    kind = "UploadBuffer"

    def __len__(self):
        return len(self.samples)

    def count(self, label: int) -> int:
        return sum(s.target_label == label for s in self.samples)

    def payload(self) -> bytes:
        # pixels plus the cleartext label metadata; contributor ids stay device-side
        parts = [json.dumps({"device": self.device, "n": len(self.samples)}).encode()]
        for s in self.samples:
            parts.append(bytes([s.target_label, s.dummy_label]))
            parts.append(s.cipher.tobytes())
        return b"".join(parts)


@dataclass(frozen=True, eq=False)
class ModelBroadcast:
    blob: bytes
    kind = "ModelBroadcast"

    def payload(self) -> bytes:
        return self.blob


@dataclass(frozen=True)
class Ack:
    device: int
    received: int
    kind = "Ack"

    def payload(self) -> bytes:
        return json.dumps({"device": self.device, "received": self.received}).encode()


@dataclass(frozen=True)
class ErrorMessage:
    reason: str
    kind = "Error"

    def payload(self) -> bytes:
        return self.reason.encode()


@dataclass(frozen=True, eq=False)
class Envelope:
    seq: int
    sender: str
    recipient: str
    kind: str
    payload_digest: str
    payload_size_bytes: int
    message: object = field(repr=False, compare=False)

    def record(self) -> dict:
        return {"seq": self.seq, "from": self.sender, "to": self.recipient, "kind": self.kind,
                "payload_digest": self.payload_digest, "payload_size_bytes": self.payload_size_bytes}


class MessageBus:
    """Synchronous in-process transport with an append-only log."""

    def __init__(self):
        self.log: list[Envelope] = []
        self._inbox: dict[str, list] = {}

    def send(self, sender: str, recipient: str, message) -> Envelope:
        payload = message.payload()
        env = Envelope(len(self.log), sender, recipient, message.kind,
                       hashlib.sha256(payload).hexdigest(), len(payload), message)
        self.log.append(env)
        self._inbox.setdefault(recipient, []).append(message)
        return env

    def receive(self, recipient: str, kind: str | None = None) -> list:
        box = self._inbox.get(recipient, [])
        taken = [m for m in box if kind is None or m.kind == kind]
        self._inbox[recipient] = [m for m in box if not (kind is None or m.kind == kind)]
        return taken

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for env in self.log:
            out[env.kind] = out.get(env.kind, 0) + 1
        return out

    def jsonl(self) -> str:
        return "".join(json.dumps(env.record(), sort_keys=True) + "\n" for env in self.log)

    def write_jsonl(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.jsonl())

    def digest(self) -> str:
        return hashlib.sha256(self.jsonl().encode()).hexdigest()


# --- quotas -----------------------------------------------------------------

@dataclass(frozen=True)
class QuotaPlan:
    total: dict[int, int]
    per_device: dict[tuple[int, int], int]

    def for_device(self, device: int) -> dict[int, int]:
        return {label: n for (d, label), n in sorted(self.per_device.items()) if d == device}

    @property
    def devices(self) -> list[int]:
        return sorted({d for d, _ in self.per_device})


def plan_quotas(server_inv: LabelInventory, target_labels: Iterable[int], num_devices: int,
                level: int | None = None) -> QuotaPlan:
    """Request ``level - count`` samples per target label, split evenly over devices.

    ``level`` defaults to the largest non-target count, i.e. the balanced
    per-label size. Remainders go to the lowest device ids.
    """
    targets = sorted(set(target_labels))
    if level is None:
        others = [server_inv[k] for k in range(NUM_CLASSES) if k not in targets]
        level = max(others) if others else 0
    total = {k: max(level - server_inv[k], 0) for k in targets}
    if not any(total.values()):
        raise NothingToRequest(f"every target label already holds {level} samples")
    per_device = {}
    for k, need in total.items():
        base, extra = divmod(need, num_devices)
        for d in range(num_devices):
            per_device[(d, k)] = base + (1 if d < extra else 0)
    return QuotaPlan(total, per_device)


# --- agents -----------------------------------------------------------------

class _Pools:
    def __init__(self, data: Dataset):
        self.data = data
        self._pools = {}

    def __getitem__(self, label: int) -> Dataset:
        if label not in self._pools:
            self._pools[label] = self.data.by_label(label)
        return self._pools[label]

    def has(self, label: int) -> bool:
        return len(self[label]) > 0


@dataclass(eq=False)
class DeviceAgent:
    id: int
    data: Dataset
    blend: BlendParams = BlendParams()

    def __post_init__(self):
        self.pools = _Pools(self.data)


def device_encode_round(agent: DeviceAgent, req: AnnounceRequest, rng: np.random.Generator,
                        scheme: str = XOR) -> UploadBuffer:
    """Fill a buffer with exactly the requested number of uploads per target label."""
    params = BlendParams(req.alpha, req.p)
    dummies = [k for k in req.dummy_labels if agent.pools.has(k)]
    samples = []
    for label, quota in sorted(req.quota.items()):
        if quota == 0:
            continue
        if not agent.pools.has(label):
            raise MissingLabel(label, agent.id)
        if not dummies:
            raise MissingLabel(req.dummy_labels[0] if req.dummy_labels else -1, agent.id)
        for _ in range(quota):
            dummy_label = int(dummies[rng.integers(len(dummies))])
            target_blend = blend_chain(agent.pools[label], params, rng)
            dummy_blend = blend_chain(agent.pools[dummy_label], params, rng)
            if scheme == XOR:
                samples.append(encode(target_blend, dummy_blend, agent.id))
            else:
                samples.append(mix_encode(target_blend, dummy_blend, agent.id, params.alpha))
    return UploadBuffer(agent.id, samples)


@dataclass(eq=False)
class ServerAgent:
    base: Dataset
    plan: QuotaPlan | None = None
    blend: BlendParams = BlendParams()
    decoded: list[DecodedSample] = field(default_factory=list)
    model: ModelParams | None = None

    def __post_init__(self):
        self.pools = _Pools(self.base)

    def training_set(self) -> Dataset:
        if not self.decoded:
            return self.base
        aug = Dataset(np.stack([d.pixels for d in self.decoded]), [d.label for d in self.decoded],
                      -1 - np.arange(len(self.decoded)), "augmented", self.base.image_shape)
        return self.base.concat(aug, "server+augmented")


def server_decode_round(agent: ServerAgent, buffers: list[UploadBuffer], rng: np.random.Generator,
                        params: BlendParams | None = None) -> Dataset:
    """Decode uploads (device-id order) until every target quota is met; return base plus decoded."""
    params = agent.blend if params is None else params
    need = dict(agent.plan.total)
    supplied = {k: sum(b.count(k) for b in buffers) for k in need}
    short = {k: need[k] - supplied[k] for k in need if supplied[k] < need[k]}
    if short:
        raise QuotaShortfall(f"uploads short of quota: {short}")
    decoded = []
    got = {k: 0 for k in need}
    for buf in sorted(buffers, key=lambda b: b.device):
        for enc in buf.samples:
            k = enc.target_label
            if got.get(k, 0) >= need.get(k, 0):
                continue
            if enc.scheme == MIX:
                decoded.append(DecodedSample(enc.cipher.copy(), k, enc, ()))
            else:
                if not agent.pools.has(enc.dummy_label):
                    raise MissingDummyBase(enc.dummy_label)
                decoded.append(decode(enc, blend_chain(agent.pools[enc.dummy_label], params, rng)))
            got[k] += 1
    agent.decoded = decoded
    return agent.training_set()


# --- full run ---------------------------------------------------------------

@dataclass(eq=False)
class Exchange:
    """Everything produced by one announce/upload/decode cycle."""

    partition: Partition
    plan: QuotaPlan
    server: ServerAgent
    devices: list[DeviceAgent]
    buffers: list[UploadBuffer]
    bus: MessageBus
    training_set: Dataset
    scheme: str


def run_exchange(train_full: Dataset, config: ExperimentConfig, scheme: str = XOR,
                 test: Dataset | None = None) -> Exchange:
    """Partition, announce, collect one upload per device and decode. No training."""
    spec = config.partition
    part = partition(train_full, spec, test)
    bus = MessageBus()
    server = ServerAgent(part.server_shard, blend=config.blend)
    server.plan = plan_quotas(inventory(part.server_shard), spec.target_labels, spec.num_devices,
                              level=spec.server_rich)
    devices = [DeviceAgent(i, shard, config.blend) for i, shard in enumerate(part.device_shards)]
    for dev in devices:
        req = AnnounceRequest(dev.id, spec.target_labels, server.plan.for_device(dev.id),
                              config.blend.alpha, config.blend.p, spec.dummy_labels)
        bus.send(SERVER, device_name(dev.id), req)
    # devices are independent: each owns a generator derived from (seed, device id)
    for dev in devices:
        (req,) = bus.receive(device_name(dev.id), AnnounceRequest.kind)
        buf = device_encode_round(dev, req, substream(config.seed, f"device/{dev.id}"), scheme)
        bus.send(device_name(dev.id), SERVER, buf)
        bus.send(SERVER, device_name(dev.id), Ack(dev.id, len(buf)))
    buffers = bus.receive(SERVER, UploadBuffer.kind)
    training = server_decode_round(server, buffers, substream(config.seed, "server"))
    return Exchange(part, server.plan, server, devices, buffers, bus, training, scheme)


def privacy_summary(exchange: Exchange, source: Dataset, config: ExperimentConfig, tag: str):
    records = score_augmented(exchange.server.decoded, source)
    return summarize(records, tag, config.M, config.blend.p, config.blend.alpha)


def finish_exchange(exchange: Exchange, train_full: Dataset, test: Dataset, config: ExperimentConfig,
                    tag: str, started: float) -> RunReport:
    model = train(exchange.training_set, config.train)
    exchange.server.model = model
    exchange.bus.send(SERVER, BROADCAST, ModelBroadcast(model.to_bytes()))
    return RunReport(
        config=config.to_dict(),
        method=tag,
        eval=evaluate(model, test, config.partition.target_labels),
        privacy=privacy_summary(exchange, train_full, config, tag),
        train_inventory=inventory(exchange.training_set).as_list(),
        message_counts=exchange.bus.counts(),
        message_digest=exchange.bus.digest(),
        wall_clock_seconds=time.perf_counter() - started,
    )


def run_one_shot(config: ExperimentConfig, data: tuple[Dataset, Dataset] | None = None,
                 keep: list | None = None) -> RunReport:
    """XorMixFL end to end. ``data`` is ``(train, test)``; loaded from ``config`` if omitted.

    If ``keep`` is a list, the :class:`Exchange` is appended to it for inspection.
    """
    from .experiment import load_data

    started = time.perf_counter()
    train_full, test = data if data is not None else load_data(config.resolve_data_dir())
    exchange = run_exchange(train_full, config, XOR, test)
    report = finish_exchange(exchange, train_full, test, config, "XorMixFL", started)
    if keep is not None:
        keep.append(exchange)
    return report
