import json

import numpy as np
import pytest

from xormixfl.blending import BlendParams
from xormixfl.classifier import TrainConfig
from xormixfl.config import ExperimentConfig
from xormixfl.dataset import LabelInventory, inventory
from xormixfl.errors import MissingDummyBase, MissingLabel, NothingToRequest, QuotaShortfall
from xormixfl.protocol import (AnnounceRequest, DeviceAgent, MessageBus, ModelBroadcast, ServerAgent,
                               device_encode_round, plan_quotas, run_exchange, run_one_shot, server_decode_round)
from xormixfl.xorcodec import MIX, XOR

from conftest import toy_dataset


def server_inventory(deficient: dict[int, int], rich=500):
    return LabelInventory({k: deficient.get(k, rich) for k in range(10)})


def test_quota_split_with_remainder():
    plan = plan_quotas(server_inventory({5: 10}), {5}, 3, level=500)
    assert plan.total == {5: 490}
    assert [plan.per_device[(d, 5)] for d in range(3)] == [164, 163, 163]


def test_quota_level_defaults_to_balanced_size():
    plan = plan_quotas(server_inventory({5: 10}), {5}, 3)
    assert plan.total == {5: 490}


def test_quota_two_targets():
    plan = plan_quotas(server_inventory({0: 10, 2: 10}), {0, 2}, 3, level=500)
    assert len(plan.per_device) == 6
    assert sum(plan.per_device.values()) == 980
    assert plan.for_device(0) == {0: 164, 2: 164}


def test_quota_nothing_to_request():
    with pytest.raises(NothingToRequest):
        plan_quotas(server_inventory({}), {5}, 3, level=500)


def device(counts, seed=0, device_id=0):
    return DeviceAgent(device_id, toy_dataset(counts, seed=seed), BlendParams(0.5, 2))


def request(quota, dummies=(2,), device_id=0):
    return AnnounceRequest(device_id, tuple(sorted(quota)), quota, 0.5, 2, dummies)


def test_device_fills_exact_quota(rng):
    buf = device_encode_round(device({5: 10, 2: 50}), request({5: 164}), rng)
    assert len(buf) == 164
    assert all(s.target_label == 5 and s.dummy_label == 2 for s in buf.samples)
    assert all(len(s.target_contributors) == 2 for s in buf.samples)


def test_device_zero_quota(rng):
    assert len(device_encode_round(device({5: 10, 2: 50}), request({5: 0}), rng)) == 0


def test_device_missing_target(rng):
    with pytest.raises(MissingLabel):
        device_encode_round(device({2: 50}), request({5: 3}), rng)


def test_device_uses_only_held_dummies(rng):
    buf = device_encode_round(device({5: 10, 3: 20}), request({5: 40}, dummies=(2, 3)), rng)
    assert {s.dummy_label for s in buf.samples} == {3}


def test_device_mix_scheme(rng):
    buf = device_encode_round(device({5: 10, 2: 50}), request({5: 5}), rng, scheme=MIX)
    assert {s.scheme for s in buf.samples} == {MIX}


def make_server(base_counts, quota):
    server = ServerAgent(toy_dataset(base_counts, seed=9), blend=BlendParams(0.5, 1))
    server.plan = plan_quotas(inventory(server.base), quota, 2, level=max(base_counts.values()))
    return server


def test_server_balances_inventory(rng):
    server = make_server({**{k: 20 for k in range(10)}, 5: 4}, {5})
    bufs = [device_encode_round(device({5: 6, 2: 30}, seed=s, device_id=s), request(server.plan.for_device(s), device_id=s), rng)
            for s in range(2)]
    training = server_decode_round(server, bufs, rng)
    assert inventory(training).as_list() == [20] * 10
    assert len(server.decoded) == 16
    assert (training.ids[-16:] < 0).all()


def test_server_shortfall(rng):
    server = make_server({**{k: 20 for k in range(10)}, 5: 4}, {5})
    short = device_encode_round(device({5: 6, 2: 30}), request({5: 15}), rng)
    with pytest.raises(QuotaShortfall):
        server_decode_round(server, [short], rng)


def test_server_missing_dummy_base(rng):
    counts = {k: 20 for k in range(10) if k != 2}
    counts[5] = 4
    server = make_server(counts, {5})
    buf = device_encode_round(device({5: 6, 2: 30}), request({5: 16}), rng)
    with pytest.raises(MissingDummyBase):
        server_decode_round(server, [buf], rng)


def test_bus_log_and_digest():
    bus = MessageBus()
    bus.send("server", "device-0", request({5: 1}))
    bus.send("server", "*", ModelBroadcast(b"abc"))
    lines = [json.loads(x) for x in bus.jsonl().splitlines()]
    assert [x["seq"] for x in lines] == [0, 1]
    assert lines[1]["payload_size_bytes"] == 3
    assert set(lines[0]) == {"seq", "from", "to", "kind", "payload_digest", "payload_size_bytes"}
    assert len(bus.receive("device-0", "AnnounceRequest")) == 1
    assert bus.receive("device-0") == []
    assert len(bus.digest()) == 64


@pytest.fixture(scope="module")
def exchange(mnist):
    train, test = mnist
    return run_exchange(train, ExperimentConfig(), XOR, test)


def test_exchange_message_order(exchange):
    kinds = [(e.kind, e.sender, e.recipient) for e in exchange.bus.log]
    assert kinds[:3] == [("AnnounceRequest", "server", f"device-{i}") for i in range(3)]
    assert kinds[3:] == [x for i in range(3) for x in (("UploadBuffer", f"device-{i}", "server"),
                                                       ("Ack", "server", f"device-{i}"))]


def test_exchange_balances_defaults(exchange):
    assert inventory(exchange.training_set).as_list() == [500] * 10
    assert [len(b) for b in exchange.buffers] == [164, 163, 163]


def test_uploads_never_carry_raw_device_images(exchange):
    raw = {bytes(img) for dev in exchange.devices for img in dev.data.images}
    for buf in exchange.buffers:
        for s in buf.samples:
            assert bytes(s.cipher) not in raw
    payload = b"".join(e.message.payload() for e in exchange.bus.log if e.kind == "UploadBuffer")
    assert len(payload) == sum(len(b) * (784 + 2) for b in exchange.buffers) + \
        sum(len(json.dumps({"device": b.device, "n": len(b)})) for b in exchange.buffers)


def test_one_shot_report(mnist):
    train, test = mnist
    cfg = ExperimentConfig(train=TrainConfig(epochs=2))
    report = run_one_shot(cfg, (train, test))
    assert report.message_counts == {"AnnounceRequest": 3, "UploadBuffer": 3, "Ack": 3, "ModelBroadcast": 1}
    assert report.train_inventory == [500] * 10
    assert report.privacy.count == 490
    assert 0.5 < report.eval.test_accuracy <= 1.0
    again = run_one_shot(cfg, (train, test))
    assert again.reproducible_part() == report.reproducible_part()
