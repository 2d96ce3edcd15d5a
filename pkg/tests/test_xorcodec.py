import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xormixfl.blending import BlendedSample
from xormixfl.errors import DummyLabelMismatch, LengthMismatch, SameLabel
from xormixfl.xorcodec import MIX, XOR, decode, encode, mix_encode, quantize, xor_bytes

byte_images = st.lists(st.integers(0, 255), min_size=1, max_size=64)


def blend(values, label, contributors=(0,)):
    return BlendedSample(np.asarray(values, dtype=np.float64), label, tuple(contributors))


def test_quantize_examples():
    assert quantize([12.75, 100.5, 255.0]).tolist() == [13, 101, 255]
    assert quantize([-3.0]).tolist() == [0]
    assert quantize([260.2]).tolist() == [255]
    assert quantize([159.5, 64.4, 0.49]).tolist() == [160, 64, 0]
    assert quantize([1.0]).dtype == np.uint8


def test_xor_examples():
    assert xor_bytes([0b1010, 0b0011], [0b0110, 0b0101]).tolist() == [0b1100, 0b0110]
    a = np.arange(256, dtype=np.uint8)
    assert not xor_bytes(a, a).any()


def test_xor_rejects_bad_operands():
    with pytest.raises(LengthMismatch):
        xor_bytes([1, 2], [1])
    with pytest.raises(ValueError):
        xor_bytes([300], [1])


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_flipping_property(data):
    a = data.draw(byte_images)
    b = data.draw(st.lists(st.integers(0, 255), min_size=len(a), max_size=len(a)))
    assert xor_bytes(xor_bytes(a, b), b).tolist() == a


def test_zero_target_and_zero_dummy():
    d = np.array([12.75, 3.2, 250.0])
    assert np.array_equal(encode(blend([0, 0, 0], 5), blend(d, 2), 0).cipher, quantize(d))
    assert np.array_equal(encode(blend(d, 5), blend([0, 0, 0], 2), 0).cipher, quantize(d))


def test_encoded_labels_follow_example():
    enc = encode(blend([1, 2], 5, (11,)), blend([3, 4], 2, (22,)), device=1)
    assert (enc.target_label, enc.dummy_label, enc.origin_device, enc.scheme) == (5, 2, 1, XOR)
    assert enc.target_contributors == (11,) and enc.dummy_contributors == (22,)


def test_same_label_rejected():
    with pytest.raises(SameLabel):
        encode(blend([1], 5), blend([2], 5), 0)


def test_decode_with_own_dummy_is_exact(rng):
    t, b = rng.uniform(0, 255, 784), rng.uniform(0, 255, 784)
    dec = decode(encode(blend(t, 5), blend(b, 2), 0), blend(b, 2, (7,)))
    assert np.array_equal(dec.pixels, quantize(t))
    assert dec.label == 5


def test_decode_with_other_dummy_leaves_residual(rng):
    t, b, b2 = (rng.uniform(0, 255, 784) for _ in range(3))
    dec = decode(encode(blend(t, 5, (1,)), blend(b, 2, (2,)), 0), blend(b2, 2, (3,)))
    expected = quantize(t) ^ quantize(b) ^ quantize(b2)
    assert np.array_equal(dec.pixels, expected)
    assert not np.array_equal(dec.pixels, quantize(t))
    assert dec.contributors == (1, 2, 3)


def test_decode_label_mismatch():
    enc = encode(blend([1], 5), blend([2], 2), 0)
    with pytest.raises(DummyLabelMismatch):
        decode(enc, blend([2], 4))


def test_mix_encode():
    enc = mix_encode(blend([100, 0], 5), blend([0, 255], 2), 0, alpha=0.5)
    assert enc.cipher.tolist() == [50, 128] and enc.scheme == MIX and enc.target_label == 5
