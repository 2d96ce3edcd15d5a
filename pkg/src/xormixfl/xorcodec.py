"""Byte quantization and XOR encode/decode of blended samples."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blending import BlendedSample
from .errors import DummyLabelMismatch, LengthMismatch, SameLabel

XOR = "xor"
MIX = "mix"


@dataclass(frozen=True, eq=False)
class EncodedSample:
    """One uploaded item.

    ``scheme`` is ``"xor"`` for XorMixup ciphertexts and ``"mix"`` for the
    linear-blend uploads of the MixFL baseline, which the server keeps as-is.
    """

    cipher: np.ndarray
    target_label: int
    dummy_label: int
    origin_device: int
    target_contributors: tuple[int, ...]
    dummy_contributors: tuple[int, ...]
    scheme: str = XOR


@dataclass(frozen=True, eq=False)
class DecodedSample:
    pixels: np.ndarray
    label: int
    source: EncodedSample
    server_dummy_contributors: tuple[int, ...] = ()

    @property
    def contributors(self) -> tuple[int, ...]:
        src = self.source
        return src.target_contributors + src.dummy_contributors + self.server_dummy_contributors


def quantize(values) -> np.ndarray:
    """Round half away from zero, then clamp to the byte range."""
    v = np.asarray(values, dtype=np.float64)
    rounded = np.sign(v) * np.floor(np.abs(v) + 0.5)
    return np.clip(rounded, 0, 255).astype(np.uint8)


def _as_bytes(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype != np.uint8:
        if a.size and (a.min() < 0 or a.max() > 255):
            raise ValueError("xor operands must lie in [0, 255]")
        a = a.astype(np.uint8)
    return a


def xor_bytes(a, b) -> np.ndarray:
    a, b = _as_bytes(a), _as_bytes(b)
    if a.shape != b.shape:
        raise LengthMismatch(f"cannot xor shapes {a.shape} and {b.shape}")
    return np.bitwise_xor(a, b)


def encode(target_blend: BlendedSample, dummy_blend: BlendedSample, device: int) -> EncodedSample:
    if target_blend.label == dummy_blend.label:
        raise SameLabel(f"target and dummy share label {target_blend.label}")
    cipher = xor_bytes(quantize(target_blend.values), quantize(dummy_blend.values))
    return EncodedSample(cipher, target_blend.label, dummy_blend.label, device,
                         target_blend.contributors, dummy_blend.contributors, XOR)


def mix_encode(target_blend: BlendedSample, dummy_blend: BlendedSample, device: int, alpha: float) -> EncodedSample:
    """Vanilla-Mixup upload: quantized ``alpha*target + (1-alpha)*dummy``, hard target label."""
    if target_blend.label == dummy_blend.label:
        raise SameLabel(f"target and dummy share label {target_blend.label}")
    if target_blend.values.shape != dummy_blend.values.shape:
        raise LengthMismatch("blends differ in length")
    mixed = alpha * target_blend.values + (1.0 - alpha) * dummy_blend.values
    return EncodedSample(quantize(mixed), target_blend.label, dummy_blend.label, device,
                         target_blend.contributors, dummy_blend.contributors, MIX)


def decode(enc: EncodedSample, server_dummy_blend: BlendedSample) -> DecodedSample:
    if server_dummy_blend.label != enc.dummy_label:
        raise DummyLabelMismatch(
            f"server dummy has label {server_dummy_blend.label}, cipher was masked with {enc.dummy_label}")
    pixels = xor_bytes(enc.cipher, quantize(server_dummy_blend.values))
    return DecodedSample(pixels, enc.target_label, enc, server_dummy_blend.contributors)
