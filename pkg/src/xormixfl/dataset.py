"""MNIST IDX loading and the non-IID server/device shards."""

from __future__ import annotations

import gzip
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import BadMagic, ConfigError, CountMismatch, InsufficientSamples, TruncatedFile
from .seeding import substream

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
NUM_CLASSES = 10

TRAIN_IMAGES = "train-images-idx3-ubyte"
TRAIN_LABELS = "train-labels-idx1-ubyte"
TEST_IMAGES = "t10k-images-idx3-ubyte"
TEST_LABELS = "t10k-labels-idx1-ubyte"


@dataclass(frozen=True)
class Sample:
    pixels: np.ndarray
    label: int
    id: int = -1


@dataclass(frozen=True, eq=False)
class Dataset:
    """An ordered collection of labelled flat images.

    ``ids`` carries provenance: for shards drawn from a loaded file it is the
    row index in that file, which is what the privacy scorer resolves
    contributors against.
    """

    images: np.ndarray
    labels: np.ndarray
    ids: np.ndarray = None
    name: str = ""
    image_shape: tuple[int, int] = (28, 28)

    def __post_init__(self):
        images = np.ascontiguousarray(self.images, dtype=np.uint8)
        if images.ndim == 1:
            images = images.reshape(0, self.image_shape[0] * self.image_shape[1])
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if images.shape[0] != labels.shape[0]:
            raise ValueError(f"{images.shape[0]} images but {labels.shape[0]} labels")
        ids = np.arange(len(labels), dtype=np.int64) if self.ids is None else np.asarray(self.ids, dtype=np.int64)
        if ids.shape != labels.shape:
            raise ValueError("ids must align with labels")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.images[i], int(self.labels[i]), int(self.ids[i]))

    def __iter__(self) -> Iterator[Sample]:
        for i in range(len(self)):
            yield self[i]

    @property
    def n_pixels(self) -> int:
        return self.images.shape[1]

    def subset(self, index, name: str | None = None) -> Dataset:
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.images[index], self.labels[index], self.ids[index],
                       self.name if name is None else name, self.image_shape)

    def by_label(self, label: int) -> Dataset:
        return self.subset(np.flatnonzero(self.labels == label))

    def concat(self, other: Dataset, name: str | None = None) -> Dataset:
        return Dataset(np.concatenate([self.images, other.images]),
                       np.concatenate([self.labels, other.labels]),
                       np.concatenate([self.ids, other.ids]),
                       self.name if name is None else name, self.image_shape)

    def same_content(self, other: Dataset) -> bool:
        return (np.array_equal(self.images, other.images) and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.ids, other.ids))


@dataclass(frozen=True)
class LabelInventory:
    counts: dict[int, int] = field(default_factory=dict)

    def __getitem__(self, label: int) -> int:
        return self.counts.get(label, 0)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def as_list(self, num_classes: int = NUM_CLASSES) -> list[int]:
        return [self[k] for k in range(num_classes)]

    def __add__(self, other: LabelInventory) -> LabelInventory:
        merged = Counter(self.counts)
        merged.update(other.counts)
        return LabelInventory(dict(sorted(merged.items())))

    def is_uniform(self, num_classes: int = NUM_CLASSES) -> bool:
        return len(set(self.as_list(num_classes))) == 1


def inventory(d: Dataset) -> LabelInventory:
    labels, counts = np.unique(d.labels, return_counts=True)
    return LabelInventory({int(k): int(c) for k, c in zip(labels, counts)})


def _open(path: Path):
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path: Path, magic: int, header_ints: int):
    with _open(path) as f:
        payload = f.read()
    header_len = 4 * header_ints
    if len(payload) >= 4 and struct.unpack(">I", payload[:4])[0] != magic:
        raise BadMagic(path, f"magic {struct.unpack('>I', payload[:4])[0]:#010x}, expected {magic:#010x}")
    if len(payload) < header_len:
        raise TruncatedFile(path, f"header needs {header_len} bytes, file has {len(payload)}")
    header = struct.unpack(f">{header_ints}I", payload[:header_len])
    return header[1:], payload[header_len:]


def load_idx(images_path, labels_path, name: str = "") -> Dataset:
    """Read an IDX image/label file pair (raw or ``.gz``) in file order."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    (count, rows, cols), pixel_bytes = _read_idx(images_path, IMAGE_MAGIC, 4)
    (label_count,), label_bytes = _read_idx(labels_path, LABEL_MAGIC, 2)
    if count != label_count:
        raise CountMismatch(labels_path, f"{label_count} labels for {count} images in {images_path}")
    needed = count * rows * cols
    if len(pixel_bytes) < needed:
        raise TruncatedFile(images_path, f"expected {needed} pixel bytes, found {len(pixel_bytes)}")
    if len(label_bytes) < count:
        raise TruncatedFile(labels_path, f"expected {count} label bytes, found {len(label_bytes)}")
    images = np.frombuffer(pixel_bytes, dtype=np.uint8, count=needed).reshape(count, rows * cols)
    labels = np.frombuffer(label_bytes, dtype=np.uint8, count=count)
    return Dataset(images.copy(), labels, np.arange(count), name or images_path.name, (rows, cols))


def _find(directory: Path, stem: str) -> Path:
    for candidate in (directory / stem, directory / f"{stem}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"neither {stem} nor {stem}.gz found in {directory}")


def load_mnist(directory) -> tuple[Dataset, Dataset]:
    """Return ``(train, test)`` from a directory holding the four MNIST files."""
    directory = Path(directory)
    train = load_idx(_find(directory, TRAIN_IMAGES), _find(directory, TRAIN_LABELS), "train")
    test = load_idx(_find(directory, TEST_IMAGES), _find(directory, TEST_LABELS), "test")
    return train, test


@dataclass(frozen=True)
class PartitionSpec:
    num_devices: int = 3
    target_labels: tuple[int, ...] = (5,)
    dummy_labels: tuple[int, ...] = (2,)
    n: int = 10
    m: int = 200
    server_rich: int = 500
    server_deficient: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "target_labels", tuple(sorted(int(k) for k in self.target_labels)))
        object.__setattr__(self, "dummy_labels", tuple(sorted(int(k) for k in self.dummy_labels)))
        self.validate()

    def validate(self):
        if self.num_devices < 1:
            raise ConfigError("partition.num_devices", "must be >= 1")
        if not self.target_labels:
            raise ConfigError("partition.target_labels", "need at least one target label")
        if not self.dummy_labels:
            raise ConfigError("partition.dummy_labels", "need at least one dummy label")
        if set(self.target_labels) & set(self.dummy_labels):
            raise ConfigError("partition.dummy_labels", "must be disjoint from target_labels")
        for key in ("target_labels", "dummy_labels"):
            labels = getattr(self, key)
            if len(set(labels)) != len(labels) or not all(0 <= k < NUM_CLASSES for k in labels):
                raise ConfigError(f"partition.{key}", f"labels must be distinct values in [0, {NUM_CLASSES})")
        for key in ("n", "m", "server_deficient"):
            if getattr(self, key) < 0:
                raise ConfigError(f"partition.{key}", "must be >= 0")
        if not self.server_deficient < self.server_rich:
            raise ConfigError("partition.server_deficient", "must be below partition.server_rich")

    @property
    def N(self) -> int:
        return len(self.target_labels)

    @property
    def M(self) -> int:
        return len(self.dummy_labels)

    def server_count(self, label: int) -> int:
        return self.server_deficient if label in self.target_labels else self.server_rich

    def device_count(self, label: int) -> int:
        if label in self.target_labels:
            return self.n
        if label in self.dummy_labels:
            return self.m
        return 0


class Partition(NamedTuple):
    server_shard: Dataset
    device_shards: list[Dataset]
    holdout_test: Dataset


def partition(full: Dataset, spec: PartitionSpec, test: Dataset | None = None) -> Partition:
    """Draw disjoint server and device shards from ``full``.

    Per label, the label's rows are shuffled once; the server takes the first
    block, then each device in id order. ``holdout_test`` is ``test`` when
    given, otherwise every row of ``full`` that was not drawn.
    """
    rng = substream(spec.seed, "partition")
    server_rows: list[np.ndarray] = []
    device_rows: list[list[np.ndarray]] = [[] for _ in range(spec.num_devices)]
    for label in range(NUM_CLASSES):
        rows = np.flatnonzero(full.labels == label)
        need = spec.server_count(label) + spec.num_devices * spec.device_count(label)
        if need > len(rows):
            raise InsufficientSamples(label, need, len(rows))
        rows = rng.permutation(rows)
        start = spec.server_count(label)
        server_rows.append(rows[:start])
        for d in range(spec.num_devices):
            stop = start + spec.device_count(label)
            device_rows[d].append(rows[start:stop])
            start = stop

    def shard(parts, name):
        return full.subset(rng.permutation(np.concatenate(parts)), name)

    server = shard(server_rows, "server")
    devices = [shard(parts, f"device-{d}") for d, parts in enumerate(device_rows)]
    if test is None:
        used = np.zeros(len(full), dtype=bool)
        used[np.concatenate(server_rows + [r for parts in device_rows for r in parts])] = True
        test = full.subset(np.flatnonzero(~used), "holdout")
    return Partition(server, devices, test)


def iid_repartition(server_shard: Dataset, device_shards: list[Dataset], seed: int) -> tuple[Dataset, list[Dataset]]:
    """Pool all shards and deal them back out uniformly at random, keeping shard sizes."""
    pooled = server_shard
    for d in device_shards:
        pooled = pooled.concat(d)
    order = substream(seed, "iid-repartition").permutation(len(pooled))
    sizes = [len(server_shard)] + [len(d) for d in device_shards]
    bounds = np.cumsum([0] + sizes)
    pieces = [pooled.subset(order[a:b], s.name) for a, b, s in zip(bounds[:-1], bounds[1:], [server_shard, *device_shards])]
    return pieces[0], pieces[1:]
