"""Dataset ingestion and integer spike encoding.

Two real datasets are supported: MNIST from the standard IDX files
(rate-encoded into Bernoulli spike frames) and spiking audio digits from
the engine's own binary event format (binned into per-channel counts,
channels summed in groups of four, counts clipped to 4 bits).  A small
synthetic rate-coded task is included for tests and demos that must run
without any downloads.

Encoding is the only place randomness enters training; every draw comes
from a generator seeded by (run seed, purpose, epoch, batch), so runs are
bit-reproducible.
"""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass

import numpy as np

from .network import PURPOSE_ENCODE_TEST, PURPOSE_ENCODE_TRAIN, seeded_rng
from .tensor import IntTensor

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SHD_MAGIC = b"SHDB"
SHD_VERSION = 1
SHD_CHANNELS = 700


class DatasetFormatError(ValueError):
    pass


class MagicError(DatasetFormatError):
    pass


class TruncationError(DatasetFormatError):
    pass


class DimMismatchError(DatasetFormatError):
    pass


def _read_file(path) -> bytes:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:2] == b"\x1f\x8b":
        blob = gzip.decompress(blob)
    return blob


def load_idx_images(path) -> np.ndarray:
    blob = _read_file(path)
    if len(blob) < 16:
        raise TruncationError(f"{path}: header needs 16 bytes, have {len(blob)}")
    magic, n, rows, cols = struct.unpack_from(">IIII", blob, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise MagicError(
            f"{path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    expected = 16 + n * rows * cols
    if len(blob) != expected:
        raise TruncationError(
            f"{path}: expected {expected} bytes for {n} images, have {len(blob)}")
    return np.frombuffer(blob, dtype=np.uint8, offset=16).reshape(n, rows, cols)


def load_idx_labels(path) -> np.ndarray:
    blob = _read_file(path)
    if len(blob) < 8:
        raise TruncationError(f"{path}: header needs 8 bytes, have {len(blob)}")
    magic, n = struct.unpack_from(">II", blob, 0)
    if magic != IDX_LABELS_MAGIC:
        raise MagicError(
            f"{path}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(blob) != 8 + n:
        raise TruncationError(
            f"{path}: expected {8 + n} bytes for {n} labels, have {len(blob)}")
    return np.frombuffer(blob, dtype=np.uint8, offset=8)


def load_mnist(images_path, labels_path):
    """(images [N, 28, 28] u8, labels [N] u8) with matching counts."""
    images = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise DimMismatchError(
            f"{images.shape[0]} images vs {labels.shape[0]} labels")
    return images, labels


def rate_encode(images: np.ndarray, t_s: int,
                rng: np.random.Generator) -> np.ndarray:
    """Bernoulli spikes: per step and pixel, fire with probability p/255.

    images: [B, H, W] u8 -> [t_s, B, H*W] 0/1 int8, deterministic in rng.
    """
    if t_s < 1:
        raise ValueError("t_s must be >= 1")
    b = images.shape[0]
    flat = images.reshape(b, -1).astype(np.float64) / 255.0
    draws = rng.random((t_s, b, flat.shape[1]))
    return (draws < flat).astype(np.int8)


@dataclass
class EventSample:
    """One event-stream recording: (time_us, channel) pairs plus a label."""

    label: int
    times_us: np.ndarray
    channels: np.ndarray


def load_shd_binary(path):
    """Read the little-endian "SHDB" event container.

    Layout: magic, version u32, num_samples u32; per sample label u32,
    num_events u32, then num_events x (time_us u32, channel u16).
    """
    blob = _read_file(path)
    if blob[:4] != SHD_MAGIC:
        raise MagicError(f"{path}: magic {blob[:4]!r}, expected {SHD_MAGIC!r}")
    if len(blob) < 12:
        raise TruncationError(f"{path}: header needs 12 bytes, have {len(blob)}")
    version, n_samples = struct.unpack_from("<II", blob, 4)
    if version != SHD_VERSION:
        raise MagicError(f"{path}: unsupported version {version}")
    samples = []
    off = 12
    event_dt = np.dtype([("t", "<u4"), ("c", "<u2")])
    for s in range(n_samples):
        if off + 8 > len(blob):
            raise TruncationError(
                f"{path}: sample {s} header past end of file")
        label, n_events = struct.unpack_from("<II", blob, off)
        off += 8
        end = off + 6 * n_events
        if end > len(blob):
            raise TruncationError(
                f"{path}: sample {s} needs {end} bytes, file has {len(blob)}")
        ev = np.frombuffer(blob, dtype=event_dt, count=n_events, offset=off)
        off = end
        times = ev["t"].astype(np.int64)
        channels = ev["c"].astype(np.int64)
        if n_events and np.any(np.diff(times) < 0):
            raise DatasetFormatError(f"{path}: sample {s} events not sorted")
        if n_events and channels.max() >= SHD_CHANNELS:
            raise DatasetFormatError(
                f"{path}: sample {s} channel {channels.max()} out of range "
                f"(< {SHD_CHANNELS})")
        samples.append(EventSample(int(label), times, channels))
    if off != len(blob):
        raise TruncationError(f"{path}: {len(blob) - off} trailing bytes")
    return samples


GROUP_CLIP = 15


def frame_and_group(sample: EventSample, t_s: int = 10, group: int = 4,
                    n_channels: int = SHD_CHANNELS) -> np.ndarray:
    """Bin events into t_s uniform frames and sum channels in groups.

    The sample's own duration (max event time) defines the bins, so every
    recording fills all t_s frames.  Counts are clipped to 4 bits.
    Returns [t_s, n_channels // group] int8.
    """
    if t_s < 1 or group < 1 or n_channels % group:
        raise ValueError("bad framing parameters")
    n_in = n_channels // group
    out = np.zeros((t_s, n_in), dtype=np.int64)
    if sample.times_us.size:
        duration = int(sample.times_us.max())
        if duration == 0:
            bins = np.zeros(sample.times_us.shape, dtype=np.int64)
        else:
            bins = np.minimum(sample.times_us * t_s // duration, t_s - 1)
        grouped = sample.channels // group
        np.add.at(out, (bins, grouped), 1)
    return np.minimum(out, GROUP_CLIP).astype(np.int8)


def _onehot(labels: np.ndarray, classes: int) -> IntTensor:
    eye = np.zeros((labels.shape[0], classes), dtype=np.int64)
    eye[np.arange(labels.shape[0]), labels] = 1
    return IntTensor(eye, 2, binary=True, validate=False)


class MnistData:
    """MNIST splits, rate-encoded per presentation."""

    name = "mnist"

    def __init__(self, train_images, train_labels, test_images, test_labels):
        self.train_images = train_images
        self.train_labels = train_labels.astype(np.int64)
        self.test_images = test_images
        self.test_labels = test_labels.astype(np.int64)

    @classmethod
    def from_dir(cls, root):
        def pick(*names):
            for n in names:
                p = os.path.join(root, n)
                if os.path.exists(p):
                    return p
            raise FileNotFoundError(
                f"none of {names} under {root}")
        return cls(
            *load_mnist(pick("train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"),
                        pick("train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz")),
            *load_mnist(pick("t10k-images-idx3-ubyte", "t10k-images-idx3-ubyte.gz"),
                        pick("t10k-labels-idx1-ubyte", "t10k-labels-idx1-ubyte.gz")))

    @property
    def n_train(self):
        return self.train_images.shape[0]

    @property
    def n_test(self):
        return self.test_images.shape[0]

    def encode_batch(self, idx, split, epoch, batch_index, cfg, seed):
        purpose = PURPOSE_ENCODE_TRAIN if split == "train" else PURPOSE_ENCODE_TEST
        rng = seeded_rng(seed, purpose, epoch, batch_index)
        images = (self.train_images if split == "train" else self.test_images)[idx]
        labels = (self.train_labels if split == "train" else self.test_labels)[idx]
        spikes = rate_encode(images, cfg.t_s, rng).astype(np.int64)
        return (IntTensor(spikes, 2, binary=True, validate=False),
                _onehot(labels, cfg.model.classes), labels)


class ShdData:
    """Binned event data; framing is deterministic so frames are precomputed."""

    name = "shd"

    def __init__(self, train_samples, test_samples, t_s: int = 10,
                 group: int = 4):
        self.train_frames, self.train_labels = self._prepare(train_samples,
                                                             t_s, group)
        self.test_frames, self.test_labels = self._prepare(test_samples,
                                                           t_s, group)

    @classmethod
    def from_dir(cls, root, t_s: int = 10, group: int = 4):
        return cls(load_shd_binary(os.path.join(root, "shd_train.bin")),
                   load_shd_binary(os.path.join(root, "shd_test.bin")),
                   t_s, group)

    @staticmethod
    def _prepare(samples, t_s, group):
        frames = np.stack([frame_and_group(s, t_s, group) for s in samples])
        labels = np.array([s.label for s in samples], dtype=np.int64)
        return frames, labels  # frames: [N, t_s, inputs] int8

    @property
    def n_train(self):
        return self.train_frames.shape[0]

    @property
    def n_test(self):
        return self.test_frames.shape[0]

    def encode_batch(self, idx, split, epoch, batch_index, cfg, seed):
        frames = (self.train_frames if split == "train" else self.test_frames)[idx]
        labels = (self.train_labels if split == "train" else self.test_labels)[idx]
        spikes = frames.transpose(1, 0, 2).astype(np.int64)  # [t_s, B, inputs]
        return (IntTensor(spikes, 8, validate=False),
                _onehot(labels, cfg.model.classes), labels)


class ToyData:
    """Linearly separable synthetic rate-coded stream for offline tests.

    Each class fires one half of the input channels at a high rate and the
    other half at a low rate.  Labels alternate deterministically; spike
    draws are seeded like MNIST encoding.
    """

    name = "toy"

    def __init__(self, n_train: int = 512, n_test: int = 256,
                 inputs: int = 20, classes: int = 2,
                 hi: float = 0.8, lo: float = 0.05, pattern_seed: int = 7):
        self.inputs = inputs
        self.classes = classes
        rng = np.random.default_rng(pattern_seed)
        # One random rate template per class, half hot, half cold.
        self.rates = np.empty((classes, inputs))
        for c in range(classes):
            hot = rng.permutation(inputs)[:inputs // 2]
            template = np.full(inputs, lo)
            template[hot] = hi
            self.rates[c] = template
        self.train_labels = np.arange(n_train, dtype=np.int64) % classes
        self.test_labels = np.arange(n_test, dtype=np.int64) % classes

    @property
    def n_train(self):
        return self.train_labels.shape[0]

    @property
    def n_test(self):
        return self.test_labels.shape[0]

    def encode_batch(self, idx, split, epoch, batch_index, cfg, seed):
        purpose = PURPOSE_ENCODE_TRAIN if split == "train" else PURPOSE_ENCODE_TEST
        rng = seeded_rng(seed, purpose, epoch, batch_index)
        labels = (self.train_labels if split == "train" else self.test_labels)[idx]
        rates = self.rates[labels]  # [B, inputs]
        draws = rng.random((cfg.t_s, len(labels), self.inputs))
        spikes = (draws < rates[None]).astype(np.int64)
        return (IntTensor(spikes, 2, binary=True, validate=False),
                _onehot(labels, cfg.model.classes), labels)


def open_dataset(cfg, dataset_dir=None):
    """Instantiate the dataset named by the config."""
    if cfg.dataset == "toy":
        return ToyData(inputs=cfg.model.inputs, classes=cfg.model.classes)
    if dataset_dir is None:
        raise FileNotFoundError(
            f"dataset {cfg.dataset!r} needs --dataset-dir pointing at its files")
    if cfg.dataset == "mnist":
        return MnistData.from_dir(dataset_dir)
    if cfg.dataset == "shd":
        return ShdData.from_dir(dataset_dir, cfg.t_s)
    raise ValueError(f"unknown dataset {cfg.dataset!r}")
