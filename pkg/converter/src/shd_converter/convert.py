"""One-shot converter from the upstream HDF5 spike archive to "SHDB".

The upstream archive stores, per recording, variable-length arrays of
spike times (seconds, floating point) and channel indices, plus a label.
The training engine instead reads a flat little-endian container: magic
"SHDB", version u32, sample count u32, then per sample a label u32, an
event count u32, and (time_us u32, channel u16) pairs sorted by time.

Times are floored to integer microseconds; sub-microsecond precision is
noise at the frame widths the engine bins to.  No framing or channel
grouping happens here.  The converter's only job is a faithful,
byte-deterministic change of container, so the same input file always
produces the same output bytes and the printed checksum can be compared
across machines.
"""

from __future__ import annotations

import argparse
import hashlib
import struct
import sys

import h5py
import numpy as np

MAGIC = b"SHDB"
VERSION = 1
NUM_CLASSES = 20
NUM_CHANNELS = 700
US_PER_SECOND = 1_000_000

REQUIRED_KEYS = ("spikes/times", "spikes/units", "labels")

EVENT_DTYPE = np.dtype([("t", "<u4"), ("c", "<u2")])


class ConversionError(ValueError):
    pass


def encode_sample(label, times_s, units) -> bytes:
    """Serialize one recording: validate, floor times to us, sort, pack."""
    label = int(label)
    if not 0 <= label < NUM_CLASSES:
        raise ConversionError(
            f"label {label} out of range (0..{NUM_CLASSES - 1})")
    times_s = np.asarray(times_s, dtype=np.float64)
    units = np.asarray(units, dtype=np.int64)
    if times_s.shape != units.shape:
        raise ConversionError(
            f"{times_s.size} spike times but {units.size} channel indices")
    if times_s.size:
        if not np.isfinite(times_s).all():
            raise ConversionError("non-finite spike time")
        if times_s.min() < 0:
            raise ConversionError(f"negative spike time {times_s.min()}")
        if units.min() < 0 or units.max() >= NUM_CHANNELS:
            raise ConversionError(
                f"channel index outside 0..{NUM_CHANNELS - 1}")
    times_us = np.floor(times_s * US_PER_SECOND).astype(np.int64)
    if times_us.size and times_us.max() >= 2 ** 32:
        raise ConversionError(
            f"time {times_us.max()} us does not fit in u32")
    # Stable sort: simultaneous events keep their archive order.
    order = np.argsort(times_us, kind="stable")
    events = np.empty(times_us.size, dtype=EVENT_DTYPE)
    events["t"] = times_us[order]
    events["c"] = units[order]
    return struct.pack("<II", label, events.size) + events.tobytes()


def convert(input_h5, output_path):
    """Convert the archive at input_h5, write output_path, and return
    (sample count, sha256 hex digest of the written bytes).

    The output is assembled fully before anything is written, so a
    validation failure never leaves a truncated file behind.
    """
    try:
        archive = h5py.File(input_h5, "r")
    except OSError as exc:
        raise ConversionError(f"{input_h5}: {exc}") from None
    with archive:
        missing = [key for key in REQUIRED_KEYS if key not in archive]
        if missing:
            raise ConversionError(
                f"{input_h5}: missing dataset keys {', '.join(missing)}")
        times_ds = archive["spikes/times"]
        units_ds = archive["spikes/units"]
        labels = np.asarray(archive["labels"][...])
        if not len(times_ds) == len(units_ds) == len(labels):
            raise ConversionError(
                f"{input_h5}: {len(labels)} labels but {len(times_ds)} time "
                f"arrays and {len(units_ds)} channel arrays")
        parts = [MAGIC, struct.pack("<II", VERSION, len(labels))]
        for i in range(len(labels)):
            try:
                parts.append(encode_sample(labels[i], times_ds[i], units_ds[i]))
            except ConversionError as exc:
                raise ConversionError(f"{input_h5}: sample {i}: {exc}") from None
    blob = b"".join(parts)
    with open(output_path, "wb") as out:
        out.write(blob)
    return len(labels), hashlib.sha256(blob).hexdigest()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convert_shd",
        description="Convert an HDF5 spike archive to the SHDB event format")
    parser.add_argument("input", metavar="INPUT.h5",
                        help="upstream HDF5 archive (spikes/times, "
                             "spikes/units, labels)")
    parser.add_argument("output", metavar="OUTPUT.bin",
                        help="SHDB container to write")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        count, digest = convert(args.input, args.output)
    except ConversionError as exc:
        print(f"conversion error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"conversion error: {exc}", file=sys.stderr)
        return 1
    print(f"{count} samples -> {args.output}")
    print(f"sha256 {digest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
