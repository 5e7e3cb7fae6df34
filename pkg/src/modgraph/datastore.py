"""Binary container for I/Q frame datasets, plus its manifest sidecar.

File layout (all integers little-endian):

    header  (20 bytes): magic ``b"STFG"``, version u32, n_records u32,
                        gamma u32 (samples per record), n_classes u32
    records (n_records * (8*gamma + 3) bytes each):
                        i   float32 x gamma
                        q   float32 x gamma
                        snr int16  (dB)
                        label uint8

A record is rejected on read when its label is outside ``0..n_classes-1``.
Next to every container sits ``<path>.manifest.txt``, a deterministic
key=value text file mapping label indices to scheme names and recording the
generator configuration and seed; it carries no timestamps so identical
inputs produce identical bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MAGIC", "VERSION",
    "Dataset",
    "DatastoreError", "BadMagicError", "VersionError", "TruncatedError", "RecordError",
    "write_dataset", "read_dataset", "manifest_path", "validate_container",
]

MAGIC = b"STFG"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class DatastoreError(Exception):
    """Base class for container format errors."""


class BadMagicError(DatastoreError):
    pass


class VersionError(DatastoreError):
    pass


class TruncatedError(DatastoreError):
    pass


class RecordError(DatastoreError):
    pass


def _record_dtype(gamma):
    return np.dtype([("i", "<f4", (gamma,)), ("q", "<f4", (gamma,)),
                     ("snr", "<i2"), ("label", "u1")])


@dataclass
class Dataset:
    """In-memory dataset: stacked I/Q rows plus per-record SNR and label."""

    i: np.ndarray            # (n, gamma) float32
    q: np.ndarray            # (n, gamma) float32
    snr_db: np.ndarray       # (n,) int16
    label: np.ndarray        # (n,) uint8
    label_names: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.i = np.ascontiguousarray(self.i, dtype=np.float32)
        self.q = np.ascontiguousarray(self.q, dtype=np.float32)
        self.snr_db = np.asarray(self.snr_db, dtype=np.int16)
        self.label = np.asarray(self.label, dtype=np.uint8)
        if self.i.shape != self.q.shape or self.i.ndim != 2:
            raise ValueError(f"Dataset: I/Q must both be (n, gamma), got {self.i.shape} and {self.q.shape}")
        n = self.i.shape[0]
        if self.snr_db.shape != (n,) or self.label.shape != (n,):
            raise ValueError("Dataset: snr_db and label must have one entry per record")
        if n and self.label.max(initial=0) >= len(self.label_names):
            raise RecordError("Dataset: label index outside the declared class list")

    @property
    def n_records(self):
        return self.i.shape[0]

    @property
    def gamma(self):
        return self.i.shape[1]

    @property
    def n_classes(self):
        return len(self.label_names)

    def frames(self):
        """Records stacked as a (n, 2, gamma) array (I on channel 0)."""
        return np.stack([self.i, self.q], axis=1)

    def cells(self):
        """Indices grouped by (label, snr) pairs, in sorted key order."""
        out = {}
        for key in sorted({(int(l), int(s)) for l, s in zip(self.label, self.snr_db)}):
            mask = (self.label == key[0]) & (self.snr_db == key[1])
            out[key] = np.nonzero(mask)[0]
        return out


def manifest_path(path):
    return Path(str(path) + ".manifest.txt")


def write_dataset(ds, path, write_manifest=True):
    """Serialize the dataset; returns the container path."""
    path = Path(path)
    n, gamma = ds.i.shape
    rec = np.empty(n, dtype=_record_dtype(gamma))
    rec["i"] = ds.i
    rec["q"] = ds.q
    rec["snr"] = ds.snr_db
    rec["label"] = ds.label
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, n, gamma, ds.n_classes))
        f.write(rec.tobytes())
    if write_manifest:
        lines = [
            f"format = STFG v{VERSION}",
            f"records = {n}",
            f"gamma = {gamma}",
            f"classes = {ds.n_classes}",
        ]
        lines += [f"label {k} = {name}" for k, name in enumerate(ds.label_names)]
        lines += [f"{k} = {ds.meta[k]}" for k in sorted(ds.meta)]
        manifest_path(path).write_text("\n".join(lines) + "\n")
    return path


def _read_manifest(path, n_classes):
    mpath = manifest_path(path)
    names = [f"class{k}" for k in range(n_classes)]
    meta = {}
    if not mpath.exists():
        return names, meta
    for line in mpath.read_text().splitlines():
        if "=" not in line:
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key.startswith("label "):
            idx = int(key.split()[1])
            if 0 <= idx < n_classes:
                names[idx] = value
        elif key not in ("format", "records", "gamma", "classes"):
            meta[key] = value
    return names, meta


def read_dataset(path):
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise TruncatedError(f"{path}: {len(blob)} bytes is shorter than the 20-byte header")
    magic, version, n, gamma, n_classes = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: magic {magic!r} != {MAGIC!r}")
    if version != VERSION:
        raise VersionError(f"{path}: container version {version}, reader supports {VERSION}")
    dt = _record_dtype(gamma)
    expect = _HEADER.size + n * dt.itemsize
    if len(blob) != expect:
        raise TruncatedError(f"{path}: expected {expect} bytes for {n} records, found {len(blob)}")
    rec = np.frombuffer(blob, dtype=dt, count=n, offset=_HEADER.size)
    if n and int(rec["label"].max()) >= n_classes:
        bad = int(np.argmax(rec["label"] >= n_classes))
        raise RecordError(f"{path}: record {bad} has label {rec['label'][bad]} >= n_classes={n_classes}")
    names, meta = _read_manifest(path, n_classes)
    return Dataset(i=rec["i"].copy(), q=rec["q"].copy(), snr_db=rec["snr"].copy(),
                   label=rec["label"].copy(), label_names=names, meta=meta)


def validate_container(path):
    """Read and sanity-check a container; returns a summary dict."""
    ds = read_dataset(path)
    finite = np.isfinite(ds.i).all() and np.isfinite(ds.q).all()
    if not finite:
        raise RecordError(f"{path}: non-finite sample values")
    counts = {name: int((ds.label == k).sum()) for k, name in enumerate(ds.label_names)}
    snrs = sorted(int(s) for s in np.unique(ds.snr_db))
    return {
        "records": ds.n_records,
        "gamma": ds.gamma,
        "classes": ds.n_classes,
        "snrs_db": snrs,
        "per_label": counts,
    }
