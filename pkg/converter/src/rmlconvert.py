"""Convert published RML radio-ML archives into STFG dataset containers.

The RML distributions (RML2016.10a, RML2016.10b, RML22) are Python pickle
files holding one dictionary keyed by ``(modulation_name, snr_db)``; each
value is a float array of shape (count, 2, gamma) carrying I on the first
channel and Q on the second. This tool rewrites such an archive as an STFG
container so the graph-classifier toolchain can train on real recordings.

The container layout (all integers little-endian):

    header  (20 bytes): magic ``b"STFG"``, version u32, n_records u32,
                        gamma u32 (samples per record), n_classes u32
    records (n_records * (8*gamma + 3) bytes each):
                        i   float32 x gamma
                        q   float32 x gamma
                        snr int16  (dB)
                        label uint8

Next to the container goes ``<path>.manifest.txt``, key=value text mapping
label indices to scheme names and recording where the records came from.
Label indices are assigned alphabetically by scheme name unless an explicit
order is supplied, so the mapping never depends on archive iteration order.

Values are copied verbatim after a float32 cast; records are emitted sorted
by (label, snr_db) and keep the per-key frame order, making the output a
pure function of the archive contents.
"""

import argparse
import pickle
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["ConvertError", "ConvertSummary", "load_archive", "convert", "main"]
__version__ = "0.1.0"

MAGIC = b"STFG"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class ConvertError(Exception):
    """Archive or argument problem the user has to fix."""


@dataclass
class ConvertSummary:
    path: Path
    n_records: int
    gamma: int
    label_names: list
    snrs_db: list


def _decode_key(key):
    """Normalize one archive key to (str name, int snr)."""
    if not isinstance(key, tuple) or len(key) != 2:
        raise ConvertError(f"archive key {key!r} is not a (name, snr) pair")
    name, snr = key
    if isinstance(name, bytes):
        name = name.decode("latin1")
    if not isinstance(name, str) or not name:
        raise ConvertError(f"archive key {key!r} has no usable scheme name")
    try:
        snr = int(snr)
    except (TypeError, ValueError):
        raise ConvertError(f"archive key {key!r} has a non-integer SNR") from None
    if not -(2 ** 15) <= snr < 2 ** 15:
        raise ConvertError(f"SNR {snr} does not fit the container's 16-bit field")
    return name, snr


def load_archive(path):
    """Read one RML pickle archive into {(name, snr): (count, 2, gamma) f32}.

    The published files were pickled under Python 2, so byte strings are
    decoded latin1; both byte and text keys are accepted.
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = pickle.load(f, encoding="latin1")
    except (pickle.UnpicklingError, EOFError, AttributeError, ImportError,
            IndexError) as exc:
        raise ConvertError(f"{path}: not a readable pickle archive ({exc})") from exc
    if not isinstance(raw, dict) or not raw:
        raise ConvertError(f"{path}: expected a non-empty dict keyed by (name, snr)")
    table = {}
    gamma = None
    for key, value in raw.items():
        name, snr = _decode_key(key)
        arr = np.asarray(value, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[1] != 2 or arr.shape[0] == 0:
            raise ConvertError(
                f"{path}: entry {name}/{snr} has shape {arr.shape}, "
                f"expected (count, 2, gamma)")
        if gamma is None:
            gamma = arr.shape[2]
        elif arr.shape[2] != gamma:
            raise ConvertError(
                f"{path}: entry {name}/{snr} carries {arr.shape[2]} samples "
                f"per frame, other entries carry {gamma}")
        if (name, snr) in table:
            raise ConvertError(f"{path}: duplicate key after decoding: {name}/{snr}")
        table[(name, snr)] = arr
    return table


def _record_dtype(gamma):
    return np.dtype([("i", "<f4", gamma), ("q", "<f4", gamma),
                     ("snr", "<i2"), ("label", "u1")])


def convert(in_path, out_path, label_order=None):
    """Rewrite the archive at ``in_path`` as an STFG container at ``out_path``.

    ``label_order``: optional sequence fixing the label-index assignment;
    every scheme in the archive must appear in it. Default: alphabetical.
    Returns a ConvertSummary.
    """
    in_path, out_path = Path(in_path), Path(out_path)
    table = load_archive(in_path)
    present = sorted({name for name, _ in table})
    if label_order is None:
        names = present
        order_note = "alphabetical"
    else:
        names = list(label_order)
        if len(set(names)) != len(names):
            raise ConvertError("label order contains duplicates")
        unknown = sorted(set(present) - set(names))
        if unknown:
            raise ConvertError(
                "archive contains scheme names missing from the label order: "
                + ", ".join(unknown))
        order_note = "explicit"
    if len(names) > 256:
        raise ConvertError(f"{len(names)} labels exceed the container's 8-bit field")
    index = {name: k for k, name in enumerate(names)}

    keys = sorted(table, key=lambda key: (index[key[0]], key[1]))
    n = sum(table[key].shape[0] for key in keys)
    gamma = next(iter(table.values())).shape[2]
    rec = np.empty(n, dtype=_record_dtype(gamma))
    row = 0
    for name, snr in keys:
        arr = table[(name, snr)]
        stop = row + arr.shape[0]
        rec["i"][row:stop] = arr[:, 0]
        rec["q"][row:stop] = arr[:, 1]
        rec["snr"][row:stop] = snr
        rec["label"][row:stop] = index[name]
        row = stop

    with open(out_path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, n, gamma, len(names)))
        f.write(rec.tobytes())
    manifest = [
        f"format = STFG v{VERSION}",
        f"records = {n}",
        f"gamma = {gamma}",
        f"classes = {len(names)}",
    ]
    manifest += [f"label {k} = {name}" for k, name in enumerate(names)]
    manifest += [
        f"label_order = {order_note}",
        f"source = {in_path.name}",
    ]
    Path(str(out_path) + ".manifest.txt").write_text("\n".join(manifest) + "\n")

    snrs = sorted({snr for _, snr in keys})
    return ConvertSummary(path=out_path, n_records=n, gamma=gamma,
                          label_names=names, snrs_db=snrs)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rml-convert",
        description="Rewrite an RML pickle archive as an STFG dataset container")
    parser.add_argument("archive", help="RML pickle file (RML2016.10a/10b, RML22)")
    parser.add_argument("out", help="output container path")
    parser.add_argument("--labels", metavar="NAME,NAME,...",
                        help="explicit label order (default: alphabetical)")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    args = parser.parse_args(argv)
    order = None
    if args.labels is not None:
        order = [part.strip() for part in args.labels.split(",") if part.strip()]
        if not order:
            parser.error("--labels must name at least one scheme")
    try:
        summary = convert(args.archive, args.out, order)
    except ConvertError as exc:
        print(f"rml-convert: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"rml-convert: {exc}", file=sys.stderr)
        return 1
    snrs = summary.snrs_db
    span = f"{snrs[0]}..{snrs[-1]} dB" if len(snrs) > 1 else f"{snrs[0]} dB"
    print(f"wrote {summary.path}: {summary.n_records} records, "
          f"gamma {summary.gamma}, {len(summary.label_names)} labels, {span}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
