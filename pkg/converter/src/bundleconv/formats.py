"""Bit-exact bundle writing.

A bundle directory holds meta.json, edges.bin, features.bin, labels.bin and
splits.json in the engine's consumption format, plus manifest.json with a
sha256 per emitted file.  Arc order, JSON key order and float encodings are
all pinned so the same input always produces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass

import numpy as np


class ConvertError(RuntimeError):
    """Download, parse or validation failure during conversion."""


@dataclass(frozen=True)
class BundleManifest:
    name: str
    n: int
    m: int              # directed arcs including engine-added self-loops
    f: int
    num_classes: int
    checksums: dict     # filename -> sha256 hex

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def _canonical_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode()


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_bundle(out_dir: str, name: str, arcs, features, labels,
                 splits: dict, num_classes: int,
                 id_map=None) -> BundleManifest:
    """Write a bundle directory and its manifest.

    arcs: (k,2) directed pairs, self-loops excluded, both directions present;
    features: (n,f) array stored as little-endian f32; labels: length-n ints,
    -1 for unlabeled.  Arcs are re-sorted by (src,dst) so byte output is
    independent of input order.
    """
    arcs = np.asarray(arcs, dtype=np.int64).reshape(-1, 2)
    features = np.asarray(features)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    n, f = features.shape
    if labels.size != n:
        raise ConvertError(f"labels length {labels.size} != n {n}")
    if arcs.size:
        if arcs.min() < 0 or arcs.max() >= n:
            raise ConvertError("arc endpoint out of range")
        if np.any(arcs[:, 0] == arcs[:, 1]):
            raise ConvertError("self-loop in arc list (the engine adds these)")
    order = np.lexsort((arcs[:, 1], arcs[:, 0]))
    arcs = arcs[order]
    dup = np.all(arcs[1:] == arcs[:-1], axis=1) if arcs.shape[0] > 1 else np.zeros(0, bool)
    if dup.any():
        raise ConvertError("duplicate arc in input")
    rev = arcs[np.lexsort((arcs[:, 0], arcs[:, 1]))][:, ::-1]
    if not np.array_equal(arcs, rev):
        raise ConvertError("arc list is not symmetric (store both directions)")

    os.makedirs(out_dir, exist_ok=True)
    payloads = {
        "edges.bin": arcs.astype("<u4").tobytes(order="C"),
        "features.bin": features.astype("<f4").tobytes(order="C"),
        "labels.bin": labels.astype("<i4").tobytes(order="C"),
        "splits.json": _canonical_json({k: [int(i) for i in v]
                                        for k, v in splits.items()}),
        "meta.json": _canonical_json({"n": int(n), "m": int(arcs.shape[0] + n),
                                      "f": int(f), "num_classes": int(num_classes),
                                      "name": name}),
    }
    if id_map is not None:
        payloads["id_map.json"] = _canonical_json(id_map)
    checksums = {}
    for fname, blob in payloads.items():
        with open(os.path.join(out_dir, fname), "wb") as fh:
            fh.write(blob)
        checksums[fname] = _sha256(blob)
    manifest = BundleManifest(name=name, n=int(n), m=int(arcs.shape[0] + n),
                              f=int(f), num_classes=int(num_classes),
                              checksums=checksums)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        fh.write(manifest.to_json())
    return manifest


def read_manifest(path: str) -> BundleManifest:
    with open(os.path.join(path, "manifest.json")) as fh:
        raw = json.load(fh)
    return BundleManifest(**raw)
