"""Graph bundle directory IO.

Bundle layout (produced by the converter, consumed here):

  meta.json     {"n", "m", "f", "num_classes", "name"}; m counts directed
                arcs including the self-loops the engine adds on load
  edges.bin     little-endian u32 (src,dst) pairs, self-loops excluded
  features.bin  little-endian f32, row-major n x f (widened to f64 on load)
  labels.bin    little-endian i32, length n, -1 = unlabeled
  splits.json   {"train": [...], "val": [...], "test": [...]}
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .graph import CsrGraph, add_self_loops, from_edges, normalize_adjacency

REQUIRED_FILES = ("meta.json", "edges.bin", "features.bin", "labels.bin", "splits.json")
META_KEYS = ("n", "m", "f", "num_classes", "name")


@dataclass
class Bundle:
    graph: CsrGraph          # unit-weight adjacency, self-loops added
    features: np.ndarray     # float64 n x f
    labels: np.ndarray       # int64, -1 = unlabeled
    splits: dict
    meta: dict


def _read_meta(path: str) -> dict:
    try:
        with open(os.path.join(path, "meta.json")) as fh:
            meta = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read meta.json: {exc}") from exc
    for key in META_KEYS:
        if key not in meta:
            raise InputError(f"meta.json missing key {key!r}")
    for key in ("n", "m", "f", "num_classes"):
        if not isinstance(meta[key], int) or meta[key] <= 0:
            raise InputError(f"meta.json field {key!r} must be a positive integer")
    return meta


def load_bundle(path: str) -> Bundle:
    """Load and fully validate a bundle directory; raises InputError on any
    format violation."""
    for name in REQUIRED_FILES:
        if not os.path.isfile(os.path.join(path, name)):
            raise InputError(f"bundle file missing: {name}")
    meta = _read_meta(path)
    n, f = meta["n"], meta["f"]

    raw = np.fromfile(os.path.join(path, "edges.bin"), dtype="<u4")
    if raw.size % 2 != 0:
        raise InputError("edges.bin does not contain whole (src,dst) pairs")
    pairs = raw.reshape(-1, 2).astype(np.int64)
    if pairs.size and pairs.max() >= n:
        raise InputError("edge endpoint out of range")
    if np.any(pairs[:, 0] == pairs[:, 1]):
        raise InputError("edges.bin must not contain self-loops")
    if meta["m"] != pairs.shape[0] + n:
        raise InputError(
            f"meta m={meta['m']} != arcs({pairs.shape[0]}) + self-loops({n})")
    base = from_edges(n, pairs[:, 0], pairs[:, 1])
    if not base.symmetric:
        raise InputError("bundle graph must store both arcs of every edge")
    graph = add_self_loops(base)

    feat_raw = np.fromfile(os.path.join(path, "features.bin"), dtype="<f4")
    if feat_raw.size != n * f:
        raise InputError(f"features.bin holds {feat_raw.size} floats, expected {n * f}")
    features = feat_raw.astype(np.float64).reshape(n, f)
    if not np.all(np.isfinite(features)):
        raise InputError("non-finite feature value")

    labels = np.fromfile(os.path.join(path, "labels.bin"), dtype="<i4").astype(np.int64)
    if labels.size != n:
        raise InputError(f"labels.bin holds {labels.size} labels, expected {n}")
    if labels.min(initial=0) < -1 or labels.max(initial=-1) >= meta["num_classes"]:
        raise InputError("label outside [-1, num_classes)")

    try:
        with open(os.path.join(path, "splits.json")) as fh:
            splits = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read splits.json: {exc}") from exc
    seen = np.zeros(n, dtype=bool)
    for part in ("train", "val", "test"):
        if part not in splits:
            raise InputError(f"splits.json missing {part!r}")
        ids = np.asarray(splits[part], dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise InputError(f"split {part!r} id out of range")
        if np.unique(ids).size != ids.size:
            raise InputError(f"split {part!r} contains duplicates")
        if np.any(seen[ids]):
            raise InputError("splits overlap")
        seen[ids] = True
        if ids.size and np.any(labels[ids] < 0):
            raise InputError(f"unlabeled node in split {part!r}")

    return Bundle(graph=graph, features=features, labels=labels,
                  splits=splits, meta=meta)


def validate_bundle(path: str) -> dict:
    """Load-and-check; returns a small summary for the CLI."""
    b = load_bundle(path)
    return {"name": b.meta["name"], "n": b.meta["n"], "m": b.meta["m"],
            "f": b.meta["f"], "num_classes": b.meta["num_classes"],
            "arcs_in_file": b.graph.nnz - b.meta["n"],
            "train": len(b.splits["train"]), "val": len(b.splits["val"]),
            "test": len(b.splits["test"])}


def normalized_diffusion(bundle: Bundle, r: float = 0.5) -> CsrGraph:
    return normalize_adjacency(bundle.graph, r)
