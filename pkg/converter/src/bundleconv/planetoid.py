"""Conversion of the standard citation benchmarks (cora, citeseer, pubmed)
from the raw pickled release format into engine bundles.

Raw files are the eight ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}
artifacts.  They are looked up in --source (or a local cache) and downloaded
from the public mirror when absent; a download failure is a hard error with
instructions rather than a silent fallback.

The preparation pipeline is the common one for these benchmarks: features
re-assembled in node order with the shuffled test block put back in place
(plus the isolated-test-node fix citeseer needs), rows normalized to unit
sum, the graph symmetrized with duplicates and self-loops dropped, and the
standard 20-per-class/500/1000 splits preserved.
"""

from __future__ import annotations

import os
import pickle
import urllib.error
import urllib.request

import numpy as np
import scipy.sparse as sp

from .formats import BundleManifest, ConvertError, write_bundle

DATASETS = ("cora", "citeseer", "pubmed")
SUFFIXES = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")
MIRROR = "https://raw.githubusercontent.com/kimiyoung/planetoid/master/data"
CACHE_ENV = "BUNDLECONV_CACHE"


def _cache_dir() -> str:
    return os.environ.get(CACHE_ENV,
                          os.path.join(os.path.expanduser("~"), ".cache", "bundleconv"))


def _fetch(dataset: str, suffix: str, source: str | None) -> str:
    fname = f"ind.{dataset}.{suffix}"
    if source is not None:
        path = os.path.join(source, fname)
        if not os.path.isfile(path):
            raise ConvertError(f"{fname} not found under --source {source}")
        return path
    cached = os.path.join(_cache_dir(), fname)
    if os.path.isfile(cached):
        return cached
    os.makedirs(_cache_dir(), exist_ok=True)
    url = f"{MIRROR}/{fname}"
    try:
        with urllib.request.urlopen(url, timeout=30) as resp:
            blob = resp.read()
    except (urllib.error.URLError, OSError) as exc:
        raise ConvertError(
            f"cannot download {url} ({exc}); place the raw files in a local "
            f"directory and pass --source, or set {CACHE_ENV}") from exc
    with open(cached, "wb") as fh:
        fh.write(blob)
    return cached


def _unpickle(path: str):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def _row_normalize(mat: np.ndarray) -> np.ndarray:
    sums = mat.sum(axis=1)
    nonzero = sums > 0
    mat[nonzero] /= sums[nonzero, None]
    return mat


def convert(dataset: str, out_dir: str, source: str | None = None) -> BundleManifest:
    """Convert one benchmark into a bundle; deterministic per dataset version."""
    if dataset not in DATASETS:
        raise ConvertError(f"unknown dataset {dataset!r}; expected one of {DATASETS}")
    paths = {s: _fetch(dataset, s, source) for s in SUFFIXES}
    x = _unpickle(paths["x"])
    y = np.asarray(_unpickle(paths["y"]))
    tx = _unpickle(paths["tx"])
    ty = np.asarray(_unpickle(paths["ty"]))
    allx = _unpickle(paths["allx"])
    ally = np.asarray(_unpickle(paths["ally"]))
    graph = _unpickle(paths["graph"])
    try:
        test_idx = np.loadtxt(paths["test.index"], dtype=np.int64)
    except ValueError as exc:
        raise ConvertError(f"cannot parse test.index: {exc}") from exc
    test_sorted = np.sort(test_idx)

    if dataset == "citeseer":
        # some test ids are isolated and missing from tx/ty; pad the block
        rng_full = np.arange(test_sorted.min(), test_sorted.max() + 1)
        tx_ext = sp.lil_matrix((rng_full.size, x.shape[1]))
        tx_ext[test_sorted - test_sorted.min(), :] = tx
        tx = tx_ext.tocsr()
        ty_ext = np.zeros((rng_full.size, y.shape[1]))
        ty_ext[test_sorted - test_sorted.min(), :] = ty
        ty = ty_ext

    features = sp.vstack((allx, tx)).tolil()
    features[test_idx, :] = features[test_sorted, :]
    features = np.asarray(features.todense(), dtype=np.float64)
    onehot = np.vstack((ally, ty))
    onehot[test_idx, :] = onehot[test_sorted, :]

    n = features.shape[0]
    labels = np.where(onehot.sum(axis=1) > 0, np.argmax(onehot, axis=1), -1)
    features = _row_normalize(features)

    und = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u == v:
                continue
            a, b = (u, v) if u < v else (v, u)
            und.add((a, b))
    arcs_und = np.array(sorted(und), dtype=np.int64)
    arcs = np.concatenate([arcs_und, arcs_und[:, ::-1]], axis=0)

    test_set = set(int(i) for i in test_sorted)
    val_stop = min(y.shape[0] + 500, n)
    splits = {
        "train": list(range(y.shape[0])),
        "val": [i for i in range(y.shape[0], val_stop) if i not in test_set],
        "test": [int(i) for i in test_sorted],
    }
    # drop any split id that ended up unlabeled (citeseer isolated nodes)
    splits = {k: [i for i in v if labels[i] >= 0] for k, v in splits.items()}

    return write_bundle(out_dir, dataset, arcs, features, labels, splits,
                        num_classes=int(y.shape[1]),
                        id_map={"mapping": "identity", "n": int(n),
                                "order": "upstream"})
