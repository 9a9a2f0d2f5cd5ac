"""Entry-wise pruning primitives.

Two graph rules exist: the exact per-message rule (|T[u,v] * p[v]| > delta,
single feature, used by the theory checks) and the node-wise rule that
pre-scales the threshold by the L2 norm of the source node's feature row
(the multi-feature generalization used by the pipelines).  Both use a strict
">" at the boundary, so a zero threshold still drops exact-zero messages.

Weight pruning applies the same magnitude test column-by-column against the
embedding column norms.  Masks are boolean arrays over the stored entries of
the base graph and only ever shrink across layers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InputError
from .graph import CsrGraph, OpCounter, _as_dense, _segment_matmul


class GraphRule(Enum):
    MESSAGE_EXACT = "message_exact"  # per-entry |T[u,v] * p[v]|, single feature
    NODEWISE_PRE = "nodewise_pre"    # |T[u,v]| * ||P[v,:]||, any width


@dataclass(frozen=True)
class ThresholdPolicy:
    """Pruning thresholds and mode switches for one run."""

    delta_a: float = 0.0
    delta_w: float = 0.0
    graph_mode: GraphRule = GraphRule.NODEWISE_PRE
    exempt_self_loops: bool = False

    def __post_init__(self):
        if self.delta_a < 0 or self.delta_w < 0:
            raise InputError("thresholds must be non-negative")


@dataclass(frozen=True)
class PruneStats:
    """Pruned-entry counts; eta values are fractions of the full matrix."""

    q_a: int = 0
    eta_a: float = 0.0
    q_w: int = 0
    eta_w: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.eta_a <= 1.0 and 0.0 <= self.eta_w <= 1.0):
            raise InputError("sparsity outside [0,1]")


def edge_stats(mask: np.ndarray) -> PruneStats:
    m = mask.size
    q = int(m - mask.sum())
    return PruneStats(q_a=q, eta_a=q / m if m else 0.0)


def weight_stats(keep: np.ndarray) -> PruneStats:
    total = keep.size
    q = int(total - keep.sum())
    return PruneStats(q_w=q, eta_w=q / total if total else 0.0)


@dataclass
class MaskChain:
    """Per-layer edge masks over a fixed base graph; kept sets only shrink."""

    base_nnz: int
    layers: list = field(default_factory=list)

    def append(self, mask: np.ndarray) -> None:
        if mask.dtype != np.bool_ or mask.shape != (self.base_nnz,):
            raise InputError("mask must be boolean over the base nnz positions")
        if self.layers and np.any(mask & ~self.layers[-1]):
            raise InputError("mask chain must be monotonically shrinking")
        self.layers.append(mask)

    def kept_counts(self) -> list[int]:
        return [int(m.sum()) for m in self.layers]

    def validate(self) -> None:
        prev = None
        for m in self.layers:
            if prev is not None and np.any(m & ~prev):
                raise InputError("mask chain monotonicity violated")
            prev = m


def full_mask(T: CsrGraph) -> np.ndarray:
    return np.ones(T.nnz, dtype=bool)


def empty_mask(T: CsrGraph) -> np.ndarray:
    return np.zeros(T.nnz, dtype=bool)


def prune_threshold(x: float, delta: float) -> bool:
    """Keep decision for a single entry: True iff |x| > delta (strict)."""
    if delta < 0:
        raise InputError("threshold must be non-negative")
    return abs(x) > delta


def _check_mask(T: CsrGraph, mask: np.ndarray) -> None:
    if mask.dtype != np.bool_ or mask.shape != (T.nnz,):
        raise InputError("mask must be a boolean array over T's stored entries")


def sparsify_edges_nodewise(T: CsrGraph, P, delta_a: float, prev: np.ndarray,
                            exempt_self_loops: bool = False):
    """Node-wise rule: keep (u,v) iff it survived `prev` and
    |T[u,v]| * ||P[v,:]||_2 > delta_a (or u==v when exempted).

    A node with an all-zero feature row loses all its outgoing messages
    unless self-loops are exempted.
    """
    _check_mask(T, prev)
    dense, _ = _as_dense(P, "P")
    if dense.shape[0] != T.n:
        raise InputError("P row count must equal node count")
    if delta_a < 0:
        raise InputError("delta_a must be non-negative")
    norms = np.linalg.norm(dense, axis=1)
    keep = np.abs(T.values) * norms[T.col_idx] > delta_a
    if exempt_self_loops:
        keep |= T.diagonal_positions()
    mask = prev & keep
    return mask, edge_stats(mask)


def sparsify_edges_message_exact(T: CsrGraph, p, delta_a: float, prev=None):
    """Exact per-message rule on a single feature: keep iff |T[u,v]*p[v]| > delta_a."""
    vec = np.asarray(p, dtype=np.float64).ravel()
    if vec.shape != (T.n,):
        raise InputError("p must be a length-n vector")
    if delta_a < 0:
        raise InputError("delta_a must be non-negative")
    if prev is None:
        prev = full_mask(T)
    _check_mask(T, prev)
    keep = np.abs(T.values * vec[T.col_idx]) > delta_a
    mask = prev & keep
    return mask, edge_stats(mask)


def masked_spmm(T: CsrGraph, mask: np.ndarray, P, skip_connection: bool,
                counter: OpCounter | None = None) -> np.ndarray:
    """Sparse-dense product restricted to kept entries; when skip_connection
    is set the accumulator is initialized with P itself, so a node whose
    edges are all pruned keeps its previous value."""
    _check_mask(T, mask)
    dense, was_1d = _as_dense(P, "P")
    if dense.shape[0] != T.n:
        raise InputError("dimension mismatch in masked_spmm")
    f = dense.shape[1]
    if mask.all():
        out = _segment_matmul(T.row_ptr, T.col_idx, T.values, dense)
        kept_nnz = T.nnz
    else:
        kept_int = mask.astype(np.int64)
        counts = np.zeros(T.n, dtype=np.int64)
        starts = T.row_ptr[:-1]
        nonempty = starts < T.row_ptr[1:]
        if kept_int.size:
            counts[nonempty] = np.add.reduceat(kept_int, starts[nonempty])
        kept_ptr = np.zeros(T.n + 1, dtype=np.int64)
        np.cumsum(counts, out=kept_ptr[1:])
        kv = T.values[mask]
        kc = T.col_idx[mask]
        kept_nnz = kv.size
        if kept_nnz == 0 and skip_connection:
            if counter is not None:
                counter.add_flops(T.n * f)
            out = dense.copy()
            return out[:, 0] if was_1d else out
        out = _segment_matmul(kept_ptr, kc, kv, dense)
    if counter is not None:
        counter.add_macs(kept_nnz * f)
    if skip_connection:
        out += dense
        if counter is not None:
            counter.add_flops(T.n * f)
    return out[:, 0] if was_1d else out


def sparsify_weights(W, P, delta_w: float):
    """Magnitude pruning of a weight matrix against embedding column norms:
    keep W[j,i] iff |W[j,i]| * ||P[:,j]||_2 > delta_w, else zero it.

    The pruned count includes entries that were already exactly zero, so the
    kept count always equals the number of nonzeros in the result.
    """
    w, _ = _as_dense(W, "W")
    dense, _ = _as_dense(P, "P")
    if w.shape[0] != dense.shape[1]:
        raise InputError("W row count must equal embedding width")
    if delta_w < 0:
        raise InputError("delta_w must be non-negative")
    col_norms = np.linalg.norm(dense, axis=0)
    keep = np.abs(w) * col_norms[:, None] > delta_w
    w_hat = np.where(keep, w, 0.0)
    return w_hat, weight_stats(keep)


def random_mask(T: CsrGraph, eta: float, seed: int) -> np.ndarray:
    """Drop exactly round(eta * nnz) positions, chosen uniformly without
    replacement by a seeded generator."""
    if not 0.0 <= eta <= 1.0:
        raise InputError("eta must lie in [0,1]")
    k = int(np.rint(eta * T.nnz))
    mask = full_mask(T)
    if k:
        rng = np.random.default_rng(seed)
        drop = rng.choice(T.nnz, size=k, replace=False)
        mask[drop] = False
    return mask


def mask_to_bytes(mask: np.ndarray) -> bytes:
    """Length-prefixed little-endian bitset (u64 bit count, then packed bits)."""
    if mask.dtype != np.bool_:
        raise InputError("mask must be boolean")
    return struct.pack("<Q", mask.size) + np.packbits(mask, bitorder="little").tobytes()


def mask_from_bytes(blob: bytes) -> np.ndarray:
    if len(blob) < 8:
        raise InputError("bitset blob too short")
    (nbits,) = struct.unpack("<Q", blob[:8])
    packed = np.frombuffer(blob[8:], dtype=np.uint8)
    if packed.size != (nbits + 7) // 8:
        raise InputError("bitset payload length mismatch")
    return np.unpackbits(packed, bitorder="little")[:nbits].astype(bool)
