"""Iterative GCN with joint edge-and-weight sparsification, the dense MLP
transform for decoupled models, and a deterministic full-batch training loop
with manual backpropagation.

Masks are constants within a training step: each step first computes the
edge/weight masks from the current values, then takes an exact gradient of
the fixed-mask forward.  Pruned entries therefore carry exactly zero
gradient and kept entries are straight-through.
"""

from __future__ import annotations

import base64
import struct
import time
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from .graph import CsrGraph, OpCounter, _as_dense, transpose
from .metrics import RunReport, accuracy
from .sparsify import (ThresholdPolicy, full_mask, mask_to_bytes, masked_spmm,
                       sparsify_edges_nodewise, sparsify_weights)


@dataclass
class LayerSpec:
    in_dim: int
    out_dim: int
    W: np.ndarray
    bias: np.ndarray | None = None


@dataclass
class GcnModel:
    """Stack of linear layers; ReLU between layers, none after the last
    (softmax lives in the loss)."""

    layers: list

    @classmethod
    def init(cls, dims, seed: int, bias: bool = False) -> "GcnModel":
        """Glorot-uniform initialization with a seeded generator."""
        if len(dims) < 2:
            raise InputError("need at least one layer")
        rng = np.random.default_rng(seed)
        layers = []
        for fi, fo in zip(dims[:-1], dims[1:]):
            limit = np.sqrt(6.0 / (fi + fo))
            W = rng.uniform(-limit, limit, size=(fi, fo))
            b = np.zeros(fo) if bias else None
            layers.append(LayerSpec(fi, fo, W, b))
        return cls(layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def copy(self) -> "GcnModel":
        return GcnModel([LayerSpec(l.in_dim, l.out_dim, l.W.copy(),
                                   None if l.bias is None else l.bias.copy())
                         for l in self.layers])

    def validate(self) -> None:
        for a, b in zip(self.layers[:-1], self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise InputError("layer dimensions do not chain")
        for l in self.layers:
            if l.W.shape != (l.in_dim, l.out_dim) or not np.all(np.isfinite(l.W)):
                raise InputError("bad weight matrix")


@dataclass(frozen=True)
class WeightPruneSchedule:
    """Online magnitude pruning schedule.  delta_w of None defers to the
    ThresholdPolicy; pruning starts at start_epoch; masks freeze (stop being
    recomputed) after freeze_epoch when set."""

    delta_w: float | None = None
    start_epoch: int = 0
    freeze_epoch: int | None = None


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.5
    weight_decay: float = 0.0
    seed: int = 0
    hidden_width: int = 512
    layer_depth: int = 2
    weight_prune: WeightPruneSchedule = WeightPruneSchedule()
    skip_connection: bool = True
    edge_freeze_epoch: int | None = None

    def __post_init__(self):
        if self.epochs <= 0 or self.layer_depth < 1:
            raise InputError("epochs and depth must be positive")


@dataclass(frozen=True)
class LayerTrace:
    eta_a: float
    eta_w: float
    prop_flops: int
    trans_flops: int
    kept_edges: int
    kept_weights: int


@dataclass
class ForwardTrace:
    layers: list
    logits: np.ndarray

    @property
    def prop_flops(self) -> int:
        return sum(l.prop_flops for l in self.layers)

    @property
    def trans_flops(self) -> int:
        return sum(l.trans_flops for l in self.layers)


@dataclass
class _ForwardState:
    """Everything backprop needs: inputs, post-propagation embeddings,
    pre-activations, and the masks used."""

    H: list
    P: list
    Z: list
    edge_masks: list
    weight_keeps: list
    trace: ForwardTrace


def _layer_forward(model: GcnModel, T: CsrGraph | None, X: np.ndarray,
                   delta_a: float, delta_w: float, skip: bool,
                   exempt_self_loops: bool,
                   edge_masks: list | None = None,
                   weight_keeps: list | None = None) -> _ForwardState:
    """Forward pass through all layers; masks are computed on the fly unless
    frozen ones are supplied.  T of None disables propagation (plain MLP)."""
    H = X
    Hs, Ps, Zs, emasks, wkeeps, traces = [], [], [], [], [], []
    prev = full_mask(T) if T is not None else None
    m = T.nnz if T is not None else 0
    for li, layer in enumerate(model.layers):
        if H.shape[1] != layer.in_dim:
            raise InputError(f"layer {li}: input width {H.shape[1]} != {layer.in_dim}")
        Hs.append(H)
        prop_counter = OpCounter()
        if T is not None:
            if edge_masks is not None:
                mask = edge_masks[li]
            else:
                mask, _ = sparsify_edges_nodewise(T, H, delta_a, prev, exempt_self_loops)
            P = masked_spmm(T, mask, H, skip_connection=skip, counter=prop_counter)
            prev = mask
            kept_e = int(mask.sum())
            eta_a = 1.0 - kept_e / m if m else 0.0
        else:
            mask, P, kept_e, eta_a = None, H, 0, 0.0
        if weight_keeps is not None:
            keep = weight_keeps[li]
            W_hat = np.where(keep, layer.W, 0.0)
        else:
            W_hat, _ = sparsify_weights(layer.W, P, delta_w)
            keep = W_hat != 0.0
        kept_w = int(keep.sum())
        total_w = layer.W.size
        trans_counter = OpCounter()
        Z = P @ W_hat
        trans_counter.add_macs(P.shape[0] * kept_w)  # zero entries skipped
        if layer.bias is not None:
            Z = Z + layer.bias
        if not np.all(np.isfinite(Z)):
            raise NumericalError(f"non-finite activation at layer {li}")
        Zs.append(Z)
        Ps.append(P)
        emasks.append(mask)
        wkeeps.append(keep)
        traces.append(LayerTrace(eta_a=eta_a,
                                 eta_w=1.0 - kept_w / total_w,
                                 prop_flops=prop_counter.flops,
                                 trans_flops=trans_counter.flops,
                                 kept_edges=kept_e,
                                 kept_weights=kept_w))
        H = np.maximum(Z, 0.0) if li < model.depth - 1 else Z
    trace = ForwardTrace(layers=traces, logits=Zs[-1])
    return _ForwardState(H=Hs, P=Ps, Z=Zs, edge_masks=emasks,
                         weight_keeps=wkeeps, trace=trace)


def forward_sparsified(model: GcnModel, T: CsrGraph, X, policy: ThresholdPolicy,
                       skip: bool = True) -> ForwardTrace:
    """Full sparsified forward: per layer, edge mask from the current
    representation (inherited across layers), masked propagation with the
    skip term, weight pruning against the propagated embedding, transform."""
    model.validate()
    dense, _ = _as_dense(X, "X")
    state = _layer_forward(model, T, dense, policy.delta_a, policy.delta_w,
                           skip, policy.exempt_self_loops)
    return state.trace


def mlp_forward(model: GcnModel, H0, delta_w: float) -> ForwardTrace:
    """Transform stage only: H <- relu(H @ W_hat) per layer with weight
    pruning, no propagation."""
    model.validate()
    dense, _ = _as_dense(H0, "H0")
    state = _layer_forward(model, None, dense, 0.0, delta_w, False, False)
    return state.trace


def _softmax_xent(logits: np.ndarray, labels: np.ndarray, ids: np.ndarray):
    z = logits[ids]
    y = labels[ids]
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(len(ids)), y]))
    probs = np.exp(z - lse[:, None])
    probs[np.arange(len(ids)), y] -= 1.0
    dlogits = np.zeros_like(logits)
    dlogits[ids] = probs / len(ids)
    return loss, dlogits


def loss_and_grads(model: GcnModel, state: _ForwardState, labels: np.ndarray,
                   train_ids: np.ndarray, weight_decay: float,
                   T_pair=None, skip: bool = True):
    """Exact gradient of the fixed-mask forward.

    T_pair is (transposed graph, permutation) from graph.transpose; None for
    the MLP path.  Returns (loss, [dW per layer], [dbias per layer]).
    """
    loss, dZ = _softmax_xent(state.Z[-1], labels, train_ids)
    w_hats = [np.where(k, l.W, 0.0) for k, l in zip(state.weight_keeps, model.layers)]
    if weight_decay:
        loss += 0.5 * weight_decay * sum(float((w * w).sum()) for w in w_hats)
    dWs = [None] * model.depth
    dbs = [None] * model.depth
    for li in range(model.depth - 1, -1, -1):
        keep = state.weight_keeps[li]
        P = state.P[li]
        dW_hat = P.T @ dZ
        if weight_decay:
            dW_hat = dW_hat + weight_decay * w_hats[li]
        dWs[li] = np.where(keep, dW_hat, 0.0)
        if model.layers[li].bias is not None:
            dbs[li] = dZ.sum(axis=0)
        if li == 0:
            break
        dP = dZ @ w_hats[li].T
        if T_pair is not None:
            T_t, perm = T_pair
            mask_t = state.edge_masks[li][perm]
            dH = masked_spmm(T_t, mask_t, dP, skip_connection=skip)
        else:
            dH = dP
        dZ = dH * (state.Z[li - 1] > 0.0)
    return loss, dWs, dbs


def train(model: GcnModel, T: CsrGraph | None, X, labels, splits,
          cfg: TrainConfig, policy: ThresholdPolicy,
          dataset: str = "") -> tuple[GcnModel, RunReport]:
    """Deterministic full-batch gradient descent with softmax cross-entropy.

    T of None trains the plain transform stage (decoupled second phase) on X
    directly.  Edge masks are recomputed every forward (frozen after
    cfg.edge_freeze_epoch when set); weight masks follow cfg.weight_prune.
    Returns the best-validation snapshot and a report whose per-layer stats
    come from a final inference forward of that snapshot.
    """
    t0 = time.perf_counter()
    model = model.copy()
    model.validate()
    dense, _ = _as_dense(X, "X")
    labels = np.asarray(labels, dtype=np.int64).ravel()
    train_ids = np.asarray(splits["train"], dtype=np.int64)
    val_ids = np.asarray(splits["val"], dtype=np.int64)
    test_ids = np.asarray(splits["test"], dtype=np.int64)
    if train_ids.size == 0:
        raise InputError("empty training split")
    if np.any(labels[train_ids] < 0):
        raise InputError("unlabeled node in training split")
    T_pair = transpose(T) if T is not None else None
    sched = cfg.weight_prune
    base_dw = sched.delta_w if sched.delta_w is not None else policy.delta_w

    frozen_edge = None
    frozen_weight = None
    best_val = -1.0
    best_model = model.copy()
    history = []

    for epoch in range(cfg.epochs):
        dw = base_dw if epoch >= sched.start_epoch else 0.0
        state = _layer_forward(model, T, dense, policy.delta_a, dw,
                               cfg.skip_connection, policy.exempt_self_loops,
                               edge_masks=frozen_edge, weight_keeps=frozen_weight)
        if cfg.edge_freeze_epoch is not None and epoch >= cfg.edge_freeze_epoch \
                and frozen_edge is None:
            frozen_edge = state.edge_masks
        if sched.freeze_epoch is not None and epoch >= sched.freeze_epoch \
                and frozen_weight is None:
            frozen_weight = state.weight_keeps
        loss, dWs, dbs = loss_and_grads(model, state, labels, train_ids,
                                        cfg.weight_decay, T_pair,
                                        cfg.skip_connection)
        if not np.isfinite(loss):
            raise NumericalError(f"training diverged (loss NaN) at epoch {epoch}")
        logits = state.trace.logits
        val_acc = accuracy(logits, labels, val_ids) if val_ids.size else 0.0
        if val_acc > best_val:
            best_val = val_acc
            best_model = model.copy()
        history.append({
            "epoch": epoch,
            "loss": loss,
            "val_acc": val_acc,
            "eta_a": [l.eta_a for l in state.trace.layers],
            "eta_w": [l.eta_w for l in state.trace.layers],
            "flops": state.trace.prop_flops + state.trace.trans_flops,
        })
        for layer, dW, db in zip(model.layers, dWs, dbs):
            layer.W -= cfg.learning_rate * dW
            if db is not None and layer.bias is not None:
                layer.bias -= cfg.learning_rate * db
    if val_ids.size == 0:
        best_model = model.copy()

    final_state = _layer_forward(best_model, T, dense, policy.delta_a, base_dw,
                                 cfg.skip_connection, policy.exempt_self_loops)
    final = final_state.trace
    logits = final.logits
    masks_b64 = None
    if T is not None:
        masks_b64 = [base64.b64encode(mask_to_bytes(m)).decode("ascii")
                     for m in final_state.edge_masks]
    acc = {
        "train": accuracy(logits, labels, train_ids),
        "val": accuracy(logits, labels, val_ids) if val_ids.size else 0.0,
        "test": accuracy(logits, labels, test_ids) if test_ids.size else 0.0,
    }
    report = RunReport.build(
        dataset=dataset,
        config={"mode": "iterative" if T is not None else "mlp",
                "epochs": cfg.epochs,
                "learning_rate": cfg.learning_rate,
                "weight_decay": cfg.weight_decay,
                "depth": cfg.layer_depth, "hidden": cfg.hidden_width,
                "delta_a": policy.delta_a, "delta_w": base_dw,
                "skip": cfg.skip_connection},
        layers=[{"eta_a": l.eta_a if T is not None else None,
                 "eta_w": l.eta_w,
                 "prop_flops": l.prop_flops, "trans_flops": l.trans_flops}
                for l in final.layers],
        accuracy=acc,
        wall_time_ms=(time.perf_counter() - t0) * 1e3,
        seed=cfg.seed,
        epochs=history,
        masks_b64=masks_b64,
    )
    return best_model, report


def save_checkpoint(model: GcnModel, path) -> None:
    """Flat binary checkpoint: u32 layer count, u32 (in,out) per layer,
    then float32 weights row-major per layer.  Biases are not representable
    in this format."""
    if any(l.bias is not None for l in model.layers):
        raise InputError("checkpoint format does not carry biases")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", model.depth))
        for l in model.layers:
            fh.write(struct.pack("<II", l.in_dim, l.out_dim))
        for l in model.layers:
            fh.write(l.W.astype("<f4").tobytes(order="C"))


def load_checkpoint(path) -> GcnModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise InputError("checkpoint truncated")
    (count,) = struct.unpack_from("<I", blob, 0)
    off = 4
    dims = []
    for _ in range(count):
        if off + 8 > len(blob):
            raise InputError("checkpoint truncated")
        dims.append(struct.unpack_from("<II", blob, off))
        off += 8
    layers = []
    for fi, fo in dims:
        nbytes = 4 * fi * fo
        if off + nbytes > len(blob):
            raise InputError("checkpoint truncated")
        W = np.frombuffer(blob, dtype="<f4", count=fi * fo, offset=off)
        layers.append(LayerSpec(fi, fo, W.reshape(fi, fo).astype(np.float64)))
        off += nbytes
    if off != len(blob):
        raise InputError("trailing bytes in checkpoint")
    model = GcnModel(layers)
    model.validate()
    return model
