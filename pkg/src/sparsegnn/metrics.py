"""Operation accounting, accuracy evaluation, threshold sweeps and reports.

FLOPs convention: one multiply-add counts as 2 FLOPs (configurable via the
flops_per_mac argument where it appears).  Reported graph sparsity eta_a is
the mean over layers of the per-layer pruned fraction q_a/m.  Sweep CSVs
deliberately exclude wall time so reruns with the same seed are identical
byte for byte; wall time lives only in the JSON reports.
"""

from __future__ import annotations

import base64
import io
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InputError
from .sparsify import mask_to_bytes

THREADS_ENV = "UNIFEWS_THREADS"


@dataclass
class RunReport:
    """Summary of one engine run, serializable to JSON."""

    dataset: str
    config: dict
    layers: list
    totals: dict
    accuracy: dict
    wall_time_ms: float
    seed: int
    epochs: list | None = None
    masks_b64: list | None = None

    @classmethod
    def build(cls, dataset, config, layers, accuracy, wall_time_ms, seed,
              epochs=None, masks_b64=None) -> "RunReport":
        # eta fields may be None on layers where the stage does not apply
        # (decoupled hop rows carry no eta_w and vice versa).
        etas_a = [l["eta_a"] for l in layers if l.get("eta_a") is not None]
        etas_w = [l["eta_w"] for l in layers if l.get("eta_w") is not None]
        totals = {
            "prop_flops": sum(int(l.get("prop_flops", 0)) for l in layers),
            "trans_flops": sum(int(l.get("trans_flops", 0)) for l in layers),
            "eta_a_mean": float(np.mean(etas_a)) if etas_a else 0.0,
            "eta_w_mean": float(np.mean(etas_w)) if etas_w else 0.0,
        }
        totals["flops"] = totals["prop_flops"] + totals["trans_flops"]
        rep = cls(dataset=dataset, config=config, layers=layers, totals=totals,
                  accuracy=accuracy, wall_time_ms=wall_time_ms, seed=seed,
                  epochs=epochs, masks_b64=masks_b64)
        rep.validate()
        return rep

    def validate(self) -> None:
        if self.layers:
            if self.totals["prop_flops"] != sum(int(l.get("prop_flops", 0)) for l in self.layers):
                raise InputError("prop_flops total does not match layers")
            if self.totals["trans_flops"] != sum(int(l.get("trans_flops", 0)) for l in self.layers):
                raise InputError("trans_flops total does not match layers")
        for v in self.accuracy.values():
            if not 0.0 <= v <= 1.0:
                raise InputError("accuracy outside [0,1]")

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        rep = cls(**json.loads(text))
        rep.validate()
        return rep


def count_prop_flops(mask_chain, f: int, flops_per_mac: int = 2) -> int:
    """Closed-form propagation cost of a mask chain: sum over layers of
    flops_per_mac * kept * f (skip additions are not part of this formula)."""
    if f <= 0:
        raise InputError("feature width must be positive")
    return sum(flops_per_mac * kept * f for kept in mask_chain.kept_counts())


def accuracy(logits, labels, split) -> float:
    """Fraction of argmax matches over the split; ties break to the lowest
    class index (argmax first-occurrence)."""
    ids = np.asarray(split, dtype=np.int64).ravel()
    if ids.size == 0:
        raise InputError("empty split")
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if np.any(labels[ids] < 0):
        raise InputError("unlabeled node in evaluation split")
    pred = np.argmax(logits[ids], axis=1)
    return float(np.mean(pred == labels[ids]))


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        k = int(raw)
    except ValueError as exc:
        raise InputError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    return max(1, k)


SWEEP_COLUMNS = ["delta_a", "delta_w", "eta_a", "eta_w", "prop_flops",
                 "trans_flops", "total_flops", "acc_train", "acc_val",
                 "acc_test", "seed"]


def reports_to_csv(reports, path=None) -> str:
    """Fixed-schema CSV of sweep reports.  Floats are rendered with repr so
    identical runs serialize identically; wall time is excluded on purpose."""
    buf = io.StringIO()
    buf.write(",".join(SWEEP_COLUMNS) + "\n")
    for rep in reports:
        row = [
            repr(float(rep.config.get("delta_a", 0.0))),
            repr(float(rep.config.get("delta_w", 0.0))),
            repr(float(rep.totals["eta_a_mean"])),
            repr(float(rep.totals["eta_w_mean"])),
            str(int(rep.totals["prop_flops"])),
            str(int(rep.totals["trans_flops"])),
            str(int(rep.totals["flops"])),
            repr(float(rep.accuracy.get("train", 0.0))),
            repr(float(rep.accuracy.get("val", 0.0))),
            repr(float(rep.accuracy.get("test", 0.0))),
            str(int(rep.seed)),
        ]
        buf.write(",".join(row) + "\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _run_grid_point(args):
    spec, da, dw = args
    return run_single(dict(spec, delta_a=da, delta_w=dw))


def run_single(spec: dict):
    """Execute one configured run (used directly and by sweep workers).

    spec keys: mode ("iterative" or "decoupled"), bundle (path), plus the
    mode's hyperparameters; see cli.py for defaults.
    """
    from . import bundle as bundle_io
    from . import model as model_mod
    from .propagate import PropagationScheme, SchemeKind
    from .propagate import propagate as run_propagation
    from .sparsify import ThresholdPolicy

    data = bundle_io.load_bundle(spec["bundle"])
    T = bundle_io.normalized_diffusion(data, r=spec.get("r", 0.5))
    seed = int(spec.get("seed", 0))
    mode = spec.get("mode", "iterative")
    policy = ThresholdPolicy(delta_a=float(spec.get("delta_a", 0.0)),
                             delta_w=float(spec.get("delta_w", 0.0)))
    if mode == "iterative":
        cfg = model_mod.TrainConfig(
            epochs=int(spec.get("epochs", 200)),
            learning_rate=float(spec.get("learning_rate", 0.5)),
            weight_decay=float(spec.get("weight_decay", 0.0)),
            seed=seed,
            hidden_width=int(spec.get("hidden", 512)),
            layer_depth=int(spec.get("depth", 2)),
            skip_connection=bool(spec.get("skip", True)),
        )
        dims = [data.meta["f"]] + [cfg.hidden_width] * (cfg.layer_depth - 1) \
            + [data.meta["num_classes"]]
        net = model_mod.GcnModel.init(dims, seed)
        _, report = model_mod.train(net, T, data.features, data.labels,
                                    data.splits, cfg, policy,
                                    dataset=data.meta["name"])
        return report
    if mode == "decoupled":
        import time
        t0 = time.perf_counter()
        scheme = PropagationScheme(
            kind=SchemeKind(spec.get("scheme", "sgc")),
            hops=int(spec.get("hops", 2)),
            alpha=float(spec.get("alpha", 0.1)),
            skip=bool(spec.get("skip", True)))
        trace = run_propagation(T, data.features, scheme, policy)
        cfg = model_mod.TrainConfig(
            epochs=int(spec.get("epochs", 200)),
            learning_rate=float(spec.get("learning_rate", 0.5)),
            weight_decay=float(spec.get("weight_decay", 0.0)),
            seed=seed,
            hidden_width=int(spec.get("hidden", 512)),
            layer_depth=int(spec.get("depth", 2)),
        )
        dims = [trace.embedding.shape[1]] + [cfg.hidden_width] * (cfg.layer_depth - 1) \
            + [data.meta["num_classes"]]
        net = model_mod.GcnModel.init(dims, seed)
        _, mlp_report = model_mod.train(net, None, trace.embedding, data.labels,
                                        data.splits, cfg, policy,
                                        dataset=data.meta["name"])
        layers = [{"hop": h.hop, "kept_edges": h.kept_edges, "eta_a": h.eta_a,
                   "eta_w": None, "prop_flops": h.flops, "trans_flops": 0}
                  for h in trace.hops]
        layers += mlp_report.layers
        return RunReport.build(
            dataset=data.meta["name"],
            config={"mode": "decoupled", "scheme": spec.get("scheme", "sgc"),
                    "hops": int(spec.get("hops", 2)),
                    "alpha": float(spec.get("alpha", 0.1)),
                    "skip": bool(spec.get("skip", True)),
                    "delta_a": policy.delta_a, "delta_w": policy.delta_w,
                    "epochs": cfg.epochs, "hidden": cfg.hidden_width,
                    "depth": cfg.layer_depth,
                    "learning_rate": cfg.learning_rate},
            layers=layers,
            accuracy=mlp_report.accuracy,
            wall_time_ms=(time.perf_counter() - t0) * 1e3,
            seed=seed,
            epochs=mlp_report.epochs,
            masks_b64=[base64.b64encode(mask_to_bytes(m)).decode("ascii")
                       for m in trace.chain.layers],
        )
    raise InputError(f"unknown sweep mode {mode!r}")


def sweep(config: dict) -> list:
    """Run the cartesian grid of delta_a x delta_w; one RunReport per point,
    assembled in grid order regardless of worker scheduling."""
    das = [float(x) for x in config.get("delta_a", [0.0])]
    dws = [float(x) for x in config.get("delta_w", [0.0])]
    base = {k: v for k, v in config.items() if k not in ("delta_a", "delta_w")}
    points = [(base, da, dw) for da in das for dw in dws]
    workers = worker_count()
    if workers == 1 or len(points) == 1:
        return [_run_grid_point(p) for p in points]
    with ProcessPoolExecutor(max_workers=min(workers, len(points))) as pool:
        return list(pool.map(_run_grid_point, points))
