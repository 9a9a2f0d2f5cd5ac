"""Sparse graph-learning engine with entry-wise edge and weight pruning,
exact operation accounting, and a numerical verification suite for the
underlying spectral-approximation guarantees."""

from .errors import ConvergenceError, InputError, NumericalError, SingularMatrixError
from .graph import (CsrGraph, OpCounter, add_self_loops, degree_vector,
                    dense_matmul, dense_solve, from_edges, laplacian,
                    normalize_adjacency, spmm, transpose, validate)
from .sparsify import (GraphRule, MaskChain, PruneStats, ThresholdPolicy,
                       empty_mask, full_mask, mask_from_bytes, mask_to_bytes,
                       masked_spmm, prune_threshold, random_mask,
                       sparsify_edges_message_exact, sparsify_edges_nodewise,
                       sparsify_weights)
from .propagate import (HopRecord, PropagationScheme, PropagationTrace,
                        SchemeKind, embedding_to_f32_bytes, propagate,
                        smoothing_iteration)
from .metrics import RunReport, accuracy, count_prop_flops, reports_to_csv, sweep
from .model import (ForwardTrace, GcnModel, LayerSpec, TrainConfig,
                    WeightPruneSchedule, forward_sparsified, load_checkpoint,
                    mlp_forward, save_checkpoint, train)
from .bundle import Bundle, load_bundle, normalized_diffusion, validate_bundle
from . import theory

__version__ = "0.1.0"
