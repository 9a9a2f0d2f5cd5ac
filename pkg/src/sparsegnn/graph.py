"""Graph containers and the dense/sparse kernels the rest of the engine builds on.

A graph is held in compressed sparse row form with float64 edge weights.
Dense matrices are plain 2-D C-contiguous float64 ``numpy`` arrays throughout;
features stored as float32 on disk are widened on load.  All operations here
are pure: they never mutate their inputs and never retain references to them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .errors import InputError, NumericalError, SingularMatrixError

# Singularity threshold for dense factorizations (absolute pivot magnitude).
PIVOT_TOL = 1e-12
# Relative infinity-norm residual allowed for dense solves.
SOLVE_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class CsrGraph:
    """Square sparse matrix in CSR form; the container for adjacency,
    diffusion and Laplacian matrices.

    Within each row, column indices are strictly increasing (duplicate edges
    are rejected at construction).  ``values`` are float64.
    """

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray
    has_self_loops: bool = False
    symmetric: bool = False

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row_of_entry(self) -> np.ndarray:
        """Row index of every stored entry, in storage order."""
        counts = np.diff(self.row_ptr)
        return np.repeat(np.arange(self.n, dtype=np.int64), counts)

    def diagonal_positions(self) -> np.ndarray:
        """Boolean marker over stored entries: True where the entry is (u,u)."""
        return self.col_idx == self.row_of_entry()

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.row_of_entry(), self.col_idx] = self.values
        return out


def from_edges(n: int, src, dst, values=None, *, check_symmetric: bool = True) -> CsrGraph:
    """Build a validated CsrGraph from arc lists.

    Duplicate arcs are rejected rather than merged, so converter bugs
    surface immediately.
    """
    src = np.asarray(src, dtype=np.int64).ravel()
    dst = np.asarray(dst, dtype=np.int64).ravel()
    if src.shape != dst.shape:
        raise InputError("src/dst length mismatch")
    if n <= 0:
        raise InputError(f"node count must be positive, got {n}")
    if src.size and (src.min() < 0 or src.max() >= n or dst.min() < 0 or dst.max() >= n):
        raise InputError("edge endpoint out of range")
    if values is None:
        vals = np.ones(src.size)
    else:
        vals = np.asarray(values, dtype=np.float64).ravel()
        if vals.shape != src.shape:
            raise InputError("values length mismatch")

    order = np.lexsort((dst, src))
    src, dst, vals = src[order], dst[order], vals[order]
    dup = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
    if dup.any():
        k = int(np.flatnonzero(dup)[0])
        raise InputError(f"duplicate edge ({src[k]},{dst[k]}) in input")

    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=row_ptr[1:])
    has_loops = bool(src.size) and bool(np.any(src == dst)) and _all_diagonals_present(n, row_ptr, src, dst)
    g = CsrGraph(n=n, row_ptr=row_ptr, col_idx=dst, values=vals,
                 has_self_loops=has_loops, symmetric=False)
    if check_symmetric:
        g = replace(g, symmetric=_is_symmetric(g))
    validate(g)
    return g


def _all_diagonals_present(n, row_ptr, src, dst) -> bool:
    diag_rows = np.unique(src[src == dst])
    return diag_rows.size == n


def _is_symmetric(g: CsrGraph) -> bool:
    gt, perm = transpose(g)
    return (np.array_equal(gt.row_ptr, g.row_ptr)
            and np.array_equal(gt.col_idx, g.col_idx)
            and np.array_equal(gt.values, g.values))


def validate(g: CsrGraph) -> None:
    """Check every structural invariant; raise InputError on the first violation."""
    if g.row_ptr.shape != (g.n + 1,):
        raise InputError("row_ptr length must be n+1")
    if g.row_ptr[0] != 0 or np.any(np.diff(g.row_ptr) < 0):
        raise InputError("row_ptr must start at 0 and be non-decreasing")
    nnz = int(g.row_ptr[-1])
    if g.col_idx.shape != (nnz,) or g.values.shape != (nnz,):
        raise InputError("col_idx/values length must equal row_ptr[n]")
    if nnz and (g.col_idx.min() < 0 or g.col_idx.max() >= g.n):
        raise InputError("column index out of range")
    row_of = g.row_of_entry()
    same_row = row_of[1:] == row_of[:-1]
    if np.any(same_row & (g.col_idx[1:] <= g.col_idx[:-1])):
        raise InputError("columns within a row must be strictly increasing")
    if not np.all(np.isfinite(g.values)):
        raise InputError("non-finite edge weight")
    if g.has_self_loops:
        diag_rows = np.unique(row_of[g.col_idx == row_of])
        if diag_rows.size != g.n:
            raise InputError("has_self_loops set but a diagonal entry is missing")
    if g.symmetric and not _is_symmetric(g):
        raise InputError("symmetric flag set on an asymmetric matrix")


def transpose(g: CsrGraph) -> tuple[CsrGraph, np.ndarray]:
    """Transposed graph plus the permutation mapping transposed storage
    order back to base entry positions (``gt.values == g.values[perm]``)."""
    row_of = g.row_of_entry()
    perm = np.lexsort((row_of, g.col_idx))
    t_ptr = np.zeros(g.n + 1, dtype=np.int64)
    np.cumsum(np.bincount(g.col_idx, minlength=g.n), out=t_ptr[1:])
    gt = CsrGraph(n=g.n, row_ptr=t_ptr, col_idx=row_of[perm], values=g.values[perm],
                  has_self_loops=g.has_self_loops, symmetric=g.symmetric)
    return gt, perm


def degree_vector(g: CsrGraph) -> np.ndarray:
    """Per-node degree, counting stored entries per row (self-loop included).

    Valid for unit-weight graphs, which is the only pre-normalization case
    the engine stores.
    """
    d = np.diff(g.row_ptr).astype(np.float64)
    if g.has_self_loops and np.any(d < 1):
        raise InputError("self-looped graph with empty row")
    return d


def add_self_loops(g: CsrGraph) -> CsrGraph:
    """Return g with a unit-weight (u,u) entry added to every row lacking one.

    Idempotent; preserves sorted rows and the symmetric flag.
    """
    row_of = g.row_of_entry()
    have = np.zeros(g.n, dtype=bool)
    have[row_of[g.col_idx == row_of]] = True
    missing = np.flatnonzero(~have)
    if missing.size == 0:
        return replace(g, has_self_loops=True)
    src = np.concatenate([row_of, missing])
    dst = np.concatenate([g.col_idx, missing])
    vals = np.concatenate([g.values, np.ones(missing.size)])
    out = from_edges(g.n, src, dst, vals, check_symmetric=False)
    return replace(out, has_self_loops=True, symmetric=g.symmetric)


def normalize_adjacency(g: CsrGraph, r: float) -> CsrGraph:
    """General degree normalization: entry (u,v) becomes d(u)^(r-1) * d(v)^(-r).

    Requires a self-looped graph so every degree is at least one;
    r=0.5 yields the symmetric normalization, r=0 the row-stochastic one.
    """
    if not 0.0 <= r <= 1.0:
        raise InputError(f"normalization coefficient r={r} outside [0,1]")
    if not g.has_self_loops:
        raise InputError("normalize_adjacency requires a self-looped graph")
    d = degree_vector(g)
    if np.any(d <= 0):
        raise InputError("zero-degree node; cannot normalize")
    left = d ** (r - 1.0)
    right = d ** (-r)
    row_of = g.row_of_entry()
    vals = g.values * left[row_of] * right[g.col_idx]
    sym = g.symmetric and r == 0.5
    out = CsrGraph(n=g.n, row_ptr=g.row_ptr.copy(), col_idx=g.col_idx.copy(),
                   values=vals, has_self_loops=True, symmetric=sym)
    validate(out)
    return out


def laplacian(g_norm: CsrGraph) -> CsrGraph:
    """L = I - A for a normalized adjacency; same sparsity pattern, diagonal
    entries explicit (guaranteed present because the graph is self-looped)."""
    if not g_norm.has_self_loops:
        raise InputError("laplacian expects a self-looped normalized adjacency")
    diag = g_norm.diagonal_positions()
    vals = -g_norm.values.copy()
    vals[diag] += 1.0
    return CsrGraph(n=g_norm.n, row_ptr=g_norm.row_ptr.copy(), col_idx=g_norm.col_idx.copy(),
                    values=vals, has_self_loops=True, symmetric=g_norm.symmetric)


@dataclass
class OpCounter:
    """Mutable FLOP tally a kernel increments as it works.

    Convention: one multiply-add counts as 2 FLOPs, one plain add as 1.
    """

    flops: int = 0

    def add_macs(self, macs: int, flops_per_mac: int = 2) -> None:
        self.flops += int(macs) * flops_per_mac

    def add_flops(self, flops: int) -> None:
        self.flops += int(flops)


def _as_dense(p, name: str = "matrix") -> tuple[np.ndarray, bool]:
    """Coerce to a 2-D float64 array; report whether the input was 1-D."""
    arr = np.asarray(p, dtype=np.float64)
    was_1d = arr.ndim == 1
    if was_1d:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InputError(f"{name} must be 1-D or 2-D")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr), was_1d


def _segment_matmul(row_ptr: np.ndarray, col_idx: np.ndarray, values: np.ndarray,
                    dense: np.ndarray) -> np.ndarray:
    """Row-major, column-ascending CSR x dense product (fixed accumulation order)."""
    n = row_ptr.shape[0] - 1
    out = np.zeros((n, dense.shape[1]))
    if col_idx.size == 0:
        return out
    msg = values[:, None] * dense[col_idx]
    starts = row_ptr[:-1]
    nonempty = starts < row_ptr[1:]
    out[nonempty] = np.add.reduceat(msg, starts[nonempty], axis=0)
    return out


def spmm(T: CsrGraph, P, counter: OpCounter | None = None) -> np.ndarray:
    """Exact sparse-dense product T @ P with deterministic accumulation order."""
    dense, was_1d = _as_dense(P, "P")
    if dense.shape[0] != T.n:
        raise InputError(f"dimension mismatch: T is {T.n}x{T.n}, P has {dense.shape[0]} rows")
    out = _segment_matmul(T.row_ptr, T.col_idx, T.values, dense)
    if counter is not None:
        counter.add_macs(T.values.size * dense.shape[1])
    return out[:, 0] if was_1d else out


def dense_matmul(A, B) -> np.ndarray:
    a, a1d = _as_dense(A, "A")
    b, b1d = _as_dense(B, "B")
    if a.shape[1] != b.shape[0]:
        raise InputError(f"dimension mismatch: {a.shape} @ {b.shape}")
    out = a @ b
    return out[:, 0] if b1d else out


def dense_solve(A, b) -> np.ndarray:
    """Solve A x = b by LU factorization with explicit singularity and
    residual checks (infinity-norm residual <= 1e-9 * ||b||_inf)."""
    a, _ = _as_dense(A, "A")
    rhs, b1d = _as_dense(b, "b")
    if a.shape[0] != a.shape[1]:
        raise InputError("dense_solve requires a square matrix")
    if rhs.shape[0] != a.shape[0]:
        raise InputError("right-hand side row count mismatch")
    with warnings.catch_warnings():
        # singularity is detected and raised explicitly below
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min(initial=np.inf) < PIVOT_TOL:
        raise SingularMatrixError(f"pivot magnitude {pivots.min():.3e} below {PIVOT_TOL:.0e}")
    x = scipy.linalg.lu_solve((lu, piv), rhs, check_finite=False)
    resid = np.abs(a @ x - rhs).max(initial=0.0)
    scale = np.abs(rhs).max(initial=0.0)
    if resid > SOLVE_RESIDUAL_TOL * max(scale, 1e-300):
        raise NumericalError(f"solve residual {resid:.3e} exceeds tolerance")
    return x[:, 0] if b1d else x
