"""Numerical witnesses for the spectral-approximation results.

Everything here is desk-scale and exact: closed-form smoothing solutions by
dense factorization, additive spectral-similarity measurements by dense
eigensolve or Gram power iteration, and the inequality chains behind the
sparsifier bounds checked as plain arithmetic over computed quantities.
Dense paths are size-guarded so property sweeps stay fast.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InputError, NumericalError
from .graph import (CsrGraph, add_self_loops, dense_solve, from_edges,
                    laplacian, normalize_adjacency, spmm, transpose)
from .propagate import PropagationScheme, propagate
from .sparsify import ThresholdPolicy, masked_spmm, sparsify_edges_message_exact

DENSE_SOLVE_MAX_N = 4096
DENSE_EIG_MAX_N = 512
POWER_TOL = 1e-8
POWER_MAX_ITERS = 10000
BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class SimilarityReport:
    """Additive spectral-similarity measurement between two Laplacians."""

    epsilon: float
    quad_form_sup: float
    q_a: int | None
    delta_a: float | None
    bound_holds: bool

    def __post_init__(self):
        if self.epsilon < 0:
            raise NumericalError("negative similarity epsilon")
        if self.quad_form_sup > self.epsilon + BOUND_SLACK:
            raise NumericalError("quadratic-form sup exceeds operator norm")


@dataclass(frozen=True)
class ApproxReport:
    """Closed-form smoothing solutions on the raw and sparsified graphs and
    the approximation bound err <= c * epsilon * ||p*||."""

    c: float
    epsilon: float
    p_star: np.ndarray
    p_hat_star: np.ndarray
    err: float
    bound: float
    within_bound: bool


def erdos_renyi(n: int, p_edge: float, seed: int) -> CsrGraph:
    """Seeded undirected G(n,p) with unit weights, both arcs stored,
    self-loops added.  The fixed distribution for the property suites."""
    if n < 2 or not 0.0 <= p_edge <= 1.0:
        raise InputError("bad Erdos-Renyi parameters")
    rng = np.random.default_rng(seed)
    iu, ju = np.triu_indices(n, k=1)
    pick = rng.random(iu.size) < p_edge
    src = np.concatenate([iu[pick], ju[pick]])
    dst = np.concatenate([ju[pick], iu[pick]])
    return add_self_loops(from_edges(n, src, dst))


def random_diffusion(n: int, p_edge: float, seed: int, r: float = 0.5) -> CsrGraph:
    return normalize_adjacency(erdos_renyi(n, p_edge, seed), r)


def masked_adjacency(T: CsrGraph, mask: np.ndarray) -> CsrGraph:
    """Same pattern as T with pruned entries zeroed."""
    vals = np.where(mask, T.values, 0.0)
    return CsrGraph(n=T.n, row_ptr=T.row_ptr.copy(), col_idx=T.col_idx.copy(),
                    values=vals, has_self_loops=T.has_self_loops, symmetric=False)


def masked_laplacian(T: CsrGraph, mask: np.ndarray) -> CsrGraph:
    """L_hat = I - (masked T); the identity stays intact, so a pruned
    diagonal entry leaves 1 on the Laplacian diagonal."""
    return laplacian_of_adjacency(masked_adjacency(T, mask))


def laplacian_of_adjacency(A: CsrGraph) -> CsrGraph:
    diag = A.diagonal_positions()
    vals = -A.values.copy()
    vals[diag] += 1.0
    return CsrGraph(n=A.n, row_ptr=A.row_ptr.copy(), col_idx=A.col_idx.copy(),
                    values=vals, has_self_loops=A.has_self_loops, symmetric=False)


def closed_form_solution(L: CsrGraph, x, c: float) -> np.ndarray:
    """Solve (I + c*L) p = x by dense factorization (size-guarded)."""
    if c < 0:
        raise InputError("c must be non-negative")
    if L.n > DENSE_SOLVE_MAX_N:
        raise InputError(f"dense solve guarded at n <= {DENSE_SOLVE_MAX_N}")
    A = np.eye(L.n) + c * L.to_dense()
    return dense_solve(A, x)


def _sigma_max_power(matvec, rmatvec, n: int, seed: int = 0,
                     tol: float = POWER_TOL, max_iters: int = POWER_MAX_ITERS) -> float:
    """Largest singular value via power iteration on the Gram operator.
    Convergence is declared on the Rayleigh-quotient residual of M'M."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise InputError("degenerate start vector")
    v /= nv
    resid = np.inf
    for _ in range(max_iters):
        gv = rmatvec(matvec(v))
        lam = float(v @ gv)
        resid = float(np.linalg.norm(gv - lam * v))
        if resid <= tol * max(lam, 1e-300):
            return float(np.sqrt(max(lam, 0.0)))
        ng = np.linalg.norm(gv)
        if ng == 0.0:
            return 0.0
        v = gv / ng
    raise ConvergenceError(
        f"power iteration did not converge in {max_iters} iterations", resid)


def _count_differing(L: CsrGraph, L_hat: CsrGraph) -> int | None:
    same_pattern = (np.array_equal(L.row_ptr, L_hat.row_ptr)
                    and np.array_equal(L.col_idx, L_hat.col_idx))
    if not same_pattern:
        return None
    return int(np.count_nonzero(L.values != L_hat.values))


def spectral_epsilon(L: CsrGraph, L_hat: CsrGraph) -> SimilarityReport:
    """Measure ||L - L_hat||_2 and the quadratic-form supremum.

    Symmetric differences use a dense symmetric eigensolve up to n=512 and
    Gram power iteration beyond; asymmetric differences report the largest
    singular value as epsilon together with the symmetric-part supremum
    (quadratic forms only see the symmetric part).
    """
    if L.n != L_hat.n:
        raise InputError("node sets differ")
    n = L.n
    if n <= DENSE_EIG_MAX_N:
        diff = L.to_dense() - L_hat.to_dense()
        if np.array_equal(diff, diff.T):
            eps = float(np.abs(np.linalg.eigvalsh(diff)).max(initial=0.0))
            quad = eps
        else:
            eps = float(np.linalg.svd(diff, compute_uv=False).max(initial=0.0))
            sym = 0.5 * (diff + diff.T)
            quad = float(np.abs(np.linalg.eigvalsh(sym)).max(initial=0.0))
    else:
        Lt, _ = transpose(L)
        Lht, _ = transpose(L_hat)
        matvec = lambda v: spmm(L, v) - spmm(L_hat, v)
        rmatvec = lambda v: spmm(Lt, v) - spmm(Lht, v)
        eps = _sigma_max_power(matvec, rmatvec, n)
        symvec = lambda v: 0.5 * (matvec(v) + rmatvec(v))
        quad = _sigma_max_power(symvec, symvec, n, seed=1)
    return SimilarityReport(epsilon=eps, quad_form_sup=quad,
                            q_a=_count_differing(L, L_hat), delta_a=None,
                            bound_holds=quad <= eps + BOUND_SLACK)


def check_theorem_4_3(T: CsrGraph, p, delta_a: float) -> SimilarityReport:
    """Prune by the exact per-message rule against a single-feature p and
    verify the sparsifier chain  |p'Yp| <= ||p|| * ||Yp||_1 <= q_a*d_a*||p||
    as plain arithmetic (Y holds the pruned entries)."""
    vec = np.asarray(p, dtype=np.float64).ravel()
    pnorm = float(np.linalg.norm(vec))
    if pnorm == 0.0:
        raise InputError("zero embedding vector makes the bound vacuous")
    mask, stats = sparsify_edges_message_exact(T, vec, delta_a)
    upsilon_p = masked_spmm(T, ~mask, vec, skip_connection=False)
    l1 = float(np.abs(upsilon_p).sum())
    quad = float(abs(vec @ upsilon_p))
    q_a = stats.q_a
    chain = quad <= pnorm * l1 and l1 <= q_a * delta_a
    eps_claim = q_a * delta_a / pnorm
    return SimilarityReport(epsilon=eps_claim, quad_form_sup=quad / pnorm ** 2,
                            q_a=q_a, delta_a=delta_a, bound_holds=chain)


def check_theorem_4_2(L: CsrGraph, L_hat: CsrGraph, x, c: float) -> ApproxReport:
    """Compute both closed-form smoothing solutions and assert the
    approximation bound with epsilon taken from the spectral measurement."""
    if not (L.symmetric or _dense_symmetric(L)):
        raise InputError("approximation-bound check requires a symmetric Laplacian")
    if not (L_hat.symmetric or _dense_symmetric(L_hat)):
        raise InputError("approximation-bound check requires a symmetric sparsified Laplacian")
    p_star = closed_form_solution(L, x, c)
    p_hat_star = closed_form_solution(L_hat, x, c)
    eps = spectral_epsilon(L, L_hat).epsilon
    err = float(np.linalg.norm(p_hat_star - p_star))
    bound = c * eps * float(np.linalg.norm(p_star))
    return ApproxReport(c=c, epsilon=eps, p_star=p_star, p_hat_star=p_hat_star,
                        err=err, bound=bound,
                        within_bound=err <= bound + BOUND_SLACK)


def _dense_symmetric(M: CsrGraph) -> bool:
    if M.n > DENSE_SOLVE_MAX_N:
        raise InputError("symmetry check guarded for large graphs; set the flag")
    d = M.to_dense()
    return np.array_equal(d, d.T)


def multi_hop_error_curve(T: CsrGraph, X, scheme: PropagationScheme,
                          policy_grid) -> list[dict]:
    """Relative deviation of sparsified propagation from the exact path,
    per threshold and per hop.  Rows: {delta_a, hop, value}."""
    if T.n > DENSE_SOLVE_MAX_N:
        raise InputError(f"curve guarded at n <= {DENSE_SOLVE_MAX_N}")
    exact = propagate(T, X, scheme, ThresholdPolicy(delta_a=0.0),
                      record_embeddings=True)
    rows = []
    for da in policy_grid:
        pruned = propagate(T, X, scheme, ThresholdPolicy(delta_a=float(da)),
                           record_embeddings=True)
        for hop, (pe, ph) in enumerate(zip(exact.embeddings, pruned.embeddings)):
            denom = float(np.linalg.norm(pe))
            err = float(np.linalg.norm(ph - pe))
            rows.append({"delta_a": float(da), "hop": hop,
                         "value": err / denom if denom else 0.0})
    return rows


def smoothing_distance(T: CsrGraph, X, scheme: PropagationScheme,
                       policy_grid, c: float) -> list[dict]:
    """Distance of every traced embedding to the closed-form optimum of the
    smoothing objective with regularization c.  Rows: {delta_a, hop, value}."""
    if T.n > DENSE_SOLVE_MAX_N:
        raise InputError(f"table guarded at n <= {DENSE_SOLVE_MAX_N}")
    L = laplacian(T)
    p_star = closed_form_solution(L, X, c)
    rows = []
    for da in policy_grid:
        trace = propagate(T, X, scheme, ThresholdPolicy(delta_a=float(da)),
                          record_embeddings=True)
        for hop, ph in enumerate(trace.embeddings):
            rows.append({"delta_a": float(da), "hop": hop,
                         "value": float(np.linalg.norm(ph - p_star))})
    return rows


def symmetrize_mask_union(T: CsrGraph, mask: np.ndarray) -> np.ndarray:
    """Union-keep symmetrization: an entry pair is pruned only when both
    directions fall below threshold.  Requires a symmetric pattern; every
    pruned entry still satisfies the original threshold test."""
    Tt, perm = transpose(T)
    if not (np.array_equal(Tt.row_ptr, T.row_ptr)
            and np.array_equal(Tt.col_idx, T.col_idx)):
        raise InputError("union symmetrization needs a symmetric sparsity pattern")
    return mask | mask[perm]


def thm43_suite(ns, seeds, deltas, p_edge: float = 0.3) -> list[dict]:
    """Sparsifier-bound chain over seeded random graphs; one row per
    (seed, n, delta_a) instance."""
    rows = []
    for seed in seeds:
        for n in ns:
            T = random_diffusion(n, p_edge, seed)
            rng = np.random.default_rng(seed + 7919)
            p = rng.standard_normal(n)
            for da in deltas:
                rep = check_theorem_4_3(T, p, float(da))
                rows.append({"seed": seed, "n": n, "delta_a": float(da),
                             "q_a": rep.q_a, "epsilon": rep.epsilon,
                             "quad_form_sup": rep.quad_form_sup,
                             "bound_holds": rep.bound_holds})
    return rows


def thm42_suite(ns, seeds, deltas, cs, p_edge: float = 0.3) -> list[dict]:
    """Approximate-smoothing bound over seeded random graphs with
    union-symmetrized per-message pruning; one row per instance."""
    rows = []
    for seed in seeds:
        for n in ns:
            T = random_diffusion(n, p_edge, seed)
            L = laplacian(T)
            rng = np.random.default_rng(seed + 104729)
            x = rng.standard_normal(n)
            for da in deltas:
                mask, _ = sparsify_edges_message_exact(T, x, float(da))
                mask = symmetrize_mask_union(T, mask)
                L_hat = masked_laplacian(T, mask)
                for c in cs:
                    rep = check_theorem_4_2(L, L_hat, x, float(c))
                    rows.append({"seed": seed, "n": n, "delta_a": float(da),
                                 "c": float(c), "epsilon": rep.epsilon,
                                 "err": rep.err, "bound": rep.bound,
                                 "within_bound": rep.within_bound})
    return rows


def smoothing_objective(L: CsrGraph, p, x, c: float) -> float:
    """||p - x||^2 + c * p'Lp (Frobenius / trace form for matrices)."""
    pd = np.asarray(p, dtype=np.float64)
    xd = np.asarray(x, dtype=np.float64)
    lp = spmm(L, pd)
    return float(((pd - xd) ** 2).sum() + c * (pd * lp).sum())


def report_to_json(report, path=None) -> str:
    """Serialize a SimilarityReport or ApproxReport (arrays become lists)."""
    from dataclasses import asdict
    import json

    def clean(v):
        return v.tolist() if isinstance(v, np.ndarray) else v

    text = json.dumps({k: clean(v) for k, v in asdict(report).items()},
                      indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def table_to_csv(rows, path=None) -> str:
    """Serialize {delta_a, hop, value} rows with exact float rendering."""
    buf = io.StringIO()
    buf.write("delta_a,hop,value\n")
    for r in rows:
        buf.write(f"{float(r['delta_a'])!r},{int(r['hop'])},{float(r['value'])!r}\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
