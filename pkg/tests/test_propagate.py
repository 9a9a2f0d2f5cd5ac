import numpy as np
import pytest

import sparsegnn as sg
from sparsegnn.errors import InputError
from sparsegnn.propagate import PropagationScheme, SchemeKind

from conftest import er_diffusion, rand_features


def sgc(hops, skip=True):
    return PropagationScheme(SchemeKind.SGC, hops=hops, skip=skip)


class TestSgc:
    def test_matches_dense_power(self):
        T = er_diffusion(8, 1)
        X = rand_features(8, 3, 2)
        scheme = sgc(2, skip=False)
        trace = sg.propagate(T, X, scheme, sg.ThresholdPolicy(delta_a=0.0))
        want = T.to_dense() @ (T.to_dense() @ X)
        err = np.linalg.norm(trace.embedding - want) / np.linalg.norm(want)
        assert err < 1e-10

    def test_equals_repeated_spmm_bitwise(self):
        T = er_diffusion(12, 3)
        X = rand_features(12, 4, 4)
        trace = sg.propagate(T, X, sgc(3, skip=False), sg.ThresholdPolicy())
        want = X
        for _ in range(3):
            want = sg.spmm(T, want)
        assert np.array_equal(trace.embedding, want)

    def test_all_pruned_skip_preserves_input(self):
        T = er_diffusion(8, 5)
        X = rand_features(8, 3, 6)
        trace = sg.propagate(T, X, sgc(4, skip=True),
                             sg.ThresholdPolicy(delta_a=1e9))
        np.testing.assert_array_equal(trace.embedding, X)
        assert all(h.kept_edges == 0 for h in trace.hops)


class TestAppnp:
    def test_matches_dense_recurrence(self):
        T = er_diffusion(8, 7)
        X = rand_features(8, 3, 8)
        alpha, hops = 0.1, 20
        scheme = PropagationScheme(SchemeKind.APPNP, hops=hops, alpha=alpha, skip=False)
        trace = sg.propagate(T, X, scheme, sg.ThresholdPolicy())
        Td = T.to_dense()
        want = X.copy()
        for _ in range(hops):
            want = (1 - alpha) * (Td @ want) + alpha * X
        err = np.linalg.norm(trace.embedding - want) / np.linalg.norm(want)
        assert err < 1e-8


class TestSmoothingIteration:
    def test_appnp_identity(self):
        """With b=alpha, c=(1-alpha)/alpha and a full mask the smoothing step
        is the APPNP hop (1-a)Tp + ax."""
        T = er_diffusion(9, 9)
        L = sg.laplacian(T)
        p = rand_features(9, 2, 10)
        x = rand_features(9, 2, 11)
        alpha = 0.2
        got = sg.smoothing_iteration(L, p, x, alpha, (1 - alpha) / alpha,
                                     sg.full_mask(L))
        want = (1 - alpha) * (T.to_dense() @ p) + alpha * x
        assert np.abs(got - want).max() < 1e-12

    def test_c_zero_pure_attraction(self):
        T = er_diffusion(6, 1)
        L = sg.laplacian(T)
        p = rand_features(6, 1, 2)
        x = rand_features(6, 1, 3)
        got = sg.smoothing_iteration(L, p, x, 0.3, 0.0, sg.full_mask(L))
        np.testing.assert_allclose(got, 0.7 * p + 0.3 * x, atol=1e-14)

    def test_dense_formula_oracle(self):
        for seed in range(5):
            T = er_diffusion(10, seed)
            L = sg.laplacian(T)
            p = rand_features(10, 3, seed + 20)
            x = rand_features(10, 3, seed + 40)
            mask = sg.random_mask(L, 0.4, seed)
            b, c = 0.4, 0.8
            got = sg.smoothing_iteration(L, p, x, b, c, mask)
            Ld = L.to_dense()
            off = ~L.diagonal_positions()
            drop = off & ~mask
            Ld[L.row_of_entry()[drop], L.col_idx[drop]] = 0.0
            want = (1 - b) * p - b * c * (Ld @ p) + b * x
            assert np.abs(got - want).max() < 1e-12

    def test_diagonal_immune_to_mask(self):
        T = er_diffusion(6, 4)
        L = sg.laplacian(T)
        p = rand_features(6, 1, 5)
        x = rand_features(6, 1, 6)
        got = sg.smoothing_iteration(L, p, x, 0.5, 1.0, sg.empty_mask(L))
        want = (1 - 0.5) * p - 0.5 * np.diag(np.diag(L.to_dense())) @ p + 0.5 * x
        np.testing.assert_allclose(got, want, atol=1e-14)


class TestGenericSmoothingScheme:
    def test_objective_descent(self):
        """Full-mask gradient steps with b <= 1/(1+c*lmax) never increase the
        smoothing objective."""
        for seed in range(5):
            T = er_diffusion(10, seed)
            L = sg.laplacian(T)
            lmax = np.linalg.eigvalsh(L.to_dense()).max()
            c = 1.0
            b = 1.0 / (1.0 + c * lmax)
            x = rand_features(10, 1, seed + 5)
            p = x.copy()
            prev_obj = sg.theory.smoothing_objective(L, p, x, c)
            for _ in range(15):
                p = sg.smoothing_iteration(L, p, x, b, c, sg.full_mask(L))
                obj = sg.theory.smoothing_objective(L, p, x, c)
                assert obj <= prev_obj + 1e-12
                prev_obj = obj

    def test_scheme_validation(self):
        with pytest.raises(InputError):
            PropagationScheme(SchemeKind.GENERIC_SMOOTHING, hops=2, b=0.0)
        with pytest.raises(InputError):
            PropagationScheme(SchemeKind.APPNP, hops=2, alpha=0.0)
        with pytest.raises(InputError):
            PropagationScheme(SchemeKind.SGC, hops=0)


class TestTraceAccounting:
    def test_mask_chain_monotone(self):
        T = er_diffusion(16, 11)
        X = rand_features(16, 4, 12)
        trace = sg.propagate(T, X, sgc(6), sg.ThresholdPolicy(delta_a=0.05))
        trace.chain.validate()
        counts = trace.chain.kept_counts()
        assert all(a >= b for a, b in zip(counts, counts[1:]))

    def test_per_hop_flops_exact(self):
        T = er_diffusion(16, 13)
        X = rand_features(16, 4, 14)
        f = X.shape[1]
        for skip in (False, True):
            scheme = sgc(4, skip=skip)
            trace = sg.propagate(T, X, scheme, sg.ThresholdPolicy(delta_a=0.04))
            for hop in trace.hops:
                want = 2 * hop.kept_edges * f + (T.n * f if skip else 0)
                assert hop.flops == want

    def test_closed_form_reconciles(self):
        T = er_diffusion(16, 15)
        X = rand_features(16, 4, 16)
        trace = sg.propagate(T, X, sgc(4, skip=False), sg.ThresholdPolicy(delta_a=0.04))
        assert trace.total_flops == sg.count_prop_flops(trace.chain, X.shape[1])

    def test_hop_rows_export(self):
        T = er_diffusion(8, 17)
        X = rand_features(8, 2, 18)
        trace = sg.propagate(T, X, sgc(2), sg.ThresholdPolicy())
        rows = trace.hop_rows()
        assert [r["hop"] for r in rows] == [0, 1]
        assert set(rows[0]) == {"hop", "kept_edges", "eta_a", "flops"}

    def test_f32_export_roundtrip(self):
        X = rand_features(5, 3, 19)
        blob = sg.embedding_to_f32_bytes(X)
        back = np.frombuffer(blob, dtype="<f4").reshape(5, 3)
        np.testing.assert_allclose(back, X, atol=1e-6)


class TestNumericalAbort:
    def test_nonfinite_embedding_reports_hop(self):
        T = er_diffusion(6, 2)
        X = rand_features(6, 2, 3) * 1e300
        scheme = PropagationScheme(SchemeKind.GENERIC_SMOOTHING, hops=6,
                                   b=1.0, c=1e80, skip=False)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(sg.NumericalError, match="hop"):
                sg.propagate(T, X, scheme, sg.ThresholdPolicy())
