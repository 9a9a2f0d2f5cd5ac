import filecmp
import json
import os
import pickle
import subprocess
import sys

import numpy as np
import pytest
import scipy.sparse as sp

from bundleconv import ConvertError, gen_synthetic, read_manifest
from bundleconv.planetoid import convert

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")
BUNDLE_FILES = ["meta.json", "edges.bin", "features.bin", "labels.bin",
                "splits.json", "manifest.json"]


def engine_validate(path):
    return subprocess.run([sys.executable, "-m", "sparsegnn.cli",
                           "validate-bundle", "--bundle", str(path)],
                          capture_output=True, text=True)


class TestSynthetic:
    def test_clique2_matches_golden(self, tmp_path):
        out = tmp_path / "clique2"
        gen_synthetic("clique", 2, 0.0, 0, 2, 2, str(out))
        for name in BUNDLE_FILES:
            assert filecmp.cmp(out / name, os.path.join(GOLDEN, "clique2", name),
                               shallow=False), name

    def test_path3_matches_golden(self, tmp_path):
        out = tmp_path / "path3"
        gen_synthetic("path", 3, 0.0, 0, 2, 2, str(out))
        for name in BUNDLE_FILES:
            assert filecmp.cmp(out / name, os.path.join(GOLDEN, "path3", name),
                               shallow=False), name

    def test_double_generation_identical_checksums(self, tmp_path):
        a = gen_synthetic("erdos_renyi", 32, 0.3, 7, 6, 3, str(tmp_path / "a"))
        b = gen_synthetic("erdos_renyi", 32, 0.3, 7, 6, 3, str(tmp_path / "b"))
        assert a.checksums == b.checksums
        c = gen_synthetic("erdos_renyi", 32, 0.3, 8, 6, 3, str(tmp_path / "c"))
        assert c.checksums != a.checksums  # seed matters

    def test_citation_deterministic(self, tmp_path):
        a = gen_synthetic("citation", 150, 0.0, 3, 40, 5, str(tmp_path / "a"))
        b = gen_synthetic("citation", 150, 0.0, 3, 40, 5, str(tmp_path / "b"))
        assert a.checksums == b.checksums
        assert a.n == 150 and a.num_classes == 5

    def test_every_kind_passes_engine_validation(self, tmp_path):
        cases = [("clique", 2, 0.0), ("path", 3, 0.0),
                 ("erdos_renyi", 24, 0.3), ("citation", 120, 0.0)]
        for kind, n, p in cases:
            out = tmp_path / kind
            gen_synthetic(kind, n, p, 1, 5, 2 if n < 10 else 4, str(out))
            res = engine_validate(out)
            assert res.returncode == 0, (kind, res.stderr)

    def test_byte_length_invariants(self, tmp_path):
        out = tmp_path / "er"
        man = gen_synthetic("erdos_renyi", 20, 0.4, 2, 7, 3, str(out))
        arcs_in_file = man.m - man.n
        assert os.path.getsize(out / "edges.bin") == 8 * arcs_in_file
        assert os.path.getsize(out / "features.bin") == 4 * man.n * man.f
        assert os.path.getsize(out / "labels.bin") == 4 * man.n

    def test_manifest_checksums_match_files(self, tmp_path):
        import hashlib
        out = tmp_path / "er"
        man = gen_synthetic("erdos_renyi", 16, 0.3, 5, 4, 2, str(out))
        back = read_manifest(str(out))
        assert back == man
        for fname, want in man.checksums.items():
            got = hashlib.sha256((out / fname).read_bytes()).hexdigest()
            assert got == want, fname

    def test_bad_kind_rejected(self, tmp_path):
        with pytest.raises(ConvertError):
            gen_synthetic("torus", 4, 0.1, 0, 2, 2, str(tmp_path / "x"))


def make_raw_planetoid(root, name="cora"):
    """Tiny fake raw release: 8 nodes, 2 train, 3 shuffled test ids."""
    n_train, n = 2, 8
    test_order = [7, 5, 6]  # file order, deliberately shuffled
    rng = np.random.default_rng(0)
    dense = np.zeros((n, 4))
    for i in range(n):
        dense[i, i % 4] = i + 1.0  # distinct recognizable rows
    labels = np.array([0, 1, 0, 1, 0, 1, 0, 1])
    onehot = np.eye(2)[labels]

    def dump(obj, suffix):
        with open(os.path.join(root, f"ind.{name}.{suffix}"), "wb") as fh:
            pickle.dump(obj, fh, protocol=2)

    dump(sp.csr_matrix(dense[:n_train]), "x")
    dump(onehot[:n_train], "y")
    dump(sp.csr_matrix(dense[:5]), "allx")
    dump(onehot[:5], "ally")
    # tx rows follow test.index file order
    dump(sp.csr_matrix(dense[test_order]), "tx")
    dump(onehot[test_order], "ty")
    graph = {0: [1, 1, 2], 1: [0, 2], 2: [0, 1, 2, 3], 3: [2, 4], 4: [3, 5],
             5: [4, 6], 6: [5, 7], 7: [6]}  # dups and a self-reference
    dump(graph, "graph")
    with open(os.path.join(root, f"ind.{name}.test.index"), "w") as fh:
        fh.write("\n".join(str(i) for i in test_order) + "\n")
    return dense, labels


class TestPlanetoid:
    def test_parse_local_source(self, tmp_path):
        src = tmp_path / "raw"
        src.mkdir()
        dense, labels = make_raw_planetoid(str(src))
        out = tmp_path / "bundle"
        man = convert("cora", str(out), source=str(src))
        assert man.n == 8 and man.num_classes == 2
        res = engine_validate(out)
        assert res.returncode == 0, res.stderr
        # shuffled test rows must land on the right nodes (row-normalized)
        feats = np.fromfile(out / "features.bin", dtype="<f4").reshape(8, 4)
        for node in (5, 6, 7):
            want = dense[node] / dense[node].sum()
            np.testing.assert_allclose(feats[node], want, atol=1e-6)
        got_labels = np.fromfile(out / "labels.bin", dtype="<i4")
        np.testing.assert_array_equal(got_labels, labels)

    def test_double_conversion_identical(self, tmp_path):
        src = tmp_path / "raw"
        src.mkdir()
        make_raw_planetoid(str(src))
        a = convert("cora", str(tmp_path / "a"), source=str(src))
        b = convert("cora", str(tmp_path / "b"), source=str(src))
        assert a.checksums == b.checksums

    def test_missing_source_file_errors(self, tmp_path):
        with pytest.raises(ConvertError, match="not found"):
            convert("cora", str(tmp_path / "out"), source=str(tmp_path))

    def test_offline_download_failure_message(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BUNDLECONV_CACHE", str(tmp_path / "cache"))
        try:
            convert("cora", str(tmp_path / "out"))
        except ConvertError as exc:
            assert "--source" in str(exc)
        else:  # network available: the real dataset must match published dims
            man = read_manifest(str(tmp_path / "out"))
            assert (man.n, man.f, man.num_classes) == (2708, 1433, 7)

    def test_unknown_dataset_rejected(self, tmp_path):
        with pytest.raises(ConvertError, match="unknown dataset"):
            convert("ogbn-papers100m", str(tmp_path))


class TestCli:
    def run(self, *args):
        return subprocess.run([sys.executable, "-m", "bundleconv.cli", *args],
                              capture_output=True, text=True)

    def test_gen_and_validate(self, tmp_path):
        out = tmp_path / "b"
        res = self.run("gen", "--kind", "erdos_renyi", "--n", "16", "--p", "0.3",
                       "--seed", "2", "--f", "4", "--classes", "2",
                       "--out", str(out))
        assert res.returncode == 0, res.stderr
        assert json.loads(res.stdout)["n"] == 16
        assert engine_validate(out).returncode == 0

    def test_convert_failure_exit_code(self, tmp_path):
        res = self.run("convert", "--dataset", "cora", "--out", str(tmp_path / "o"),
                       "--source", str(tmp_path))
        assert res.returncode == 1
        assert "error" in res.stderr
