import json

import numpy as np
import pytest

from uials import (
    DegenerateShapingError,
    DimensionError,
    LtiSystem,
    NoiseSpec,
    factor_shaping,
    load_system,
    validate_system,
)


def test_benchmark_system_passes_validation(benchmark_system):
    report = validate_system(benchmark_system)
    assert report.overall
    names = [c.name for c in report.checks]
    assert names == [
        "dimension_consistency",
        "shaping_full_column_rank",
        "feedthrough_full_column_rank",
        "pair_detectable",
    ]


def test_scalar_full_rank_system_passes():
    sys = LtiSystem(A=[[0.0]], B=[[1.0]], G=[[1.0]], C=[[1.0]], D=[[1.0]])
    assert validate_system(sys).overall


def test_zero_feedthrough_fails_rank_check(benchmark_system):
    sys = LtiSystem(
        A=benchmark_system.A,
        B=benchmark_system.B,
        G=benchmark_system.G,
        C=benchmark_system.C,
        D=np.zeros((2, 1)),
    )
    report = validate_system(sys)
    assert not report.overall
    check = report.check("feedthrough_full_column_rank")
    assert not check.passed
    assert check.evidence["rank"] == 0


def test_undetectable_pair_fails():
    # unstable mode invisible to the output
    sys = LtiSystem(A=[[2.0]], B=[[1.0]], G=[[1.0]], C=[[0.0]], D=[[1.0]])
    report = validate_system(sys)
    assert not report.check("pair_detectable").passed


def test_validation_is_deterministic(benchmark_system):
    r1 = validate_system(benchmark_system)
    r2 = validate_system(benchmark_system)
    assert r1.to_dict() == r2.to_dict()


def test_dimension_mismatch_names_matrix():
    with pytest.raises(DimensionError, match="C"):
        LtiSystem(A=np.eye(2), B=np.zeros((2, 1)), G=np.eye(2), C=np.zeros((2, 3)), D=np.zeros((2, 1)))
    with pytest.raises(DimensionError, match="B"):
        LtiSystem(A=np.eye(2), B=np.zeros((3, 1)), G=np.eye(2), C=np.eye(2), D=np.zeros((2, 1)))


def test_noise_spec_requires_pd_r():
    NoiseSpec(np.zeros((2, 2)), np.eye(2))  # singular Q is fine
    with pytest.raises(ValueError, match="positive definite"):
        NoiseSpec(np.eye(2), np.zeros((2, 2)))
    NoiseSpec(np.eye(2), np.diag([1.0, 0.0]), allow_singular_r=True)
    with pytest.raises(ValueError, match="positive semidefinite"):
        NoiseSpec(np.diag([1.0, -1.0]), np.eye(2))


def test_noise_spec_symmetrizes_and_warns():
    with pytest.warns(UserWarning, match="asymmetric"):
        spec = NoiseSpec(np.array([[1.0, 0.5], [0.0, 1.0]]), np.eye(2))
    assert np.array_equal(spec.Q, spec.Q.T)


class TestFactorShaping:
    def test_duplicated_column(self):
        g_raw = np.array([[1.0, 1.0], [0.0, 0.0]])
        g, q = factor_shaping(g_raw, np.eye(2))
        assert g.shape == (2, 1)
        assert np.allclose(g, [[1.0], [0.0]])
        assert np.allclose(q, [[2.0]])
        assert np.allclose(g @ q @ g.T, g_raw @ g_raw.T, rtol=1e-12, atol=1e-12)

    def test_full_rank_returned_unchanged(self):
        g_raw = np.array([[1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
        q_raw = np.diag([1.0, 3.0])
        g, q = factor_shaping(g_raw, q_raw)
        assert np.array_equal(g, g_raw)
        assert np.array_equal(q, q_raw)

    def test_rank_one_pair(self):
        g_raw = np.array([[1.0, 2.0], [2.0, 4.0]])
        g, q = factor_shaping(g_raw, np.eye(2))
        assert g.shape == (2, 1)
        expected = g_raw @ np.eye(2) @ g_raw.T  # brute-force product oracle
        assert np.allclose(g @ q @ g.T, expected, rtol=1e-12, atol=1e-12)
        assert np.allclose(expected, [[5.0, 10.0], [10.0, 20.0]])

    def test_zero_shaping_raises(self):
        with pytest.raises(DegenerateShapingError):
            factor_shaping(np.zeros((2, 2)), np.eye(2))

    def test_output_full_rank_invariant(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n, m = int(rng.integers(2, 5)), int(rng.integers(1, 4))
            col_rank = int(rng.integers(1, m + 1))
            base = rng.standard_normal((n, col_rank))
            mix = rng.standard_normal((col_rank, m))
            g_raw = base @ mix
            if not np.any(g_raw):
                continue
            root = rng.standard_normal((m, m))
            g, q = factor_shaping(g_raw, root @ root.T)
            s = np.linalg.svd(g, compute_uv=False)
            assert s[-1] > 1e-9 * s[0]
            assert np.allclose(
                g @ q @ g.T,
                g_raw @ (root @ root.T) @ g_raw.T,
                rtol=1e-11,
                atol=1e-11,
            )


class TestJsonIngestion:
    def test_round_trip(self, tmp_path, benchmark_system):
        path = tmp_path / "sys.json"
        payload = {
            "A": benchmark_system.A.tolist(),
            "B": benchmark_system.B.tolist(),
            "G": benchmark_system.G.tolist(),
            "C": benchmark_system.C.tolist(),
            "D": benchmark_system.D.tolist(),
            "Q": np.eye(2).tolist(),
            "R": np.eye(2).tolist(),
        }
        path.write_text(json.dumps(payload))
        sys, noise = load_system(path)
        assert np.array_equal(sys.A, benchmark_system.A)
        assert not sys.g_assumed_identity
        assert noise is not None
        assert np.array_equal(noise.Q, np.eye(2))

    def test_missing_shaping_triggers_identity_mode(self, tmp_path):
        path = tmp_path / "sys.json"
        payload = {
            "A": [[0.5, 0.0], [0.0, 0.2]],
            "B": [[0.0], [1.0]],
            "C": [[1.0, 0.0], [0.0, 1.0]],
            "D": [[1.0], [0.0]],
        }
        path.write_text(json.dumps(payload))
        sys, noise = load_system(path)
        assert sys.g_assumed_identity
        assert np.array_equal(sys.G, np.eye(2))
        assert noise is None

    def test_missing_required_key(self, tmp_path):
        path = tmp_path / "sys.json"
        path.write_text(json.dumps({"A": [[1.0]], "B": [[1.0]], "C": [[1.0]]}))
        with pytest.raises(KeyError, match="D"):
            load_system(path)

    def test_partial_noise_rejected(self, tmp_path):
        path = tmp_path / "sys.json"
        path.write_text(
            json.dumps({"A": [[0.5]], "B": [[1.0]], "C": [[1.0]], "D": [[1.0]], "Q": [[1.0]]})
        )
        with pytest.raises(KeyError, match="together"):
            load_system(path)
