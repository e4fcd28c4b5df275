import itertools

import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from uials import (
    DegeneratePencilError,
    LtiSystem,
    RosenbrockPencil,
    check_detectable_pair,
    check_minimum_phase,
    check_rank_matching,
    check_strong_detectability,
    invariant_zeros,
)
from uials.linalg import matrix_rank
from uials.structural import _min_phase_verdict

from conftest import random_valid_system


def rank_matching_oracle(sys):
    """Assemble the block matrix literally and take brute-force ranks."""
    cb = sys.C @ sys.B
    top = np.hstack([cb, sys.D])
    bottom = np.hstack([sys.D, np.zeros_like(sys.D)])
    block = np.vstack([top, bottom])
    r1 = np.linalg.matrix_rank(block)
    r2 = np.linalg.matrix_rank(sys.D)
    r3 = np.linalg.matrix_rank(np.vstack([sys.B, sys.D]))
    return r1, r2, r3


def minor_gcd_zero_oracle(sys):
    """Roots common to all maximal minors of the symbolic pencil, each then
    re-verified by a numeric rank test. Only practical for n + q <= 4."""
    z = sympy.Symbol("z")
    n, q, p = sys.n, sys.q, sys.p
    top = sympy.Matrix(
        [[z * (1 if i == j else 0) - sys.A[i, j] for j in range(n)] for i in range(n)]
    ).row_join(sympy.Matrix([[-sys.B[i, j] for j in range(q)] for i in range(n)]))
    bottom = sympy.Matrix([[sys.C[i, j] for j in range(n)] for i in range(p)]).row_join(
        sympy.Matrix([[sys.D[i, j] for j in range(q)] for i in range(p)])
    )
    pencil = top.col_join(bottom)
    size = n + q
    minors = []
    for rows in itertools.combinations(range(n + p), size):
        det = pencil[list(rows), :].det()
        poly = sympy.Poly(sympy.expand(det), z)
        if not poly.is_zero:
            minors.append(poly)
    if not minors:
        return None  # pencil singular everywhere
    g = minors[0]
    for m in minors[1:]:
        g = g.gcd(m)
    if g.degree() == 0:
        return []
    roots = [complex(r) for r in sympy.Poly(g, z).all_roots()]
    numeric = RosenbrockPencil.from_system(sys)
    generic = numeric.generic_rank_bound()
    return [r for r in roots if matrix_rank(numeric.evaluate(r)) < generic]


class TestRankMatching:
    def test_benchmark_passes(self, benchmark_system):
        rm = check_rank_matching(benchmark_system)
        assert rank_matching_oracle(benchmark_system) == (2, 1, 1)
        assert (rm.rank_block, rm.rank_d, rm.rank_bd) == (2, 1, 1)
        assert rm.passed

    def test_no_unknown_input_passes_trivially(self, benchmark_system):
        sys = LtiSystem(
            A=benchmark_system.A,
            B=np.zeros((2, 1)),
            G=np.eye(2),
            C=benchmark_system.C,
            D=np.zeros((2, 1)),
        )
        rm = check_rank_matching(sys)
        assert rm.passed
        assert (rm.rank_block, rm.rank_d, rm.rank_bd) == (0, 0, 0)

    def test_invisible_input_channel_fails(self):
        # input enters a state the single output never sees at lag zero
        sys = LtiSystem(
            A=np.eye(2),
            B=np.array([[1.0], [0.0]]),
            G=np.eye(2),
            C=np.array([[0.0, 1.0]]),
            D=np.zeros((1, 1)),
        )
        assert rank_matching_oracle(sys) == (0, 0, 1)
        rm = check_rank_matching(sys)
        assert not rm.passed
        assert (rm.rank_block, rm.rank_d, rm.rank_bd) == (0, 0, 1)

    def test_full_column_rank_feedthrough_always_passes(self):
        # with rank(D) = q both sides reduce to 2q
        rng = np.random.default_rng(0)
        for _ in range(25):
            n = int(rng.integers(1, 5))
            p = int(rng.integers(1, 4))
            q = int(rng.integers(1, p + 1))
            sys = LtiSystem(
                A=rng.standard_normal((n, n)),
                B=rng.standard_normal((n, q)),
                G=np.eye(n),
                C=rng.standard_normal((p, n)),
                D=rng.standard_normal((p, q)),
            )
            if np.linalg.matrix_rank(sys.D) < q:
                continue
            assert check_rank_matching(sys).passed


class TestInvariantZeros:
    def test_benchmark_single_zero_at_origin(self, benchmark_system):
        zeros = invariant_zeros(benchmark_system)
        oracle = minor_gcd_zero_oracle(benchmark_system)
        assert len(oracle) == 1 and abs(oracle[0]) < 1e-9
        assert len(zeros) == 1
        assert abs(zeros[0]) < 1e-8

    def test_stable_siso_without_input_has_no_zeros(self):
        sys = LtiSystem(A=[[0.5]], B=[[0.0]], G=[[1.0]], C=[[1.0]], D=[[0.0]])
        assert invariant_zeros(sys).size == 0

    def test_modified_benchmark_agrees_with_minor_oracle(self, benchmark_system):
        sys = LtiSystem(
            A=np.array([[2.0, 1.0], [0.0, 1.0]]),
            B=benchmark_system.B,
            G=benchmark_system.G,
            C=benchmark_system.C,
            D=benchmark_system.D,
        )
        oracle = minor_gcd_zero_oracle(sys)
        zeros = invariant_zeros(sys)
        assert len(zeros) == len(oracle)
        for z in zeros:
            assert min(abs(z - w) for w in oracle) < 1e-6 if oracle else True

    def test_random_small_systems_agree_with_minor_oracle(self):
        rng = np.random.default_rng(42)
        checked = 0
        while checked < 12:
            n = int(rng.integers(1, 3))
            q = int(rng.integers(0, 2))
            p = int(rng.integers(max(q, 1), 3))
            sys = LtiSystem(
                A=rng.integers(-2, 3, (n, n)).astype(float),
                B=rng.integers(-2, 3, (n, q)).astype(float),
                G=np.eye(n),
                C=rng.integers(-2, 3, (p, n)).astype(float),
                D=rng.integers(-2, 3, (p, q)).astype(float),
            )
            oracle = minor_gcd_zero_oracle(sys)
            if oracle is None:
                with pytest.raises(DegeneratePencilError):
                    invariant_zeros(sys)
                checked += 1
                continue
            zeros = invariant_zeros(sys)
            assert len(zeros) == len(oracle), (sys.A, sys.B, sys.C, sys.D, zeros, oracle)
            for z in zeros:
                assert min((abs(z - w) for w in oracle), default=np.inf) < 1e-6
            checked += 1

    def test_square_invertible_feedthrough_zeros_are_closed_loop_modes(self):
        # with invertible D the zeros are the eigenvalues of A - B D^-1 C
        rng = np.random.default_rng(3)
        A = rng.standard_normal((3, 3))
        B = rng.standard_normal((3, 2))
        C = rng.standard_normal((2, 3))
        D = np.array([[1.0, 0.2], [0.0, 1.5]])
        sys = LtiSystem(A=A, B=B, G=np.eye(3), C=C, D=D)
        expected = np.linalg.eigvals(A - B @ np.linalg.solve(D, C))
        zeros = invariant_zeros(sys)
        assert len(zeros) == 3
        for z in zeros:
            assert min(abs(z - w) for w in expected) < 1e-7

    def test_reproducible_for_fixed_seed(self, benchmark_system):
        z1 = invariant_zeros(benchmark_system, seed=7)
        z2 = invariant_zeros(benchmark_system, seed=7)
        assert np.array_equal(z1, z2)


class TestMinimumPhase:
    def test_benchmark_passes(self, benchmark_system):
        assert check_minimum_phase(benchmark_system)

    def test_boundary_zero_fails(self):
        assert not _min_phase_verdict([1.0])
        assert not _min_phase_verdict([0.2, -1.0])

    def test_interior_zeros_pass(self):
        assert _min_phase_verdict([0.3, -0.9])

    @settings(max_examples=60)
    @given(
        st.lists(st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False), max_size=5),
        st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False),
    )
    def test_monotone_adding_zero_never_rescues(self, zeros, extra):
        # a failing set can never be fixed by adding one more zero
        if not _min_phase_verdict(zeros):
            assert not _min_phase_verdict(list(zeros) + [extra])


class TestStrongDetectability:
    def test_benchmark_verdict(self, benchmark_system):
        rep = check_strong_detectability(benchmark_system)
        assert rep.rank_matching.passed
        assert rep.minimum_phase
        assert rep.strongly_detectable

    def test_rank_matching_failure_still_computes_zeros(self):
        sys = LtiSystem(
            A=np.diag([0.5, 0.6]),
            B=np.array([[1.0], [0.0]]),
            G=np.eye(2),
            C=np.array([[0.0, 1.0]]),
            D=np.zeros((1, 1)),
        )
        rep = check_strong_detectability(sys)
        assert not rep.rank_matching.passed
        assert not rep.strongly_detectable
        assert rep.minimum_phase in (True, False)  # computed, not skipped

    def test_minimum_phase_failure(self):
        # invertible feedthrough with a planted unstable zero
        A = np.array([[1.0, 1.0], [0.0, 1.0]])
        D = np.eye(2)
        B = np.eye(2)
        C = A - np.diag([2.0, 0.5])  # zeros of A - B D^-1 C at {2, 0.5}
        sys = LtiSystem(A=A, B=B, G=np.eye(2), C=C, D=D)
        rep = check_strong_detectability(sys)
        assert rep.rank_matching.passed
        assert not rep.minimum_phase
        assert not rep.strongly_detectable

    def test_collapses_to_pbh_without_unknown_input(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(1, 4))
            p = int(rng.integers(1, 3))
            A = rng.standard_normal((n, n))
            A *= rng.uniform(0.2, 1.4) / max(np.abs(np.linalg.eigvals(A)).max(), 1e-9)
            C = rng.standard_normal((p, n))
            sys = LtiSystem(A=A, B=np.zeros((n, 1)), G=np.eye(n), C=C, D=np.zeros((p, 1)))
            rep = check_strong_detectability(sys)
            assert rep.strongly_detectable == check_detectable_pair(A, C)


class TestDetectablePair:
    def test_invertible_output_map_always_detectable(self, benchmark_system):
        assert check_detectable_pair(benchmark_system.A, benchmark_system.C)

    def test_unstable_unobserved_mode(self):
        assert not check_detectable_pair(np.array([[2.0]]), np.array([[0.0]]))

    def test_stable_modes_need_no_observation(self):
        assert check_detectable_pair(np.array([[0.5]]), np.array([[0.0]]))


def test_random_valid_systems_are_strongly_detectable():
    rng = np.random.default_rng(8)
    for _ in range(10):
        sys, gains = random_valid_system(rng)
        assert check_strong_detectability(sys, seed=1).strongly_detectable
