"""
Tests for generalized singular value extraction
"""

import numpy as np
import pytest

from jbdlab.core import PairOrder, ReorthKind, ReorthStrategy, jbd_init, jbd_step, maybe_swap_pair, run_jbd
from jbdlab.dense import subspace_angle_sin
from jbdlab.diagnostics import verify_residual_bound
from jbdlab.errors import DimensionMismatchError, InsufficientStepsError
from jbdlab.extract import (
    RitzApproximation,
    StoppingRule,
    Which,
    angle_error,
    approximate_gsvd,
    count_near,
    extract_ritz_from_lower,
    extract_ritz_from_upper,
    recover_left_vectors,
    recover_right_vector,
    relative_error,
    residual_bound,
    residual_direct,
    ritz_clusters,
)
from jbdlab.inner import StackedOperator
from jbdlab.testgen import build_pair


@pytest.fixture(scope="module")
def exhausted():
    """Ac_Ls of order 60 run until the Krylov space is exhausted."""
    pair = build_pair("Ac_Ls", 60)
    op = StackedOperator(pair.A, pair.L).with_reference_cache()
    state, _ = run_jbd(op, np.ones(60), max_steps=80)
    return pair, state


@pytest.fixture(scope="module")
def converged():
    """Ac_Ls of order 100 run to a tight residual bound."""
    pair = build_pair("Ac_Ls", 100)
    op = StackedOperator(pair.A, pair.L).with_reference_cache()
    stop = StoppingRule(target_count=1, which=Which.LARGEST, tolerance=1e-13)
    state, _ = run_jbd(op, np.ones(100), max_steps=100, stop=stop)
    return pair, state


class TestWhich:
    def test_flipped(self):
        assert Which.LARGEST.flipped() is Which.SMALLEST
        assert Which.SMALLEST.flipped() is Which.LARGEST


class TestRitzPairs:
    """Test Ritz pairs from B_k and B_hat_k"""

    def test_exhausted_run_breaks_down(self, exhausted):
        _, state = exhausted
        assert state.termination_reason == "breakdown"
        assert state.k <= 60

    def test_lower_reproduces_spectrum(self, exhausted):
        pair, state = exhausted
        pairs = extract_ritz_from_lower(state, state.k, Which.LARGEST)
        expected_c, _ = pair.sorted_cs()
        np.testing.assert_allclose([p.c for p in pairs], expected_c[: state.k], atol=1e-12)
        assert all(p.c**2 + p.s**2 == pytest.approx(1.0) for p in pairs)
        assert all(p.source == "lower" for p in pairs)

    def test_smallest_from_lower(self, exhausted):
        pair, state = exhausted
        smallest = extract_ritz_from_lower(state, 2, Which.SMALLEST)
        expected_c, _ = pair.sorted_cs()
        assert smallest[0].c == pytest.approx(expected_c[-1], abs=1e-12)
        assert smallest[1].c == pytest.approx(expected_c[-2], abs=1e-12)
        assert smallest[0].index == 1

    def test_upper_agrees_with_lower(self, exhausted):
        pair, state = exhausted
        upper = extract_ritz_from_upper(state, 3, Which.LARGEST)
        expected_c, expected_s = pair.sorted_cs()
        for rank, ritz in enumerate(upper):
            assert ritz.s == pytest.approx(expected_s[rank], abs=1e-12)
            assert ritz.c == pytest.approx(expected_c[rank], abs=1e-11)
            assert ritz.source == "upper"

    def test_count_validation(self, exhausted):
        _, state = exhausted
        with pytest.raises(ValueError, match="count"):
            extract_ritz_from_lower(state, 0)
        with pytest.raises(InsufficientStepsError):
            extract_ritz_from_lower(state, state.k + 1)
        with pytest.raises(InsufficientStepsError):
            extract_ritz_from_upper(state, state.k + 1)

    def test_bound_vanishes_after_breakdown(self, exhausted):
        _, state = exhausted
        pairs = extract_ritz_from_lower(state, 3)
        assert all(p.residual_bound <= 1e-14 for p in pairs)

    def test_early_pairs_carry_bounds(self):
        pair = build_pair("Ac_Ls", 60)
        op = StackedOperator(pair.A, pair.L).with_reference_cache()
        state = jbd_init(op, np.ones(60))
        for _ in range(5):
            jbd_step(state)
        ritz = extract_ritz_from_lower(state, 1)[0]
        expected = state.norm_estimate * state.next_alpha * state.next_beta * abs(ritz.w[-1])
        assert ritz.residual_bound == pytest.approx(expected)
        assert ritz.residual_bound > 0


class TestVectors:
    """Test recovery of x, y and z"""

    def test_converged_largest_pair(self, converged):
        pair, state = converged
        ritz = approximate_gsvd(state, 1, Which.LARGEST, with_z=True)[0]
        c, s, x_true = pair.largest()

        assert angle_error(ritz.c, ritz.s, c, s) <= 1e-12
        assert subspace_angle_sin(ritz.x, x_true) <= 1e-10
        assert subspace_angle_sin(ritz.y, pair.left_vector_a(0)) <= 1e-10
        assert subspace_angle_sin(ritz.z, pair.left_vector_l(0)) <= 1e-9
        assert ritz.residual_direct <= 1e-11

    def test_residual_bound_covers_direct(self, converged):
        _, state = converged
        ritz = approximate_gsvd(state, 1, Which.LARGEST)[0]
        _, _, holds = verify_residual_bound(state, ritz)
        assert holds

    def test_without_vectors(self, converged):
        _, state = converged
        ritz = approximate_gsvd(state, 1, with_vectors=False)[0]
        assert ritz.x is None and ritz.y is None
        assert ritz.residual_direct is None

    def test_wrong_lengths(self, converged):
        _, state = converged
        with pytest.raises(DimensionMismatchError):
            recover_right_vector(state.op, state, np.ones(state.k + 1))
        with pytest.raises(DimensionMismatchError):
            recover_left_vectors(state, np.ones(state.k))
        with pytest.raises(DimensionMismatchError):
            recover_left_vectors(state, np.ones(state.k + 1), np.ones(state.k + 1))

    def test_residual_direct_needs_x(self, converged):
        pair, _ = converged
        with pytest.raises(ValueError, match="right vector"):
            residual_direct(pair.A, pair.L, RitzApproximation(index=1, c=0.5, s=0.5, source="lower"))

    def test_residual_bound_needs_positive_norm(self, converged):
        _, state = converged
        with pytest.raises(ValueError, match="norm_R"):
            residual_bound(state, 0.5, 0.0)


class TestSwappedPair:
    """Test that a swapped run reports pairs of the original {A, L}"""

    def test_labels_restored(self):
        pair = build_pair("Ac_Ls", 40)
        op, swapped = maybe_swap_pair(pair.A, pair.L, PairOrder.SWAP, reference=True)
        assert swapped
        state, _ = run_jbd(op, np.ones(op.m), max_steps=60, swapped=True)

        ritz = approximate_gsvd(state, 1, Which.LARGEST)[0]
        c, s, x_true = pair.largest()
        assert ritz.c == pytest.approx(c, abs=1e-12)
        assert ritz.s == pytest.approx(s, abs=1e-12)
        assert subspace_angle_sin(ritz.x, x_true) <= 1e-10
        assert subspace_angle_sin(ritz.y, pair.left_vector_a(0)) <= 1e-9
        assert subspace_angle_sin(ritz.z, pair.left_vector_l(0)) <= 1e-10


class TestErrorMeasures:
    """Test comparison helpers"""

    def test_angle_error(self):
        assert angle_error(0.6, 0.8, 0.6, 0.8) == 0.0
        assert angle_error(1.0, 0.0, 0.0, 1.0) == 1.0

    def test_relative_error(self):
        assert relative_error(0.6, 0.8, 0.6, 0.8) == 0.0
        assert np.isnan(relative_error(1.0, 0.0, 1.0, 0.0))
        assert relative_error(1.0, 0.0, 0.6, 0.8) == np.inf

    def test_gsv(self):
        assert RitzApproximation(index=1, c=0.6, s=0.8, source="lower").gsv == pytest.approx(0.75)
        assert RitzApproximation(index=1, c=1.0, s=0.0, source="lower").gsv == np.inf

    def test_count_near(self):
        values = np.array([0.99, 0.99 + 1e-9, 0.99 - 5e-7, 0.95])
        assert count_near(values, 0.99) == 3
        assert count_near(values, 0.99, radius=1e-8) == 2

    def test_ritz_clusters(self):
        clusters = ritz_clusters(np.array([0.95, 0.99, 0.99 + 1e-9, 0.5]))
        assert [len(cluster) for cluster in clusters] == [2, 1, 1]
        assert ritz_clusters(np.array([])) == []


@pytest.mark.slow
class TestResidualDecay:
    """Test the residual bound against direct residuals over a whole run"""

    def test_bound_covers_direct_and_decays(self):
        pair = build_pair("Ac_Ls", 200)
        op = StackedOperator(pair.A, pair.L).with_reference_cache()
        checks = []

        def check(state, entry):
            ritz = entry.pairs[0]
            ritz.x = recover_right_vector(state.op, state, ritz.w)
            ritz.residual_direct = residual_direct(pair.A, pair.L, ritz)
            checks.append((ritz.residual_bound, ritz.residual_direct))

        stop = StoppingRule(target_count=1, tolerance=1e-12, norm_estimate=1.0)
        state, _ = run_jbd(
            op, np.ones(200), ReorthStrategy(kind=ReorthKind.FULL),
            max_steps=199, stop=stop, callback=check,
        )

        assert state.termination_reason == "converged"
        assert all(bound + 1e-13 >= direct for bound, direct in checks)


@pytest.mark.slow
class TestInfiniteValue:
    """Test the pair {1, 0}: y converges while B_hat_k becomes nearly singular"""

    def test_left_vector_of_a(self):
        pair = build_pair("example2", 500)
        op = StackedOperator(pair.A, pair.L).with_reference_cache()
        state, history = run_jbd(op, np.ones(500), max_steps=120)

        ritz = approximate_gsvd(state, 1, Which.LARGEST, with_z=True)[0]
        assert ritz.c == pytest.approx(1.0, abs=1e-12)
        assert subspace_angle_sin(ritz.y, pair.left_vector_a(0)) <= 1e-10
        # L has a zero row where the pair lives, so U_hat never reaches it
        assert np.linalg.norm(ritz.z) > 0.5
        assert subspace_angle_sin(ritz.z, pair.left_vector_l(0)) > 1e-6
        assert max(entry.inv_norm_upper for entry in history) > 1e6


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
