"""Tests for the task-feature bipartite graph."""

import numpy as np
import pytest

from tfcl.bipartite import (
    BipartiteLaplacian,
    affinity,
    as_task_matrix,
    build_laplacian,
    connected_components,
    default_threshold,
    distance_matrix,
    embeddings,
)
from tfcl.exceptions import ValidationError
from tfcl.spectral import bottom_embeddings, u_update


def two_block_matrix():
    """Blocks of (2 features, 2 tasks) and (1 feature, 2 tasks)."""
    W = np.zeros((3, 4))
    W[:2, :2] = [[1.0, 2.0], [0.5, 1.5]]
    W[2, 2:] = [3.0, 1.0]
    return W


class TestBuildLaplacian:
    """Test cases for build_laplacian."""

    def test_zero_matrix_gives_zero_laplacian(self):
        """Test that W = 0 has an empty graph."""
        laplacian = build_laplacian(np.zeros((2, 3)))

        assert laplacian.matrix.shape == (5, 5)
        assert laplacian.is_zero
        assert not np.any(laplacian.matrix)

    def test_single_edge(self):
        """Test the Laplacian of one feature joined to one task."""
        laplacian = build_laplacian(np.array([[1.0]]))

        np.testing.assert_array_equal(laplacian.matrix, [[1.0, -1.0], [-1.0, 1.0]])
        assert laplacian.d == 1
        assert laplacian.T == 1
        assert laplacian.size == 2

    def test_identity_spectrum(self):
        """Test that a 2x2 identity gives two disjoint edges."""
        laplacian = build_laplacian(np.eye(2))

        values = np.linalg.eigvalsh(laplacian.matrix)
        np.testing.assert_allclose(values, [0.0, 0.0, 2.0, 2.0], atol=1e-12)

    def test_uses_absolute_values(self):
        """Test that edge weights are |W|."""
        positive = build_laplacian(np.array([[2.0, 1.0]]))
        negative = build_laplacian(np.array([[-2.0, 1.0]]))

        np.testing.assert_array_equal(positive.matrix, negative.matrix)

    def test_invariants_on_random_matrix(self, rng):
        """Test symmetry, zero row sums and PSD-ness."""
        laplacian = build_laplacian(rng.standard_normal((5, 7)))

        laplacian.check_invariants()
        np.testing.assert_allclose(laplacian.matrix.sum(axis=1), 0.0, atol=1e-12)

    def test_check_invariants_rejects_asymmetric(self):
        """Test that a tampered Laplacian fails the invariant check."""
        matrix = build_laplacian(np.array([[1.0]])).matrix.copy()
        matrix[0, 1] = -2.0

        with pytest.raises(ValidationError, match="symmetric"):
            BipartiteLaplacian(matrix=matrix, d=1, T=1).check_invariants()

    def test_non_finite_entries_rejected(self):
        """Test that NaN entries raise ValidationError."""
        with pytest.raises(ValidationError, match="non-finite"):
            build_laplacian(np.array([[1.0, np.nan]]))

    def test_wrong_dimension_rejected(self):
        """Test that a vector is not a task matrix."""
        with pytest.raises(ValidationError):
            as_task_matrix(np.ones(3))

    def test_affinity_blocks(self):
        """Test that the affinity matrix only joins features to tasks."""
        W = np.array([[1.0, -2.0]])
        A = affinity(W)

        np.testing.assert_array_equal(A[:1, 1:], [[1.0, 2.0]])
        np.testing.assert_array_equal(A[1:, :1], [[1.0], [2.0]])
        assert not np.any(A[1:, 1:])


class TestDistanceMatrix:
    """Test cases for distance_matrix."""

    def test_identity_gives_two(self):
        """Test that orthonormal embeddings are all at distance 2."""
        D = distance_matrix(np.eye(7), 3, 4)

        np.testing.assert_allclose(D, 2.0)

    def test_identical_embeddings_give_zero(self):
        """Test that U = ones/N puts every node in the same place."""
        D = distance_matrix(np.full((5, 5), 1.0 / 5), 2, 3)

        np.testing.assert_allclose(D, 0.0, atol=1e-15)

    def test_two_block_indicator_distances(self):
        """Test block distances 0 within and 1/n1 + 1/n2 across."""
        W = two_block_matrix()
        solution = u_update(build_laplacian(W), 2)
        D = distance_matrix(solution.U, 3, 4)

        across = 1.0 / 4 + 1.0 / 3
        expected = np.array(
            [
                [0.0, 0.0, across, across],
                [0.0, 0.0, across, across],
                [across, across, 0.0, 0.0],
            ]
        )
        np.testing.assert_allclose(D, expected, atol=1e-10)

    def test_matches_embedding_distances(self, rng):
        """Test ||f_i - f_{d+j}||^2 against the U-based formula."""
        d, T = 4, 5
        laplacian = build_laplacian(rng.standard_normal((d, T)))
        V = bottom_embeddings(laplacian, 2)
        rows = embeddings(V)

        D = distance_matrix(V @ V.T, d, T)
        for i in range(d):
            for j in range(T):
                direct = float(np.sum((rows[i] - rows[d + j]) ** 2))
                assert D[i, j] == pytest.approx(direct, abs=1e-10)

    def test_clamps_round_off_negatives(self):
        """Test that tiny negative distances become 0."""
        U = np.full((2, 2), 0.5)
        U[0, 1] = U[1, 0] = 0.5 + 1e-15

        np.testing.assert_array_equal(distance_matrix(U, 1, 1), [[0.0]])

    def test_shape_mismatch(self):
        """Test that U must be (d+T) x (d+T)."""
        with pytest.raises(ValidationError, match="expected"):
            distance_matrix(np.eye(4), 2, 3)


class TestConnectedComponents:
    """Test cases for connected_components."""

    def test_zero_matrix_all_singletons(self):
        """Test that W = 0 leaves d + T isolated nodes."""
        grouping = connected_components(np.zeros((3, 4)), 0.0)

        assert grouping.count == 7
        assert grouping.sizes() == [1] * 7

    def test_three_blocks(self, block_data):
        """Test that an exact block matrix splits into its blocks."""
        _, gt = block_data
        grouping = connected_components(gt.W_star, 0.0)

        assert grouping.count == 3
        for block in range(3):
            features = grouping.feature_labels[gt.feature_labels == block]
            tasks = grouping.task_labels[gt.task_labels == block]
            assert len(set(features) | set(tasks)) == 1
        assert len(set(grouping.feature_labels)) == 3

    def test_threshold_drops_tiny_bridge(self, block_data):
        """Test that an off-block 1e-9 entry is cut by a 1e-6 threshold."""
        _, gt = block_data
        W = gt.W_star.copy()
        W[0, -1] = 1e-9

        assert connected_components(W, 1e-6).count == 3
        assert connected_components(W, 0.0).count == 2

    def test_default_threshold(self):
        """Test that the default threshold is 1e-8 max|W|."""
        W = np.array([[0.0, -4.0], [2.0, 0.0]])

        assert default_threshold(W) == pytest.approx(4e-8)
        assert connected_components(W).count == 2

    def test_negative_threshold_rejected(self):
        """Test that a negative threshold raises ValidationError."""
        with pytest.raises(ValidationError, match="threshold"):
            connected_components(np.eye(2), -1.0)

    def test_sizes_largest_first(self):
        """Test component sizes of the two-block matrix."""
        grouping = connected_components(two_block_matrix(), 0.0)

        assert grouping.sizes() == [4, 3]


class TestEmbeddings:
    """Test cases for embeddings."""

    def test_basis_column(self):
        """Test that V = e_1 gives f_1 = (1) and zeros elsewhere."""
        V = np.zeros((4, 1))
        V[0, 0] = 1.0

        rows = embeddings(V)

        assert len(rows) == 4
        np.testing.assert_array_equal(rows[0], [1.0])
        for row in rows[1:]:
            np.testing.assert_array_equal(row, [0.0])

    def test_ideal_graph_indicators(self):
        """Test that ideal k-component embeddings span the scaled indicators."""
        W = two_block_matrix()
        V = bottom_embeddings(build_laplacian(W), 2)
        rows = np.vstack(embeddings(V))

        # Rows of one group coincide; their squared norm is 1 / group size.
        group_a = [0, 1, 3, 4]
        group_b = [2, 5, 6]
        for group, size in ((group_a, 4), (group_b, 3)):
            for node in group:
                np.testing.assert_allclose(rows[node], rows[group[0]], atol=1e-10)
                assert float(rows[node] @ rows[node]) == pytest.approx(1.0 / size, abs=1e-10)
        assert float(rows[0] @ rows[2]) == pytest.approx(0.0, abs=1e-10)
