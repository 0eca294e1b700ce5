from __future__ import annotations

import numpy as np
import pytest

from models import Graph, InvalidArgumentError
from services.graph_service import (
    build_gn_prime,
    build_standard,
    dense_second_singular_value,
    gn_prime_spectrum,
    is_connected,
    mixing_matrix,
    parse_graph,
    second_singular_value,
)


def test_gn_prime_smallest_instance():
    g = build_gn_prime(2)
    assert g.n_nodes == 4
    assert g.sorted_edges() == [(0, 1), (0, 2), (1, 3), (2, 3)]


@pytest.mark.parametrize("n", [2, 4, 10])
def test_gn_prime_counts_and_degrees(n):
    g = build_gn_prime(n)
    assert g.n_nodes == 2 * n
    assert g.edge_count == n * (n - 1) + n
    assert set(g.degrees()) == {n}
    assert is_connected(g)


def test_gn_prime_rejects_small_n():
    with pytest.raises(InvalidArgumentError):
        build_gn_prime(1)


def test_standard_topologies():
    assert build_standard("line", 3).sorted_edges() == [(0, 1), (1, 2)]
    assert build_standard("complete", 4).edge_count == 6
    star = build_standard("star", 4)
    assert star.edge_count == 3
    assert star.max_degree == 3
    assert build_standard("ring", 5).edge_count == 5


def test_standard_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        build_standard("line", 1)
    with pytest.raises(InvalidArgumentError):
        build_standard("torus", 4)


def test_parse_graph():
    assert parse_graph("gn:4").n_nodes == 8
    assert parse_graph("line:10").edge_count == 9
    with pytest.raises(InvalidArgumentError):
        parse_graph("line")


def test_graph_rejects_self_loops_and_out_of_range_edges():
    with pytest.raises(InvalidArgumentError):
        Graph.from_pairs(3, [(1, 1)])
    with pytest.raises(InvalidArgumentError):
        Graph.from_pairs(3, [(0, 3)])


def test_mixing_matrix_on_single_edge():
    w = mixing_matrix(build_standard("line", 2), 0.3)
    np.testing.assert_allclose(w.entries, [[0.7, 0.3], [0.3, 0.7]], atol=1e-15)
    assert w.sigma == pytest.approx(0.4, abs=1e-10)


def test_mixing_matrix_on_gn_prime_has_half_diagonal():
    w = mixing_matrix(build_gn_prime(4), 1 / 8)
    np.testing.assert_allclose(np.diag(w.entries), 0.5, atol=1e-15)
    np.testing.assert_allclose(w.entries.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(w.entries.sum(axis=1), 1.0, atol=1e-12)


def test_complete_graph_with_one_over_n_averages_exactly():
    w = mixing_matrix(build_standard("complete", 5), 0.2)
    np.testing.assert_allclose(w.entries, np.full((5, 5), 0.2), atol=1e-15)
    assert w.sigma == pytest.approx(0.0, abs=1e-10)


def test_mixing_matrix_rejects_nonpositive_diagonal():
    with pytest.raises(InvalidArgumentError):
        mixing_matrix(build_gn_prime(4), 0.25)
    with pytest.raises(InvalidArgumentError):
        mixing_matrix(build_gn_prime(4), 0.0)


def test_gn_prime_spectrum_example():
    assert gn_prime_spectrum(4, 1 / 8) == pytest.approx((1.0, 0.75, 0.5, 0.5, 0.5, 0.25, 0.25, 0.25))
    assert gn_prime_spectrum(2, 0.1) == pytest.approx((1.0, 0.8, 0.8, 0.6))


@pytest.mark.parametrize("n", [2, 4, 8, 16])
def test_gn_prime_spectrum_matches_dense_solver(n):
    for eps in (0.9 / (n + 2), 0.5 / n, 0.1 / n):
        w = mixing_matrix(build_gn_prime(n), eps)
        numeric = np.sort(np.linalg.eigvalsh(w.entries))[::-1]
        np.testing.assert_allclose(numeric, gn_prime_spectrum(n, eps), atol=1e-9)
        expected_sigma = max(abs(1 - 2 * eps), abs(1 - (n + 2) * eps))
        assert w.sigma == pytest.approx(expected_sigma, abs=1e-10)


def test_gn_prime_spectrum_rejects_large_eps():
    with pytest.raises(InvalidArgumentError):
        gn_prime_spectrum(4, 0.25)


def test_second_singular_value_matches_dense_svd_on_line():
    w = mixing_matrix(build_standard("line", 3), 0.25)
    assert second_singular_value(w) == pytest.approx(dense_second_singular_value(w.entries), abs=1e-10)


def test_mixing_contracts_disagreement_and_keeps_the_mean():
    rng = np.random.default_rng(7)
    w = mixing_matrix(build_standard("ring", 9), 0.3)
    for _ in range(200):
        y = rng.standard_normal(9)
        mixed = w.entries @ y
        assert mixed.mean() == pytest.approx(y.mean(), abs=1e-12)
        assert np.linalg.norm(mixed - mixed.mean()) <= w.sigma * np.linalg.norm(y - y.mean()) + 1e-10


def test_boundary_weight_on_gn_prime_is_opt_in():
    w = mixing_matrix(build_gn_prime(4), 0.25, allow_zero_diagonal=True)
    np.testing.assert_array_equal(np.diag(w.entries), 0.0)
    assert w.sigma == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(InvalidArgumentError):
        mixing_matrix(build_gn_prime(4), 0.3, allow_zero_diagonal=True)


def test_degree_of_a_star_center_and_leaf():
    star = build_standard("star", 5)
    assert star.degree(0) == 4
    assert star.degree(3) == 1
