from __future__ import annotations

import logging

import networkx as nx
import numpy as np

from models import Graph, InvalidArgumentError, MixingMatrix

logger = logging.getLogger(__name__)

TOPOLOGIES = ("line", "complete", "star", "ring")
POWER_TOL = 1e-12
POWER_MAX_ITER = 100_000
DENSE_FALLBACK_MAX_N = 64


def _from_networkx(graph: nx.Graph) -> Graph:
    return Graph.from_pairs(graph.number_of_nodes(), graph.edges())


def to_networkx(g: Graph) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(g.n_nodes))
    graph.add_edges_from(g.sorted_edges())
    return graph


def is_connected(g: Graph) -> bool:
    return nx.is_connected(to_networkx(g))


def build_gn_prime(n: int) -> Graph:
    """Two copies of K_n (u-block 0..n-1, v-block n..2n-1) joined by the matching u_i -- v_i."""
    if n < 2:
        raise InvalidArgumentError(f"G_n' needs n >= 2, got {n}.")
    graph = nx.disjoint_union(nx.complete_graph(n), nx.complete_graph(n))
    graph.add_edges_from((i, n + i) for i in range(n))
    return _from_networkx(graph)


def build_standard(topology: str, n: int) -> Graph:
    if n < 2:
        raise InvalidArgumentError(f"A {topology} graph needs n >= 2, got {n}.")
    if topology == "line":
        graph = nx.path_graph(n)
    elif topology == "complete":
        graph = nx.complete_graph(n)
    elif topology == "star":
        graph = nx.star_graph(n - 1)
    elif topology == "ring":
        graph = nx.cycle_graph(n)
    else:
        raise InvalidArgumentError(f"Unknown topology '{topology}'; expected one of {', '.join(TOPOLOGIES)}.")
    return _from_networkx(graph)


def parse_graph(spec: str) -> Graph:
    """Parse `gn:<n>` or `<topology>:<n>`."""
    name, _, count = spec.strip().partition(":")
    try:
        n = int(count)
    except ValueError as exc:
        raise InvalidArgumentError(f"Graph spec '{spec}' must look like 'line:10' or 'gn:4'.") from exc
    if name == "gn":
        return build_gn_prime(n)
    return build_standard(name, n)


def mixing_matrix(g: Graph, eps: float, allow_zero_diagonal: bool = False) -> MixingMatrix:
    """I - eps * Laplacian(g).

    With allow_zero_diagonal, eps * max_degree may reach 1 exactly; the lower-bound
    construction on G_n' runs at eps = 1/n, where the diagonal vanishes.
    """
    if eps <= 0:
        raise InvalidArgumentError(f"eps must be positive, got {eps}.")
    reach = eps * g.max_degree
    if reach > 1.0 + 1e-12 or (reach >= 1.0 and not allow_zero_diagonal):
        raise InvalidArgumentError(
            f"eps * max_degree = {reach:.6g} must stay below 1 to keep the diagonal positive."
        )
    laplacian = nx.laplacian_matrix(to_networkx(g), nodelist=list(range(g.n_nodes))).toarray().astype(float)
    entries = np.eye(g.n_nodes) - eps * laplacian
    if allow_zero_diagonal:
        np.fill_diagonal(entries, np.maximum(np.diag(entries), 0.0))
    return MixingMatrix(
        entries=entries,
        sigma=_second_singular_value(entries),
        allow_zero_diagonal=allow_zero_diagonal,
    )


def gn_prime_spectrum(n: int, eps: float) -> tuple[float, ...]:
    """Closed-form eigenvalues of W_{G_n',eps}, with multiplicity, in descending order."""
    if n < 2:
        raise InvalidArgumentError(f"G_n' needs n >= 2, got {n}.")
    if eps <= 0 or eps * n >= 1.0:
        raise InvalidArgumentError(f"eps must satisfy 0 < eps * n < 1, got eps={eps}, n={n}.")
    values = [1.0, 1.0 - 2.0 * eps]
    values += [1.0 - n * eps] * (n - 1)
    values += [1.0 - (n + 2) * eps] * (n - 1)
    return tuple(sorted(values, reverse=True))


def dense_second_singular_value(entries: np.ndarray) -> float:
    size = entries.shape[0]
    if size == 1:
        return 0.0
    deflated = entries - np.full((size, size), 1.0 / size)
    return float(np.linalg.svd(deflated, compute_uv=False)[0])


def second_singular_value(w: MixingMatrix) -> float:
    return _second_singular_value(w.entries)


def _second_singular_value(entries: np.ndarray) -> float:
    size = entries.shape[0]
    if size == 1:
        return 0.0

    ones = np.full(size, 1.0 / np.sqrt(size))
    rng = np.random.default_rng(0)
    vector = rng.standard_normal(size)
    vector -= ones * (ones @ vector)
    vector /= np.linalg.norm(vector)

    estimate = 0.0
    for iteration in range(1, POWER_MAX_ITER + 1):
        image = entries @ vector
        image -= ones * (ones @ image)
        back = entries.T @ image
        back -= ones * (ones @ back)
        norm = float(np.linalg.norm(back))
        if norm == 0.0:
            return 0.0
        rayleigh = float(vector @ back)
        residual = float(np.linalg.norm(back - rayleigh * vector))
        vector = back / norm
        estimate = np.sqrt(max(rayleigh, 0.0))
        if residual < POWER_TOL:
            logger.debug("power iteration converged after %d iterations (sigma=%.15g)", iteration, estimate)
            return float(estimate)

    if size <= DENSE_FALLBACK_MAX_N:
        logger.info("power iteration did not converge for n=%d; using dense SVD", size)
        return dense_second_singular_value(entries)
    logger.warning("power iteration stopped at %d iterations without reaching tolerance", POWER_MAX_ITER)
    return float(estimate)
