"""Lossless network: topology, susceptances, nodal currents and power flows.

Machine series reactances are folded into the line reactances: the total
reactance of edge ``(i, k)`` is ``X_ik = X_T_ik + X_series_i + X_series_k``
where ``X_series`` is the subtransient reactance for sixth/fifth-order
machines and the transient reactance for lower orders.  Machine models
built on top of a ``Grid`` therefore never add their own series reactance
again.

Susceptance data is kept edge-based internally; the dense matrix ``B`` is
materialized on demand for grids up to ``DENSE_LIMIT`` nodes and as a
``scipy.sparse`` matrix above that (desk-scale studies stay dense).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridError

#: Largest node count for which ``Grid.B`` is materialized densely.
DENSE_LIMIT = 64


@dataclass(frozen=True)
class Grid:
    """Connected undirected machine graph with assembled susceptances.

    ``edge_i``/``edge_k`` list the endpoints of each edge, ``B_edge`` the
    (negative) edge susceptances ``-1/X_ik`` and ``B_diag`` the diagonal
    ``B_ii = sum of incident B_ik``.  Build instances via ``build_grid``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    X_T: tuple[float, ...]
    X_series: tuple[float, ...]
    edge_i: np.ndarray = field(repr=False)
    edge_k: np.ndarray = field(repr=False)
    B_edge: np.ndarray = field(repr=False)
    B_diag: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def B(self):
        """Susceptance matrix (dense below ``DENSE_LIMIT`` nodes, sparse above)."""
        if self.n <= DENSE_LIMIT:
            B = np.zeros((self.n, self.n))
            B[self.edge_i, self.edge_k] = self.B_edge
            B[self.edge_k, self.edge_i] = self.B_edge
            B[np.arange(self.n), np.arange(self.n)] = self.B_diag
            return B
        from scipy.sparse import coo_matrix
        rows = np.concatenate([self.edge_i, self.edge_k, np.arange(self.n)])
        cols = np.concatenate([self.edge_k, self.edge_i, np.arange(self.n)])
        vals = np.concatenate([self.B_edge, self.B_edge, self.B_diag])
        return coo_matrix((vals, (rows, cols)), shape=(self.n, self.n)).tocsr()

    def total_edge_reactance(self) -> np.ndarray:
        """Per-edge total reactance ``X_ik`` including both series terms."""
        return -1.0 / self.B_edge


def build_grid(edges, X_T, X_series) -> Grid:
    """Assemble a ``Grid`` from an edge list, per-edge line reactances and
    per-node machine series reactances.

    Rejects self-loops, duplicate edges, nonpositive reactances and
    disconnected graphs.
    """
    X_series = tuple(float(x) for x in X_series)
    n = len(X_series)
    if n < 1:
        raise GridError("grid needs at least one node")
    edges_in = [tuple(e) for e in edges]
    X_T = tuple(float(x) for x in X_T)
    if len(X_T) != len(edges_in):
        raise GridError(f"{len(edges_in)} edges but {len(X_T)} line reactances")
    norm_edges: list[tuple[int, int]] = []
    seen = set()
    for (i, k) in edges_in:
        if not (0 <= i < n and 0 <= k < n):
            raise GridError(f"edge ({i},{k}) references a node outside 0..{n-1}")
        if i == k:
            raise GridError(f"self-loop at node {i}")
        e = (min(i, k), max(i, k))
        if e in seen:
            raise GridError(f"duplicate edge {e}")
        seen.add(e)
        norm_edges.append(e)
    for j, x in enumerate(X_T):
        if not x > 0.0:
            raise GridError(f"line reactance of edge {norm_edges[j]} must be > 0, got {x}")
    for i, x in enumerate(X_series):
        if not x > 0.0:
            raise GridError(f"series reactance of node {i} must be > 0, got {x}")

    if n > 1:
        # connectivity via union-find
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for (i, k) in norm_edges:
            parent[find(i)] = find(k)
        roots = {find(i) for i in range(n)}
        if len(roots) != 1:
            raise GridError("grid graph is not connected")

    edge_i = np.array([e[0] for e in norm_edges], dtype=int)
    edge_k = np.array([e[1] for e in norm_edges], dtype=int)
    X_total = np.array([X_T[j] + X_series[norm_edges[j][0]] + X_series[norm_edges[j][1]]
                        for j in range(len(norm_edges))])
    B_edge = -1.0 / X_total
    B_diag = np.zeros(n)
    np.add.at(B_diag, edge_i, B_edge)
    np.add.at(B_diag, edge_k, B_edge)
    return Grid(n=n, edges=tuple(norm_edges), X_T=X_T, X_series=X_series,
                edge_i=edge_i, edge_k=edge_k, B_edge=B_edge, B_diag=B_diag)


def _check_dims(g: Grid, *vecs):
    for v in vecs:
        if v.shape != (g.n,):
            raise GridError(f"expected vectors of length {g.n}, got shape {v.shape}")


def dq_currents(g: Grid, delta, E_d, E_q) -> tuple[np.ndarray, np.ndarray]:
    """Nodal dq current injections for internal voltages behind the grid.

    Componentwise (per node i, neighbours k):

        I_di =  B_ii E_qi - sum_k B_ik (E_dk sin d_ik + E_qk cos d_ik)
        I_qi = -B_ii E_di - sum_k B_ik (E_qk sin d_ik - E_dk cos d_ik)

    with ``d_ik = delta_i - delta_k``.
    """
    delta = np.asarray(delta, dtype=float)
    E_d = np.asarray(E_d, dtype=float)
    E_q = np.asarray(E_q, dtype=float)
    _check_dims(g, delta, E_d, E_q)
    I_d = g.B_diag * E_q
    I_q = -g.B_diag * E_d
    i, k, b = g.edge_i, g.edge_k, g.B_edge
    s = np.sin(delta[i] - delta[k])
    c = np.cos(delta[i] - delta[k])
    np.add.at(I_d, i, -b * (E_d[k] * s + E_q[k] * c))
    np.add.at(I_q, i, -b * (E_q[k] * s - E_d[k] * c))
    # reverse direction: delta_ki = -delta_ik
    np.add.at(I_d, k, -b * (-E_d[i] * s + E_q[i] * c))
    np.add.at(I_q, k, -b * (-E_q[i] * s - E_d[i] * c))
    return I_d, I_q


def dq_currents_phasor(g: Grid, delta, E_d, E_q) -> tuple[np.ndarray, np.ndarray]:
    """Complex-arithmetic evaluation of the same nodal currents.

    Uses ``I = diag(e^{-j delta}) (jB) diag(e^{j delta}) E`` with phasors
    packed as ``E_q + j E_d``; kept as an independent code path for
    cross-checking ``dq_currents``.
    """
    delta = np.asarray(delta, dtype=float)
    E_d = np.asarray(E_d, dtype=float)
    E_q = np.asarray(E_q, dtype=float)
    _check_dims(g, delta, E_d, E_q)
    Y = 1j * np.asarray(g.B if g.n <= DENSE_LIMIT else g.B.todense())
    rot = np.exp(1j * delta)
    I = np.conj(rot) * (Y @ (rot * (E_q + 1j * E_d)))
    return I.imag.copy(), I.real.copy()


def node_and_line_power(g: Grid, delta, E_d, E_q) -> tuple[np.ndarray, np.ndarray]:
    """Electrical power per node and directed power per edge.

    ``P_e[i] = E_di I_di + E_qi I_qi`` with currents from ``dq_currents``;
    ``P_edge[j]`` is the transfer from ``edges[j][0]`` toward ``edges[j][1]``,

        P_ik = -B_ik [ (E_di E_dk + E_qi E_qk) sin d_ik
                       + (E_di E_qk - E_qi E_dk) cos d_ik ].

    Lossless lines give ``P_ik = -P_ki`` and ``sum_i P_e[i] = 0``.
    """
    delta = np.asarray(delta, dtype=float)
    E_d = np.asarray(E_d, dtype=float)
    E_q = np.asarray(E_q, dtype=float)
    _check_dims(g, delta, E_d, E_q)
    I_d, I_q = dq_currents(g, delta, E_d, E_q)
    P_e = E_d * I_d + E_q * I_q
    i, k, b = g.edge_i, g.edge_k, g.B_edge
    s = np.sin(delta[i] - delta[k])
    c = np.cos(delta[i] - delta[k])
    P_edge = -b * ((E_d[i] * E_d[k] + E_q[i] * E_q[k]) * s
                   + (E_d[i] * E_q[k] - E_q[i] * E_d[k]) * c)
    return P_e, P_edge


@dataclass(frozen=True)
class ClassicalGrid:
    """Grid extended with (optional) transfer conductances for the
    classical model.  ``G_diag`` holds the self conductances ``G_ii`` and
    ``G_edge`` the per-edge transfer conductances ``G_ik`` (zero off edges
    by construction).  All-zero conductances recover the lossless case."""

    grid: Grid
    G_diag: np.ndarray = field(repr=False)
    G_edge: np.ndarray = field(repr=False)

    def __post_init__(self):
        if np.asarray(self.G_diag).shape != (self.grid.n,):
            raise GridError("G_diag must have one entry per node")
        if np.asarray(self.G_edge).shape != (self.grid.m,):
            raise GridError("G_edge must have one entry per edge")

    @classmethod
    def lossless(cls, grid: Grid) -> "ClassicalGrid":
        return cls(grid=grid, G_diag=np.zeros(grid.n), G_edge=np.zeros(grid.m))

    @property
    def is_lossless(self) -> bool:
        return not (np.any(self.G_diag) or np.any(self.G_edge))


def classical_power(cg: ClassicalGrid, theta, E_mag) -> np.ndarray:
    """Per-node electrical power of the classical (constant-|E'|) model:

        P_ei = G_ii |E_i|^2
               - sum_k (G_ik cos t_ik + B_ik sin t_ik) |E_i||E_k|.
    """
    g = cg.grid
    theta = np.asarray(theta, dtype=float)
    E_mag = np.asarray(E_mag, dtype=float)
    _check_dims(g, theta, E_mag)
    P = np.asarray(cg.G_diag) * E_mag ** 2
    i, k = g.edge_i, g.edge_k
    s = np.sin(theta[i] - theta[k])
    c = np.cos(theta[i] - theta[k])
    ee = E_mag[i] * E_mag[k]
    gik = np.asarray(cg.G_edge)
    np.add.at(P, i, -(gik * c + g.B_edge * s) * ee)
    np.add.at(P, k, -(gik * c - g.B_edge * s) * ee)
    return P
