"""Shared generators for the test suite: random bi-Hilbertian bimodules,
random graphs and expectations, and the named corpus used by the
"every test bimodule" style criteria."""

from __future__ import annotations

import numpy as np

from bimod import (
    GraphSpec,
    HilbertBimodule,
    Inclusion,
    MultiMatrixAlgebra,
    column_bimodule,
    from_hilbert_space,
    from_expectation,
    from_weight_graph,
    identity_bimodule,
    trace_weighted_expectation,
)


def random_posdef(n: int, rng: np.random.Generator, spread: float = 2.0) -> np.ndarray:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, _ = np.linalg.qr(g)
    eigs = np.exp(spread * (rng.random(n) - 0.5))
    return (q * eigs) @ q.conj().T


def random_hermitian_mat(n: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (g + g.conj().T)


def well_conditioned(n: int, rng: np.random.Generator, spread: float = 0.6) -> np.ndarray:
    g1 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    g2 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q1, _ = np.linalg.qr(g1)
    q2, _ = np.linalg.qr(g2)
    return (q1 * (1.0 + spread * rng.random(n))) @ q2


def random_bimodule(A_blocks, B_blocks, mult, seed: int = 0,
                    gauge: bool = True, twist: bool = True) -> HilbertBimodule:
    """A random bi-Hilbertian A-B bimodule.

    Underlying space: for each (k, l) pair, ``mult[k][l]`` copies of the
    m_k x n_l matrix space with the obvious actions.  The two Gram tensors
    are twisted by random positive operators acting on the copy indices, and
    the whole coordinate system is moved by a well-conditioned basis change.
    """
    rng = np.random.default_rng(seed)
    A = MultiMatrixAlgebra(A_blocks)
    B = MultiMatrixAlgebra(B_blocks)
    mult = np.asarray(mult, dtype=int)
    if mult.shape != (A.num_blocks, B.num_blocks):
        raise ValueError("multiplicity shape mismatch")
    index = {}
    d = 0
    for k, m in enumerate(A.blocks):
        for l, n in enumerate(B.blocks):
            for c in range(mult[k, l]):
                for r in range(m):
                    for s in range(n):
                        index[(k, l, c, r, s)] = d
                        d += 1
    if d == 0:
        raise ValueError("empty bimodule")
    G = np.zeros((d, d, B.rep_dim, B.rep_dim), dtype=complex)
    L = np.zeros((d, d, A.rep_dim, A.rep_dim), dtype=complex)
    K = {}
    Q = {}
    for k in range(A.num_blocks):
        for l in range(B.num_blocks):
            mu = mult[k, l]
            if mu == 0:
                continue
            K[(k, l)] = random_posdef(mu, rng, 1.0) if twist else np.eye(mu)
            Q[(k, l)] = random_posdef(mu, rng, 1.0) if twist else np.eye(mu)
    for (k, l, c, r, s), p in index.items():
        for (k2, l2, c2, r2, s2), q in index.items():
            if (k, l) != (k2, l2):
                continue
            if r == r2:
                sb = B.block_slice(l)
                G[p, q, sb.start + s, sb.start + s2] = K[(k, l)][c, c2]
            if s == s2:
                sa = A.block_slice(k)
                L[p, q, sa.start + r, sa.start + r2] = Q[(k, l)][c, c2]
    Phi = np.zeros((A.rep_dim, A.rep_dim, d, d), dtype=complex)
    Psi = np.zeros((B.rep_dim, B.rep_dim, d, d), dtype=complex)
    for (k, l, c, r, s), p in index.items():
        sa, sb = A.block_slice(k), B.block_slice(l)
        for i in range(A.blocks[k]):
            Phi[sa.start + i, sa.start + r, index[(k, l, c, i, s)], p] = 1.0
        for j in range(B.blocks[l]):
            Psi[sb.start + s, sb.start + j, index[(k, l, c, r, j)], p] = 1.0
    if gauge:
        W = well_conditioned(d, rng)
        Winv = np.linalg.inv(W)
        G = np.einsum("Pp,Qq,PQab->pqab", W.conj(), W, G, optimize=True)
        L = np.einsum("Pp,Qq,PQab->pqab", W, W.conj(), L, optimize=True)
        Phi = np.einsum("iP,abPQ,Qj->abij", Winv, Phi, W, optimize=True)
        Psi = np.einsum("iP,abPQ,Qj->abij", Winv, Psi, W, optimize=True)
    return HilbertBimodule(A, B, d, G, Phi, Psi, L)


def random_graph(seed: int, max_vertices: int = 12, extra_edges: int = 6) -> GraphSpec:
    """Random weighted graph where every vertex has in- and out-degree >= 1
    (a permutation cycle cover plus extra random edges)."""
    rng = np.random.default_rng(seed)
    nv = int(rng.integers(2, max_vertices + 1))
    names = [f"v{i}" for i in range(nv)]
    perm = rng.permutation(nv)
    edges = {}
    for i in range(nv):
        edges[(i, int(perm[i]))] = float(0.2 + 2.8 * rng.random())
    for _ in range(int(rng.integers(0, extra_edges + 1))):
        i, j = int(rng.integers(nv)), int(rng.integers(nv))
        if (i, j) not in edges:
            edges[(i, j)] = float(0.2 + 2.8 * rng.random())
    return GraphSpec(names, [(names[i], names[j], w) for (i, j), w in edges.items()])


def diag_expectation_m2():
    """The diagonal compression of M_2 onto C^2 (index 2)."""
    inc = Inclusion(MultiMatrixAlgebra([1, 1]), MultiMatrixAlgebra([2]), [[1, 1]])
    return trace_weighted_expectation(inc)


def two_block_expectation():
    """M_2 embedded diagonally into M_2 (+) M_2 with weights (1/2, 1/2)."""
    inc = Inclusion(MultiMatrixAlgebra([2]), MultiMatrixAlgebra([2, 2]), [[1], [1]])
    return trace_weighted_expectation(inc, [[0.5], [0.5]])


def degenerate_action_bimodule() -> HilbertBimodule:
    """C^2 over C^2-C with the second central summand of A acting as zero:
    the right index element is not invertible and phi is not injective."""
    A = MultiMatrixAlgebra([1, 1])
    C = MultiMatrixAlgebra([1])
    d = 2
    G = np.eye(d, dtype=complex).reshape(d, d, 1, 1)
    L = np.zeros((d, d, 2, 2), dtype=complex)
    L[:, :, 0, 0] = np.diag([1.0, 2.0])
    Phi = np.zeros((2, 2, d, d), dtype=complex)
    Phi[0, 0] = np.eye(d)
    Psi = np.eye(d, dtype=complex).reshape(1, 1, d, d)
    return HilbertBimodule(A, C, d, G, Phi, Psi, L)


def four_cycle_graph() -> GraphSpec:
    vs = ["a", "b", "c", "d"]
    return GraphSpec(vs, [(vs[i], vs[(i + 1) % 4], 1.0) for i in range(4)])


def bidirected_cycle_graph() -> GraphSpec:
    vs = ["a", "b", "c", "d"]
    edges = []
    for i in range(4):
        edges.append((vs[i], vs[(i + 1) % 4], 0.5))
        edges.append((vs[(i + 1) % 4], vs[i], 0.5))
    return GraphSpec(vs, edges)


def star_graph(m: int) -> GraphSpec:
    vs = ["hub"] + [f"leaf{i}" for i in range(m)]
    edges = [("hub", f"leaf{i}", 1.0 / m) for i in range(m)]
    edges += [(f"leaf{i}", "hub", 1.0) for i in range(m)]
    return GraphSpec(vs, edges)


_RANDOM_SHAPES = [
    ([1], [1], [[2]]),
    ([2], [1], [[1]]),
    ([1], [2], [[1]]),
    ([1, 1], [2], [[1], [1]]),
    ([2], [2, 1], [[1, 1]]),
    ([2, 1], [1, 1], [[1, 0], [1, 1]]),
]


def random_bimodule_family(count: int, seed: int = 0, shapes=None):
    """Deterministic family of random bi-Hilbertian bimodules."""
    shapes = shapes if shapes is not None else _RANDOM_SHAPES
    out = []
    for i in range(count):
        a, b, m = shapes[i % len(shapes)]
        out.append(random_bimodule(a, b, m, seed=seed + 17 * i))
    return out


def corpus():
    """The named test bimodules used by the "every instance" criteria."""
    rng = np.random.default_rng(5)
    entries = [
        ("hilbert_diag12", from_hilbert_space(2, np.diag([1.0, 2.0]))),
        ("hilbert_random3", from_hilbert_space(3, random_posdef(3, rng))),
        ("column2", column_bimodule(2)),
        ("identity_M2", identity_bimodule(MultiMatrixAlgebra([2]))),
        ("identity_C2", identity_bimodule(MultiMatrixAlgebra([1, 1]))),
        ("graph_cycle4", from_weight_graph(four_cycle_graph()).bimodule),
        ("graph_bidirected", from_weight_graph(bidirected_cycle_graph()).bimodule),
        ("expectation_M2", from_expectation(diag_expectation_m2())[0]),
        ("expectation_2block", from_expectation(two_block_expectation())[0]),
        ("random_11", random_bimodule([1], [1], [[2]], seed=1)),
        ("random_21", random_bimodule([2], [1], [[1]], seed=2)),
        ("random_112", random_bimodule([1, 1], [2], [[1], [1]], seed=3)),
    ]
    return entries


def random_positive_operator(X: HilbertBimodule, rng: np.random.Generator) -> np.ndarray:
    """Random positive element of K(X_B) (not just any PSD matrix)."""
    from bimod.bimodule import random_compact_positive
    return random_compact_positive(X, rng)
