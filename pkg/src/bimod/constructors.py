"""Builders for the concrete bimodule families: weighted finite-dimensional
Hilbert spaces, conditional-expectation bimodules, and weighted finite
directed graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .multimatrix import (
    AlgebraElement,
    ContractError,
    MultiMatrixAlgebra,
    StructureError,
    hermitian_part,
)
from .bimodule import HilbertBimodule, tight_frame, validate
from .index import CPMap


# -- weighted Hilbert spaces -----------------------------------------------------


def from_hilbert_space(n: int, T: np.ndarray) -> HilbertBimodule:
    """C^n as a C-C bimodule with (x|y) = sum conj(x_i) y_i on the right and
    _C(x|y) = (y|Tx) on the left, for a positive invertible weight T."""
    T = np.asarray(T, dtype=complex)
    if T.shape != (n, n):
        raise ContractError(f"weight shape {T.shape} does not match n={n}")
    if np.abs(T - T.conj().T).max() > 1e-10 * (1 + np.abs(T).max()):
        raise ContractError("weight matrix must be Hermitian")
    if np.linalg.eigvalsh(hermitian_part(T)).min() <= 0:
        raise ContractError("weight matrix must be positive definite")
    C = MultiMatrixAlgebra([1])
    G = np.eye(n, dtype=complex).reshape(n, n, 1, 1)
    L = T.T.reshape(n, n, 1, 1).copy()
    Phi = np.eye(n, dtype=complex).reshape(1, 1, n, n)
    return HilbertBimodule(C, C, n, G, Phi, Phi.copy(), L)


def column_bimodule(n: int) -> HilbertBimodule:
    """C^n as an M_n-C imprimitivity bimodule: _A(x|y) is the rank-one
    operator x y*; both index elements are identities."""
    A = MultiMatrixAlgebra([n])
    C = MultiMatrixAlgebra([1])
    G = np.eye(n, dtype=complex).reshape(n, n, 1, 1)
    L = np.zeros((n, n, n, n), dtype=complex)
    for p in range(n):
        for q in range(n):
            L[p, q, p, q] = 1.0
    Phi = np.zeros((n, n, n, n), dtype=complex)
    for a in range(n):
        for b in range(n):
            E = np.zeros((n, n), dtype=complex)
            E[a, b] = 1.0
            Phi[a, b] = E
    Psi = np.eye(n, dtype=complex).reshape(1, 1, n, n)
    return HilbertBimodule(A, C, n, G, Phi, Psi, L)


# -- conditional expectations ------------------------------------------------------


@dataclass
class Inclusion:
    """A unital embedding of a multimatrix algebra A into B.

    Block k of B decomposes as the direct sum over j of ``multiplicity[k][j]``
    copies of block j of A; unitality forces n_k = sum_j multiplicity[k][j] * m_j.
    """

    A: MultiMatrixAlgebra
    B: MultiMatrixAlgebra
    multiplicity: np.ndarray      # shape (K_B, K_A), nonnegative ints

    def __post_init__(self):
        mult = np.asarray(self.multiplicity, dtype=int)
        if mult.shape != (self.B.num_blocks, self.A.num_blocks):
            raise StructureError("multiplicity matrix has the wrong shape")
        if (mult < 0).any():
            raise StructureError("multiplicities must be nonnegative")
        for k, n in enumerate(self.B.blocks):
            if int(np.dot(mult[k], self.A.blocks)) != n:
                raise StructureError(
                    f"block {k}: sum of multiplicities * sizes != {n} (not unital)")
        if (mult.sum(axis=0) == 0).any():
            raise StructureError("some block of A does not embed anywhere")
        self.multiplicity = mult

    def copy_offset(self, k: int, j: int, c: int) -> int:
        """Start offset of copy c of A-block j inside B-block k."""
        mult, sizes = self.multiplicity, self.A.blocks
        off = int(np.dot(mult[k, :j], sizes[:j])) + c * sizes[j]
        return off

    def embed(self, a: AlgebraElement) -> AlgebraElement:
        """iota(a) as an element of B."""
        out = self.B.zero()
        for k in range(self.B.num_blocks):
            for j in range(self.A.num_blocks):
                m = self.A.blocks[j]
                for c in range(self.multiplicity[k, j]):
                    off = self.copy_offset(k, j, c)
                    out.blocks[k][off:off + m, off:off + m] = a.blocks[j]
        return out


@dataclass
class ExpectationSpec:
    """A conditional expectation E: B -> A given on the matrix units of B.

    ``images[k]`` has shape (n_k, n_k, N_A, N_A): the image in A (embedded)
    of the (r, s) unit of B-block k.
    """

    inclusion: Inclusion
    images: list[np.ndarray]

    @property
    def A(self) -> MultiMatrixAlgebra:
        return self.inclusion.A

    @property
    def B(self) -> MultiMatrixAlgebra:
        return self.inclusion.B

    def apply(self, b: AlgebraElement) -> AlgebraElement:
        emb = np.zeros((self.A.rep_dim, self.A.rep_dim), dtype=complex)
        for k, img in enumerate(self.images):
            emb += np.einsum("rs,rsab->ab", b.blocks[k], img)
        return self.A.from_embedded(emb)

    def as_cp_map(self) -> CPMap:
        return CPMap(self.B, [img.copy() for img in self.images], target=self.A)

    def check(self, tol: float = 1e-9) -> dict:
        """Invariants: unital, idempotent onto A, bimodule property, faithful."""
        A, B = self.A, self.B
        one = self.apply(B.identity())
        unital = (one - A.identity()).norm()
        idem = 0.0
        for j in range(A.num_blocks):
            for i in range(A.blocks[j]):
                for jj in range(A.blocks[j]):
                    a = A.unit(j, i, jj)
                    idem = max(idem, (self.apply(self.inclusion.embed(a)) - a).norm())
        bimod = 0.0
        rng = np.random.default_rng(11)
        from .multimatrix import random_element
        for _ in range(6):
            a1, a2 = random_element(A, rng), random_element(A, rng)
            b = random_element(B, rng)
            lhs = self.apply(self.inclusion.embed(a1) * b * self.inclusion.embed(a2))
            rhs = a1 * self.apply(b) * a2
            bimod = max(bimod, (lhs - rhs).norm())
        # faithfulness through the kernel of the sesquilinear form tr E(u* v)
        units = B.units_embedded()
        nb = len(units)
        K = np.zeros((nb, nb), dtype=complex)
        triples = B.unit_triples()
        for u in range(nb):
            for v in range(nb):
                ku, iu, ju = triples[u]
                kv, iv, jv = triples[v]
                if ku != kv:
                    continue
                prod = B.zero()
                if iu == iv:
                    prod.blocks[ku][ju, jv] = 1.0   # (E_iu_ju)* E_iv_jv
                K[u, v] = np.trace(self.apply(prod).embed())
        faithful = float(np.linalg.eigvalsh(hermitian_part(K)).min()) > tol
        ok = unital <= tol and idem <= tol and bimod <= 1e-7 and faithful
        return {"passed": bool(ok), "unital": unital, "idempotent": idem,
                "bimodule": bimod, "faithful": bool(faithful)}


def trace_weighted_expectation(inclusion: Inclusion,
                               weights: np.ndarray | None = None) -> ExpectationSpec:
    """The expectation that compresses each B-block onto the embedded copies
    of A and averages them with the given positive weights.

    ``weights[k][j]`` scales the copy-compressions of A-block j inside
    B-block k; unitality requires sum_k weights[k,j] * multiplicity[k,j] = 1
    and the default is the uniform choice.
    """
    A, B, mult = inclusion.A, inclusion.B, inclusion.multiplicity
    if weights is None:
        tot = mult.sum(axis=0)
        weights = np.zeros(mult.shape)
        for k in range(B.num_blocks):
            for j in range(A.num_blocks):
                if mult[k, j]:
                    weights[k, j] = 1.0 / tot[j]
    weights = np.asarray(weights, dtype=float)
    norm = np.einsum("kj,kj->j", weights, mult)
    if np.abs(norm - 1.0).max() > 1e-12:
        raise ContractError("weights do not sum to a unital expectation")
    if ((weights <= 0) & (mult > 0)).any():
        raise ContractError("weights must be strictly positive on present copies")
    images = []
    for k in range(B.num_blocks):
        n = B.blocks[k]
        img = np.zeros((n, n, A.rep_dim, A.rep_dim), dtype=complex)
        for j in range(A.num_blocks):
            m = A.blocks[j]
            sl = A.block_slice(j)
            for c in range(mult[k, j]):
                off = inclusion.copy_offset(k, j, c)
                for r in range(m):
                    for s in range(m):
                        img[off + r, off + s, sl.start + r, sl.start + s] = weights[k, j]
        images.append(img)
    return ExpectationSpec(inclusion, images)


def from_expectation(spec: ExpectationSpec):
    """The three bimodules of a finite-index conditional expectation:
    X = B as a B-A bimodule, Y its contragredient A-B structure, Z = the
    A-A bimodule, all with E-twisted inner products."""
    chk = spec.check()
    if not chk["passed"]:
        raise ContractError(f"not a faithful conditional expectation: {chk}")
    A, B, inc = spec.A, spec.B, spec.inclusion
    units = B.units_embedded()
    d = B.linear_dim

    def product_coeffs(left_emb, right_emb):
        # coordinates of left * u_q * right in the unit basis
        prods = np.einsum("ij,qjk,kl->qil", left_emb, units, right_emb)
        return np.einsum("pji,qji->pq", units.conj(), prods)

    eyeB = B.identity_embedded()
    # right A-action and left B-action on X = B
    Psi = np.zeros((A.rep_dim, A.rep_dim, d, d), dtype=complex)
    for t, (j, i, jj) in enumerate(A.unit_triples()):
        a = inc.embed(A.unit(j, i, jj)).embed()
        coeff = product_coeffs(eyeB, a)
        sl = A.block_slice(j)
        Psi[sl.start + i, sl.start + jj] = coeff
    PhiB = np.zeros((B.rep_dim, B.rep_dim, d, d), dtype=complex)
    for t, (k, r, s) in enumerate(B.unit_triples()):
        b = np.zeros((B.rep_dim, B.rep_dim), dtype=complex)
        sl = B.block_slice(k)
        b[sl.start + r, sl.start + s] = 1.0
        PhiB[sl.start + r, sl.start + s] = product_coeffs(b, eyeB)

    # Gram tensors of X = (B)_A with (x|y)_A = E(x* y), _B(x|y) = x y*
    GX = np.zeros((d, d, A.rep_dim, A.rep_dim), dtype=complex)
    LX = np.zeros((d, d, B.rep_dim, B.rep_dim), dtype=complex)
    triples = B.unit_triples()
    for p, (kp, ip, jp) in enumerate(triples):
        for q, (kq, iq, jq) in enumerate(triples):
            if kp != kq:
                continue
            prod = B.zero()
            if ip == iq:
                prod.blocks[kp][jp, jq] = 1.0
            GX[p, q] = spec.apply(prod).embed()
            prod2 = B.zero()
            if jp == jq:
                prod2.blocks[kp][ip, iq] = 1.0
            LX[p, q] = prod2.embed()
    X = HilbertBimodule(B, A, d, GX, PhiB, Psi, LX)
    from .bimodule import contragredient
    Y = contragredient(X)
    from .bimodule import tensor
    Z = tensor(Y, X)
    return X, Y, Z


def quasi_basis(spec: ExpectationSpec) -> tuple[np.ndarray, AlgebraElement]:
    """A quasi-basis {u_i} for E (x = sum_i u_i E(u_i* x)) and the associated
    index element sum_i u_i u_i* in B, produced from a normalized tight frame
    of B as a right A-module."""
    X, _, _ = from_expectation(spec)
    fr = tight_frame(X)
    B = spec.B
    units = B.units_embedded()
    ind = np.zeros((B.rep_dim, B.rep_dim), dtype=complex)
    for u in fr.coords:
        mat = np.einsum("p,pij->ij", u, units)
        ind += mat @ mat.conj().T
    return fr.coords, B.from_embedded(ind)


def expectation_cp_gap(spec: ExpectationSpec, tol: float = 1e-9,
                       max_iter: int = 60) -> float:
    """Largest c such that E - c*id is completely positive, by bisection on
    the Choi spectrum."""
    B = spec.B
    iota_units = []
    for k, n in enumerate(B.blocks):
        blk = np.empty((n, n, B.rep_dim, B.rep_dim), dtype=complex)
        for r in range(n):
            for s in range(n):
                blk[r, s] = spec.inclusion.embed(spec.apply(_unit(B, k, r, s))).embed()
        iota_units.append(blk)
    own_units = []
    for k, n in enumerate(B.blocks):
        blk = np.empty((n, n, B.rep_dim, B.rep_dim), dtype=complex)
        for r in range(n):
            for s in range(n):
                blk[r, s] = _unit(B, k, r, s).embed()
        own_units.append(blk)

    def is_cp(c: float) -> bool:
        for ib, ob in zip(iota_units, own_units):
            img = ib - c * ob
            n = img.shape[0]
            choi = img.transpose(0, 2, 1, 3).reshape(n * B.rep_dim, n * B.rep_dim)
            if np.linalg.eigvalsh(hermitian_part(choi)).min() < -1e-12:
                return False
        return True

    lo, hi = 0.0, 1.0
    if not is_cp(0.0):
        raise ContractError("expectation is not even positive")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if is_cp(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return lo


def minimal_cp_multiplier(spec: ExpectationSpec, delta: float = 1e-3) -> dict:
    """Certify that the index element of E is the smallest central c with
    c E - id completely positive: the Choi blocks are PSD at c and leave the
    cone when any central coefficient is scaled by 1 - delta."""
    B = spec.B
    _, ind = quasi_basis(spec)

    def choi_min(c: AlgebraElement) -> float:
        mins = []
        for k, n in enumerate(B.blocks):
            img = np.empty((n, n, B.rep_dim, B.rep_dim), dtype=complex)
            for r in range(n):
                for s in range(n):
                    u = _unit(B, k, r, s)
                    img[r, s] = (c * spec.inclusion.embed(spec.apply(u))).embed() - u.embed()
            choi = img.transpose(0, 2, 1, 3).reshape(n * B.rep_dim, n * B.rep_dim)
            mins.append(float(np.linalg.eigvalsh(hermitian_part(choi)).min()))
        return min(mins)

    base = choi_min(ind)
    scale = 1.0 + ind.norm()
    perturbed = []
    certified = True
    for k in range(B.num_blocks):
        c2 = ind.copy()
        c2.blocks[k] = (1.0 - delta) * c2.blocks[k]
        mn = choi_min(c2)
        broke = mn < -1e-9 * scale
        certified = certified and broke
        perturbed.append({"block": k, "choi_min": mn, "non_psd": broke})
    return {"index_element": ind, "choi_min_at_index": base,
            "passed_at_index": base >= -1e-8 * scale,
            "minimality_certified": certified, "perturbed": perturbed}


def _unit(B: MultiMatrixAlgebra, k: int, r: int, s: int) -> AlgebraElement:
    return B.unit(k, r, s)


# -- weighted graphs ----------------------------------------------------------------


@dataclass
class GraphSpec:
    """A finite directed graph with strictly positive edge weights."""

    vertices: list[str]
    edges: list[tuple[str, str, float]]

    def __post_init__(self):
        if not self.vertices:
            raise StructureError("graph needs at least one vertex")
        if len(set(self.vertices)) != len(self.vertices):
            raise StructureError("vertex names must be distinct")
        pos = {v: i for i, v in enumerate(self.vertices)}
        seen = set()
        for s, r, w in self.edges:
            if s not in pos or r not in pos:
                raise StructureError(f"edge ({s}, {r}) uses an unknown vertex")
            if (s, r) in seen:
                raise StructureError(f"duplicate edge ({s}, {r})")
            if not w > 0:
                raise StructureError(f"edge ({s}, {r}) has non-positive weight {w}")
            seen.add((s, r))
        outs = {s for s, _, _ in self.edges}
        ins = {r for _, r, _ in self.edges}
        missing_out = [v for v in self.vertices if v not in outs]
        missing_in = [v for v in self.vertices if v not in ins]
        if missing_out or missing_in:
            raise StructureError(
                f"every vertex needs an outgoing and an incoming edge; "
                f"no out-edge at {missing_out}, no in-edge at {missing_in}")

    @property
    def vertex_index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}


@dataclass
class GraphReport:
    bimodule: HilbertBimodule
    c1: float
    c2: float
    r_ind_closed: np.ndarray     # per-vertex sum of out-weights
    l_ind_closed: np.ndarray     # per-vertex sum of reciprocal in-weights
    right_frame_residual: float
    left_frame_residual: float


def from_weight_graph(g: GraphSpec) -> GraphReport:
    """The edge bimodule of a weighted graph over the vertex algebra.

    Edges are the coordinate basis; the right Gram is the sum over in-edges,
    the left Gram weights out-edges by T.  The closed-form index elements are
    the row sums of T and the column sums of 1/T.
    """
    nv = len(g.vertices)
    A = MultiMatrixAlgebra([1] * nv)
    idx = g.vertex_index
    d = len(g.edges)
    src = np.array([idx[s] for s, _, _ in g.edges])
    dst = np.array([idx[r] for _, r, _ in g.edges])
    wts = np.array([w for _, _, w in g.edges], dtype=float)
    G = np.zeros((d, d, nv, nv), dtype=complex)
    L = np.zeros((d, d, nv, nv), dtype=complex)
    for e in range(d):
        G[e, e, dst[e], dst[e]] = 1.0
        L[e, e, src[e], src[e]] = wts[e]
    Phi = np.zeros((nv, nv, d, d), dtype=complex)
    Psi = np.zeros((nv, nv, d, d), dtype=complex)
    for v in range(nv):
        Phi[v, v] = np.diag((src == v).astype(complex))
        Psi[v, v] = np.diag((dst == v).astype(complex))
    X = HilbertBimodule(A, A, d, G, Phi, Psi, L)

    W = np.zeros((nv, nv))
    Winv = np.zeros((nv, nv))
    W[src, dst] = wts
    Winv[src, dst] = 1.0 / wts
    r_closed = W.sum(axis=1)
    l_closed = Winv.sum(axis=0)
    c1, c2 = float(r_closed.max()), float(l_closed.max())
    from .bimodule import frame_operator
    right_res = X.op_norm(frame_operator(X, np.eye(d)) - np.eye(d))
    Xbar = _graph_contragredient_frame(X, wts)
    return GraphReport(bimodule=X, c1=c1, c2=c2, r_ind_closed=r_closed,
                       l_ind_closed=l_closed, right_frame_residual=right_res,
                       left_frame_residual=Xbar)


def _graph_contragredient_frame(X: HilbertBimodule, wts: np.ndarray) -> float:
    """Residual of {w^{-1/2} delta_e} as a left tight frame."""
    from .bimodule import contragredient, frame_operator
    Xbar = contragredient(X)
    vecs = np.diag(1.0 / np.sqrt(wts)).astype(complex)
    return Xbar.op_norm(frame_operator(Xbar, vecs) - np.eye(X.dim))
