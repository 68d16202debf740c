"""Finite-dimensional right Hilbert and bi-Hilbertian A-B bimodules.

A bimodule fixes a complex coordinate basis e_1..e_d.  Structure tensors:

* ``right_gram[p, q]``  = (e_p | e_q)_B, embedded in M_{N_B}; the right inner
  product is conjugate-linear in the first argument.
* ``left_gram[p, q]``   = _A(e_p | e_q), embedded in M_{N_A}; the left inner
  product is linear in the first argument.
* ``left_action[a, b]`` = the d x d matrix of phi(unit at embedded position
  (a, b) of A); phi(x) acts on coordinate columns.
* ``right_action``      analogous for psi(b): x -> x.b.

Operator norms in L(X_B) are evaluated through the scalar trace form of the
right Gram tensor: g[p,q] = tr (e_p|e_q)_B.  Conjugating by g^{1/2} is an
injective *-homomorphism into M_d with the standard involution, so C*-norms,
positivity and functional calculus of module operators reduce to ordinary
Hermitian linear algebra there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .multimatrix import (
    DEFAULT_TOL,
    RANK_TOL,
    AlgebraElement,
    ContractError,
    MultiMatrixAlgebra,
    StructureError,
    hermitian_part,
)


def _psd_sqrt_and_inv(mat: np.ndarray, rank_tol: float = RANK_TOL):
    w, v = np.linalg.eigh(hermitian_part(mat))
    cut = rank_tol * max(w.max(), 1e-300)
    if w.min() <= cut:
        raise StructureError(
            f"scalar Gram form is singular (min eig {w.min():.3g}); "
            "the inner product is degenerate on the presented space")
    sq = (v * np.sqrt(w)) @ v.conj().T
    isq = (v / np.sqrt(w)) @ v.conj().T
    return sq, isq


class HilbertBimodule:
    """A finite-dimensional A-B bimodule with right (and optional left) Gram
    tensors.  Immutable after construction."""

    def __init__(self, A: MultiMatrixAlgebra, B: MultiMatrixAlgebra, dim: int,
                 right_gram: np.ndarray, left_action: np.ndarray,
                 right_action: np.ndarray, left_gram: np.ndarray | None = None,
                 meta: dict | None = None):
        d, na, nb = int(dim), A.rep_dim, B.rep_dim
        right_gram = np.asarray(right_gram, dtype=complex)
        left_action = np.asarray(left_action, dtype=complex)
        right_action = np.asarray(right_action, dtype=complex)
        if right_gram.shape != (d, d, nb, nb):
            raise StructureError(f"right_gram shape {right_gram.shape} != {(d, d, nb, nb)}")
        if left_action.shape != (na, na, d, d):
            raise StructureError(f"left_action shape {left_action.shape} != {(na, na, d, d)}")
        if right_action.shape != (nb, nb, d, d):
            raise StructureError(f"right_action shape {right_action.shape} != {(nb, nb, d, d)}")
        if left_gram is not None:
            left_gram = np.asarray(left_gram, dtype=complex)
            if left_gram.shape != (d, d, na, na):
                raise StructureError(f"left_gram shape {left_gram.shape} != {(d, d, na, na)}")
        self.A, self.B, self.dim = A, B, d
        self.right_gram = right_gram
        self.left_action = left_action
        self.right_action = right_action
        self.left_gram = left_gram
        self.meta = dict(meta or {})
        self._cache: dict = {}

    # -- basic structure -------------------------------------------------------

    @property
    def is_bihilbertian(self) -> bool:
        return self.left_gram is not None

    def phi(self, a) -> np.ndarray:
        """Matrix of the left action of a (AlgebraElement or embedded)."""
        a_emb = a.embed() if isinstance(a, AlgebraElement) else np.asarray(a, dtype=complex)
        return np.einsum("ab,abij->ij", a_emb, self.left_action)

    def psi(self, b) -> np.ndarray:
        """Matrix of the right action x -> x.b."""
        b_emb = b.embed() if isinstance(b, AlgebraElement) else np.asarray(b, dtype=complex)
        return np.einsum("ab,abij->ij", b_emb, self.right_action)

    def right_inner(self, x, y) -> AlgebraElement:
        """(x|y)_B for coordinate vectors; conjugate-linear in x."""
        x, y = _coords(self, x), _coords(self, y)
        emb = np.einsum("p,q,pqab->ab", x.conj(), y, self.right_gram)
        return self.B.from_embedded(emb)

    def left_inner(self, x, y) -> AlgebraElement:
        """_A(x|y) for coordinate vectors; linear in x."""
        self._need_left()
        x, y = _coords(self, x), _coords(self, y)
        emb = np.einsum("p,q,pqab->ab", x, y.conj(), self.left_gram)
        return self.A.from_embedded(emb)

    def vector_norm(self, x) -> float:
        """||x|| = ||(x|x)_B||^(1/2)."""
        x = _coords(self, x)
        emb = np.einsum("p,q,pqab->ab", x.conj(), x, self.right_gram)
        top = float(np.linalg.eigvalsh(hermitian_part(emb)).max())
        return float(np.sqrt(max(top, 0.0)))

    def left_vector_norm(self, x) -> float:
        self._need_left()
        x = _coords(self, x)
        emb = np.einsum("p,q,pqab->ab", x, x.conj(), self.left_gram)
        top = float(np.linalg.eigvalsh(hermitian_part(emb)).max())
        return float(np.sqrt(max(top, 0.0)))

    def rank_one(self, x, y) -> np.ndarray:
        """Matrix of z -> x (y|z)_B."""
        x, y = _coords(self, x), _coords(self, y)
        b = np.einsum("p,pqab->qab", y.conj(), self.right_gram)
        return np.einsum("qab,abij,j->iq", b, self.right_action, x)

    def _need_left(self) -> None:
        if self.left_gram is None:
            raise ContractError("operation requires a left inner product (left_gram)")

    # -- scalar trace forms and the module-operator calculus -------------------

    @property
    def scalar_gram(self) -> np.ndarray:
        if "g" not in self._cache:
            self._cache["g"] = hermitian_part(np.einsum("pqaa->pq", self.right_gram))
        return self._cache["g"]

    @property
    def scalar_left_gram(self) -> np.ndarray:
        self._need_left()
        if "gl" not in self._cache:
            self._cache["gl"] = hermitian_part(np.einsum("pqaa->pq", self.left_gram).T)
        return self._cache["gl"]

    def _g_half(self):
        if "gh" not in self._cache:
            self._cache["gh"] = _psd_sqrt_and_inv(self.scalar_gram)
        return self._cache["gh"]

    def _gl_half(self):
        if "glh" not in self._cache:
            self._cache["glh"] = _psd_sqrt_and_inv(self.scalar_left_gram)
        return self._cache["glh"]

    def op_rep(self, T: np.ndarray) -> np.ndarray:
        """g^(1/2) T g^(-1/2): the standard-involution picture of L(X_B)."""
        sq, isq = self._g_half()
        return sq @ np.asarray(T, dtype=complex) @ isq

    def op_unrep(self, M: np.ndarray) -> np.ndarray:
        sq, isq = self._g_half()
        return isq @ np.asarray(M, dtype=complex) @ sq

    def op_norm(self, T: np.ndarray) -> float:
        """C*-norm of a module operator given by its coordinate matrix."""
        return float(np.linalg.norm(self.op_rep(T), 2))

    def op_adjoint(self, T: np.ndarray) -> np.ndarray:
        """Adjoint with respect to the right inner product."""
        sq, isq = self._g_half()
        return isq @ (sq @ np.asarray(T, dtype=complex) @ isq).conj().T @ sq

    def left_op_adjoint(self, T: np.ndarray) -> np.ndarray:
        """Adjoint with respect to the left inner product."""
        sq, isq = self._gl_half()
        return isq @ (sq @ np.asarray(T, dtype=complex) @ isq).conj().T @ sq

    def left_op_rep(self, T: np.ndarray) -> np.ndarray:
        """Standard-involution picture of L_B(_AX) via the left trace form."""
        sq, isq = self._gl_half()
        return sq @ np.asarray(T, dtype=complex) @ isq

    def left_op_unrep(self, M: np.ndarray) -> np.ndarray:
        sq, isq = self._gl_half()
        return isq @ np.asarray(M, dtype=complex) @ sq

    def op_spectrum(self, T: np.ndarray, tol: float = DEFAULT_TOL) -> np.ndarray:
        """Spectrum of a self-adjoint module operator."""
        M = self.op_rep(T)
        dev = float(np.abs(M - M.conj().T).max())
        if dev > tol * (1.0 + np.linalg.norm(M, 2)):
            raise ContractError(f"operator is not self-adjoint in L(X_B) (dev {dev:.3g})")
        return np.linalg.eigvalsh(hermitian_part(M))

    def op_function(self, T: np.ndarray, f: Callable,
                    tol: float = DEFAULT_TOL) -> np.ndarray:
        """f(T) for a self-adjoint module operator T."""
        sq, isq = self._g_half()
        M = sq @ np.asarray(T, dtype=complex) @ isq
        dev = float(np.abs(M - M.conj().T).max())
        if dev > tol * (1.0 + np.linalg.norm(M, 2)):
            raise ContractError(f"operator is not self-adjoint in L(X_B) (dev {dev:.3g})")
        w, v = np.linalg.eigh(hermitian_part(M))
        return isq @ ((v * f(w)) @ v.conj().T) @ sq

    def op_is_positive(self, T: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[bool, float]:
        M = hermitian_part(self.op_rep(T))
        w = np.linalg.eigvalsh(M)
        mn, mx = float(w.min()), float(np.abs(w).max())
        return mn >= -tol * (1.0 + mx), mn

    # -- derived bimodules ------------------------------------------------------

    def with_left_gram(self, left_gram: np.ndarray) -> "HilbertBimodule":
        return HilbertBimodule(self.A, self.B, self.dim, self.right_gram,
                               self.left_action, self.right_action,
                               np.asarray(left_gram, dtype=complex))

    def __repr__(self) -> str:
        tag = "bi-Hilbertian" if self.is_bihilbertian else "right Hilbert"
        return (f"HilbertBimodule({tag}, A={self.A.blocks}, B={self.B.blocks}, "
                f"dim={self.dim})")


def _coords(X: HilbertBimodule, x) -> np.ndarray:
    if isinstance(x, ModuleVector):
        return x.coords
    x = np.asarray(x, dtype=complex).reshape(-1)
    if x.shape != (X.dim,):
        raise StructureError(f"coordinate vector has length {len(x)}, expected {X.dim}")
    return x


@dataclass
class ModuleVector:
    bimodule: HilbertBimodule
    coords: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=complex).reshape(-1)
        if self.coords.shape != (self.bimodule.dim,):
            raise StructureError("coordinate length does not match the bimodule")

    def norm(self) -> float:
        return self.bimodule.vector_norm(self.coords)


@dataclass
class ModuleOperator:
    """A module map on X given by its coordinate matrix."""

    bimodule: HilbertBimodule
    matrix: np.ndarray
    adjoint_matrix: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=complex)
        d = self.bimodule.dim
        if self.matrix.shape != (d, d):
            raise StructureError("operator matrix shape does not match the bimodule")
        if self.adjoint_matrix is None:
            self.adjoint_matrix = self.bimodule.op_adjoint(self.matrix)

    def norm(self) -> float:
        return self.bimodule.op_norm(self.matrix)


@dataclass
class FrameSet:
    """Vectors u_1..u_m with sum_i theta^r_{u_i,u_i} = 1 within ``residual``."""

    bimodule: HilbertBimodule
    coords: np.ndarray          # shape (m, d)
    residual: float

    @property
    def vectors(self) -> list[ModuleVector]:
        return [ModuleVector(self.bimodule, c) for c in self.coords]

    def __len__(self) -> int:
        return self.coords.shape[0]


# -- validation ----------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    residual: float
    passed: bool


@dataclass
class ValidationReport:
    checks: list[CheckResult]
    tol: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst(self) -> float:
        return max((c.residual for c in self.checks), default=0.0)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": [{"name": c.name, "residual": c.residual, "passed": c.passed}
                           for c in self.checks]}


def _gram_big(gram: np.ndarray) -> np.ndarray:
    """(d,d,N,N) Gram tensor -> (dN, dN) matrix of the M_d(algebra) element."""
    d, _, n, _ = gram.shape
    return gram.transpose(0, 2, 1, 3).reshape(d * n, d * n)


def validate(X: HilbertBimodule, tol: float = 1e-8) -> ValidationReport:
    """Check every structural invariant; the report carries one line per check."""
    checks: list[CheckResult] = []
    d = X.dim
    G, Phi, Psi = X.right_gram, X.left_action, X.right_action

    def add(name, residual, passed=None):
        residual = float(residual)
        checks.append(CheckResult(name, residual, residual <= tol if passed is None else passed))

    scale = max(float(np.abs(G).max()), 1e-300)
    add("right_gram_hermitian",
        np.abs(G.conj().transpose(1, 0, 3, 2) - G).max() / scale)
    big = _gram_big(G)
    w = np.linalg.eigvalsh(hermitian_part(big))
    add("right_gram_psd", max(0.0, -float(w.min())) / max(float(w.max()), 1e-300))
    gw = np.linalg.eigvalsh(X.scalar_gram)
    add("right_gram_definite", 0.0,
        passed=float(gw.min()) > RANK_TOL * max(float(gw.max()), 1e-300))

    units_A = X.A.units_embedded()
    units_B = X.B.units_embedded()
    phis = np.einsum("uab,abij->uij", units_A, Phi)
    psis = np.einsum("uab,abij->uij", units_B, Psi)
    pscale = max(float(np.abs(phis).max()), 1e-300)

    # phi is a unital *-homomorphism, adjointable for the right inner product
    prod_err = 0.0
    triples = X.A.unit_triples()
    adj_index = {t: triples.index((t[0], t[2], t[1])) for t in triples}
    for u, (k, i, j) in enumerate(triples):
        for v, (l, s, r) in enumerate(triples):
            expected = phis[triples.index((k, i, r))] if (k == l and j == s) else 0.0
            prod_err = max(prod_err, float(np.abs(phis[u] @ phis[v] - expected).max()))
    add("left_action_homomorphism", prod_err / pscale)
    add("left_action_unital", np.abs(X.phi(X.A.identity()) - np.eye(d)).max())
    adj_err = 0.0
    for u, trip in enumerate(triples):
        lhs = np.einsum("rp,rqab->pqab", phis[u].conj(), G)
        rhs = np.einsum("sq,psab->pqab", phis[adj_index[trip]], G)
        adj_err = max(adj_err, float(np.abs(lhs - rhs).max()))
    add("left_action_adjointable", adj_err / scale)

    # psi is a unital *-antihomomorphism and the right gram is B-linear
    triples_B = X.B.unit_triples()
    aprod_err = 0.0
    for u, (k, i, j) in enumerate(triples_B):
        for v, (l, s, r) in enumerate(triples_B):
            expected = psis[triples_B.index((k, i, r))] if (k == l and j == s) else 0.0
            aprod_err = max(aprod_err, float(np.abs(psis[v] @ psis[u] - expected).max()))
    add("right_action_antihomomorphism", aprod_err / max(float(np.abs(psis).max()), 1e-300))
    add("right_action_unital", np.abs(X.psi(X.B.identity()) - np.eye(d)).max())
    lin_err = 0.0
    for u in range(len(triples_B)):
        lhs = np.einsum("sq,psab->pqab", psis[u], G)
        rhs = np.einsum("pqac,cb->pqab", G, units_B[u])
        lin_err = max(lin_err, float(np.abs(lhs - rhs).max()))
    add("right_gram_B_linear", lin_err / scale)

    comm = np.einsum("uij,vjk->uvik", phis, psis) - np.einsum("vij,ujk->uvik", psis, phis)
    add("actions_commute", np.abs(comm).max() / pscale)

    if X.left_gram is not None:
        L = X.left_gram
        lscale = max(float(np.abs(L).max()), 1e-300)
        add("left_gram_hermitian",
            np.abs(L.conj().transpose(1, 0, 3, 2) - L).max() / lscale)
        bigl = _gram_big(L)
        wl = np.linalg.eigvalsh(hermitian_part(bigl))
        add("left_gram_psd", max(0.0, -float(wl.min())) / max(float(wl.max()), 1e-300))
        glw = np.linalg.eigvalsh(X.scalar_left_gram)
        add("left_gram_definite", 0.0,
            passed=float(glw.min()) > RANK_TOL * max(float(glw.max()), 1e-300))
        alin_err = 0.0
        for u in range(len(triples)):
            lhs = np.einsum("rp,rqab->pqab", phis[u], L)
            rhs = np.einsum("ac,pqcb->pqab", units_A[u], L)
            alin_err = max(alin_err, float(np.abs(lhs - rhs).max()))
        add("left_gram_A_linear", alin_err / lscale)
        radj_err = 0.0
        for u, trip in enumerate(triples_B):
            lhs = np.einsum("rp,rqab->pqab", psis[u], L)
            rhs = np.einsum("sq,psab->pqab", psis[triples_B.index((trip[0], trip[2], trip[1]))].conj(), L)
            radj_err = max(radj_err, float(np.abs(lhs - rhs).max()))
        add("right_action_left_adjointable", radj_err / lscale)

    return ValidationReport(checks, tol)


# -- frames, rank-one sums, generalized bases ----------------------------------


def rank_one_sum_norm(X: HilbertBimodule, xs, ys) -> float:
    """Norm of sum_i theta^r_{x_i, y_i} via the Gram half-product formula."""
    xs = [_coords(X, x) for x in _aslist(xs)]
    ys = [_coords(X, y) for y in _aslist(ys)]
    if len(xs) != len(ys):
        raise ContractError(f"lists have lengths {len(xs)} != {len(ys)}")
    if not xs:
        return 0.0
    n, nb = len(xs), X.B.rep_dim
    P = np.empty((n, n, nb, nb), dtype=complex)
    Q = np.empty((n, n, nb, nb), dtype=complex)
    for i in range(n):
        for j in range(n):
            P[i, j] = np.einsum("p,q,pqab->ab", xs[i].conj(), xs[j], X.right_gram)
            Q[i, j] = np.einsum("p,q,pqab->ab", ys[i].conj(), ys[j], X.right_gram)
    Pb, Qb = _gram_big(P), _gram_big(Q)
    return float(np.linalg.norm(_psd_half(Pb) @ _psd_half(Qb), 2))


def _psd_half(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(hermitian_part(mat))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def _aslist(xs) -> list:
    if isinstance(xs, np.ndarray) and xs.ndim == 2:
        return list(xs)
    return list(xs)


def frame_operator(X: HilbertBimodule, vectors) -> np.ndarray:
    vecs = [_coords(X, v) for v in _aslist(vectors)]
    S = np.zeros((X.dim, X.dim), dtype=complex)
    for v in vecs:
        S += X.rank_one(v, v)
    return S


def random_compact(X: HilbertBimodule, rng: np.random.Generator,
                   terms: int = 3) -> np.ndarray:
    """A random element of K(X_B): a short sum of rank-one operators."""
    T = np.zeros((X.dim, X.dim), dtype=complex)
    for _ in range(terms):
        x = rng.standard_normal(X.dim) + 1j * rng.standard_normal(X.dim)
        y = rng.standard_normal(X.dim) + 1j * rng.standard_normal(X.dim)
        T += X.rank_one(x, y)
    return T


def random_compact_positive(X: HilbertBimodule, rng: np.random.Generator,
                            terms: int = 3) -> np.ndarray:
    """A random positive element T* T of K(X_B)."""
    T = random_compact(X, rng, terms)
    return X.op_adjoint(T) @ T


def tight_frame(X: HilbertBimodule, spanning=None,
                rank_tol: float = RANK_TOL) -> FrameSet:
    """Normalized tight frame: S^(-1/2) applied to a spanning set.

    The default spanning set is the coordinate basis, which always spans.
    A singular frame operator means the right inner product is degenerate on
    a complement and is rejected.
    """
    if spanning is None:
        spanning = np.eye(X.dim, dtype=complex)
    vecs = np.array([_coords(X, v) for v in _aslist(spanning)])
    S = frame_operator(X, vecs)
    spec = X.op_spectrum(S)
    if spec.min() <= rank_tol * max(spec.max(), 1e-300):
        raise StructureError(
            "frame operator is singular: the spanning set does not generate "
            "a module with definite inner product")
    S_isqrt = X.op_function(S, lambda t: 1.0 / np.sqrt(t))
    out = vecs @ S_isqrt.T
    resid = X.op_norm(frame_operator(X, out) - np.eye(X.dim))
    return FrameSet(X, out, resid)


def left_tight_frame(X: HilbertBimodule, spanning=None) -> FrameSet:
    """Tight frame for the left module structure: sum theta^l_{v,v} = 1.

    Computed as the contragredient image of a right tight frame of X-bar;
    the returned coordinates are vectors of X itself and the residual is
    measured on X-bar.
    """
    Xbar = contragredient(X)
    fr = tight_frame(Xbar, spanning=None if spanning is None else np.conj(spanning))
    return FrameSet(X, fr.coords.conj(), fr.residual)


def generalized_basis_step(X: HilbertBimodule, mu) -> tuple[FrameSet, ModuleOperator]:
    """One step of the generalized-basis net: from vectors x_1..x_n build
    u = (1/n + S)^(-1/2) x_i and T = S (1/n + S)^(-1), S the frame operator."""
    vecs = np.array([_coords(X, v) for v in _aslist(mu)])
    n = vecs.shape[0]
    if n == 0:
        raise ContractError("mu must be nonempty")
    S = frame_operator(X, vecs)
    shrink = X.op_function(S, lambda t: 1.0 / np.sqrt(1.0 / n + t))
    T = X.op_function(S, lambda t: t / (1.0 / n + t))
    out = vecs @ shrink.T
    resid = X.op_norm(frame_operator(X, out) - T)
    return FrameSet(X, out, resid), ModuleOperator(X, T)


# -- contragredient, amplification, tensor product ------------------------------


def contragredient(X: HilbertBimodule) -> HilbertBimodule:
    """The conjugate B-A bimodule: b.xbar = (x b*)bar, xbar.a = (a* x)bar,
    with the two Gram tensors exchanged."""
    X._need_left()
    new_left_action = X.right_action.transpose(1, 0, 2, 3).conj()
    new_right_action = X.left_action.transpose(1, 0, 2, 3).conj()
    return HilbertBimodule(X.B, X.A, X.dim,
                           right_gram=X.left_gram.copy(),
                           left_action=new_left_action,
                           right_action=new_right_action,
                           left_gram=X.right_gram.copy())


def identity_bimodule(alg: MultiMatrixAlgebra) -> HilbertBimodule:
    """The algebra over itself: (x|y) = x* y on the right, x y* on the left."""
    units = alg.units_embedded()
    d = alg.linear_dim
    G = np.einsum("pba,qbc->pqac", units.conj(), units)
    L = np.einsum("pab,qcb->pqac", units, units.conj())
    Phi = np.zeros((alg.rep_dim, alg.rep_dim, d, d), dtype=complex)
    Psi = np.zeros_like(Phi)
    for a in range(alg.rep_dim):
        for b in range(alg.rep_dim):
            E = np.zeros((alg.rep_dim, alg.rep_dim), dtype=complex)
            E[a, b] = 1.0
            left = np.einsum("ij,qjk->qik", E, units)
            right = np.einsum("qij,jk->qik", units, E)
            Phi[a, b] = np.einsum("pji,qji->pq", units.conj(), left)
            Psi[a, b] = np.einsum("pji,qji->pq", units.conj(), right)
    return HilbertBimodule(alg, alg, d, G, Phi, Psi, L)


def amplify(X: HilbertBimodule, n: int) -> HilbertBimodule:
    """Column amplification: the direct sum of n copies of X as an
    M_n(A)-B bimodule."""
    if n < 1:
        raise ContractError("amplification order must be >= 1")
    X._need_left()
    if n == 1:
        return HilbertBimodule(X.A, X.B, X.dim, X.right_gram.copy(),
                               X.left_action.copy(), X.right_action.copy(),
                               X.left_gram.copy())
    A2 = MultiMatrixAlgebra([n * m for m in X.A.blocks])
    d, na, nb = X.dim, X.A.rep_dim, X.B.rep_dim
    d2, na2 = n * d, A2.rep_dim

    def up(k, c, i):
        # position of copy c of row i of block k inside the amplified block
        return A2.block_slice(k).start + c * X.A.blocks[k] + i

    G2 = np.zeros((d2, d2, nb, nb), dtype=complex)
    for c in range(n):
        G2[c * d:(c + 1) * d, c * d:(c + 1) * d] = X.right_gram
    L2 = np.zeros((d2, d2, na2, na2), dtype=complex)
    Phi2 = np.zeros((na2, na2, d2, d2), dtype=complex)
    for k in range(X.A.num_blocks):
        s = X.A.block_slice(k)
        for c in range(n):
            for cp in range(n):
                rows = np.arange(s.start, s.stop)
                big_rows = np.array([up(k, c, i - s.start) for i in rows])
                big_cols = np.array([up(k, cp, i - s.start) for i in rows])
                L2[np.ix_(np.arange(c * d, (c + 1) * d),
                          np.arange(cp * d, (cp + 1) * d),
                          big_rows, big_cols)] = X.left_gram[:, :, s, s]
                Phi2[np.ix_(big_rows, big_cols,
                            np.arange(c * d, (c + 1) * d),
                            np.arange(cp * d, (cp + 1) * d))] = X.left_action[s, s]
    Psi2 = np.zeros((nb, nb, d2, d2), dtype=complex)
    for c in range(n):
        Psi2[:, :, c * d:(c + 1) * d, c * d:(c + 1) * d] = X.right_action
    return HilbertBimodule(A2, X.B, d2, G2, Phi2, Psi2, L2)


def tensor(X: HilbertBimodule, Y: HilbertBimodule,
           rank_tol: float = RANK_TOL) -> HilbertBimodule:
    """Interior tensor product X (x)_B Y of an A-B and a B-C bimodule.

    The algebraic tensor basis e_p (x) f_u is reduced by the kernel of the
    right Gram tensor (vectors of seminorm zero); the quotient isometry is
    kept in ``meta["tensor"]`` for lifting vectors back to product
    coordinates.
    """
    if X.B != Y.A:
        raise ContractError(
            f"middle algebras differ: {X.B.blocks} vs {Y.A.blocks}")
    X._need_left()
    Y._need_left()
    dx, dy = X.dim, Y.dim
    D = dx * dy
    # right Gram over C: (f_u | phi_Y((e_p|e_q)_B) f_v)_C
    phiG = np.einsum("pqab,abwv->pqwv", X.right_gram, Y.left_action, optimize=True)
    G = np.einsum("uwcd,pqwv->puqvcd", Y.right_gram, phiG, optimize=True)
    G = G.reshape(D, D, Y.B.rep_dim, Y.B.rep_dim)
    # left Gram over A: _A(e_p . _B(f_u|f_v) | e_q)
    psiL = np.einsum("uvab,abrp->uvrp", Y.left_gram, X.right_action, optimize=True)
    L = np.einsum("uvrp,rqcd->puqvcd", psiL, X.left_gram, optimize=True)
    L = L.reshape(D, D, X.A.rep_dim, X.A.rep_dim)
    PhiT = np.einsum("abij,uv->abiujv", X.left_action, np.eye(dy)).reshape(
        X.A.rep_dim, X.A.rep_dim, D, D)
    PsiT = np.einsum("ij,abuv->abiujv", np.eye(dx), Y.right_action).reshape(
        Y.B.rep_dim, Y.B.rep_dim, D, D)

    g = hermitian_part(np.einsum("pqaa->pq", G))
    w, v = np.linalg.eigh(g)
    keep = w > rank_tol * max(float(w.max()), 1e-300)
    if keep.all():
        V = np.eye(D, dtype=complex)
    else:
        V = v[:, keep]
    d2 = V.shape[1]
    G2 = np.einsum("Pi,Qj,PQab->ijab", V.conj(), V, G, optimize=True)
    L2 = np.einsum("Pi,Qj,PQab->ijab", V, V.conj(), L, optimize=True)
    Phi2 = np.einsum("Pi,abPQ,Qj->abij", V.conj(), PhiT, V, optimize=True)
    Psi2 = np.einsum("Pi,abPQ,Qj->abij", V.conj(), PsiT, V, optimize=True)
    Z = HilbertBimodule(X.A, Y.B, d2, G2, Phi2, Psi2, L2,
                        meta={"tensor": {"V": V, "dims": (dx, dy)}})
    return Z


def tensor_lift(Z: HilbertBimodule, vec) -> np.ndarray:
    """Quotient coordinates of a tensor bimodule -> product coordinates."""
    info = Z.meta.get("tensor")
    if info is None:
        raise ContractError("bimodule was not produced by tensor()")
    return info["V"] @ _coords(Z, vec)


def tensor_push(Z: HilbertBimodule, vec_full: np.ndarray) -> np.ndarray:
    """Product coordinates -> quotient coordinates of a tensor bimodule."""
    info = Z.meta.get("tensor")
    if info is None:
        raise ContractError("bimodule was not produced by tensor()")
    return info["V"].conj().T @ np.asarray(vec_full, dtype=complex).reshape(-1)


def bimodule_map_residual(W: np.ndarray, X: HilbertBimodule,
                          Y: HilbertBimodule) -> float:
    """How far the linear map W: X -> Y is from a bi-inner-product-preserving
    bimodule isomorphism (max residual over all structure tensors)."""
    W = np.asarray(W, dtype=complex)
    res = 0.0
    pull_G = np.einsum("Pi,Qj,PQab->ijab", W.conj(), W, Y.right_gram)
    res = max(res, float(np.abs(pull_G - X.right_gram).max()))
    if X.left_gram is not None and Y.left_gram is not None:
        pull_L = np.einsum("Pi,Qj,PQab->ijab", W, W.conj(), Y.left_gram)
        res = max(res, float(np.abs(pull_L - X.left_gram).max()))
    units_A = X.A.units_embedded()
    for u in units_A:
        res = max(res, float(np.abs(W @ X.phi(u) - Y.phi(u) @ W).max()))
    units_B = X.B.units_embedded()
    for u in units_B:
        res = max(res, float(np.abs(W @ X.psi(u) - Y.psi(u) @ W).max()))
    return res
