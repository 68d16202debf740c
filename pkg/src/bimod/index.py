"""The index engine: extension of the left inner product to compact operators,
index elements and numerical indices, best norm-equivalence constants, the
Jones basic construction, and the fiber decomposition of the relative
commutant.

At finite dimension the compacts K(X_B) coincide with all adjointable
B-linear maps, so the extension map serves simultaneously as the norm and
strict extensions; maps are checked for complete positivity through Choi
blocks over an explicitly recognized matrix-unit decomposition of their
source algebra.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .multimatrix import (
    DEFAULT_TOL,
    RANK_TOL,
    AlgebraElement,
    ContractError,
    MultiMatrixAlgebra,
    StarAlgebraDecomposition,
    StructureError,
    decompose_star_algebra,
    hermitian_part,
    inverse_on_support,
    support_projection,
)
from .bimodule import (
    FrameSet,
    HilbertBimodule,
    ModuleOperator,
    contragredient,
    frame_operator,
    tight_frame,
)


# -- commutants and concrete operator algebras ---------------------------------


def _matrix_nullspace(rows: np.ndarray, scale: float, rel_tol: float = 1e-9) -> np.ndarray:
    """Null space with a threshold floored at the scale of the generators, so
    an all-noise system (e.g. commutators of identity actions) keeps its full
    null space."""
    _, s, vh = np.linalg.svd(rows, full_matrices=True)
    smax = max(float(s.max()), scale, 1e-300) if s.size else 1.0
    null_dim = int(np.sum(s <= rel_tol * smax)) + (vh.shape[0] - len(s))
    if null_dim == 0:
        return np.zeros((0, vh.shape[1]), dtype=complex)
    return vh.conj()[-null_dim:]


def commutant_of(mats, dim: int) -> np.ndarray:
    """Basis (stack) of all dim x dim matrices commuting with every matrix in
    ``mats``, via the null space of the stacked commutator system."""
    blocks = []
    eye = np.eye(dim)
    scale = 1e-300
    for K in mats:
        K = np.asarray(K, dtype=complex)
        scale = max(scale, float(np.linalg.norm(K, 2)))
        blocks.append(np.kron(K, eye) - np.kron(eye, K.T))
    rows = np.vstack(blocks)
    null = _matrix_nullspace(rows, scale)
    return null.reshape(-1, dim, dim)


def relative_commutant(X: HilbertBimodule) -> np.ndarray:
    """Matrices commuting with the left A-action and the right B-action
    (automatically adjointable at finite dimension); stack of shape (m, d, d)."""
    gens = [X.phi(u) for u in X.A.units_embedded()]
    gens += [X.psi(u) for u in X.B.units_embedded()]
    return commutant_of(gens, X.dim)


def module_operator_algebra(X: HilbertBimodule, seed: int = 7) -> StarAlgebraDecomposition:
    """L(X_B) = K(X_B) presented as a multimatrix algebra.

    The recognition happens in the standard-involution picture obtained by
    conjugating with the square root of the scalar Gram form; returned units
    live in that picture (use ``X.op_rep`` / ``X.op_unrep`` to translate).
    """
    basis = commutant_of([X.psi(u) for u in X.B.units_embedded()], X.dim)
    hat = np.array([X.op_rep(b) for b in basis])
    return decompose_star_algebra(hat, seed=seed)


# -- completely positive maps ---------------------------------------------------


@dataclass
class CPMap:
    """A linear map between multimatrix algebras, stored as the images of the
    source matrix units.

    ``unit_images[l]`` has shape (m_l, m_l, t, t): the image of the (i, j)
    unit of source block l, embedded in a faithful standard-involution
    representation of the target (the block-diagonal embedding for an abstract
    target, the Gram-conjugated picture for an operator-algebra target).
    """

    source: MultiMatrixAlgebra
    unit_images: list[np.ndarray]
    target: MultiMatrixAlgebra | None = None

    def apply(self, x: AlgebraElement) -> np.ndarray:
        """Image (in the target representation) of an abstract source element."""
        if x.algebra != self.source:
            raise ContractError("element does not belong to the source algebra")
        t = self.unit_images[0].shape[-1]
        out = np.zeros((t, t), dtype=complex)
        for l, img in enumerate(self.unit_images):
            out += np.einsum("ij,ijab->ab", x.blocks[l], img)
        return out

    def choi_blocks(self) -> list[np.ndarray]:
        """One Choi matrix per source block: [Phi(E_ij)]_{ij} in M_{m_l}(target)."""
        out = []
        for img in self.unit_images:
            m, _, t, _ = img.shape
            out.append(img.transpose(0, 2, 1, 3).reshape(m * t, m * t))
        return out

    def is_hermitian_preserving(self, tol: float = DEFAULT_TOL) -> bool:
        return all(np.abs(c - c.conj().T).max() <= tol * (1 + np.abs(c).max())
                   for c in self.choi_blocks())

    def choi_min_eig(self) -> float:
        mins = []
        for c in self.choi_blocks():
            mins.append(float(np.linalg.eigvalsh(hermitian_part(c)).min()))
        return min(mins)

    def is_completely_positive(self, tol: float = DEFAULT_TOL) -> tuple[bool, float]:
        mn = self.choi_min_eig()
        scale = max(max(np.abs(c).max() for c in self.choi_blocks()), 1e-300)
        return mn >= -tol * (1.0 + scale), mn


# -- the extension of the left inner product -----------------------------------


class LeftInnerExtension:
    """The positive A-bilinear extension of the left inner product to K(X_B):
    T -> sum_i _A(T u_i | u_i) over a normalized tight frame {u_i}.

    The value is frame independent; ``as_cp_map`` presents the map on an
    explicit matrix-unit decomposition of L(X_B) for Choi-based positivity
    checks.
    """

    def __init__(self, X: HilbertBimodule, frame: FrameSet | None = None):
        X._need_left()
        self.bimodule = X
        self.frame = frame if frame is not None else tight_frame(X)
        U = self.frame.coords
        # _A(T u_i | u_i) summed: precontract the frame into the left Gram
        self._pair = np.einsum("mq,pqab->mpab", U.conj(), X.left_gram)

    def apply_matrix(self, T: np.ndarray) -> np.ndarray:
        """F(T), embedded in M_{N_A}."""
        TU = self.frame.coords @ np.asarray(T, dtype=complex).T
        return np.einsum("mp,mpab->ab", TU, self._pair)

    def apply(self, T: np.ndarray) -> AlgebraElement:
        return self.bimodule.A.from_embedded(self.apply_matrix(T))

    def index_element(self) -> AlgebraElement:
        """F(1) = sum_i _A(u_i|u_i), the right index element."""
        return self.apply(np.eye(self.bimodule.dim))

    def as_cp_map(self, seed: int = 7) -> CPMap:
        alg = module_operator_algebra(self.bimodule, seed=seed)
        images = []
        for u_blk in alg.units:
            k = u_blk.shape[0]
            na = self.bimodule.A.rep_dim
            img = np.empty((k, k, na, na), dtype=complex)
            for i in range(k):
                for j in range(k):
                    img[i, j] = self.apply_matrix(self.bimodule.op_unrep(u_blk[i, j]))
            images.append(img)
        return CPMap(alg.algebra, images, target=self.bimodule.A)


def extend_left_inner(X: HilbertBimodule, frame: FrameSet | None = None) -> LeftInnerExtension:
    """Extend the left inner product to a positive A-bilinear map on K(X_B)."""
    return LeftInnerExtension(X, frame)


# -- index reports ---------------------------------------------------------------


@dataclass
class IndexReport:
    r_ind: AlgebraElement
    l_ind: AlgebraElement
    r_num: float
    l_num: float
    p: AlgebraElement
    q: AlgebraElement
    ind_x: ModuleOperator
    lambda_hat: float | None = None
    lambda_prime_hat: float | None = None

    def as_dict(self) -> dict:
        from .serde import encode_element
        out = {"r_num": self.r_num, "l_num": self.l_num,
               "r_ind": encode_element(self.r_ind), "l_ind": encode_element(self.l_ind),
               "p": encode_element(self.p), "q": encode_element(self.q)}
        if self.lambda_hat is not None:
            out["lambda_hat"] = self.lambda_hat
            out["lambda_prime_hat"] = self.lambda_prime_hat
        return out


def right_index(X: HilbertBimodule, rank_tol: float = RANK_TOL) -> IndexReport:
    """Index elements and numerical indices of a bi-Hilbertian bimodule.

    The right element is the frame sum of left inner products; the left half
    is the same computation on the contragredient.  Support projections come
    from a rank-tolerant spectral cut.
    """
    X._need_left()
    F = extend_left_inner(X)
    r_ind = F.index_element()
    Xbar = contragredient(X)
    Fbar = extend_left_inner(Xbar)
    l_ind = Fbar.index_element()
    r_num, l_num = r_ind.norm(), l_ind.norm()
    p = support_projection(r_ind, rank_tol)
    q = support_projection(l_ind, rank_tol)
    ind_mat = X.psi(l_ind) @ X.phi(r_ind)
    return IndexReport(r_ind=r_ind, l_ind=l_ind, r_num=r_num, l_num=l_num,
                       p=p, q=q, ind_x=ModuleOperator(X, ind_mat))


def index_element(X: HilbertBimodule) -> ModuleOperator:
    """The operator psi(l-ind) phi(r-ind) on X; positive and central in the
    relative commutant."""
    rep = right_index(X)
    return rep.ind_x


# -- best norm-equivalence constants ---------------------------------------------


@dataclass
class BestConstants:
    lambda_hat: float          # refined estimate of sup ||_A(x|x)|| / ||(x|x)_B||
    lambda_prime_hat: float    # refined estimate of inf of the same ratio
    lambda_sampled: float      # certified lower bound for the sup (an evaluated ratio)
    lambda_prime_sampled: float  # certified upper bound for the inf

    def as_tuple(self) -> tuple[float, float]:
        return self.lambda_hat, self.lambda_prime_hat


def _norm_ratio_batch(X: HilbertBimodule, vecs: np.ndarray) -> np.ndarray:
    num = np.einsum("sp,sq,pqab->sab", vecs, vecs.conj(), X.left_gram, optimize=True)
    den = np.einsum("sp,sq,pqab->sab", vecs.conj(), vecs, X.right_gram, optimize=True)
    top = np.linalg.eigvalsh(0.5 * (num + np.conj(np.swapaxes(num, 1, 2))))[:, -1]
    bot = np.linalg.eigvalsh(0.5 * (den + np.conj(np.swapaxes(den, 1, 2))))[:, -1]
    return np.real(top) / np.maximum(np.real(bot), 1e-300)


def _coordinate_descent(X: HilbertBimodule, x0: np.ndarray, sign: float,
                        steps: int) -> tuple[np.ndarray, float]:
    """Minimize sign * ratio by cyclic moves on the 2d real coordinates."""
    def val(v):
        return sign * float(_norm_ratio_batch(X, v[None, :])[0])

    x = x0 / np.linalg.norm(x0)
    best = val(x)
    h = 0.25
    d = len(x)
    used = 0
    while used < steps and h > 1e-8:
        improved = False
        for i in range(d):
            for delta in (h, -h, 1j * h, -1j * h):
                if used >= steps:
                    break
                cand = x.copy()
                cand[i] += delta
                cand /= np.linalg.norm(cand)
                v = val(cand)
                used += 1
                if v < best - 1e-15:
                    best, x = v, cand
                    improved = True
        if not improved:
            h *= 0.5
    return x, sign * best


def best_constants(X: HilbertBimodule, seed: int = 0, samples: int = 10000,
                   refine_steps: int = 400, top: int = 3) -> BestConstants:
    """Estimate the best constants lambda, lambda' comparing the two Gram
    norms, by seeded sampling plus coordinate-descent refinement.

    Every evaluated ratio is a certified one-sided bound: an upper bound for
    the infimum (lambda') and a lower bound for the supremum (lambda).
    """
    X._need_left()
    if X.dim == 0:
        raise ContractError("zero module")
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((samples, X.dim)) + 1j * rng.standard_normal((samples, X.dim))
    ratios = _norm_ratio_batch(X, vecs)
    order = np.argsort(ratios)
    lo_sampled = float(ratios[order[0]])
    hi_sampled = float(ratios[order[-1]])
    lo = lo_sampled
    for idx in order[:top]:
        _, v = _coordinate_descent(X, vecs[idx], +1.0, refine_steps)
        lo = min(lo, v)
    hi = hi_sampled
    for idx in order[-top:]:
        _, v = _coordinate_descent(X, vecs[idx], -1.0, refine_steps)
        hi = max(hi, v)
    return BestConstants(lambda_hat=hi, lambda_prime_hat=lo,
                         lambda_sampled=hi_sampled, lambda_prime_sampled=lo_sampled)


def index_report(X: HilbertBimodule, seed: int = 0, samples: int = 10000) -> IndexReport:
    """Full report: indices plus estimated best constants."""
    rep = right_index(X)
    bc = best_constants(X, seed=seed, samples=samples)
    rep.lambda_hat, rep.lambda_prime_hat = bc.lambda_hat, bc.lambda_prime_hat
    return rep


# -- Jones basic construction -----------------------------------------------------


@dataclass
class BasicConstruction:
    """The conditional expectation phi.E onto the left action, E = z' F."""

    bimodule: HilbertBimodule
    F: LeftInnerExtension
    p: AlgebraElement
    z_prime: AlgebraElement

    def expectation(self, T: np.ndarray) -> AlgebraElement:
        """E(T) = z' F(T) in A."""
        return self.z_prime * self.F.apply(T)

    def phi_expectation(self, T: np.ndarray) -> np.ndarray:
        """phi(E(T)) as an operator on X."""
        return self.bimodule.phi(self.expectation(T))

    def as_cp_map(self, seed: int = 7) -> CPMap:
        """phi.E as a map on the recognized operator algebra L(X_B)."""
        X = self.bimodule
        alg = module_operator_algebra(X, seed=seed)
        images = []
        for u_blk in alg.units:
            k = u_blk.shape[0]
            img = np.empty((k, k, X.dim, X.dim), dtype=complex)
            for i in range(k):
                for j in range(k):
                    T = X.op_unrep(u_blk[i, j])
                    img[i, j] = X.op_rep(self.phi_expectation(T))
            images.append(img)
        return CPMap(alg.algebra, images)


def basic_construction(X: HilbertBimodule, rank_tol: float = RANK_TOL) -> BasicConstruction:
    """E = z' F with z' the inverse of the right index element on its support;
    phi.E is a conditional expectation from K(X_B) onto phi(A)."""
    F = extend_left_inner(X)
    r_ind = F.index_element()
    p = support_projection(r_ind, rank_tol)
    z_prime = inverse_on_support(r_ind, rank_tol)
    return BasicConstruction(X, F, p, z_prime)


# -- fiber decomposition -----------------------------------------------------------


@dataclass
class Fiber:
    block: int
    dimension: int
    index_value: float
    bound: int

    @property
    def within_bound(self) -> bool:
        return self.dimension <= self.bound


@dataclass
class FiberReport:
    fibers: list[Fiber]
    commutant_dim: int
    lambda_prime: float
    left_adjoint_residual: float

    @property
    def passed(self) -> bool:
        return all(f.within_bound for f in self.fibers)

    def as_dict(self) -> dict:
        return {"passed": self.passed, "commutant_dim": self.commutant_dim,
                "lambda_prime": self.lambda_prime,
                "left_adjoint_residual": self.left_adjoint_residual,
                "fibers": [{"block": f.block, "dimension": f.dimension,
                            "index_value": f.index_value, "bound": f.bound,
                            "within_bound": f.within_bound} for f in self.fibers]}


def fiber_decomposition(X: HilbertBimodule, lambda_prime: float | None = None,
                        seed: int = 0) -> FiberReport:
    """Fibers of the bundle of bimodule endomorphisms over the centre of A.

    The relative commutant is cut by the images of the minimal central
    projections of A; each fiber dimension is checked against the square of
    the integer part of r-ind / lambda'.  The same commutant is verified to
    be closed under the left-inner-product adjoint.
    """
    X._need_left()
    comm = relative_commutant(X)
    if lambda_prime is None:
        lambda_prime = best_constants(X, seed=seed, samples=4000).lambda_prime_hat
    rep = right_index(X)
    fibers = []
    for k in range(X.A.num_blocks):
        z = X.A.zero()
        z.blocks[k] = np.eye(X.A.blocks[k])
        pz = X.phi(z)
        cut = np.einsum("ij,mjk->mik", pz, comm)
        dim = int(np.linalg.matrix_rank(cut.reshape(len(comm), -1), tol=1e-9))
        c_k = float(np.real(np.trace(rep.r_ind.blocks[k])) / X.A.blocks[k])
        bound = int(np.floor(c_k / lambda_prime + 1e-9)) ** 2
        fibers.append(Fiber(block=k, dimension=dim, index_value=c_k, bound=bound))
    # closure of the commutant under the left adjoint
    res = 0.0
    flat = comm.reshape(len(comm), -1)
    for M in comm:
        Mb = X.left_op_adjoint(M).reshape(-1)
        coeff, *_ = np.linalg.lstsq(flat.T, Mb, rcond=None)
        res = max(res, float(np.abs(flat.T @ coeff - Mb).max()))
    return FiberReport(fibers=fibers, commutant_dim=len(comm),
                       lambda_prime=lambda_prime, left_adjoint_residual=res)


# -- invertibility trichotomy -------------------------------------------------------


def invertibility_trichotomy(X: HilbertBimodule, rank_tol: float = RANK_TOL) -> dict:
    """Three independently evaluated conditions that must agree: full left
    inner product, invertible right index element, injective left action."""
    X._need_left()
    d, na = X.dim, X.A.rep_dim
    span = X.left_gram.reshape(d * d, na * na)
    full_rank = int(np.linalg.matrix_rank(span, tol=1e-9))
    # compare with the dimension of the block-diagonal subspace of M_{N_A}
    alg_dim = X.A.linear_dim
    left_full = full_rank == alg_dim
    rep = right_index(X)
    spec_min = min(float(np.linalg.eigvalsh(hermitian_part(b)).min())
                   for b in rep.r_ind.blocks)
    invertible = spec_min > rank_tol * max(rep.r_num, 1e-300)
    phis = np.array([X.phi(u) for u in X.A.units_embedded()])
    injective = int(np.linalg.matrix_rank(phis.reshape(len(phis), -1), tol=1e-9)) == alg_dim
    return {"left_inner_full": bool(left_full),
            "r_ind_invertible": bool(invertible),
            "phi_injective": bool(injective),
            "agree": left_full == invertible == injective}
