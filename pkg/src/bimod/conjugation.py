"""Both directions of the index <-> conjugation equivalence.

Solutions of the conjugate equations are stored as vectors in the interior
tensor products Y (x)_A X and X (x)_B Y (quotient coordinates); the equation
maps are assembled by contracting the lifted coordinates against the product
Gram tensors, never materializing the full pre-quotient Gram.

Convention: in the two equations the tensor product is applied before the
composition, i.e. the map checked on X is x -> (Rbar* (x) 1_X)(x (x) R).
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
    StructureError,
    hermitian_part,
)
from .bimodule import (
    FrameSet,
    HilbertBimodule,
    ModuleOperator,
    contragredient,
    frame_operator,
    left_tight_frame,
    tensor,
    tensor_lift,
    tensor_push,
    tight_frame,
    validate,
)
from .index import (
    CPMap,
    best_constants,
    extend_left_inner,
    module_operator_algebra,
    relative_commutant,
    right_index,
)


# -- solutions of the conjugate equations ---------------------------------------


@dataclass
class ConjugateSolution:
    """A conjugate pair (Y, R, Rbar) for X, with R in Y (x) X and Rbar in
    X (x) Y stored in the quotient coordinates of the attached tensor
    bimodules."""

    X: HilbertBimodule
    Y: HilbertBimodule
    ZR: HilbertBimodule       # tensor(Y, X)
    ZRbar: HilbertBimodule    # tensor(X, Y)
    R: np.ndarray
    Rbar: np.ndarray
    residual_1: float
    residual_2: float
    dim_rel: float

    @property
    def norm_R(self) -> float:
        return self.ZR.vector_norm(self.R)

    @property
    def norm_Rbar(self) -> float:
        return self.ZRbar.vector_norm(self.Rbar)


def _equation_maps(X: HilbertBimodule, Y: HilbertBimodule,
                   r_full: np.ndarray, rbar_full: np.ndarray):
    """The two composites of the conjugate equations as matrices on X and Y.

    ``r_full`` has shape (dY, dX) (coordinates of R in Y (x) X), ``rbar_full``
    (dX, dY).  Equation one sends x to sum phi_X((Rbar | x (x) f_u)_A) e_s
    over the expansion of R; equation two is symmetric.
    """
    GX, GY = X.right_gram, Y.right_gram
    phiYG = np.einsum("PpAB,ABwu->Ppwu", GX, Y.left_action, optimize=True)
    AG = np.einsum("PU,Ppwu,Uwab->puab", rbar_full.conj(), phiYG, GY, optimize=True)
    phiAG = np.einsum("tuab,abis->tuis", AG, X.left_action, optimize=True)
    E1 = np.einsum("us,tuis->it", r_full, phiAG, optimize=True)

    phiXG = np.einsum("UuAB,ABwp->Uuwp", GY, X.left_action, optimize=True)
    BG = np.einsum("UP,Uuwp,Pwab->upab", r_full.conj(), phiXG, GX, optimize=True)
    phiBG = np.einsum("tpab,abjq->tpjq", BG, Y.left_action, optimize=True)
    E2 = np.einsum("pq,tpjq->jt", rbar_full, phiBG, optimize=True)
    return E1, E2


def _intertwiner_residual(Z: HilbertBimodule, vec: np.ndarray) -> float:
    """How far a vector of a C-C bimodule is from intertwining the two unit
    actions, relative to its norm."""
    units = Z.A.units_embedded()
    scale = max(Z.vector_norm(vec), 1e-300)
    res = 0.0
    for u in units:
        diff = (Z.phi(u) - Z.psi(u)) @ vec
        res = max(res, Z.vector_norm(diff))
    return res / scale


@dataclass
class VerifyReport:
    residual_1: float
    residual_2: float
    dim_rel: float
    intertwine_R: float
    intertwine_Rbar: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual_1 <= self.tol and self.residual_2 <= self.tol

    def as_dict(self) -> dict:
        return {"passed": self.passed, "residual_1": self.residual_1,
                "residual_2": self.residual_2, "dim_rel": self.dim_rel,
                "intertwine_R": self.intertwine_R,
                "intertwine_Rbar": self.intertwine_Rbar}


def verify_conjugate(X: HilbertBimodule, Y: HilbertBimodule, R, Rbar,
                     tol: float = 1e-8, ZR: HilbertBimodule | None = None,
                     ZRbar: HilbertBimodule | None = None,
                     intertwine_tol: float = 1e-6) -> VerifyReport:
    """Evaluate both conjugate-equation residuals for a candidate pair.

    ``R`` and ``Rbar`` are quotient coordinates in tensor(Y, X) and
    tensor(X, Y).  Candidates that fail to intertwine the unit actions are
    rejected: they are not morphisms from the units in the first place.
    """
    ZR = ZR if ZR is not None else tensor(Y, X)
    ZRbar = ZRbar if ZRbar is not None else tensor(X, Y)
    R = np.asarray(R, dtype=complex).reshape(-1)
    Rbar = np.asarray(Rbar, dtype=complex).reshape(-1)
    int_R = _intertwiner_residual(ZR, R)
    int_Rbar = _intertwiner_residual(ZRbar, Rbar)
    if max(int_R, int_Rbar) > intertwine_tol:
        raise ContractError(
            f"candidate does not intertwine the unit actions "
            f"(residuals {int_R:.3g}, {int_Rbar:.3g})")
    r_full = tensor_lift(ZR, R).reshape(Y.dim, X.dim)
    rbar_full = tensor_lift(ZRbar, Rbar).reshape(X.dim, Y.dim)
    E1, E2 = _equation_maps(X, Y, r_full, rbar_full)
    res1 = X.op_norm(E1 - np.eye(X.dim))
    res2 = Y.op_norm(E2 - np.eye(Y.dim))
    dim_rel = ZR.vector_norm(R) * ZRbar.vector_norm(Rbar)
    return VerifyReport(res1, res2, dim_rel, int_R, int_Rbar, tol)


def build_conjugate(X: HilbertBimodule, right_frame: FrameSet | None = None,
                    left_frame: FrameSet | None = None,
                    tol: float = 1e-8) -> ConjugateSolution:
    """Solve the conjugate equations with Y = the contragredient of X:
    Rbar = sum_i u_i (x) conj(u_i) over a right tight frame, R = sum_j
    conj(v_j) (x) v_j over a left tight frame."""
    X._need_left()
    if right_frame is None:
        right_frame = tight_frame(X)
    if left_frame is None:
        left_frame = left_tight_frame(X)
    if right_frame.residual > 1e-6 or left_frame.residual > 1e-6:
        raise ContractError("frames are not tight enough to solve the equations")
    Y = contragredient(X)
    ZR, ZRbar = tensor(Y, X), tensor(X, Y)
    U, V = right_frame.coords, left_frame.coords
    rbar_full = np.einsum("ip,iq->pq", U, U.conj())
    r_full = np.einsum("jp,jq->pq", V.conj(), V)
    R = tensor_push(ZR, r_full.reshape(-1))
    Rbar = tensor_push(ZRbar, rbar_full.reshape(-1))
    rep = verify_conjugate(X, Y, R, Rbar, tol=tol, ZR=ZR, ZRbar=ZRbar)
    return ConjugateSolution(X=X, Y=Y, ZR=ZR, ZRbar=ZRbar, R=R, Rbar=Rbar,
                             residual_1=rep.residual_1, residual_2=rep.residual_2,
                             dim_rel=rep.dim_rel)


# -- recovering the left inner product ------------------------------------------


def inner_from_conjugate(X: HilbertBimodule, Y: HilbertBimodule, R, Rbar,
                         ZR: HilbertBimodule | None = None,
                         ZRbar: HilbertBimodule | None = None,
                         tol: float = 1e-8) -> np.ndarray:
    """Left Gram tensor induced by a verified solution:
    _A(e_p|e_q) = Rbar* (theta^r_{e_p,e_q} (x) 1_Y) Rbar.

    The returned tensor makes X bi-Hilbertian of finite index; feeding the
    solution produced by ``build_conjugate`` recovers the original left Gram.
    """
    ZR = ZR if ZR is not None else tensor(Y, X)
    ZRbar = ZRbar if ZRbar is not None else tensor(X, Y)
    verify_conjugate(X, Y, R, Rbar, tol=tol, ZR=ZR, ZRbar=ZRbar)
    rbar_full = tensor_lift(ZRbar, np.asarray(Rbar, dtype=complex)).reshape(X.dim, Y.dim)
    GX, GY = X.right_gram, Y.right_gram
    psiG = np.einsum("qsab,abip->qsip", GX, X.right_action, optimize=True)
    phiYG = np.einsum("PpAB,ABwu->Ppwu", GX, Y.left_action, optimize=True)
    L = np.einsum("PU,qsip,su,Piwu,Uwab->pqab",
                  rbar_full.conj(), psiG, rbar_full, phiYG, GY, optimize=True)
    # clean Hermitian symmetry of the result
    return 0.5 * (L + L.conj().transpose(1, 0, 3, 2))


def conjugate_pair_identities(X: HilbertBimodule, Y: HilbertBimodule, R, Rbar,
                              left_gram: np.ndarray,
                              ZR: HilbertBimodule | None = None,
                              ZRbar: HilbertBimodule | None = None,
                              seed: int = 0, trials: int = 20) -> dict:
    """Residuals of Rbar*(x (x) V xbar') = _A(x|x') and R*(V xbar (x) x') =
    (x|x')_B after identifying Y with the contragredient via
    V(xbar) = lambda_x* Rbar."""
    ZR = ZR if ZR is not None else tensor(Y, X)
    ZRbar = ZRbar if ZRbar is not None else tensor(X, Y)
    r_full = tensor_lift(ZR, np.asarray(R, dtype=complex)).reshape(Y.dim, X.dim)
    rbar_full = tensor_lift(ZRbar, np.asarray(Rbar, dtype=complex)).reshape(X.dim, Y.dim)
    GX, GY = X.right_gram, Y.right_gram
    phiYG = np.einsum("rpAB,ABjq->rpjq", GX, Y.left_action, optimize=True)
    Vmat = np.einsum("pq,rpjq->jr", rbar_full, phiYG, optimize=True)
    phiXG = np.einsum("UuAB,ABwp->Uuwp", GY, X.left_action, optimize=True)
    rng = np.random.default_rng(seed)
    res_right = res_left = 0.0
    for _ in range(trials):
        x = rng.standard_normal(X.dim) + 1j * rng.standard_normal(X.dim)
        xp = rng.standard_normal(X.dim) + 1j * rng.standard_normal(X.dim)
        vx = Vmat @ x.conj()
        lhs_r = np.einsum("UP,Uuwp,Pwab,u,p->ab", r_full.conj(), phiXG, GX, vx, xp,
                          optimize=True)
        rhs_r = np.einsum("p,q,pqab->ab", x.conj(), xp, GX)
        res_right = max(res_right, float(np.abs(lhs_r - rhs_r).max()))
        vxp = Vmat @ xp.conj()
        lhs_l = np.einsum("PU,Ppwu,Uwab,p,u->ab", rbar_full.conj(), phiYG, GY, x, vxp,
                          optimize=True)
        rhs_l = np.einsum("p,q,pqab->ab", x, xp.conj(), np.asarray(left_gram))
        res_left = max(res_left, float(np.abs(lhs_l - rhs_l).max()))
    return {"right_identity_residual": res_right, "left_identity_residual": res_left}


# -- rescaling the left structure -------------------------------------------------


def rescale_left(X: HilbertBimodule, Q: np.ndarray,
                 tol: float = 1e-8) -> HilbertBimodule:
    """Replace the left inner product by _A(Q x | y) for Q positive invertible
    in the relative commutant (positivity taken with respect to the left
    inner product)."""
    X._need_left()
    Q = np.asarray(Q, dtype=complex)
    units = [X.phi(u) for u in X.A.units_embedded()]
    units += [X.psi(u) for u in X.B.units_embedded()]
    scale = max(float(np.abs(Q).max()), 1e-300)
    comm_res = max(float(np.abs(Q @ u - u @ Q).max()) for u in units) / scale
    if comm_res > tol:
        raise ContractError(f"Q is not in the relative commutant (residual {comm_res:.3g})")
    Qh = X.left_op_rep(Q)
    dev = float(np.abs(Qh - Qh.conj().T).max())
    if dev > tol * (1.0 + np.abs(Qh).max()):
        raise ContractError("Q is not self-adjoint for the left inner product")
    w = np.linalg.eigvalsh(hermitian_part(Qh))
    if w.min() <= RANK_TOL * max(float(w.max()), 1e-300):
        raise ContractError("Q is not positive invertible")
    L2 = np.einsum("rp,rqab->pqab", Q, X.left_gram)
    return X.with_left_gram(L2)


# -- minimal dimension --------------------------------------------------------------


@dataclass
class MinDimResult:
    dim_hat: float
    Q_star: np.ndarray
    evaluations: int
    budget_exhausted: bool
    restart_values: list[float]
    history: list[float]


def _rescaling_directions(X: HilbertBimodule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Real basis of trace-free self-adjoint directions in the relative
    commutant (left-inner-product involution), in the conjugated picture."""
    comm = relative_commutant(X)
    hats = [X.left_op_rep(c) for c in comm]
    cands = []
    for h in hats:
        cands.append(hermitian_part(h))
        cands.append(hermitian_part(1j * h))
    d = X.dim
    eye = np.eye(d) / np.sqrt(d)
    vecs = []
    for h in cands:
        h = h - np.trace(h) / d * np.eye(d)   # remove the flat scaling direction
        vecs.append(np.concatenate([h.real.reshape(-1), h.imag.reshape(-1)]))
    if not vecs:
        return np.zeros((0, d, d)), *X._gl_half()
    V = np.array(vecs)
    u, s, vh = np.linalg.svd(V, full_matrices=False)
    keep = s > 1e-9 * max(float(s.max()), 1e-300)
    basis = []
    for row in vh[keep]:
        basis.append(row[:d * d].reshape(d, d) + 1j * row[d * d:].reshape(d, d))
    sq, isq = X._gl_half()
    return np.array(basis) if basis else np.zeros((0, d, d)), sq, isq


def min_dimension(X: HilbertBimodule, seed: int = 0, restarts: int = 8,
                  budget: int = 5000, grad_step: float = 1e-5) -> MinDimResult:
    """Minimize the product of the two numerical indices over all left
    rescalings Q = exp(H), H trace-free self-adjoint in the relative
    commutant; returns the square root of the best value found.

    Multi-start descent with central-difference gradients; deterministic for
    a fixed seed.  When the evaluation budget runs out the best point so far
    is returned with ``budget_exhausted`` set.
    """
    X._need_left()
    basis, gl_sq, gl_isq = _rescaling_directions(X)
    nparams = len(basis)
    U = tight_frame(X).coords
    psi_bar = X.left_action.transpose(1, 0, 2, 3).conj()   # right action of X-bar
    d = X.dim
    evals = 0

    def objective(theta: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        if nparams:
            H = np.einsum("r,rij->ij", theta, basis)
            w, v = np.linalg.eigh(hermitian_part(H))
            Q = gl_isq @ ((v * np.exp(w)) @ v.conj().T) @ gl_sq
        else:
            Q = np.eye(d)
        LQ = np.einsum("rp,rqab->pqab", Q, X.left_gram)
        r_emb = np.einsum("mp,mq,pqab->ab", U, U.conj(), LQ, optimize=True)
        r_num = float(np.linalg.eigvalsh(hermitian_part(r_emb)).max())
        # left frame of the rescaled structure via the contragredient
        S_bar = np.einsum("sqab,abis->iq", LQ, psi_bar, optimize=True)
        g_bar = hermitian_part(np.einsum("pqaa->pq", LQ))
        wb, vb = np.linalg.eigh(g_bar)
        wb = np.clip(wb, 1e-300, None)
        sqb = (vb * np.sqrt(wb)) @ vb.conj().T
        isqb = (vb / np.sqrt(wb)) @ vb.conj().T
        Sh = hermitian_part(sqb @ S_bar @ isqb)
        ws, vs = np.linalg.eigh(Sh)
        ws = np.clip(ws, 1e-300, None)
        S_isqrt = isqb @ ((vs / np.sqrt(ws)) @ vs.conj().T) @ sqb
        Fr = S_isqrt.T
        # the left index sums the frame in the left Gram of the contragredient,
        # which is the (Q-independent) right Gram of X
        l_emb = np.einsum("mp,mq,pqab->ab", Fr, Fr.conj(), X.right_gram, optimize=True)
        l_num = float(np.linalg.eigvalsh(hermitian_part(l_emb)).max())
        return r_num * l_num

    rng = np.random.default_rng(seed)
    best_theta = np.zeros(nparams)
    best_val = objective(best_theta)
    history = [best_val]
    restart_values = []
    exhausted = False
    for restart in range(restarts):
        if evals >= budget:
            exhausted = True
            break
        theta = (np.zeros(nparams) if restart == 0
                 else 0.4 * rng.standard_normal(nparams))
        if nparams == 0:
            restart_values.append(best_val)
            break
        f = objective(theta)
        lr = 0.25
        while evals + 2 * nparams + 1 <= budget:
            grad = np.zeros(nparams)
            for i in range(nparams):
                e = np.zeros(nparams)
                e[i] = grad_step
                grad[i] = (objective(theta + e) - objective(theta - e)) / (2 * grad_step)
            gnorm = float(np.linalg.norm(grad))
            if gnorm < 1e-9:
                break
            step, moved = lr, False
            while step > 1e-12 and evals < budget:
                cand = theta - step * grad / gnorm
                fc = objective(cand)
                if fc < f - 1e-14:
                    theta, f, moved = cand, fc, True
                    lr = min(1.0, step * 1.5)
                    break
                step *= 0.5
            if not moved:
                break
            if f < best_val:
                best_val, best_theta = f, theta.copy()
            history.append(min(history[-1], f))
        restart_values.append(f)
        if evals >= budget:
            exhausted = True
    if nparams:
        H = np.einsum("r,rij->ij", best_theta, basis)
        w, v = np.linalg.eigh(hermitian_part(H))
        Q_star = gl_isq @ ((v * np.exp(w)) @ v.conj().T) @ gl_sq
    else:
        Q_star = np.eye(d, dtype=complex)
    return MinDimResult(dim_hat=float(np.sqrt(best_val)), Q_star=Q_star,
                        evaluations=evals, budget_exhausted=exhausted,
                        restart_values=restart_values, history=history)


# -- characterization of the index by complete positivity ---------------------------


@dataclass
class CPCharacterization:
    choi_min_at_index: float
    passed_at_index: bool
    perturbed: list[dict]
    minimality_certified: bool
    tol: float

    def as_dict(self) -> dict:
        return {"choi_min_at_index": self.choi_min_at_index,
                "passed_at_index": self.passed_at_index,
                "minimality_certified": self.minimality_certified,
                "perturbed": self.perturbed}


def cp_characterization(X: HilbertBimodule, delta: float = 1e-3,
                        tol: float = 1e-8, seed: int = 7) -> CPCharacterization:
    """The left index element is the smallest central multiplier c for which
    T -> psi(c) phi(F(T)) - T is completely positive on K(X_B).

    Checks the Choi blocks at c = l-ind and certifies minimality by scaling
    each central coefficient in the support down by ``delta`` and requiring
    the Choi matrix to leave the positive cone.
    """
    X._need_left()
    F = extend_left_inner(X)
    rep = right_index(X)
    alg = module_operator_algebra(X, seed=seed)
    pre = []   # op_rep picture of phi(F(unit)) per block
    for u_blk in alg.units:
        k = u_blk.shape[0]
        blk = np.empty((k, k, X.dim, X.dim), dtype=complex)
        for i in range(k):
            for j in range(k):
                T = X.op_unrep(u_blk[i, j])
                blk[i, j] = X.op_rep(X.phi(F.apply(T)))
        pre.append(blk)

    def choi_min(c: AlgebraElement) -> float:
        psi_hat = X.op_rep(X.psi(c))
        mins = []
        for blk, u_blk in zip(pre, alg.units):
            k = blk.shape[0]
            img = np.einsum("ab,ijbc->ijac", psi_hat, blk) - u_blk
            choi = img.transpose(0, 2, 1, 3).reshape(k * X.dim, k * X.dim)
            mins.append(float(np.linalg.eigvalsh(hermitian_part(choi)).min()))
        return min(mins)

    mn = choi_min(rep.l_ind)
    scale = 1.0 + rep.l_num
    passed = mn >= -tol * scale
    perturbed = []
    certified = True
    for k in range(X.B.num_blocks):
        coeff = float(np.real(np.trace(rep.l_ind.blocks[k])) / X.B.blocks[k])
        if coeff <= RANK_TOL * max(rep.l_num, 1e-300):
            continue
        c2 = rep.l_ind.copy()
        c2.blocks[k] = (1.0 - delta) * c2.blocks[k]
        mn_k = choi_min(c2)
        broke = mn_k < -tol * scale
        certified = certified and broke
        perturbed.append({"block": k, "choi_min": mn_k, "non_psd": broke})
    return CPCharacterization(choi_min_at_index=mn, passed_at_index=passed,
                              perturbed=perturbed, minimality_certified=certified,
                              tol=tol)


# -- Morita equivalence ---------------------------------------------------------------


@dataclass
class MoritaReport:
    is_morita: bool
    right_full: bool
    action_surjective: bool
    candidate_valid: bool
    r_ind_identity_residual: float
    l_ind_identity_residual: float
    min_dim: float | None
    conditions_agree: bool

    def as_dict(self) -> dict:
        return {"is_morita": self.is_morita, "right_full": self.right_full,
                "action_surjective": self.action_surjective,
                "candidate_valid": self.candidate_valid,
                "r_ind_identity_residual": self.r_ind_identity_residual,
                "l_ind_identity_residual": self.l_ind_identity_residual,
                "min_dim": self.min_dim, "conditions_agree": self.conditions_agree}


def morita_check(X: HilbertBimodule, run_min_dim: bool = True,
                 seed: int = 0, budget: int = 3000, tol: float = 1e-7) -> MoritaReport:
    """Decide whether X can carry a left inner product making it a strong
    Morita equivalence: both index elements become identities.

    Tests the candidate _A(x|y) = phi^{-1}(theta^r_{x,y}), which exists iff
    the left action fills all of K(X_B); cross-checks the minimal dimension
    when X is bi-Hilbertian (it must be 1 for an equivalence).
    """
    d = X.dim
    # fullness of the right inner product
    span = X.right_gram.reshape(d * d, -1)
    right_full = int(np.linalg.matrix_rank(span, tol=1e-9)) == X.B.linear_dim
    # phi(A) = K(X_B): compare dimensions of phi(A) and of the commutant of psi(B)
    phis = np.array([X.phi(u) for u in X.A.units_embedded()])
    kx = relative_commutant_of_right_action(X)
    dim_phi = int(np.linalg.matrix_rank(phis.reshape(len(phis), -1), tol=1e-9))
    surjective = dim_phi == len(kx)

    candidate_valid = False
    res_r = res_l = np.inf
    if surjective:
        flat = phis.reshape(len(phis), -1)
        L = np.zeros((d, d, X.A.rep_dim, X.A.rep_dim), dtype=complex)
        units = X.A.units_embedded()
        ok = True
        for p in range(d):
            for q in range(d):
                theta = X.rank_one(np.eye(d)[p], np.eye(d)[q]).reshape(-1)
                coeff, *_ = np.linalg.lstsq(flat.T, theta, rcond=None)
                if np.abs(flat.T @ coeff - theta).max() > 1e-8:
                    ok = False
                    break
                L[p, q] = np.einsum("u,uab->ab", coeff, units)
            if not ok:
                break
        if ok:
            cand = X.with_left_gram(L)
            rep_v = validate(cand, tol=1e-7)
            if rep_v.passed:
                candidate_valid = True
                idx = right_index(cand)
                res_r = (idx.r_ind - X.A.identity()).norm()
                res_l = (idx.l_ind - X.B.identity()).norm()
    is_morita = candidate_valid and res_r <= tol and res_l <= tol and right_full
    min_dim = None
    if run_min_dim:
        target = X if X.is_bihilbertian else None
        if target is None and candidate_valid:
            target = X.with_left_gram(L)
        if target is not None:
            min_dim = min_dimension(target, seed=seed, budget=budget).dim_hat
    agree = True
    if min_dim is not None:
        agree = is_morita == (abs(min_dim - 1.0) <= 1e-3)
    return MoritaReport(is_morita=is_morita, right_full=right_full,
                        action_surjective=surjective,
                        candidate_valid=candidate_valid,
                        r_ind_identity_residual=float(res_r),
                        l_ind_identity_residual=float(res_l),
                        min_dim=min_dim, conditions_agree=agree)


def relative_commutant_of_right_action(X: HilbertBimodule) -> np.ndarray:
    """Basis of K(X_B) = L(X_B): all matrices commuting with the right action."""
    from .index import commutant_of
    return commutant_of([X.psi(u) for u in X.B.units_embedded()], X.dim)


# -- composing conjugates over a tensor product ---------------------------------------


def tensor_conjugate(sol_X: ConjugateSolution, sol_Y: ConjugateSolution,
                     tol: float = 1e-7) -> ConjugateSolution:
    """Conjugate solution for X (x) Y with conjugate Ybar (x) Xbar, assembled
    from the two factor solutions by inserting each R into the middle leg."""
    X, x_conj = sol_X.X, sol_X.Y
    Y, y_conj = sol_Y.X, sol_Y.Y
    if X.B != Y.A:
        raise ContractError("middle algebras of the two solutions differ")
    Z = tensor(X, Y)
    W = tensor(y_conj, x_conj)
    r1 = tensor_lift(sol_X.ZR, sol_X.R).reshape(x_conj.dim, X.dim)
    r2 = tensor_lift(sol_Y.ZR, sol_Y.R).reshape(y_conj.dim, Y.dim)
    rbar1 = tensor_lift(sol_X.ZRbar, sol_X.Rbar).reshape(X.dim, x_conj.dim)
    rbar2 = tensor_lift(sol_Y.ZRbar, sol_Y.Rbar).reshape(Y.dim, y_conj.dim)

    VW = W.meta["tensor"]["V"]
    VZ = Z.meta["tensor"]["V"]
    # R = (1 (x) R_X (x) 1) R_Y  in  (Ybar (x) Xbar) (x) (X (x) Y)
    R_full = np.einsum("ab,cd->acdb", r2, r1).reshape(
        y_conj.dim * x_conj.dim, X.dim * Y.dim)
    R_wz = VW.conj().T @ R_full @ VZ.conj()
    # Rbar = (1 (x) Rbar_Y (x) 1) Rbar_X  in  (X (x) Y) (x) (Ybar (x) Xbar)
    Rbar_full = np.einsum("pq,uv->puvq", rbar1, rbar2).reshape(
        X.dim * Y.dim, y_conj.dim * x_conj.dim)
    Rbar_zw = VZ.conj().T @ Rbar_full @ VW.conj()

    ZR = tensor(W, Z)
    ZRbar = tensor(Z, W)
    R = tensor_push(ZR, R_wz.reshape(-1))
    Rbar = tensor_push(ZRbar, Rbar_zw.reshape(-1))
    rep = verify_conjugate(Z, W, R, Rbar, tol=tol, ZR=ZR, ZRbar=ZRbar)
    return ConjugateSolution(X=Z, Y=W, ZR=ZR, ZRbar=ZRbar, R=R, Rbar=Rbar,
                             residual_1=rep.residual_1, residual_2=rep.residual_2,
                             dim_rel=rep.dim_rel)
