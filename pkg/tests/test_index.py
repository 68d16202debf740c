import numpy as np
import pytest

from bimod import (
    MultiMatrixAlgebra,
    basic_construction,
    best_constants,
    column_bimodule,
    contragredient,
    expectation_cp_gap,
    extend_left_inner,
    fiber_decomposition,
    from_expectation,
    from_hilbert_space,
    from_weight_graph,
    identity_bimodule,
    index_element,
    invertibility_trichotomy,
    module_operator_algebra,
    relative_commutant,
    right_index,
    tight_frame,
)
from bimod.multimatrix import random_element

from helpers import (
    corpus,
    degenerate_action_bimodule,
    diag_expectation_m2,
    four_cycle_graph,
    random_bimodule,
    random_bimodule_family,
    random_posdef,
    random_positive_operator,
    two_block_expectation,
    well_conditioned,
)


# -- the extension map -----------------------------------------------------------


def test_extension_on_rank_ones():
    rng = np.random.default_rng(0)
    for X in random_bimodule_family(4, seed=11):
        F = extend_left_inner(X)
        for _ in range(12):
            x = rng.standard_normal(X.dim) + 1j * rng.standard_normal(X.dim)
            y = rng.standard_normal(X.dim) + 1j * rng.standard_normal(X.dim)
            lhs = F.apply(X.rank_one(x, y))
            rhs = X.left_inner(x, y)
            assert (lhs - rhs).norm() <= 1e-9 * (1 + rhs.norm())


def test_extension_identity_map_on_imprimitivity():
    # when _A(x|y) realizes the rank-one operator, F is the identity on K(X_B)
    X = column_bimodule(3)
    F = extend_left_inner(X)
    rng = np.random.default_rng(1)
    for _ in range(10):
        T = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        assert np.abs(F.apply(T).blocks[0] - T).max() < 1e-10


def test_extension_trace_formula():
    T = np.diag([1.0, 2.0, 3.0])
    X = from_hilbert_space(3, T)
    F = extend_left_inner(X)
    rng = np.random.default_rng(2)
    for _ in range(10):
        S = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        assert F.apply(S).blocks[0][0, 0] == pytest.approx(np.trace(T @ S), rel=1e-12)


def test_extension_bilinear_and_frame_independent():
    from bimod.bimodule import random_compact
    rng = np.random.default_rng(3)
    for X in random_bimodule_family(3, seed=19):
        F = extend_left_inner(X)
        a = random_element(X.A, rng)
        T = random_compact(X, rng)        # frame independence needs T in K(X_B)
        lhs = F.apply(X.phi(a) @ T)
        rhs = a * F.apply(T)
        assert (lhs - rhs).norm() < 1e-9 * (1 + rhs.norm())
        lhs2 = F.apply(T @ X.phi(a))
        rhs2 = F.apply(T) * a
        assert (lhs2 - rhs2).norm() < 1e-9 * (1 + rhs2.norm())
        # second frame from a gauged spanning set
        W = well_conditioned(X.dim, rng)
        F2 = extend_left_inner(X, tight_frame(X, spanning=W))
        assert (F.apply(T) - F2.apply(T)).norm() <= 1e-8 * (1 + F.apply(T).norm())


def test_extension_is_completely_positive():
    for name, X in corpus()[:8]:
        cp = extend_left_inner(X).as_cp_map()
        ok, mn = cp.is_completely_positive()
        assert ok, f"{name}: choi min {mn}"
        assert cp.is_hermitian_preserving()


def test_extension_central_multiplier():
    # F(phi(b)) = r-ind * b for central b
    for name, X in corpus()[:6]:
        F = extend_left_inner(X)
        r_ind = F.index_element()
        for z in range(X.A.num_blocks):
            b = X.A.zero()
            b.blocks[z] = np.eye(X.A.blocks[z])
            lhs = F.apply(X.phi(b))
            rhs = r_ind * b
            assert (lhs - rhs).norm() < 1e-9 * (1 + rhs.norm()), name


def test_pimsner_popa_lower_bound():
    rng = np.random.default_rng(4)
    for X in random_bimodule_family(3, seed=29):
        lam_p = best_constants(X, seed=0, samples=3000).lambda_prime_hat
        F = extend_left_inner(X)
        for _ in range(34):
            T = random_positive_operator(X, rng)
            resid = X.op_rep(X.phi(F.apply(T))) - lam_p * X.op_rep(T)
            mn = float(np.linalg.eigvalsh(0.5 * (resid + resid.conj().T)).min())
            assert mn >= -1e-8 * (1 + X.op_norm(T))


# -- index elements ---------------------------------------------------------------


def test_right_index_identity_weight():
    X = from_hilbert_space(3, np.eye(3))
    rep = right_index(X)
    assert rep.r_num == pytest.approx(3.0, abs=1e-12)
    assert rep.l_num == pytest.approx(3.0, abs=1e-12)


def test_right_index_trace_oracle():
    rng = np.random.default_rng(5)
    for _ in range(6):
        n = int(rng.integers(2, 7))
        T = random_posdef(n, rng)
        X = from_hilbert_space(n, T)
        rep = right_index(X)
        tr = float(np.trace(T).real)
        tri = float(np.trace(np.linalg.inv(T)).real)
        assert rep.r_num == pytest.approx(tr, rel=1e-9)
        assert rep.l_num == pytest.approx(tri, rel=1e-9)


def test_right_index_centrality_and_frame_independence():
    rng = np.random.default_rng(6)
    for name, X in corpus():
        rep = right_index(X)
        r_mat = rep.r_ind.embed()
        for _ in range(20):
            a = random_element(X.A, rng)
            ae = a.embed()
            assert np.abs(r_mat @ ae - ae @ r_mat).max() <= 1e-9 * (1 + a.norm()) * (1 + rep.r_num), name
        for trial in range(2):
            W = well_conditioned(X.dim, rng)
            F = extend_left_inner(X, tight_frame(X, spanning=W))
            alt = F.index_element()
            assert (alt - rep.r_ind).norm() <= 1e-8 * (1 + rep.r_num), name


def test_imprimitivity_index_elements_are_identities():
    X = column_bimodule(4)
    rep = right_index(X)
    assert (rep.r_ind - X.A.identity()).norm() < 1e-10
    assert (rep.l_ind - X.B.identity()).norm() < 1e-10


def test_index_norm_consistency():
    for name, X in corpus():
        rep = right_index(X)
        assert rep.r_num == pytest.approx(rep.r_ind.norm(), rel=1e-12)
        assert rep.r_num * rep.l_num >= 1.0 - 1e-9, name


def test_support_projection_bounds():
    for name, X in corpus()[:8]:
        rep = right_index(X)
        p = rep.p
        assert (p * p - p).norm() < 1e-10
        assert (rep.r_ind * p - rep.r_ind).norm() < 1e-9 * (1 + rep.r_num)


# -- best constants ----------------------------------------------------------------


def test_best_constants_equal_grams():
    X = column_bimodule(2)     # _A(x|x) and (x|x)_B have equal norms
    bc = best_constants(X, seed=0, samples=2000)
    assert bc.lambda_hat == pytest.approx(1.0, abs=1e-9)
    assert bc.lambda_prime_hat == pytest.approx(1.0, abs=1e-9)


def test_best_constants_rayleigh_oracle():
    T = np.diag([1.0, 2.0])
    X = from_hilbert_space(2, T)
    bc = best_constants(X, seed=0, samples=3000)
    assert bc.lambda_prime_hat == pytest.approx(1.0, abs=1e-8)
    assert bc.lambda_hat == pytest.approx(2.0, abs=1e-8)
    # one-sided certificates: sampled values bracket the true constants
    assert bc.lambda_prime_sampled >= 1.0 - 1e-12
    assert bc.lambda_sampled <= 2.0 + 1e-12


def test_best_constants_cp_gap_consistency():
    # contragredient of the expectation bimodule: lambda' tracks the CP gap
    spec = diag_expectation_m2()
    X, Y, _ = from_expectation(spec)
    gap = expectation_cp_gap(spec)
    bc = best_constants(Y, seed=0, samples=6000, refine_steps=600, top=4)
    assert abs(bc.lambda_prime_hat - gap) <= 0.05 * gap


# -- index element operator -----------------------------------------------------------


def test_index_element_examples():
    X = column_bimodule(3)
    op = index_element(X)
    assert np.abs(op.matrix - np.eye(3)).max() < 1e-10

    T = np.diag([1.0, 2.0])
    X2 = from_hilbert_space(2, T)
    op2 = index_element(X2)
    expect = np.trace(T) * np.trace(np.linalg.inv(T))
    assert np.abs(op2.matrix - expect * np.eye(2)).max() < 1e-10

    spec = diag_expectation_m2()
    Xe, _, _ = from_expectation(spec)
    ope = index_element(Xe)
    rep = right_index(Xe)
    expect_mat = Xe.psi(rep.l_ind) @ Xe.phi(rep.r_ind)
    assert np.abs(ope.matrix - expect_mat).max() < 1e-8
    ok, _ = Xe.op_is_positive(ope.matrix)
    assert ok
    for c in relative_commutant(Xe):
        assert np.abs(ope.matrix @ c - c @ ope.matrix).max() < 1e-8


# -- basic construction ----------------------------------------------------------------


def test_basic_construction_identity_case():
    X = column_bimodule(3)
    bco = basic_construction(X)
    rng = np.random.default_rng(7)
    for _ in range(10):
        T = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        assert np.abs(bco.phi_expectation(T) - T).max() < 1e-10


def test_basic_construction_normalized_trace():
    n = 3
    X = from_hilbert_space(n, np.eye(n))
    bco = basic_construction(X)
    rng = np.random.default_rng(8)
    for _ in range(10):
        S = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        assert np.abs(bco.phi_expectation(S) - np.trace(S) / n * np.eye(n)).max() < 1e-10


def test_basic_construction_dual_expectation_formula():
    # on the expectation bimodule, E(theta_{x,y}) = Ind[E]^{-1} x y*
    spec = diag_expectation_m2()
    X, _, _ = from_expectation(spec)
    bco = basic_construction(X)
    rep = right_index(X)
    ind_inv = np.linalg.inv(rep.r_ind.embed())
    rng = np.random.default_rng(9)
    units = X.A.units_embedded()     # coordinates of X = B index the units of B
    for _ in range(10):
        x = rng.standard_normal(X.dim) + 1j * rng.standard_normal(X.dim)
        y = rng.standard_normal(X.dim) + 1j * rng.standard_normal(X.dim)
        xm = np.einsum("p,pij->ij", x, units)
        ym = np.einsum("p,pij->ij", y, units)
        lhs = bco.expectation(X.rank_one(x, y)).embed()
        rhs = ind_inv @ xm @ ym.conj().T
        assert np.abs(lhs - rhs).max() < 1e-8


def test_basic_construction_properties():
    rng = np.random.default_rng(10)
    for name, X in corpus()[:8]:
        bco = basic_construction(X)
        lam = 1.0 / best_constants(X, seed=0, samples=3000).lambda_prime_hat
        scale = 1 + bco.F.index_element().norm()
        for _ in range(10):
            T = random_positive_operator(X, rng)
            e1 = bco.phi_expectation(T)
            assert X.op_norm(bco.phi_expectation(e1) - e1) <= 1e-9 * scale * (1 + X.op_norm(T))
            resid = lam * X.op_rep(X.phi(bco.F.apply(T))) - X.op_rep(T)
            assert np.linalg.eigvalsh(0.5 * (resid + resid.conj().T)).min() >= \
                -1e-8 * (1 + X.op_norm(T))
            a = random_element(X.A, rng)
            lhs = bco.phi_expectation(X.phi(a))
            rhs = X.phi(bco.p * a)
            assert X.op_norm(lhs - rhs) <= 1e-9 * (1 + a.norm()) * scale, name
        ok, mn = bco.as_cp_map().is_completely_positive()
        assert ok, f"{name}: choi min {mn}"


# -- fibers ---------------------------------------------------------------------------


def test_fibers_equality_case():
    X = from_hilbert_space(3, np.eye(3))
    rep = fiber_decomposition(X)
    assert len(rep.fibers) == 1
    assert rep.fibers[0].dimension == 9
    assert rep.fibers[0].bound == 9
    assert rep.passed


def test_fibers_imprimitivity():
    X = column_bimodule(3)
    rep = fiber_decomposition(X)
    assert all(f.dimension == 1 for f in rep.fibers)
    assert all(f.bound >= 1 for f in rep.fibers)
    assert rep.passed


def test_fibers_graph_matches_direct_commutant():
    rep = from_weight_graph(four_cycle_graph())
    X = rep.bimodule
    fib = fiber_decomposition(X)
    comm = relative_commutant(X)
    assert fib.commutant_dim == len(comm)
    for f in fib.fibers:
        z = X.A.zero()
        z.blocks[f.block] = np.eye(1)
        pz = X.phi(z)
        cut = np.array([pz @ c for c in comm])
        assert f.dimension == int(np.linalg.matrix_rank(cut.reshape(len(comm), -1),
                                                        tol=1e-9))
    assert fib.passed
    assert fib.left_adjoint_residual < 1e-8


def test_fibers_bound_on_random_modules():
    for X in random_bimodule_family(6, seed=37):
        rep = fiber_decomposition(X)
        assert rep.passed
        assert rep.left_adjoint_residual < 1e-7


# -- operator algebra recognition and trichotomy ----------------------------------------


def test_module_operator_algebra_shapes():
    X = from_hilbert_space(3, np.diag([1.0, 2.0, 3.0]))
    dec = module_operator_algebra(X)
    assert dec.algebra.blocks == (3,)
    X2, _, _ = from_expectation(diag_expectation_m2())
    dec2 = module_operator_algebra(X2)
    assert sum(k * k for k in dec2.algebra.blocks) == len(relative_commutant_of(X2))


def relative_commutant_of(X):
    from bimod.conjugation import relative_commutant_of_right_action
    return relative_commutant_of_right_action(X)


def test_invertibility_trichotomy_on_corpus():
    for name, X in corpus():
        out = invertibility_trichotomy(X)
        assert out["agree"], name
        assert out["r_ind_invertible"], name


def test_invertibility_trichotomy_degenerate():
    X = degenerate_action_bimodule()
    out = invertibility_trichotomy(X)
    assert out["agree"]
    assert not out["r_ind_invertible"]
    assert not out["phi_injective"]
    assert not out["left_inner_full"]


def test_finite_basis_smoke():
    # with a unital A the module always admits a normalized tight frame and
    # the index element lives in A itself
    for name, X in corpus()[:6]:
        fr = tight_frame(X)
        assert fr.residual < 1e-9
        rep = right_index(X)
        assert rep.r_ind.algebra == X.A
