import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fockrg import cutoffs
from fockrg.fock import DiscreteFockSpace, assemble_H
from fockrg.initial import (InitialSeriesConfig, ToyModel, V_term, beta_derivatives_initial,
                            initial_feshbach_matrix, initial_kernel, initial_terms, model_hamiltonian,
                            single_factor_norms)
from fockrg.kernel_space import Kernel, RadialGrid, project_support, sharp_norm, symmetrize

SMALL = RadialGrid(n_r=9, n_k=4)
SMALL_CFG = InitialSeriesConfig(grid=SMALL)


@pytest.mark.parametrize("z", [0.1, -0.05, 0.3j])
def test_series_matches_dense_reduction(reference_model, reference_w0, z):
    # states at the oracle's photon cap lose intermediate states, so compare below it
    grid = reference_w0.grid
    inner = DiscreteFockSpace(2, grid)
    red = np.flatnonzero(inner.reduced)
    F = initial_feshbach_matrix(reference_model, z, DiscreteFockSpace(3, grid))
    F = F[: inner.dim, : inner.dim][np.ix_(red, red)]
    H = assemble_H(reference_w0, z, inner).dense()[np.ix_(red, red)]
    assert np.max(np.abs(F - H)) <= 1e-9


def test_refinement_rows_converge(oracles):
    rows = oracles["initial_refinement"]["rows"]
    res = [r["max_residual"] for r in rows]
    assert [r["n_r"] for r in rows] == [17, 33, 65]
    assert res[0] > res[1] > res[2]
    assert res[1] <= 1e-9


def test_first_order_terms_are_the_interaction(reference_model):
    g = reference_model.g
    k = SMALL.k_nodes
    c = reference_model.quadratic_form(k)
    r = SMALL.r_nodes[:, None, None]
    ks = k[:, None] + k[None, :]
    t = initial_terms(reference_model, SMALL_CFG, z=np.array([0.1]), L_override=1)
    # outer cutoffs chi(r + created momenta) and chi(r + annihilated momenta)
    want20 = g * g * np.multiply.outer(c, c)[None] * cutoffs.chi(r + ks) * cutoffs.chi(r)
    want11 = (2 * g * g * np.multiply.outer(c, c.conj())[None]
              * cutoffs.chi(r + k[:, None]) * cutoffs.chi(r + k[None, :]))
    assert np.max(np.abs(t[(2, 0)][0] - want20)) <= 1e-20
    assert np.max(np.abs(t[(1, 1)][0] - want11)) <= 1e-20
    assert np.allclose(t[(0, 0)][0], SMALL.r_nodes - 0.1, atol=1e-16)


def test_linear_sector_first_order_vanishes_in_vacuum(reference_model):
    # the hopping has no ground-ground element, so one linear factor alone gives nothing
    assert not np.any(V_term([(1, 0, 0, 0)], reference_model, [0.0], SMALL))
    with pytest.raises(ValueError):
        V_term([(2, 1, 0, 0)], reference_model, [0.0], SMALL)


def test_unbalanced_tuple_gives_zero(reference_model):
    assert not np.any(V_term([(0, 1, 0, 0)], reference_model, [0.0], SMALL))


@settings(max_examples=10, deadline=None)
@given(st.complex_numbers(max_magnitude=0.25, allow_nan=False))
def test_taylor_samples_reproduce_direct_evaluation(zeta):
    model = ToyModel()
    w = initial_kernel(model, SMALL_CFG).kernel
    direct = initial_terms(model, SMALL_CFG, z=np.array([zeta]))
    got = w.at(zeta)
    for key, arr in direct.items():
        want = project_support(symmetrize(Kernel(*key, arr[0], SMALL))).values
        assert np.max(np.abs(got[key].values - want)) <= 1e-12


def test_even_in_the_coupling():
    a = initial_kernel(ToyModel(g=0.05), SMALL_CFG).kernel
    b = initial_kernel(ToyModel(g=-0.05), SMALL_CFG).kernel
    for key in a.comps:
        assert np.max(np.abs(a.comps[key] - b.comps[key])) <= 1e-15


@pytest.mark.parametrize("z", [0.0, 0.2, -0.25])
def test_real_z_gives_hermitian_kernels(z):
    t = initial_terms(ToyModel(beta=0.7), SMALL_CFG, z=np.array([z]))
    w20 = project_support(symmetrize(Kernel(2, 0, t[(2, 0)][0], SMALL)))
    w02 = project_support(symmetrize(Kernel(0, 2, t[(0, 2)][0], SMALL)))
    w11 = Kernel(1, 1, t[(1, 1)][0], SMALL)
    assert np.max(np.abs(w20.adjoint().values - w02.values)) <= 1e-15
    assert np.max(np.abs(w11.adjoint().values - w11.values)) <= 1e-15
    assert np.max(np.abs(t[(0, 0)][0].imag)) <= 1e-15


def test_zero_coupling_is_free():
    res = initial_kernel(ToyModel(g=0.0), SMALL_CFG)
    assert res.kernel.is_free()
    assert res.certificate.tail.interaction == 0.0


def test_coupling_above_limit_is_rejected():
    with pytest.raises(ValueError, match="g_max"):
        initial_kernel(ToyModel(g=0.2), SMALL_CFG)


@pytest.mark.parametrize("kw", [{"atom_dim": 1}, {"cutoff": 0.0}, {"H_at": np.diag([0.0, 2.0])},
                                {"H_at": np.array([[0.0, 0.1], [0.1, 1.0]])}])
def test_model_validation(kw):
    with pytest.raises(ValueError):
        ToyModel(**kw)


@pytest.mark.parametrize("kw", [{"L_max": 1}, {"L_int": 5}, {"radius": 0.6}, {"M_max": 1}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        InitialSeriesConfig(**kw)


def test_model_hamiltonian_is_hermitian_and_parity_preserving():
    model = ToyModel(beta=0.4, atom_dim=3)
    space = DiscreteFockSpace(2, SMALL)
    H = model_hamiltonian(model, space).toarray()
    assert np.max(np.abs(H - H.conj().T)) <= 1e-16
    par = np.kron((-1.0) ** np.arange(3), (-1.0) ** space.number)
    assert not np.any(H[np.not_equal.outer(par, par)])


def test_vacuum_tail_shrinks_with_more_orders():
    model = ToyModel()
    tails = [initial_kernel(model, InitialSeriesConfig(grid=SMALL, L_max=L)).certificate.tail.vacuum
             for L in (2, 3, 4)]
    assert tails[0] > tails[1] > tails[2] > 0.0


def test_single_factor_norms_scale_with_coupling():
    a = single_factor_norms(ToyModel(g=0.05), SMALL)
    b = single_factor_norms(ToyModel(g=0.025), SMALL)
    assert b[(1, 0)] == pytest.approx(a[(1, 0)] / 2)
    assert b[(1, 1)] == pytest.approx(a[(1, 1)] / 4)


def test_beta_derivatives_of_beta_independent_model():
    model = ToyModel(coupling_fn=lambda k, b: k, linear_fn=lambda k, b: k)
    out = beta_derivatives_initial(model, SMALL_CFG, k=2, h=0.1)
    for l in (1, 2):
        assert all(np.max(np.abs(v)) <= 1e-12 for v in out["derivatives"][l].values())
    with pytest.raises(ValueError):
        beta_derivatives_initial(model, SMALL_CFG, k=5)


@pytest.mark.parametrize("t", [0.5, 2.0])
def test_terms_are_multilinear_in_the_form_factors(t):
    base = ToyModel()
    scaled = base.with_(coupling=t * base.coupling, linear=t * base.linear)
    tup = [(0, 0, 0, 1), (0, 1, 0, 1), (0, 1, 0, 0)]
    z = np.array([0.1, 0.2j])
    a = V_term(tup, base, z, SMALL)
    b = V_term(tup, scaled, z, SMALL)
    # two linear factors and one quadratic one
    assert np.any(a)
    assert np.max(np.abs(b - t**4 * a)) <= 1e-13 * np.max(np.abs(b))


def test_beta_derivative_is_stable_under_stencil_halving():
    cfg = InitialSeriesConfig(grid=SMALL, L_max=3)
    out = beta_derivatives_initial(ToyModel(beta=0.3), cfg, k=1, h=0.05)
    assert out["stability"][1] <= 1e-6


def test_one_more_order_stays_inside_the_tail():
    model = ToyModel()
    lo = initial_kernel(model, InitialSeriesConfig(grid=SMALL, L_int=2, L_max=4))
    hi = initial_kernel(model, InitialSeriesConfig(grid=SMALL, L_int=3, L_max=4))
    for j in range(lo.kernel.z.size):
        a, b = lo.kernel.sample(j), hi.kernel.sample(j)
        change = sum(a.xi ** -sum(key) * sharp_norm(a[key] - b[key]) for key in a.interaction())
        assert 0.0 < change <= lo.certificate.tail.interaction
