import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fockrg import cutoffs
from fockrg.feshbach import FeshbachPair, feshbach_map
from fockrg.fock import DiscreteFockSpace, assemble_H, free_field
from fockrg.initial import InitialSeriesConfig, ToyModel, initial_kernel
from fockrg.kernel_space import Kernel, KernelSequence, RadialGrid, SampledSequence, sharp_norm
from fockrg.rg import (BallViolation, _certificate, NewtonError, RGConfig, SpectralMap, W_op_matrix, E_of,
                       contraction_report, dilation_one_particle, invert_E, renormalize,
                       renormalize_sharp, second_quantize, v_term)
from fockrg.series import index_tuples

SMALL = RadialGrid(n_r=9, n_k=4)


@pytest.fixture(scope="module")
def small_w0():
    return initial_kernel(ToyModel(g=0.1), InitialSeriesConfig(grid=SMALL)).kernel


@pytest.mark.parametrize("rho", [0.1, 0.25])
def test_dilation_is_exact_for_cubics(rho):
    grid = RadialGrid()
    c = np.array([0.3, -1.0, 2.0, 0.5])
    f = lambda k: np.polynomial.polynomial.polyval(k, c) * (k <= 1.0)
    s = np.sqrt(grid.mu)
    got = dilation_one_particle(grid, rho) @ (s * f(grid.k_nodes))
    want = s * rho**-1.5 * f(grid.k_nodes / rho)
    assert np.max(np.abs(got - want)) <= 1e-12


def test_second_quantization_is_multiplicative():
    space = DiscreteFockSpace(3, SMALL)
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    B = rng.normal(size=(4, 4))
    GA, GB, GAB = (second_quantize(x, space).toarray() for x in (A, B, A @ B))
    # number preserving, so the cap does not truncate anything
    assert np.max(np.abs(GA @ GB - GAB)) <= 1e-12
    assert np.max(np.abs(second_quantize(np.eye(4), space).toarray() - np.eye(space.dim))) <= 1e-15


def test_second_quantization_of_a_diagonal():
    space = DiscreteFockSpace(3, SMALL)
    d = np.array([2.0, -1.0, 0.5, 3.0])
    G = second_quantize(np.diag(d), space).toarray()
    want = [np.prod(d[list(s)]) if s else 1.0 for s in space.basis]
    assert np.max(np.abs(G - np.diag(want))) <= 1e-14


def test_vacuum_kernel_operator_is_the_free_field():
    space = DiscreteFockSpace(2, SMALL)
    M = W_op_matrix(Kernel.from_function(0, 0, lambda r: r, SMALL), 0, 0, 0.0, space=space).toarray()
    want = np.where(space.reduced, space.energies, 0.0)
    assert np.max(np.abs(M - np.diag(want))) <= 1e-15
    assert np.allclose(free_field(space).dense().diagonal(), space.energies)
    with pytest.raises(ValueError):
        W_op_matrix(Kernel.zeros(1, 1, SMALL), 0, 0, 0.0, K_ext=(0.1,), space=space)


def test_free_kernel_is_a_fixed_point_through_the_general_path():
    z = SampledSequence.contour()
    comps = {(0, 0): SMALL.r_nodes[None, :] - z[:, None], (2, 0): np.zeros((16, 9, 4, 4))}
    w = SampledSequence(z, comps, 0.2, grid=SMALL)
    assert not w.is_free()
    step = renormalize(w)
    assert np.max(np.abs(step.zetas - 0.1 * z)) <= 1e-15
    assert np.max(np.abs(step.kernel.comps[(0, 0)] - comps[(0, 0)])) <= 1e-14
    assert not np.any(step.kernel.comps.get((2, 0), 0.0))


def test_free_shortcut_is_exact():
    step = renormalize(SampledSequence.free(SMALL))
    assert step.kernel.is_free()
    assert step.certificate.tail.vacuum == 0.0


@settings(max_examples=25, deadline=None)
@given(z=st.complex_numbers(max_magnitude=0.5, allow_nan=False))
def test_spectral_parameter_inversion(z, small_w0):
    res = invert_E(small_w0, 0.1, z)
    assert abs(E_of(small_w0, res.zeta) / 0.1 - z) <= 1e-12
    assert abs(res.zeta) < 5 * 0.1 / 8


def test_inversion_failures(small_w0):
    with pytest.raises(NewtonError, match="escaped"):
        invert_E(small_w0, 0.1, 1.0)
    with pytest.raises(NewtonError, match="converge"):
        invert_E(small_w0, 0.1, 0.3, max_iter=1)


def test_spectral_map_derivative_is_close_to_one(small_w0):
    sm = SpectralMap.of(small_w0, 0.1)
    assert sm.derivative_deviation() <= sm.derivative_bound()


@pytest.mark.parametrize("zeta", [0.01, -0.02 + 0.01j])
@pytest.mark.parametrize("scale", [1.0, 10.0])
def test_vacuum_element_matches_dense_reduction(small_w0, zeta, scale):
    seq = small_w0.at(zeta).scale_interaction(scale)
    cfg = RGConfig()
    out, cert = renormalize_sharp(seq, cfg)
    space = DiscreteFockSpace(4, SMALL, e_max=1.0)
    idx = np.flatnonzero(space.reduced)
    e = space.energies[idx]
    H = assemble_H(seq, None, space).dense()[np.ix_(idx, idx)]
    T = np.diag(SMALL.r_interp_matrix(e) @ seq[(0, 0)].values)
    pair = FeshbachPair(H, T, cutoffs.chi_rho(e, cfg.rho), cutoffs.chibar_rho(e, cfg.rho), check=False)
    F = np.asarray(feshbach_map(pair))
    diff = abs(cfg.rho * out[(0, 0)].values[0] - F[0, 0])
    assert diff <= cfg.rho * cert.tail.vacuum
    assert diff <= 1e-15


def test_real_parameter_keeps_hermitian_structure(small_w0):
    out, _ = renormalize_sharp(small_w0.at(0.02))
    assert np.max(np.abs(out[(2, 0)].adjoint().values - out[(0, 2)].values)) <= 1e-16
    assert np.max(np.abs(out[(1, 1)].adjoint().values - out[(1, 1)].values)) <= 1e-16
    assert np.max(np.abs(out[(0, 0)].values.imag)) <= 1e-16


def test_single_factor_term_is_dilated_input(small_w0):
    # one factor, no contractions: chi(r + k1 + k2) chi(r) w(rho r, rho k1, rho k2)
    rho = 0.1
    seq = small_w0.at(0.0)
    got = v_term([(2, 0, 0, 0)], seq, rho)
    k = SMALL.k_nodes
    Wr = SMALL.r_interp_matrix(rho * SMALL.r_nodes)
    Wk = SMALL.k_interp_matrix(rho * k)
    dilated = np.einsum("ia,ajk,bj,ck->ibc", Wr, seq[(2, 0)].values, Wk, Wk)
    r = SMALL.r_nodes[:, None, None]
    ends = cutoffs.chi(r + k[:, None] + k[None, :]) * cutoffs.chi(r)
    assert np.max(np.abs(got - ends * dilated)) <= 1e-20
    assert not np.any(v_term([(0, 0, 0, 1)], seq, 0.1))


def test_contraction_on_one_step(small_w0):
    step = renormalize(small_w0)
    rep = contraction_report(small_w0, step.kernel)
    assert rep.ok and rep.gamma_ratio < 0.5
    assert step.record(0)["newton_residual"] <= 1e-12


@pytest.mark.parametrize("kw", [{"rho": 0.3}, {"rho": 0.0}, {"xi": 0.5}, {"L_max": 1}, {"L_int": 0},
                                {"M_max": 1}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        RGConfig(**kw)


def test_small_vacuum_element_is_rejected():
    seq = KernelSequence.free(0.0, SMALL, offset=-0.5)
    with pytest.raises(BallViolation):
        renormalize_sharp(seq.with_components({**seq.components, (1, 1): Kernel.zeros(1, 1, SMALL)}))


@pytest.mark.parametrize("rho", [0.1, 0.2])
def test_dilation_scales_the_field_energy(rho):
    # Gamma (k f) = (k / rho) Gamma f, exact on the grid for quadratic f
    grid = RadialGrid()
    G = dilation_one_particle(grid, rho)
    s = np.sqrt(grid.mu)
    k = grid.k_nodes
    f = s * (1.0 - 2.0 * k + 0.5 * k**2)
    assert np.max(np.abs(G @ (k * f) - (k / rho) * (G @ f))) <= 1e-12


def test_inverse_spectral_map_derivative_bounds(small_w0):
    rho, h = 0.1, 1e-5
    for z in (0.0, 0.2, -0.3j, 0.25 + 0.25j):
        d = (invert_E(small_w0, rho, z + h).zeta - invert_E(small_w0, rho, z - h).zeta) / (2 * h)
        assert abs(d) <= 16 * rho / 15
    sm = SpectralMap.of(small_w0, rho)
    assert np.min(np.abs(sm.dE_values[np.abs(sm.z) <= 5 * rho / 8])) / rho >= 15 / (16 * rho)


def test_term_bound_with_measured_constants(small_w0):
    cfg = RGConfig()
    seq = small_w0.at(0.01).scale_interaction(10.0)
    cert = _certificate([seq], cfg)
    dchi, _ = cutoffs.sup_derivatives()

    def C(L):
        return 1 + 2 * dchi + L * cfg.rho + (L - 1) * cert.d_F / cert.t_F

    avail = [k for k in seq.components if sum(k) >= 1]
    for L in (1, 2, 3):
        for M, N in [(0, 0), (2, 0), (1, 1), (0, 2)]:
            for tup in index_tuples(avail, M, N, L):
                v = np.max(np.abs(v_term(tup, seq, cfg.rho)))
                norms = np.prod([sharp_norm(seq[(m + p, n + q)]) for m, p, n, q in tup])
                assert v <= cert.t_F ** (L - 1) * C(L) * norms
