import numpy as np
import pytest

from fockrg.initial import InitialSeriesConfig, ToyModel, initial_kernel
from fockrg.kernel_space import RadialGrid, SampledSequence
from fockrg.rg import BallViolation, RGConfig
from fockrg.solver import (FlowTrace, SolverConfig, beta_smoothness_scan, energy, flow, g_expansion,
                           ground_state, oracle_ground_state, overlap, rs_second_order,
                           spectral_gap_scan)

SMALL = RadialGrid(n_r=9, n_k=4)
CFG = SolverConfig(initial=InitialSeriesConfig(grid=SMALL))


@pytest.fixture(scope="module")
def coarse_state():
    return ground_state(ToyModel(), CFG)


def test_coarse_pipeline_matches_exact_diagonalization(coarse_state):
    E, v, _ = oracle_ground_state(ToyModel(), 3, SMALL)
    assert abs(coarse_state.E - E) <= 5e-4 * abs(E)
    assert overlap(coarse_state.psi, v) >= 0.999
    assert coarse_state.residual <= 1e-10
    assert abs(coarse_state.E.imag) <= 1e-10


def test_energy_only_agrees_with_full_flow(coarse_state):
    eo = ground_state(ToyModel(), CFG.energy_only(), vectors=False)
    assert abs(eo.E - coarse_state.E) <= eo.energy.error_bar
    assert eo.eigen is None and np.isnan(eo.residual)
    assert all(s["vacuum_only"] for s in eo.trace.steps[1:])


def test_exact_levels_decrease_with_the_photon_cap():
    levels = [oracle_ground_state(ToyModel(), cap, SMALL)[0] for cap in (1, 2, 3, 4)]
    assert all(b <= a for a, b in zip(levels, levels[1:]))


def test_second_order_against_finite_differences():
    # E(g) / g**2 = E2 + E4 g**2 + ...; one Richardson step removes the g**2 term
    def e(g):
        return oracle_ground_state(ToyModel(g=g), 3, SMALL)[0] / g**2

    rich = (4 * e(0.01) - e(0.02)) / 3
    rs = rs_second_order(ToyModel(), 3, SMALL)
    assert abs(rs.imag) == 0.0
    assert abs(rs.real - rich) <= 1e-5 * abs(rich)


def test_free_model_gives_vacuum():
    gs = ground_state(ToyModel(g=0.0), CFG)
    assert gs.E == 0.0
    assert gs.energy.error_bar == gs.energy.schedule_bound
    v = np.zeros_like(gs.psi)
    v[0] = 1.0
    assert np.array_equal(gs.psi, v)


def test_flow_trace_roundtrip(coarse_state, tmp_path):
    path = tmp_path / "trace.jsonl"
    coarse_state.trace.to_jsonl(path)
    rows = FlowTrace.read_jsonl(path)
    assert len(rows) == len(coarse_state.trace.steps) + 1
    assert [r["step"] for r in rows[:-1]] == list(range(CFG.m_max))
    assert rows[-1]["eps0"] == coarse_state.trace.eps0
    assert rows[-1]["final"][0] == [coarse_state.E.real, coarse_state.E.imag]


def test_iterates_settle(coarse_state):
    est = coarse_state.energy
    inc = np.abs(np.diff(est.iterates))
    assert inc[-1] <= est.measured_error
    assert est.levels[-1] == 0.0


def test_energy_rejects_long_request(coarse_state):
    with pytest.raises(ValueError):
        energy(coarse_state.kernels, CFG.rg, m_max=len(coarse_state.kernels))


def test_offset_kernel_fails_at_step_zero():
    z = SampledSequence.contour()
    w = SampledSequence(z, {(0, 0): SMALL.r_nodes[None, :] - z[:, None] + 0.1}, 0.2, grid=SMALL)
    with pytest.raises(BallViolation, match="step 0") as exc:
        flow(w, RGConfig(), 2)
    assert exc.value.step == 0


def test_too_strong_coupling_fails_at_step_zero():
    with pytest.raises(BallViolation, match="step 0"):
        ground_state(ToyModel(g=0.1), CFG)


@pytest.mark.parametrize("kw", [{"m_max": 0}, {"full_steps": -1}, {"psi_cap": 0},
                                {"rg": RGConfig(xi=0.1)}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_coupling_free_model_has_no_expansion():
    out = g_expansion(ToyModel(coupling=0.0, linear=0.0), CFG.energy_only(), n_max=4, n_points=8)
    assert not np.any(out.coefficients)
    assert out.odd_ratio() == 0.0


def test_expansion_argument_checks():
    with pytest.raises(ValueError):
        g_expansion(ToyModel(), CFG, n_max=8, n_points=8)
    with pytest.raises(ValueError):
        g_expansion(ToyModel(), CFG, contour_radius=0.5)


def test_beta_independent_model_has_flat_energy():
    model = ToyModel(coupling_fn=lambda k, b: k, linear_fn=lambda k, b: k)
    scan = beta_smoothness_scan(model, CFG.energy_only(), k=2, beta_grid=[0.0], h=0.1)
    E = abs(scan.energy[0])
    # identical energies leave only the rounding of the stencil weights
    for l in (1, 2):
        assert abs(scan.derivatives[l][0]) <= 100 * np.finfo(float).eps * E / 0.05**l
    assert scan.rows()[0]["d0"] == pytest.approx(scan.energy[0].real)
    with pytest.raises(ValueError):
        beta_smoothness_scan(model, CFG, k=5)


def test_spectral_gap_is_recorded():
    w0 = initial_kernel(ToyModel(), InitialSeriesConfig(grid=SMALL)).kernel
    rows = spectral_gap_scan(w0, [-0.1, 0.0, 0.1])
    assert [z for z, _ in rows] == [-0.1, 0.0, 0.1]
    assert all(s >= 0.0 for _, s in rows)
    # w_00(0) is close to -z, so the gap at z is close to |z|
    assert rows[0][1] == pytest.approx(0.1, rel=1e-2)
