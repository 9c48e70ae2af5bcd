import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qles_lab.nozzle import (AssemblyError, FlowState, InvalidCaseError, SolverError,
                             LinearSystem, NozzleCase, _blocks, advance, assemble_system, build_case,
                             case_from_config, initial_state, nozzle_area, residual,
                             run_outer_loop, solve_linear, subnormalisation_kappa)


def simple_sweep(case, state):
    """Textbook pressure-correction step, written out independently."""
    M, G, B, C = _blocks(case, state)
    r = -residual(case, state)
    s = case.stations
    r_mom, r_cont = r[:s], r[s:]
    d_inv = 1.0 / np.diag(M)
    du_star = np.linalg.solve(M, r_mom)
    schur = C - B @ (d_inv[:, None] * G)
    p_corr = np.linalg.solve(schur, r_cont - B @ du_star)
    du = du_star - d_inv * (G @ p_corr)
    return np.concatenate([du, case.relax_pressure * p_corr])


@pytest.mark.parametrize("regime", ["incompressible", "compressible"])
def test_simple_matrix_matches_pressure_correction_sweep(regime):
    case = build_case(8, regime, "SIMPLE")
    rng = np.random.default_rng(4)
    u = 1.0 + 0.2 * rng.random(8)
    p = 0.95 + 0.05 * rng.random(8)
    state = FlowState(u, p, case.density_of(p) if case.compressible else np.ones(8))
    dx = solve_linear(assemble_system(case, state)).values
    np.testing.assert_allclose(dx, simple_sweep(case, state), rtol=1e-10, atol=1e-13)


@pytest.mark.parametrize("s", [2, 8, 16])
@pytest.mark.parametrize("regime", ["incompressible", "compressible"])
@pytest.mark.parametrize("solver", ["SIMPLE", "coupled"])
def test_noiseless_runs_converge(s, regime, solver):
    case = build_case(s, regime, solver)
    report = run_outer_loop(case)
    assert report.converged
    assert report.final_residual < 1e-8
    assert report.max_correction <= case.eps_tol


def test_both_solvers_reach_the_same_solution():
    a = run_outer_loop(build_case(8, "compressible", "SIMPLE")).final_state
    b = run_outer_loop(build_case(8, "compressible", "coupled")).final_state
    np.testing.assert_allclose(a.velocity, b.velocity, atol=1e-7)
    np.testing.assert_allclose(a.pressure, b.pressure, atol=1e-7)


def test_incompressible_mass_flux_is_uniform():
    case = build_case(8)
    state = run_outer_loop(case).final_state
    m = state.density * case.face_area * state.velocity
    np.testing.assert_allclose(m, m[0], rtol=1e-8)


def test_converged_state_is_a_fixed_point():
    case = build_case(8)
    state = run_outer_loop(case).final_state
    dx = solve_linear(assemble_system(case, state)).values
    assert np.max(np.abs(dx)) < 1e-8


def test_system_b_consistent_with_rhs():
    case = build_case(4)
    state = initial_state(case)
    sys_ = assemble_system(case, state)
    np.testing.assert_allclose(sys_.b - sys_.matrix @ state.vector, sys_.rhs)


def test_advance_updates_density_only_when_compressible():
    dx = np.concatenate([np.zeros(4), 0.1 * np.ones(4)])
    for regime, expected in (("incompressible", 1.0), ("compressible", 1.1)):
        case = build_case(4, regime)
        new = advance(case, initial_state(case), dx)
        np.testing.assert_allclose(new.density, expected)


@pytest.mark.parametrize("kwargs", [
    {"stations": 1}, {"stations": 8, "regime": "plasma"}, {"stations": 8, "solver": "GMRES"},
    {"stations": 8, "relaxation": 0.0}, {"stations": 8, "eps_tol": -1},
])
def test_invalid_cases_rejected(kwargs):
    with pytest.raises(InvalidCaseError):
        case_from_config(kwargs)


def test_throat_must_be_interior():
    with pytest.raises(InvalidCaseError):
        NozzleCase(8, np.linspace(1.0, 0.5, 9), np.linspace(1.0, 0.5, 8))


def test_nonfinite_state_rejected():
    case = build_case(4)
    bad = FlowState(np.array([1.0, np.nan, 1.0, 1.0]), np.ones(4), np.ones(4))
    with pytest.raises(AssemblyError):
        assemble_system(case, bad)


def test_reversed_flow_rejected():
    case = build_case(4)
    with pytest.raises(AssemblyError):
        assemble_system(case, FlowState(-np.ones(4), np.ones(4), np.ones(4)))


def test_singular_system_raises():
    system = LinearSystem(np.zeros((2, 2)), np.ones(2), np.ones(2))
    with pytest.raises(SolverError):
        solve_linear(system)


def test_cap_reports_unconverged():
    report = run_outer_loop(build_case(8), max_iterations=3)
    assert report.iterations == 3 and not report.converged and not report.diverged


def test_history_csv(tmp_path):
    report = run_outer_loop(build_case(4))
    path = tmp_path / "h.csv"
    report.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,residual_l2,max_correction"
    assert len(lines) == report.iterations + 1


def test_area_profile_has_interior_throat():
    x = np.linspace(0, 1, 11)
    area = nozzle_area(x)
    assert np.argmin(area) == 5 and area[0] == area[-1] == 1.0


def test_kappa_uses_largest_entry():
    A = np.diag([2.0, 4.0])
    assert subnormalisation_kappa(A) == pytest.approx(2.0 / (3.0 * 4.0 * 2.0))


def test_kappa_singular():
    with pytest.raises(np.linalg.LinAlgError):
        subnormalisation_kappa(np.array([[1.0, 1.0], [1.0, 1.0]]))


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.1, 10.0), min_size=3, max_size=3))
def test_kappa_scales_inversely(diag):
    A = np.diag(diag)
    assert subnormalisation_kappa(2 * A) == pytest.approx(subnormalisation_kappa(A) / 4)
