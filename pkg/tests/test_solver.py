import math

import numpy as np
import pytest

from bardina import fields
from bardina.fields import Grid
from bardina.initial import beltrami, make_initial, random_velocity, taylor_green
from bardina.solver import (EnergyLedger, InstabilityError, SolverParams, SolverState, check_energy_bounds,
                            energy_alpha, energy_audit, filtered_initial, integrate, nonlinear_term, pressure_solve,
                            rhs_hat, step_integrating_factor, transport_orthogonality)

G = Grid(32)
ALPHA = 0.25


def test_params_validation():
    for kw in ({"nu": 0, "alpha": 1}, {"nu": 1, "alpha": -1}, {"nu": 1, "alpha": 1, "dt": 0},
               {"nu": 1, "alpha": 1, "t_end": -1}):
        with pytest.raises(ValueError):
            SolverParams(**kw)


def test_initial_fields_are_solenoidal():
    for kind in ("taylor-green", "taylor-green-2d", "beltrami", "random", "zero"):
        assert fields.is_divergence_free(G, make_initial(G, kind, seed=1))
    with pytest.raises(ValueError):
        make_initial(G, "vortex-ring")


def test_random_velocity_energy():
    u = random_velocity(G, 3, energy=2.0)
    assert fields.norm_lp(G, u, 2) ** 2 / G.volume == pytest.approx(2.0, rel=1e-12)


def test_taylor_green_filtered_energy():
    # all modes have |k|^2 = 3: ubar = u / (1 + 3 alpha^2), E = 2 pi^3 / (1 + 3 alpha^2)
    ui = filtered_initial(G, taylor_green(G), ALPHA)
    assert energy_alpha(G, ui, ALPHA) == pytest.approx(2 * math.pi**3 / (1 + 3 * ALPHA**2), rel=1e-13)


def test_nonlinear_term_of_zero_and_constant():
    assert not np.any(nonlinear_term(G, G.zeros(3), ALPHA))
    c = np.ones((3, *G.shape)) * np.array([1.0, -2.0, 0.5])[:, None, None, None]
    assert np.abs(nonlinear_term(G, c, ALPHA)).max() < 1e-12


def test_nonlinear_term_taylor_green():
    x, y, z = G.x
    u = taylor_green(G)
    # (u.grad)u = (sin 2x cos^2 z / 2, sin 2y cos^2 z / 2, 0), then filtered mode by mode
    a4, a8 = 1 + 4 * ALPHA**2, 1 + 8 * ALPHA**2
    expected = np.stack([
        0.25 * np.sin(2 * x) / a4 + 0.25 * np.sin(2 * x) * np.cos(2 * z) / a8,
        0.25 * np.sin(2 * y) / a4 + 0.25 * np.sin(2 * y) * np.cos(2 * z) / a8,
        np.zeros(G.shape),
    ])
    assert np.abs(nonlinear_term(G, u, ALPHA) - expected).max() < 1e-13


def test_nonlinear_term_requires_solenoidal():
    with pytest.raises(ValueError):
        nonlinear_term(G, fields.gradient(G, fields.random_field(G, 1)), ALPHA)


def test_nonlinear_term_is_dealiased():
    U = fields.forward(G, random_velocity(G, 1, slope=0.0, kmax=15))
    B = fields.forward(G, nonlinear_term(G, fields.inverse(G, U), ALPHA))
    assert np.abs(B[..., ~G.dealias_mask]).max() < 1e-10 * np.abs(B).max()


def test_beltrami_pressure_and_projection():
    x, y, z = G.x
    u = beltrami(G)
    p = pressure_solve(G, u, ALPHA)
    expected = -(np.sin(z) * np.cos(y) + np.sin(x) * np.cos(z) + np.sin(y) * np.cos(x)) / (1 + 2 * ALPHA**2)
    assert np.abs(p - expected).max() < 1e-13
    # the transport term is a pure gradient, so its projection vanishes
    assert np.abs(rhs_hat(G, fields.forward(G, u), ALPHA)).max() < 1e-9


def test_pressure_is_the_gradient_part():
    u = random_velocity(G, 4, slope=-1.0, kmax=10)
    B = nonlinear_term(G, u, ALPHA)
    p = pressure_solve(G, u, ALPHA)
    assert abs(p.mean()) < 1e-14
    # B + grad p is the Leray projection of B
    PB = fields.leray_project(G, B)
    assert fields.norm_lp(G, B + fields.gradient(G, p) - PB, 2) <= 1e-12 * fields.norm_lp(G, B, 2)


def test_planar_taylor_green_has_no_projected_transport():
    U = fields.forward(G, taylor_green(G, three_d=False))
    assert np.abs(rhs_hat(G, U, ALPHA)).max() < 1e-10


def test_transport_orthogonality_random():
    u = filtered_initial(G, random_velocity(G, 2, slope=0.0, kmax=10), ALPHA)
    assert transport_orthogonality(G, u, ALPHA) <= 1e-10 * fields.norm_wmp(G, u, 2, 2) ** 3


def test_single_shear_mode_decays_exactly():
    # u = (0, sin 2x, 0) satisfies (u.grad)u = 0, so the full model is pure heat flow
    u = np.stack([G.zeros(), np.sin(2 * G.x[0]), G.zeros()])
    params = SolverParams(0.1, ALPHA, dt=0.05, t_end=1.0)
    traj = integrate(G, u, params)
    assert np.abs(traj.final.u - u * math.exp(-0.1 * 4 * 1.0)).max() < 1e-13
    assert traj.E_alpha == pytest.approx(traj.E_alpha[0] * np.exp(-2 * 0.1 * 4 * traj.times), rel=1e-12)


def test_energy_audit_single_mode():
    u = np.stack([G.zeros(), np.sin(2 * G.x[0]), G.zeros()])
    traj = integrate(G, u, SolverParams(0.1, ALPHA, dt=0.01, t_end=1.0))
    ledger = energy_audit(traj)
    assert ledger.max_residual() <= 1e-8 * ledger.E0
    assert len(list(ledger.rows())) == len(traj.times) == 101


def test_energy_audit_two_samples():
    u = np.stack([G.zeros(), np.sin(2 * G.x[0]), G.zeros()])
    traj = integrate(G, u, SolverParams(0.1, ALPHA, dt=0.01, t_end=0.01))
    assert len(traj.times) == 2
    assert energy_audit(traj).max_residual() < 1e-4 * energy_alpha(G, u, ALPHA)


def test_step_count_must_divide():
    with pytest.raises(ValueError):
        integrate(G, G.zeros(3), SolverParams(0.1, ALPHA, dt=0.3, t_end=1.0))


def test_zero_duration_keeps_initial_state():
    u = filtered_initial(G, taylor_green(G), ALPHA)
    traj = integrate(G, u, SolverParams(0.05, ALPHA, t_end=0.0))
    assert len(traj.snapshots) == 1 and traj.final.t == 0.0
    assert np.allclose(traj.final.u, u)


def test_sampling_and_monotone_decay():
    u0 = taylor_green(G)
    traj = integrate(G, filtered_initial(G, u0, ALPHA), SolverParams(0.05, ALPHA, dt=0.01, t_end=0.5),
                     sample_every=10)
    assert [round(s.t, 10) for s in traj.snapshots] == [round(0.1 * i, 10) for i in range(6)]
    ledger = energy_audit(traj)
    bounds = check_energy_bounds(ledger, G, u0)
    assert bounds.passed
    assert ledger.max_residual() < 1e-8 * ledger.E0


def test_energy_bounds_detect_increase():
    E = np.array([1.0, 0.9, 0.95])
    ledger = EnergyLedger(np.arange(3.0), E, np.zeros(3), np.zeros(3), np.zeros(3))
    bounds = check_energy_bounds(ledger, G, taylor_green(G))
    assert not bounds.monotone and bounds.max_increase == pytest.approx(0.05)


def test_blowup_guard():
    state = SolverState.from_velocity(G, taylor_green(G), ALPHA)
    params = SolverParams(0.05, ALPHA, dt=1e-3)
    with pytest.raises(InstabilityError) as info:
        step_integrating_factor(state, params, energy0=state.E_alpha / 20)
    assert info.value.t_stable == 0.0


def test_blowup_from_oversized_step():
    u = filtered_initial(G, random_velocity(G, 7, slope=0.0, energy=400.0), ALPHA)
    with pytest.raises(InstabilityError):
        integrate(G, u, SolverParams(1e-3, ALPHA, dt=0.5, t_end=50.0))


def test_from_velocity_rejects_divergent():
    with pytest.raises(ValueError):
        SolverState.from_velocity(G, fields.gradient(G, fields.random_field(G, 2)), ALPHA)


def test_linear_mode_switch():
    u = filtered_initial(G, taylor_green(G), ALPHA)
    traj = integrate(G, u, SolverParams(0.05, ALPHA, dt=0.1, t_end=1.0, nonlinear=False))
    assert np.allclose(traj.final.u, u * math.exp(-0.05 * 3), atol=1e-13)
