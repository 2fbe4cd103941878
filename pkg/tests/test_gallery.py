import numpy as np
import pytest

from hybridsens.adjoint import propagate_adjoint
from hybridsens.direct import direct_gradient, propagate_direct, simulate
from hybridsens.gallery import (
    FIVE_BAR_DATA,
    bouncing_mass,
    five_bar,
    five_bar_initial_conditions,
    five_bar_model,
    pendulum,
    register_gallery,
)
from hybridsens.model import fd_jacobian
from hybridsens.oracle import fd_cost_sensitivity
from conftest import rel_err

G = 9.81


def test_registry_names_and_costs():
    reg = register_gallery()
    assert set(reg) == {"five-bar", "bouncing-mass", "pendulum"}
    fb = reg["five-bar"]()
    assert set(fb.costs) == {"int-vy2", "int-ay2", "int-ay2sq-vy2sq"}
    assert fb.cost("int-vy2").name == "int-vy2"
    with pytest.raises(KeyError):
        fb.cost("nope")


def test_five_bar_assembly_residual():
    q0, v0, dq0, dv0 = five_bar_initial_conditions(np.array([100.0, 100.0]))
    model = five_bar_model()
    res = model.constraints.value(0.0, q0, np.array([100.0, 100.0]))
    assert np.max(np.abs(res)) <= 1e-12
    assert np.allclose(v0, 0.0)


def test_five_bar_stiffness_does_not_move_assembly():
    _, _, dq0, _ = five_bar_initial_conditions(np.array([100.0, 100.0]))
    assert np.allclose(dq0, 0.0)


def test_five_bar_assembly_sensitivity_wrt_length():
    names = ("k1", "LA1")
    rho = np.array([100.0, FIVE_BAR_DATA["LA1"]])
    model = five_bar_model(names)
    ic = model.initial_state(rho)

    def assemble(rr):
        return model.initial_state(rr).q0

    fd = fd_jacobian(assemble, rho)
    assert np.max(np.abs(ic.dq0_drho - fd)) < 1e-6


def test_five_bar_bounces_and_stays_above_ground():
    prob = five_bar()
    traj = simulate(prob.dynamics, prob.cost(), prob.events, prob.rho0.rho,
                    prob.t_span, prob.config)
    assert len(traj.events) >= 1
    ground = FIVE_BAR_DATA["ground"]
    for t in np.linspace(0.0, 5.0, 501):
        q, _, _ = traj.state_at(t)
        assert q[3] >= ground - 1e-6


def test_five_bar_length_parameters_fd_validated():
    # promoting a link length to a parameter exercises the constraint-rho
    # coupling (D and K blocks) through a real gradient
    prob = five_bar(param_names=("k1", "L21"))
    cost = prob.cost("int-vy2")
    rho = prob.rho0.rho
    grad, traj, _ = direct_gradient(prob.dynamics, cost, prob.events, rho,
                                    (0.0, 1.2), prob.config)
    sol = propagate_adjoint(traj, cost)
    fd = fd_cost_sensitivity(prob.dynamics, cost, prob.events, rho, (0.0, 1.2),
                             prob.config, h_rel=1e-6)
    assert len(traj.events) >= 1
    assert np.all(np.abs(sol.gradient - grad) <= 1e-6 * np.maximum(1.0, np.abs(grad)))
    assert np.all(np.abs(fd - grad) <= 2e-4 * np.maximum(1.0, np.abs(grad)))
    # the jump matrices must carry a nonzero constraint-parameter block
    assert any(np.any(rec.jump.blocks["D"]) for rec in traj.events)


def test_bouncing_mass_closed_form_gradients_all_pipelines():
    import sympy as sp

    prob = bouncing_mass()
    cost = prob.cost("height-final")
    rho = prob.rho0.rho
    grad, traj, _ = direct_gradient(prob.dynamics, cost, prob.events, rho,
                                    prob.t_span, prob.config)
    sol = propagate_adjoint(traj, cost)
    fd = fd_cost_sensitivity(prob.dynamics, cost, prob.events, rho,
                             prob.t_span, prob.config)

    h0s, es, ts = sp.symbols("h0 e tF", positive=True)
    t1 = sp.sqrt(2 * h0s / G)
    v1 = es * sp.sqrt(2 * G * h0s)
    t2 = t1 + 2 * v1 / G
    y = es * v1 * (ts - t2) - G * (ts - t2) ** 2 / 2
    subs = {h0s: rho[0], es: rho[1], ts: prob.t_span[1]}
    expect = np.array([[float(sp.diff(y, h0s).subs(subs)),
                        float(sp.diff(y, es).subs(subs))]])
    for got, tol in ((grad, 1e-7), (sol.gradient, 1e-7), (fd, 1e-5)):
        assert rel_err(got, expect) < tol


def test_bouncing_mass_event_time_and_state_closed_form():
    prob = bouncing_mass()
    rho = prob.rho0.rho
    traj, _, recs = propagate_direct(prob.dynamics, prob.cost("int-vy"),
                                     prob.events, rho, prob.t_span, prob.config)
    t1 = np.sqrt(2 * rho[0] / G)
    assert abs(recs[0].t_eve - t1) < 1e-8
    assert abs(recs[0].v_minus[0] + G * t1) < 1e-7
    assert abs(recs[0].v_plus[0] - rho[1] * G * t1) < 1e-7
    # dt_eve/d(h0) = 1 / sqrt(2 g h0); dt_eve/d(e) = 0 for the first bounce
    expect = np.array([[1.0 / np.sqrt(2 * G * rho[0]), 0.0]])
    assert np.max(np.abs(recs[0].dteve_drho - expect)) < 1e-6


def test_pendulum_capture_geometry():
    prob = pendulum()
    traj = simulate(prob.dynamics, prob.cost(), prob.events, prob.rho0.rho,
                    prob.t_span, prob.config)
    assert len(traj.events) == 1
    rec = traj.events[0]
    # at capture the bob sits on the tether circle and afterwards stays there
    assert abs(rec.q @ rec.q - 1.0) < 1e-8
    q, v, _ = traj.state_at(prob.t_span[1])
    assert abs(q @ q - 1.0) < 1e-6
    # radial velocity dies in the capture
    assert abs(rec.q @ rec.v_plus) < 1e-10
    assert rec.delta_mu is not None


def test_pendulum_capture_delta_mu_sensitivity_fd():
    prob = pendulum()
    cost = prob.cost("x-final")
    rho = prob.rho0.rho
    traj, _, recs = propagate_direct(prob.dynamics, cost, prob.events, rho,
                                     prob.t_span, prob.config)
    sens = recs[0].delta_mu_sens
    h = 1e-6
    fd = np.zeros((1, 3))
    for j in range(3):
        vals = []
        for sgn in (1.0, -1.0):
            rr = rho.copy()
            rr[j] += sgn * h
            _, _, rp = propagate_direct(prob.dynamics, cost, prob.events, rr,
                                        prob.t_span, prob.config)
            vals.append(rp[0].delta_mu[0])
        fd[0, j] = (vals[0] - vals[1]) / (2 * h)
    assert np.max(np.abs(sens - fd)) < 1e-4 * max(1.0, np.abs(fd).max())


def test_five_bar_post_event_sensitivities_stay_constraint_consistent():
    # along the run, Q must satisfy the differentiated position constraint
    # phi_q Q + phi_rho = 0 and V the differentiated velocity constraint,
    # including immediately after a bounce
    prob = five_bar(param_names=("k1", "L21"))
    cost = prob.cost("int-vy2")
    rho = prob.rho0.rho
    traj, XF, recs = propagate_direct(prob.dynamics, cost, prob.events, rho,
                                      (0.0, 1.0), prob.config)
    assert len(recs) >= 1
    cons = prob.dynamics.model.constraints
    t_probe = recs[0].t_eve + 1e-4
    q, v, _ = traj.state_at(t_probe)
    X = traj.sensitivity_at(t_probe)
    res_pos = cons.jac_q(t_probe, q, rho) @ X.Q + cons.jac_rho(t_probe, q, rho)
    assert np.max(np.abs(res_pos)) < 1e-6
    res_vel = (cons.jac_q(t_probe, q, rho) @ X.V
               + cons.qq_action(t_probe, q, rho, v) @ X.Q
               + cons.q_rho_action(t_probe, q, rho, v))
    assert np.max(np.abs(res_vel)) < 1e-5


def test_five_bar_dae_formulation_available():
    prob = five_bar(formulation="dae")
    rho = prob.rho0.rho
    ic = prob.dynamics.model.initial_state(rho)
    vdot, mu = prob.dynamics.accel_and_multipliers(0.0, ic.q0, ic.v0, rho)
    pen = five_bar().dynamics
    assert rel_err(vdot, pen.accel(0.0, ic.q0, ic.v0, rho), floor=1.0) < 1e-5
