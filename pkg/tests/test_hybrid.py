import numpy as np
import pytest

from hybridsens.core import AdjointState, Dimensions, SensitivityState
from hybridsens.hybrid import (
    ConstrainedElasticEvent,
    ConstrainedInelasticEvent,
    DofPartition,
    TangentialCrossingError,
    VelocityJumpEvent,
    apply_jump_adjoint,
    apply_jump_direct,
    apply_state_jump,
    build_jump_matrix,
    event_time_row,
    event_time_sensitivity,
    jump_componentwise_elastic,
    jump_componentwise_inelastic,
    jump_componentwise_unconstrained,
)
from hybridsens.model import cost_density_value

G = 9.81


# -- event-time sensitivity ---------------------------------------------------


def test_event_time_sensitivity_zero_numerator():
    out = event_time_sensitivity(np.array([1.0, 0.0]), np.zeros((2, 3)),
                                 np.array([-2.0, 1.0]))
    assert np.allclose(out, 0.0)


def test_event_time_sensitivity_bouncing_closed_form():
    h0 = 1.0
    v_minus = np.array([-np.sqrt(2 * G * h0)])
    out = event_time_sensitivity(np.array([1.0]), np.array([[1.0]]), v_minus)
    assert abs(out[0, 0] - 1.0 / np.sqrt(2 * G * h0)) < 1e-5
    assert abs(out[0, 0] - 0.225762) < 1e-5


def test_event_time_sensitivity_scale_invariance():
    rng = np.random.default_rng(3)
    r_q = rng.normal(size=4)
    Q = rng.normal(size=(4, 2))
    v = rng.normal(size=4)
    base = event_time_sensitivity(r_q, Q, v)
    for c in (2.0, -0.3, 1e6):
        assert np.allclose(event_time_sensitivity(c * r_q, Q, v), base, rtol=1e-12)


def test_tangential_crossing_rejected():
    with pytest.raises(TangentialCrossingError):
        event_time_row(np.array([1.0, 0.0]), np.array([0.0, 5.0]))


# -- state jumps --------------------------------------------------------------


def test_five_bar_state_jump_resolves_dependents():
    from hybridsens.gallery import five_bar

    prob = five_bar()
    dyn = prob.dynamics
    rho = prob.rho0.rho
    spec = prob.events[0]
    ic = dyn.model.initial_state(rho)
    q = ic.q0.copy()
    rng = np.random.default_rng(0)
    v_minus = rng.normal(size=6)
    # pre-state must satisfy the velocity constraints for the check to be fair
    cons = dyn.model.constraints
    Gm = cons.jac_q(0.0, q, rho)
    dep = [0, 1, 4, 5]
    v_minus[dep] = np.linalg.solve(Gm[:, dep], -Gm[:, [2, 3]] @ v_minus[[2, 3]])
    v_plus, dmu, dyn_plus = apply_state_jump(spec, 0.0, q, v_minus, rho, dyn)
    assert dmu is None and dyn_plus is dyn
    assert v_plus[2] == v_minus[2]
    assert v_plus[3] == -v_minus[3]
    assert np.max(np.abs(Gm @ v_plus)) < 1e-10


def test_identity_dof_jump_keeps_velocities():
    from hybridsens.gallery import five_bar

    prob = five_bar()
    dyn = prob.dynamics
    rho = prob.rho0.rho
    ic = dyn.model.initial_state(rho)
    spec = ConstrainedElasticEvent(
        name="noop", r=lambda q: q[3] + 2.35,
        dof_jump=lambda t, q, vdof, rho: vdof,
        partition=DofPartition(n=6, dof=(2, 3)),
    )
    cons = dyn.model.constraints
    rng = np.random.default_rng(1)
    v = rng.normal(size=6)
    Gm = cons.jac_q(0.0, ic.q0, rho)
    dep = [0, 1, 4, 5]
    v[dep] = np.linalg.solve(Gm[:, dep], -Gm[:, [2, 3]] @ v[[2, 3]])
    v_plus, _, _ = apply_state_jump(spec, 0.0, ic.q0, v, rho, dyn)
    assert np.max(np.abs(v_plus - v)) < 1e-10


def test_point_mass_inelastic_hand_solve():
    from hybridsens.gallery import pendulum

    prob = pendulum()
    spec = prob.events[0]
    rho = prob.rho0.rho
    L = 1.0
    q = np.array([0.0, -L])          # capture at the bottom
    v_minus = np.array([0.3, -2.0])
    v_plus, dmu, dyn_plus = apply_state_jump(spec, 0.0, q, v_minus, rho, prob.dynamics)
    # constraint phi = |q|^2 - L^2, G = 2 q^T = (0, -2L): radial velocity dies
    assert np.allclose(v_plus, [0.3, 0.0], atol=1e-12)
    # M v+ + G^T dmu = M v-  ->  dmu = m (v_y- - v_y+) / (-2L)
    assert np.allclose(dmu, [rho[2] * (-2.0) / (-2 * L * 1.0) * 1.0], atol=1e-12)


def test_impulse_energy_never_increases():
    from hybridsens.gallery import pendulum

    prob = pendulum()
    spec = prob.events[0]
    rho = prob.rho0.rho
    rng = np.random.default_rng(7)
    for _ in range(50):
        th = rng.uniform(-np.pi, np.pi)
        q = np.array([np.sin(th), -np.cos(th)])
        v_minus = rng.normal(size=2, scale=3.0)
        v_plus, dmu, _ = apply_state_jump(spec, 0.0, q, v_minus, rho, prob.dynamics)
        m = rho[2]
        assert 0.5 * m * v_plus @ v_plus <= 0.5 * m * v_minus @ v_minus + 1e-12


# -- jump matrices ------------------------------------------------------------


def _bouncing_context(rho=np.array([1.0, 0.9])):
    from hybridsens.gallery import bouncing_mass

    prob = bouncing_mass()
    dyn = prob.dynamics
    spec = prob.events[0]
    cost = prob.cost("int-vy")
    t_eve = np.sqrt(2 * rho[0] / G)
    q = np.array([0.0])
    v_minus = np.array([-G * t_eve])
    v_plus, _, dyn_plus = apply_state_jump(spec, t_eve, q, v_minus, rho, dyn)
    vdm = dyn.accel(t_eve, q, v_minus, rho)
    vdp = dyn_plus.accel(t_eve, q, v_plus, rho)
    gm = cost_density_value(cost, dyn, t_eve, q, v_minus, rho)
    gp = cost_density_value(cost, dyn_plus, t_eve, q, v_plus, rho)
    jump = build_jump_matrix(spec, dyn.dims, t_eve, q, v_minus, v_plus,
                             vdm, vdp, gm, gp, rho, dyn, dyn_plus)
    ctx = dict(spec=spec, dims=dyn.dims, t=t_eve, q=q, vm=v_minus, vp=v_plus,
               vdm=vdm, vdp=vdp, gm=gm, gp=gp, rho=rho, dyn=dyn)
    return jump, ctx


def test_noop_event_jump_is_identity():
    dims = Dimensions(n=2, p=2, nc=1)
    spec = VelocityJumpEvent(
        name="noop", r=lambda q: q[1] - 1.0,
        h=lambda t, q, v, rho: v,
    )
    v = np.array([0.4, 2.0])
    vdot = np.array([0.0, -G])
    g = np.array([0.7])
    jump = build_jump_matrix(spec, dims, 0.5, np.array([0.0, 1.0]), v, v.copy(),
                             vdot, vdot, g, g, np.ones(2), None, None)
    rng = np.random.default_rng(5)
    X = SensitivityState(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)),
                         rng.normal(size=(2, 2)), rng.normal(size=(1, 2)))
    X2 = apply_jump_direct(jump, X)
    assert np.allclose(X2.stacked(), X.stacked(), atol=1e-12)
    lam = AdjointState(rng.normal(size=(2, 1)), rng.normal(size=(2, 1)),
                       rng.normal(size=(2, 1)), np.eye(1))
    lam2 = apply_jump_adjoint(jump, lam)
    assert np.allclose(lam2.stacked(), lam.stacked(), atol=1e-12)


def test_gamma_rows_are_identity_block():
    jump, _ = _bouncing_context()
    dims = jump.dims
    n, p, nc = dims.n, dims.p, dims.nc
    S = jump.matrix()
    gamma_rows = S[2 * n:2 * n + p, :]
    expect = np.zeros((p, 2 * n + p + nc))
    expect[:, 2 * n:2 * n + p] = np.eye(p)
    assert np.array_equal(gamma_rows, expect)


def test_bounce_jump_matches_fd_across_event():
    # propagate X through the bounce via S and compare with FD of the
    # post-event state evaluated strictly after the event
    from hybridsens.direct import propagate_direct
    from hybridsens.gallery import bouncing_mass

    prob = bouncing_mass()
    rho = prob.rho0.rho
    cost = prob.cost("int-vy")
    t_probe = 0.6  # after the first bounce (~0.4515), before the second
    traj, XF, recs = propagate_direct(prob.dynamics, cost, prob.events, rho,
                                      (0.0, t_probe), prob.config)
    X = traj.sensitivity_at(t_probe)
    h = 1e-6
    for j in range(2):
        rp, rm = rho.copy(), rho.copy()
        rp[j] += h
        rm[j] -= h
        tp, _, _ = propagate_direct(prob.dynamics, cost, prob.events, rp,
                                    (0.0, t_probe), prob.config)
        tm, _, _ = propagate_direct(prob.dynamics, cost, prob.events, rm,
                                    (0.0, t_probe), prob.config)
        (qp, vp, _), (qm, vm, _) = tp.state_at(t_probe), tm.state_at(t_probe)
        assert abs((qp[0] - qm[0]) / (2 * h) - X.Q[0, j]) < 1e-4 * max(1, abs(X.Q[0, j]))
        assert abs((vp[0] - vm[0]) / (2 * h) - X.V[0, j]) < 1e-4 * max(1, abs(X.V[0, j]))


def test_z_jump_equals_density_difference():
    jump, ctx = _bouncing_context()
    rng = np.random.default_rng(11)
    X = SensitivityState(rng.normal(size=(1, 2)), rng.normal(size=(1, 2)),
                         np.eye(2), rng.normal(size=(1, 2)))
    X2 = apply_jump_direct(jump, X)
    dt_drho = event_time_sensitivity(np.array([1.0]), X.Q, ctx["vm"])
    expect = X.Z - np.outer(ctx["gp"] - ctx["gm"], dt_drho)
    assert np.allclose(X2.Z, expect, atol=1e-12)


def test_parameter_columns_from_gamma():
    # zero state blocks with Gamma = I pick out exactly the parameter columns
    jump, _ = _bouncing_context()
    p = jump.dims.p
    X = SensitivityState(np.zeros((1, p)), np.zeros((1, p)), np.eye(p),
                         np.zeros((1, p)))
    X2 = apply_jump_direct(jump, X)
    assert np.allclose(X2.V, jump.blocks["h_rho"], atol=1e-14)
    assert np.allclose(X2.Q, 0.0, atol=1e-14)


# -- componentwise vs matrix forms and the bilinear identity -------------------


def _random_unconstrained_case(rng):
    n, p, nc = 3, 2, 2
    dims = Dimensions(n=n, p=p, nc=nc)
    A = rng.normal(size=(n, n))
    b = rng.normal(size=(n, p))
    spec = VelocityJumpEvent(
        name="syn",
        r=lambda q: q[0] - 0.1,
        h=lambda t, q, v, rho, A=A, b=b: np.tanh(A @ v) + b @ rho + 0.1 * np.sin(q) * t,
    )
    t = rng.uniform(0.1, 1.0)
    q = rng.normal(size=n)
    q[0] = 0.1
    v = rng.normal(size=n)
    if abs(v[0]) < 0.3:
        v[0] = 0.5
    rho = rng.normal(size=p)
    vp = spec.jump(t, q, v, rho)
    vdm = rng.normal(size=n)
    vdp = rng.normal(size=n)
    gm = rng.normal(size=nc)
    gp = rng.normal(size=nc)
    jump = build_jump_matrix(spec, dims, t, q, v, vp, vdm, vdp, gm, gp, rho, None, None)
    ht, hq, hv, hrho = spec.jacobians(t, q, v, rho)
    w = event_time_row(spec.r_jac(q), v)
    comp = lambda X: jump_componentwise_unconstrained(
        X, w, vp - v, hq, hv, ht, hrho, vdm, vdp, v, gp - gm)
    return dims, jump, comp


def _random_elastic_case(rng):
    from hybridsens.gallery import five_bar

    prob = five_bar()
    dyn = prob.dynamics
    spec = prob.events[0]
    cost = prob.cost("int-vy2")
    rho = prob.rho0.rho * rng.uniform(0.9, 1.1, size=2)
    dims = dyn.dims
    ic = dyn.model.initial_state(rho)
    q = ic.q0 + rng.normal(scale=0.05, size=6)
    t = rng.uniform(0.0, 1.0)
    v = rng.normal(scale=1.0, size=6)
    if abs(v[3]) < 0.3:
        v[3] = -1.0
    vp, _, dyn_plus = apply_state_jump(spec, t, q, v, rho, dyn)
    vdm = dyn.accel(t, q, v, rho)
    vdp = dyn_plus.accel(t, q, vp, rho)
    gm = cost_density_value(cost, dyn, t, q, v, rho)
    gp = cost_density_value(cost, dyn_plus, t, q, vp, rho)
    jump = build_jump_matrix(spec, dims, t, q, v, vp, vdm, vdp, gm, gp,
                             rho, dyn, dyn_plus)
    part = spec.partition
    ht, hq, hv, hrho = spec.jacobians(t, q, v[list(part.dof)], rho)
    w = event_time_row(spec.r_jac(q), v)
    b = jump.blocks
    comp = lambda X: jump_componentwise_elastic(
        X, part, w, vp - v, hq, hv, ht, hrho, vdm, vdp, v, gp - gm,
        b["R"], b["Rbar"], b["C"], b["D"])
    return dims, jump, comp


def _random_inelastic_case(rng):
    from hybridsens.gallery import pendulum

    prob = pendulum()
    dyn = prob.dynamics
    spec = prob.events[0]
    cost = prob.cost("int-vx")
    rho = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-2.0, 0.0),
                    rng.uniform(0.5, 2.0)])
    dims = dyn.dims
    th = rng.uniform(-1.0, 1.0)
    q = np.array([np.sin(th), -np.cos(th)])   # on the capture circle
    t = rng.uniform(0.1, 1.0)
    v = rng.normal(size=2, scale=2.0)
    if q @ v < 0.3:                            # ensure an outward crossing
        v = v - 2 * (q @ v) * q + 0.5 * q
    vp, dmu, dyn_plus = apply_state_jump(spec, t, q, v, rho, dyn)
    vdm = dyn.accel(t, q, v, rho)
    vdp = dyn_plus.accel(t, q, vp, rho)
    gm = cost_density_value(cost, dyn, t, q, v, rho)
    gp = cost_density_value(cost, dyn_plus, t, q, vp, rho)
    jump = build_jump_matrix(spec, dims, t, q, v, vp, vdm, vdp, gm, gp,
                             rho, dyn, dyn_plus, delta_mu=dmu)
    b = jump.blocks
    w = event_time_row(spec.r_jac(q), v)
    comp = lambda X: jump_componentwise_inelastic(
        X, spec.partition, w, vp - v, b["imp_v_t"], b["imp_v_q"], b["imp_v_v"],
        b["imp_v_rho"], vdm, vdp, v, gp - gm, b["R"] if "R" in b else None,
        b["D"])
    return dims, jump, comp


CASES = {
    "unconstrained": _random_unconstrained_case,
    "elastic": _random_elastic_case,
    "inelastic": _random_inelastic_case,
}


@pytest.mark.parametrize("kind", sorted(CASES))
def test_componentwise_equals_matrix(kind):
    rng = np.random.default_rng(hash(kind) % 2 ** 31)
    for _ in range(10):
        dims, jump, comp = CASES[kind](rng)
        X = SensitivityState(rng.normal(size=(dims.n, dims.p)),
                             rng.normal(size=(dims.n, dims.p)),
                             rng.normal(size=(dims.p, dims.p)),
                             rng.normal(size=(dims.nc, dims.p)))
        via_matrix = apply_jump_direct(jump, X)
        via_comp = comp(X)
        scale = max(1.0, np.abs(via_matrix.stacked()).max())
        assert np.max(np.abs(via_matrix.stacked() - via_comp.stacked())) < 1e-12 * scale


@pytest.mark.parametrize("kind", sorted(CASES))
def test_bilinear_identity(kind):
    rng = np.random.default_rng(hash(kind + "b") % 2 ** 31)
    for _ in range(20):
        dims, jump, _ = CASES[kind](rng)
        X = SensitivityState(rng.normal(size=(dims.n, dims.p)),
                             rng.normal(size=(dims.n, dims.p)),
                             rng.normal(size=(dims.p, dims.p)),
                             rng.normal(size=(dims.nc, dims.p)))
        lam = AdjointState(rng.normal(size=(dims.n, dims.nc)),
                           rng.normal(size=(dims.n, dims.nc)),
                           rng.normal(size=(dims.p, dims.nc)),
                           rng.normal(size=(dims.nc, dims.nc)))
        left = (apply_jump_adjoint(jump, lam).stacked().T @ X.stacked())
        right = lam.stacked().T @ apply_jump_direct(jump, X).stacked()
        scale = max(1.0, np.abs(left).max())
        assert np.max(np.abs(left - right)) < 1e-12 * scale


def test_adjoint_jump_z_block_unchanged():
    jump, _ = _bouncing_context()
    rng = np.random.default_rng(21)
    lam = AdjointState(rng.normal(size=(1, 1)), rng.normal(size=(1, 1)),
                       rng.normal(size=(2, 1)), np.eye(1))
    lam2 = apply_jump_adjoint(jump, lam)
    assert np.array_equal(lam2.lamZ, lam.lamZ)
