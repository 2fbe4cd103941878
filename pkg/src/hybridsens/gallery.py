"""Built-in benchmark problems.

five-bar        Planar five-bar mechanism in natural point coordinates with
                two degrees of freedom, four squared-length constraints, two
                anchor springs, and an elastic ground contact under point 2.
bouncing-mass   One vertical point mass with restitution at the ground;
                every quantity has a closed form, which the tests exploit.
pendulum        Point mass dropped inside a circular tether: free flight
                until the tether engages inelastically, then a constrained
                swing (the smooth constrained phase doubles as the
                penalty-vs-index-1 cross-check model).

The five-bar's published data (masses, stiffnesses, natural lengths, link
lengths, anchors, ground height) fix everything except the initial pose and
the spring attachment points.  The pose used here is the symmetric assembly
q1=(-1.5,-1), q2=(0,-2), q3=(1.5,-1) (consistent with the link lengths to
four digits) with spring 1 from anchor A to point 3 and spring 2 from
anchor B to point 2; both natural lengths then match the published values
at the initial pose, so the springs start unloaded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dimensions, ParameterVector
from .model import (
    ConstraintSet,
    CostFunctional,
    InitialConditions,
    MultibodyModel,
    OdeDynamics,
)
from .constrained import DaeDynamics, PenaltyConfig, PenaltyDynamics
from .hybrid import ConstrainedElasticEvent, ConstrainedInelasticEvent, DofPartition, VelocityJumpEvent
from .integrate import IntegratorConfig

GRAVITY = 9.81


class AssemblyError(RuntimeError):
    """Newton projection onto the constraint manifold failed to converge."""


@dataclass
class GalleryProblem:
    """A ready-to-run benchmark: dynamics, events, cost menu, defaults."""

    name: str
    dynamics: object
    events: list
    costs: dict
    default_cost: str
    rho0: ParameterVector
    t_span: tuple
    config: IntegratorConfig = field(default_factory=IntegratorConfig)
    notes: str = ""

    def cost(self, name: str | None = None) -> CostFunctional:
        key = name or self.default_cost
        if key not in self.costs:
            raise KeyError(f"unknown cost '{key}' for {self.name}; "
                           f"available: {sorted(self.costs)}")
        return self.costs[key]


# ---------------------------------------------------------------------------
# Five-bar mechanism
# ---------------------------------------------------------------------------

FIVE_BAR_DATA = dict(
    m1=1.0, m2=1.5, m3=1.5, m4=1.0,
    k1=100.0, k2=100.0,
    L01=2.2360, L02=2.0615,
    LA1=1.4142, L21=1.8027, L32=1.8027, LB3=1.4142,
    qA=np.array([-0.5, 0.0]),
    qB=np.array([0.5, 0.0]),
    ground=-2.35,
)

# nominal pose used to seed the assembly Newton solve
_FIVE_BAR_POSE = np.array([-1.5, -1.0, 0.0, -2.0, 1.5, -1.0])
_FIVE_BAR_DOF = (2, 3)  # (x2, y2)

FIVE_BAR_PARAMS = ("k1", "k2", "LA1", "L21", "L32", "LB3", "L01", "L02")


def _five_bar_mass() -> np.ndarray:
    """Constant natural-coordinate mass matrix for uniform slender rods.

    Each rod connecting two model points contributes the consistent
    two-node block (m/6) [[2I, I], [I, 2I]]; rod ends attached to a fixed
    anchor contribute only their free-point diagonal block m/3 I.
    """
    d = FIVE_BAR_DATA
    M = np.zeros((6, 6))
    I2 = np.eye(2)
    M[0:2, 0:2] += (d["m1"] / 3.0) * I2
    M[0:2, 0:2] += (d["m2"] / 3.0) * I2
    M[0:2, 2:4] += (d["m2"] / 6.0) * I2
    M[2:4, 0:2] += (d["m2"] / 6.0) * I2
    M[2:4, 2:4] += (d["m2"] / 3.0) * I2
    M[2:4, 2:4] += (d["m3"] / 3.0) * I2
    M[2:4, 4:6] += (d["m3"] / 6.0) * I2
    M[4:6, 2:4] += (d["m3"] / 6.0) * I2
    M[4:6, 4:6] += (d["m3"] / 3.0) * I2
    M[4:6, 4:6] += (d["m4"] / 3.0) * I2
    return M


def _five_bar_weight() -> np.ndarray:
    """Consistent nodal gravity loads (half of each rod's weight per end)."""
    d = FIVE_BAR_DATA
    F = np.zeros(6)
    F[1] = -GRAVITY * (d["m1"] + d["m2"]) / 2.0
    F[3] = -GRAVITY * (d["m2"] + d["m3"]) / 2.0
    F[5] = -GRAVITY * (d["m3"] + d["m4"]) / 2.0
    return F


def _spring_force(point: np.ndarray, anchor: np.ndarray, k: float, L0: float):
    """Force on the point and its Jacobian w.r.t. the point coordinates."""
    dvec = point - anchor
    L = float(np.linalg.norm(dvec))
    f = -k * (L - L0) * dvec / L
    J = -k * ((1.0 - L0 / L) * np.eye(2) + (L0 / L ** 3) * np.outer(dvec, dvec))
    return f, J, L


class _FiveBarParameterMap:
    """Maps a chosen subset of the named constants onto the rho vector."""

    def __init__(self, names):
        unknown = set(names) - set(FIVE_BAR_PARAMS)
        if unknown:
            raise ValueError(f"unknown five-bar parameters {sorted(unknown)}")
        self.names = tuple(names)
        self.index = {nm: j for j, nm in enumerate(self.names)}

    def value(self, name, rho):
        j = self.index.get(name)
        return float(rho[j]) if j is not None else FIVE_BAR_DATA[name]

    def defaults(self) -> np.ndarray:
        return np.array([FIVE_BAR_DATA[nm] for nm in self.names])

    def grad_slot(self, name):
        return self.index.get(name)


def _five_bar_constraints(pm: _FiveBarParameterMap) -> ConstraintSet:
    """Four squared-length constraints between consecutive points."""
    d = FIVE_BAR_DATA
    pairs = (  # (row, moving point slice or anchor, point slice, length name)
        ("LA1", None, slice(0, 2)),
        ("L21", slice(0, 2), slice(2, 4)),
        ("L32", slice(2, 4), slice(4, 6)),
        ("LB3", slice(4, 6), None),
    )
    anchors = {0: d["qA"], 3: d["qB"]}

    def diffs(q):
        return (
            q[0:2] - d["qA"],
            q[2:4] - q[0:2],
            q[4:6] - q[2:4],
            d["qB"] - q[4:6],
        )

    def phi(t, q, rho):
        dv = diffs(q)
        return np.array([
            dv[0] @ dv[0] - pm.value("LA1", rho) ** 2,
            dv[1] @ dv[1] - pm.value("L21", rho) ** 2,
            dv[2] @ dv[2] - pm.value("L32", rho) ** 2,
            dv[3] @ dv[3] - pm.value("LB3", rho) ** 2,
        ])

    def phi_q(t, q, rho):
        dv = diffs(q)
        G = np.zeros((4, 6))
        G[0, 0:2] = 2.0 * dv[0]
        G[1, 0:2] = -2.0 * dv[1]
        G[1, 2:4] = 2.0 * dv[1]
        G[2, 2:4] = -2.0 * dv[2]
        G[2, 4:6] = 2.0 * dv[2]
        G[3, 4:6] = -2.0 * dv[3]
        return G

    def phi_qq_w(t, q, rho, w):
        """d(phi_q w)/dq: constant Hessians of the squared lengths."""
        H = np.zeros((4, 6))
        H[0, 0:2] = 2.0 * w[0:2]
        H[1, 0:2] = 2.0 * (w[0:2] - w[2:4])
        H[1, 2:4] = 2.0 * (w[2:4] - w[0:2])
        H[2, 2:4] = 2.0 * (w[2:4] - w[4:6])
        H[2, 4:6] = 2.0 * (w[4:6] - w[2:4])
        H[3, 4:6] = 2.0 * w[4:6]
        return H

    def phi_qq_T_mu(t, q, rho, mu):
        A = np.zeros((6, 6))
        I2 = np.eye(2)
        A[0:2, 0:2] += 2.0 * mu[0] * I2
        A[0:2, 0:2] += 2.0 * mu[1] * I2
        A[0:2, 2:4] += -2.0 * mu[1] * I2
        A[2:4, 0:2] += -2.0 * mu[1] * I2
        A[2:4, 2:4] += 2.0 * mu[1] * I2
        A[2:4, 2:4] += 2.0 * mu[2] * I2
        A[2:4, 4:6] += -2.0 * mu[2] * I2
        A[4:6, 2:4] += -2.0 * mu[2] * I2
        A[4:6, 4:6] += 2.0 * mu[2] * I2
        A[4:6, 4:6] += 2.0 * mu[3] * I2
        return A

    def phi_rho(t, q, rho):
        out = np.zeros((4, len(pm.names)))
        for row, nm in enumerate(("LA1", "L21", "L32", "LB3")):
            j = pm.grad_slot(nm)
            if j is not None:
                out[row, j] = -2.0 * pm.value(nm, rho)
        return out

    def phi_q_rho_w(t, q, rho, w):
        return np.zeros((4, len(pm.names)))

    return ConstraintSet(
        m=4, phi=phi, phi_q=phi_q, phi_qq_w=phi_qq_w, phi_qq_T_mu=phi_qq_T_mu,
        phi_rho=phi_rho, phi_q_rho_w=phi_q_rho_w,
        hessian_constant=True, scleronomic=True,
    )


def _newton_assemble(cons: ConstraintSet, q_guess: np.ndarray, dof, rho,
                     tol: float = 1e-13, max_iter: int = 60) -> np.ndarray:
    """Project the dependent coordinates onto Phi = 0 with the dof held fixed."""
    q = q_guess.copy()
    dep = [i for i in range(q.size) if i not in dof]
    for _ in range(max_iter):
        res = cons.value(0.0, q, rho)
        if np.max(np.abs(res)) <= tol:
            return q
        G = cons.jac_q(0.0, q, rho)[:, dep]
        try:
            dq = np.linalg.solve(G, -res)
        except np.linalg.LinAlgError as exc:
            raise AssemblyError("assembly failure: singular dependent Jacobian") from exc
        # damped update guards against overshooting from a poor seed
        step = 1.0
        base = np.max(np.abs(res))
        for _ in range(30):
            trial = q.copy()
            trial[dep] += step * dq
            if np.max(np.abs(cons.value(0.0, trial, rho))) < base or step < 1e-6:
                q = trial
                break
            step *= 0.5
    res = np.max(np.abs(cons.value(0.0, q, rho)))
    if res > tol:
        raise AssemblyError(f"assembly failure: residual {res:.3g} after {max_iter} iterations")
    return q


def five_bar_model(param_names=("k1", "k2")) -> MultibodyModel:
    """Five-bar mechanism with the chosen constants promoted to parameters."""
    pm = _FiveBarParameterMap(param_names)
    d = FIVE_BAR_DATA
    dims = Dimensions(n=6, p=len(pm.names), nc=1, m=4)
    cons = _five_bar_constraints(pm)
    M = _five_bar_mass()
    Fg = _five_bar_weight()

    def force(t, q, v, rho):
        F = Fg.copy()
        f1, _, _ = _spring_force(q[4:6], d["qA"], pm.value("k1", rho), pm.value("L01", rho))
        f2, _, _ = _spring_force(q[2:4], d["qB"], pm.value("k2", rho), pm.value("L02", rho))
        F[4:6] += f1
        F[2:4] += f2
        return F

    def force_q(t, q, v, rho):
        J = np.zeros((6, 6))
        _, J1, _ = _spring_force(q[4:6], d["qA"], pm.value("k1", rho), pm.value("L01", rho))
        _, J2, _ = _spring_force(q[2:4], d["qB"], pm.value("k2", rho), pm.value("L02", rho))
        J[4:6, 4:6] += J1
        J[2:4, 2:4] += J2
        return J

    def force_rho(t, q, v, rho):
        out = np.zeros((6, dims.p))
        f1, _, L1 = _spring_force(q[4:6], d["qA"], pm.value("k1", rho), pm.value("L01", rho))
        f2, _, L2 = _spring_force(q[2:4], d["qB"], pm.value("k2", rho), pm.value("L02", rho))
        k1, L01 = pm.value("k1", rho), pm.value("L01", rho)
        k2, L02 = pm.value("k2", rho), pm.value("L02", rho)
        j = pm.grad_slot("k1")
        if j is not None:
            out[4:6, j] = f1 / k1
        j = pm.grad_slot("k2")
        if j is not None:
            out[2:4, j] = f2 / k2
        j = pm.grad_slot("L01")
        if j is not None:
            out[4:6, j] = k1 * (q[4:6] - d["qA"]) / L1
        j = pm.grad_slot("L02")
        if j is not None:
            out[2:4, j] = k2 * (q[2:4] - d["qB"]) / L2
        return out

    def initial_state(rho):
        q0 = _newton_assemble(cons, _FIVE_BAR_POSE, _FIVE_BAR_DOF, rho)
        dep = [i for i in range(6) if i not in _FIVE_BAR_DOF]
        dq0 = np.zeros((6, dims.p))
        phir = cons.jac_rho(0.0, q0, rho)
        if np.any(phir):
            Gdep = cons.jac_q(0.0, q0, rho)[:, dep]
            dq0[dep, :] = np.linalg.solve(Gdep, -phir)
        return InitialConditions(q0=q0, v0=np.zeros(6),
                                 dq0_drho=dq0, dv0_drho=np.zeros((6, dims.p)))

    return MultibodyModel(
        dims=dims,
        mass=lambda t, q, rho: M,
        force=force,
        initial_state=initial_state,
        constraints=cons,
        force_q=force_q,
        force_v=lambda t, q, v, rho: np.zeros((6, 6)),
        force_rho=force_rho,
        mass_constant=True,
        name="five-bar",
    )


def five_bar_initial_conditions(rho, param_names=("k1", "k2")):
    """Assembled initial pose and its parameter Jacobians for the five-bar."""
    model = five_bar_model(param_names)
    ic = model.initial_state(np.asarray(rho, dtype=float))
    return ic.q0, ic.v0, ic.dq0_drho, ic.dv0_drho


def _five_bar_costs() -> dict:
    sel_vy2 = np.zeros((1, 6))
    sel_vy2[0, 3] = 1.0
    zeros16 = np.zeros((1, 6))

    int_vy2 = CostFunctional(
        nc=1,
        g=lambda t, q, v, a, rho, u: np.array([v[3]]),
        g_q=lambda *a: zeros16, g_v=lambda *a: sel_vy2,
        g_vdot=lambda *a: zeros16,
        g_rho=lambda t, q, v, a, rho, u: np.zeros((1, rho.size)),
        name="int-vy2",
    )
    int_ay2 = CostFunctional(
        nc=1,
        g=lambda t, q, v, a, rho, u: np.array([a[3]]),
        g_q=lambda *a: zeros16, g_v=lambda *a: zeros16,
        g_vdot=lambda *a: sel_vy2,
        g_rho=lambda t, q, v, a, rho, u: np.zeros((1, rho.size)),
        name="int-ay2",
    )
    # integrand ay2^2 + vy2^2, with the acceleration entering through the
    # argument function u = ay2 (the one place the u-chain is exercised)
    int_sq = CostFunctional(
        nc=1,
        g=lambda t, q, v, a, rho, u: np.array([u[0] ** 2 + v[3] ** 2]),
        g_q=lambda *a: zeros16,
        g_v=lambda t, q, v, a, rho, u: np.array([[0, 0, 0, 2.0 * v[3], 0, 0]]),
        g_vdot=lambda *a: zeros16,
        g_rho=lambda t, q, v, a, rho, u: np.zeros((1, rho.size)),
        g_u=lambda t, q, v, a, rho, u: np.array([[2.0 * u[0]]]),
        u_fn=lambda t, q, v, a, rho: np.array([a[3]]),
        u_q=lambda *a: zeros16, u_v=lambda *a: zeros16,
        u_vdot=lambda *a: sel_vy2,
        u_rho=lambda t, q, v, a, rho: np.zeros((1, rho.size)),
        nu=1,
        name="int-ay2sq-vy2sq",
    )
    return {"int-vy2": int_vy2, "int-ay2": int_ay2, "int-ay2sq-vy2sq": int_sq}


def five_bar(param_names=("k1", "k2"), formulation: str = "penalty",
             pcfg: PenaltyConfig | None = None) -> GalleryProblem:
    model = five_bar_model(param_names)
    if formulation == "penalty":
        dynamics = PenaltyDynamics(model, pcfg or PenaltyConfig())
    elif formulation == "dae":
        dynamics = DaeDynamics(model)
    else:
        raise ValueError(f"unknown formulation '{formulation}'")
    ground = FIVE_BAR_DATA["ground"]
    event = ConstrainedElasticEvent(
        name="ground-contact",
        r=lambda q: q[3] - ground,
        dr_dq=lambda q: np.array([0, 0, 0, 1.0, 0, 0]),
        dof_jump=lambda t, q, vdof, rho: np.array([vdof[0], -vdof[1]]),
        h_t=lambda t, q, vdof, rho: np.zeros(2),
        h_q=lambda t, q, vdof, rho: np.zeros((2, 6)),
        h_vdof=lambda t, q, vdof, rho: np.array([[1.0, 0.0], [0.0, -1.0]]),
        h_rho=lambda t, q, vdof, rho: np.zeros((2, rho.size)),
        partition=DofPartition(n=6, dof=_FIVE_BAR_DOF),
    )
    pm = _FiveBarParameterMap(param_names)
    return GalleryProblem(
        name="five-bar",
        dynamics=dynamics,
        events=[event],
        costs=_five_bar_costs(),
        default_cost="int-vy2",
        rho0=ParameterVector(pm.defaults(), pm.names),
        t_span=(0.0, 5.0),
        notes="elastic ground contact under point 2 at y = %.2f" % ground,
    )


# ---------------------------------------------------------------------------
# Bouncing point mass
# ---------------------------------------------------------------------------


def bouncing_mass_model() -> MultibodyModel:
    dims = Dimensions(n=1, p=2, nc=1)

    def initial_state(rho):
        return InitialConditions(
            q0=np.array([rho[0]]), v0=np.zeros(1),
            dq0_drho=np.array([[1.0, 0.0]]), dv0_drho=np.zeros((1, 2)),
        )

    return MultibodyModel(
        dims=dims,
        mass=lambda t, q, rho: np.eye(1),
        force=lambda t, q, v, rho: np.array([-GRAVITY]),
        initial_state=initial_state,
        force_q=lambda t, q, v, rho: np.zeros((1, 1)),
        force_v=lambda t, q, v, rho: np.zeros((1, 1)),
        force_rho=lambda t, q, v, rho: np.zeros((1, 2)),
        mass_constant=True,
        name="bouncing-mass",
    )


def bouncing_mass() -> GalleryProblem:
    """Point mass dropped from height rho[0] with restitution rho[1]."""
    model = bouncing_mass_model()
    dynamics = OdeDynamics(model)
    event = VelocityJumpEvent(
        name="ground",
        r=lambda q: q[0],
        dr_dq=lambda q: np.array([1.0]),
        h=lambda t, q, v, rho: np.array([-rho[1] * v[0]]),
        h_t=lambda t, q, v, rho: np.zeros(1),
        h_q=lambda t, q, v, rho: np.zeros((1, 1)),
        h_v=lambda t, q, v, rho: np.array([[-rho[1]]]),
        h_rho=lambda t, q, v, rho: np.array([[0.0, -v[0]]]),
    )
    costs = {
        "height-final": CostFunctional(
            nc=1,
            w=lambda t, q, v, rho, u: np.array([q[0]]),
            w_q=lambda t, q, v, rho, u: np.array([[1.0]]),
            w_v=lambda t, q, v, rho, u: np.array([[0.0]]),
            w_rho=lambda t, q, v, rho, u: np.zeros((1, 2)),
            name="height-final",
        ),
        "int-vy": CostFunctional(
            nc=1,
            g=lambda t, q, v, a, rho, u: np.array([v[0]]),
            g_q=lambda *a: np.zeros((1, 1)), g_v=lambda *a: np.ones((1, 1)),
            g_vdot=lambda *a: np.zeros((1, 1)),
            g_rho=lambda t, q, v, a, rho, u: np.zeros((1, 2)),
            name="int-vy",
        ),
    }
    return GalleryProblem(
        name="bouncing-mass",
        dynamics=dynamics,
        events=[event],
        costs=costs,
        default_cost="height-final",
        rho0=ParameterVector(np.array([1.0, 0.9]), ("h0", "e")),
        t_span=(0.0, 1.5),
        notes="two ground impacts inside the default horizon",
    )


# ---------------------------------------------------------------------------
# Tethered point mass (pendulum capture)
# ---------------------------------------------------------------------------

PENDULUM_LENGTH = 1.0


def pendulum_model(constrained: bool = True) -> MultibodyModel:
    """Planar point mass; with the tether constraint when ``constrained``.

    Parameters: rho = (x0, vy0, m) -- drop abscissa, initial vertical
    velocity, and mass.  The tether length is a fixed constant so the event
    function depends on the positions alone.
    """
    L = PENDULUM_LENGTH
    m_cons = 1 if constrained else 0
    dims = Dimensions(n=2, p=3, nc=1, m=m_cons)

    def mass(t, q, rho):
        return rho[2] * np.eye(2)

    def mass_rho_w(t, q, rho, w):
        out = np.zeros((2, 3))
        out[:, 2] = w
        return out

    def force(t, q, v, rho):
        return np.array([0.0, -rho[2] * GRAVITY])

    def force_rho(t, q, v, rho):
        out = np.zeros((2, 3))
        out[1, 2] = -GRAVITY
        return out

    def initial_state(rho):
        q0 = np.array([rho[0], -0.6 * L])
        v0 = np.array([0.0, rho[1]])
        dq0 = np.zeros((2, 3))
        dq0[0, 0] = 1.0
        dv0 = np.zeros((2, 3))
        dv0[1, 1] = 1.0
        return InitialConditions(q0, v0, dq0, dv0)

    cons = None
    if constrained:
        cons = ConstraintSet(
            m=1,
            phi=lambda t, q, rho: np.array([q @ q - L ** 2]),
            phi_q=lambda t, q, rho: 2.0 * q[None, :],
            phi_qq_w=lambda t, q, rho, w: 2.0 * w[None, :],
            phi_qq_T_mu=lambda t, q, rho, mu: 2.0 * mu[0] * np.eye(2),
            phi_rho=lambda t, q, rho: np.zeros((1, 3)),
            phi_q_rho_w=lambda t, q, rho, w: np.zeros((1, 3)),
            hessian_constant=True,
            scleronomic=True,
        )

    return MultibodyModel(
        dims=dims,
        mass=mass,
        force=force,
        initial_state=initial_state,
        constraints=cons,
        mass_rho_w=mass_rho_w,
        force_q=lambda t, q, v, rho: np.zeros((2, 2)),
        force_v=lambda t, q, v, rho: np.zeros((2, 2)),
        force_rho=force_rho,
        name="pendulum",
    )


def pendulum_swing_model(theta0: float = 0.9) -> MultibodyModel:
    """Constrained pendulum started on the tether (for smooth-phase tests)."""
    model = pendulum_model(constrained=True)
    L = PENDULUM_LENGTH

    def initial_state(rho):
        q0 = np.array([L * np.sin(theta0), -L * np.cos(theta0)])
        v0 = np.array([0.0, 0.0])
        return InitialConditions(q0, v0, np.zeros((2, 3)), np.zeros((2, 3)))

    model.initial_state = initial_state
    return model


def pendulum() -> GalleryProblem:
    """Free fall inside the tether disc, inelastic capture, constrained swing."""
    free = pendulum_model(constrained=False)
    tethered = pendulum_model(constrained=True)
    dyn_free = OdeDynamics(free)
    dyn_tethered = DaeDynamics(tethered)
    L = PENDULUM_LENGTH
    event = ConstrainedInelasticEvent(
        name="tether-capture",
        r=lambda q: q @ q - L ** 2,
        dr_dq=lambda q: 2.0 * q,
        post_dynamics=dyn_tethered,
        partition=DofPartition(n=2, dof=(0,)),
    )
    costs = {
        "x-final": CostFunctional(
            nc=1,
            w=lambda t, q, v, rho, u: np.array([q[0]]),
            w_q=lambda t, q, v, rho, u: np.array([[1.0, 0.0]]),
            w_v=lambda t, q, v, rho, u: np.zeros((1, 2)),
            w_rho=lambda t, q, v, rho, u: np.zeros((1, 3)),
            name="x-final",
        ),
        "int-vx": CostFunctional(
            nc=1,
            g=lambda t, q, v, a, rho, u: np.array([v[0]]),
            g_q=lambda *a: np.zeros((1, 2)),
            g_v=lambda *a: np.array([[1.0, 0.0]]),
            g_vdot=lambda *a: np.zeros((1, 2)),
            g_rho=lambda t, q, v, a, rho, u: np.zeros((1, 3)),
            name="int-vx",
        ),
    }
    return GalleryProblem(
        name="pendulum",
        dynamics=dyn_free,
        events=[event],
        costs=costs,
        default_cost="x-final",
        rho0=ParameterVector(np.array([0.15, -1.0, 1.0]), ("x0", "vy0", "m")),
        t_span=(0.0, 1.2),
        notes="tether engages when |q| reaches the fixed length",
    )


def register_gallery() -> dict:
    """Name -> factory for every built-in problem."""
    return {
        "five-bar": five_bar,
        "bouncing-mass": bouncing_mass,
        "pendulum": pendulum,
    }
