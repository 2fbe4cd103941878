"""System description: mass matrix, forces, constraints, cost functions.

A MultibodyModel supplies M(t,q,rho), F(t,q,v,rho), initial conditions with
their parameter Jacobians, and (optionally) a holonomic constraint block.
Any partial derivative the user does not supply analytically is replaced by
a central finite-difference fallback with step h = eps**(1/3) * max(1, |x|),
the standard optimal step for central differences.

CostFunctional holds the trajectory cost density g and the terminal cost w.
Both may depend on the acceleration (resolved through the active dynamics)
and on an optional argument function u(t, q, v, vdot, rho); the chain-rule
assembly of the resolved gradients lives here as well.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .core import Dimensions

_CBRT_EPS = float(np.finfo(float).eps) ** (1.0 / 3.0)

COND_LIMIT = 1e12  # mass factorization refused above this condition estimate


class SingularMatrixError(RuntimeError):
    """A mass or KKT factorization failed or is numerically rank deficient."""


def fd_step(x: float) -> float:
    """Central-difference step for the scalar coordinate value x."""
    return _CBRT_EPS * max(1.0, abs(x))


def fd_jacobian(fun: Callable[[np.ndarray], np.ndarray], x: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of fun at x, one column per coordinate."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x), dtype=float)
    jac = np.empty(f0.shape + (x.size,))
    for j in range(x.size):
        h = fd_step(x[j])
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        # recompute the actually-representable step
        d = xp[j] - xm[j]
        jac[..., j] = (np.asarray(fun(xp), dtype=float) - np.asarray(fun(xm), dtype=float)) / d
    return jac


def fd_derivative(fun: Callable[[float], np.ndarray], x: float) -> np.ndarray:
    """Central-difference derivative of a vector function of a scalar."""
    h = fd_step(x)
    return (np.asarray(fun(x + h), dtype=float) - np.asarray(fun(x - h), dtype=float)) / (2.0 * h)


def _spd_solve(M: np.ndarray, B: np.ndarray, what: str, t: float) -> np.ndarray:
    """Solve M X = B for symmetric positive definite M via Cholesky.

    Fails loudly (with a condition estimate) instead of returning garbage
    when M is numerically singular.
    """
    try:
        c, low = scipy.linalg.cho_factor(M, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        cond = float(np.linalg.cond(M))
        raise SingularMatrixError(
            f"{what} not positive definite at t={t:.6g} (cond~{cond:.3g})"
        ) from exc
    d = np.abs(np.diag(c))
    cond_est = (d.max() / d.min()) ** 2
    if cond_est > COND_LIMIT:
        raise SingularMatrixError(
            f"{what} numerically singular at t={t:.6g} (cond~{cond_est:.3g})"
        )
    return scipy.linalg.cho_solve((c, low), B, check_finite=False)


@dataclass
class ConstraintSet:
    """Holonomic constraints Phi(t, q, rho) = 0 and their derivative actions.

    Only ``phi`` is mandatory.  Second-derivative actions are accepted as
    directional callbacks (never full third-order tensors):

    phi_q(t,q,rho)          -> (m, n)   Jacobian d Phi / d q
    phi_t(t,q,rho)          -> (m,)     partial d Phi / d t
    phi_qq_w(t,q,rho,w)     -> (m, n)   d(phi_q @ w)/dq, w held fixed
    phi_qq_T_mu(t,q,rho,mu) -> (n, n)   d(phi_q.T @ mu)/dq, mu held fixed
    phi_t_q(t,q,rho)        -> (m, n)   d(phi_t)/dq
    phi_tt(t,q,rho)         -> (m,)     d(phi_t)/dt
    phi_rho(t,q,rho)        -> (m, p)   d Phi / d rho
    phi_q_rho_w(t,q,rho,w)  -> (m, p)   d(phi_q @ w)/drho
    phi_t_rho(t,q,rho)      -> (m, p)   d(phi_t)/drho

    ``hessian_constant`` declares that phi_q is affine in q (quadratic
    constraints), i.e. d/dq of any phi_qq_w action vanishes.  This enables
    analytic Jacobian fast paths used by the penalty formulation.
    """

    m: int
    phi: Callable
    phi_q: Callable | None = None
    phi_t: Callable | None = None
    phi_qq_w: Callable | None = None
    phi_qq_T_mu: Callable | None = None
    phi_t_q: Callable | None = None
    phi_tt: Callable | None = None
    phi_rho: Callable | None = None
    phi_q_rho_w: Callable | None = None
    phi_t_rho: Callable | None = None
    hessian_constant: bool = False
    scleronomic: bool = True

    # -- evaluations with finite-difference fallbacks ---------------------

    def value(self, t, q, rho) -> np.ndarray:
        return np.asarray(self.phi(t, q, rho), dtype=float)

    def jac_q(self, t, q, rho) -> np.ndarray:
        if self.phi_q is not None:
            return np.asarray(self.phi_q(t, q, rho), dtype=float)
        return fd_jacobian(lambda qq: self.value(t, qq, rho), q)

    def jac_t(self, t, q, rho) -> np.ndarray:
        if self.scleronomic:
            return np.zeros(self.m)
        if self.phi_t is not None:
            return np.asarray(self.phi_t(t, q, rho), dtype=float)
        return fd_derivative(lambda tt: self.value(tt, q, rho), t)

    def qq_action(self, t, q, rho, w) -> np.ndarray:
        """d(phi_q @ w)/dq as an (m, n) matrix."""
        if self.phi_qq_w is not None:
            return np.asarray(self.phi_qq_w(t, q, rho, w), dtype=float)
        return fd_jacobian(lambda qq: self.jac_q(t, qq, rho) @ w, q)

    def qqT_action(self, t, q, rho, mu) -> np.ndarray:
        """d(phi_q.T @ mu)/dq as an (n, n) matrix."""
        if self.phi_qq_T_mu is not None:
            return np.asarray(self.phi_qq_T_mu(t, q, rho, mu), dtype=float)
        return fd_jacobian(lambda qq: self.jac_q(t, qq, rho).T @ mu, q)

    def tq_jac(self, t, q, rho) -> np.ndarray:
        if self.scleronomic:
            return np.zeros((self.m, q.size))
        if self.phi_t_q is not None:
            return np.asarray(self.phi_t_q(t, q, rho), dtype=float)
        return fd_jacobian(lambda qq: self.jac_t(t, qq, rho), q)

    def tt_value(self, t, q, rho) -> np.ndarray:
        if self.scleronomic:
            return np.zeros(self.m)
        if self.phi_tt is not None:
            return np.asarray(self.phi_tt(t, q, rho), dtype=float)
        return fd_derivative(lambda tt: self.jac_t(tt, q, rho), t)

    def jac_rho(self, t, q, rho) -> np.ndarray:
        if self.phi_rho is not None:
            return np.asarray(self.phi_rho(t, q, rho), dtype=float)
        return fd_jacobian(lambda rr: self.value(t, q, rr), rho)

    def q_rho_action(self, t, q, rho, w) -> np.ndarray:
        if self.phi_q_rho_w is not None:
            return np.asarray(self.phi_q_rho_w(t, q, rho, w), dtype=float)
        return fd_jacobian(lambda rr: self.jac_q(t, q, rr) @ w, rho)

    def t_rho_jac(self, t, q, rho) -> np.ndarray:
        if self.scleronomic:
            return np.zeros((self.m, np.asarray(rho).size))
        if self.phi_t_rho is not None:
            return np.asarray(self.phi_t_rho(t, q, rho), dtype=float)
        return fd_jacobian(lambda rr: self.jac_t(t, q, rr), rho)

    # -- derived kinematic quantities --------------------------------------

    def velocity_residual(self, t, q, v, rho) -> np.ndarray:
        """d/dt Phi = phi_q v + phi_t (zero on the constraint manifold)."""
        return self.jac_q(t, q, rho) @ v + self.jac_t(t, q, rho)

    def accel_rhs(self, t, q, v, rho) -> np.ndarray:
        """Right side C of the acceleration constraint phi_q vdot = C."""
        return -(self.qq_action(t, q, rho, v) @ v
                 + self.tq_jac(t, q, rho) @ v
                 + self.tt_value(t, q, rho))

    def accel_rhs_q(self, t, q, v, rho) -> np.ndarray:
        if self.hessian_constant and self.scleronomic:
            return np.zeros((self.m, q.size))
        return fd_jacobian(lambda qq: self.accel_rhs(t, qq, v, rho), q)

    def accel_rhs_v(self, t, q, v, rho) -> np.ndarray:
        return -2.0 * self.qq_action(t, q, rho, v) - self.tq_jac(t, q, rho)

    def accel_rhs_rho(self, t, q, v, rho) -> np.ndarray:
        return fd_jacobian(lambda rr: self.accel_rhs(t, q, v, rr), rho)


@dataclass
class InitialConditions:
    q0: np.ndarray
    v0: np.ndarray
    dq0_drho: np.ndarray
    dv0_drho: np.ndarray


@dataclass
class MultibodyModel:
    """Second-order mechanical system M(t,q,rho) vdot = F(t,q,v,rho).

    Optional analytic partials (mass_q_w, mass_rho_w, force_q, force_v,
    force_rho) override the finite-difference fallback.  The ``mass_*_w``
    callbacks return directional contractions: mass_q_w(t,q,rho,w) is the
    (n, n) matrix whose column j equals (dM/dq_j) @ w.
    """

    dims: Dimensions
    mass: Callable
    force: Callable
    initial_state: Callable  # rho -> InitialConditions
    constraints: ConstraintSet | None = None
    mass_q_w: Callable | None = None
    mass_rho_w: Callable | None = None
    force_q: Callable | None = None
    force_v: Callable | None = None
    force_rho: Callable | None = None
    mass_constant: bool = False
    name: str = "model"

    def mass_at(self, t, q, rho) -> np.ndarray:
        return np.asarray(self.mass(t, q, rho), dtype=float)

    def force_at(self, t, q, v, rho) -> np.ndarray:
        return np.asarray(self.force(t, q, v, rho), dtype=float)

    def mass_q_action(self, t, q, rho, w) -> np.ndarray:
        if self.mass_constant:
            return np.zeros((self.dims.n, self.dims.n))
        if self.mass_q_w is not None:
            return np.asarray(self.mass_q_w(t, q, rho, w), dtype=float)
        return fd_jacobian(lambda qq: self.mass_at(t, qq, rho) @ w, q)

    def mass_rho_action(self, t, q, rho, w) -> np.ndarray:
        if self.mass_rho_w is not None:
            return np.asarray(self.mass_rho_w(t, q, rho, w), dtype=float)
        return fd_jacobian(lambda rr: self.mass_at(t, q, rr) @ w, rho)

    def force_jac_q(self, t, q, v, rho) -> np.ndarray:
        if self.force_q is not None:
            return np.asarray(self.force_q(t, q, v, rho), dtype=float)
        return fd_jacobian(lambda qq: self.force_at(t, qq, v, rho), q)

    def force_jac_v(self, t, q, v, rho) -> np.ndarray:
        if self.force_v is not None:
            return np.asarray(self.force_v(t, q, v, rho), dtype=float)
        return fd_jacobian(lambda vv: self.force_at(t, q, vv, rho), v)

    def force_jac_rho(self, t, q, v, rho) -> np.ndarray:
        if self.force_rho is not None:
            return np.asarray(self.force_rho(t, q, v, rho), dtype=float)
        return fd_jacobian(lambda rr: self.force_at(t, q, v, rr), rho)


class OdeDynamics:
    """Unconstrained (or penalty-wrapped) dynamics vdot = M^{-1} F."""

    def __init__(self, model: MultibodyModel):
        self.model = model
        self.dims = model.dims

    @property
    def n_multipliers(self) -> int:
        return 0

    def accel(self, t, q, v, rho) -> np.ndarray:
        """M^{-1} F via symmetric factorization (never an explicit inverse)."""
        M = self.model.mass_at(t, q, rho)
        F = self.model.force_at(t, q, v, rho)
        return _spd_solve(M, F, "mass matrix", t)

    def accel_and_multipliers(self, t, q, v, rho):
        return self.accel(t, q, v, rho), None

    def jacobians(self, t, q, v, rho, vdot=None):
        """Partial derivatives of the acceleration map.

        For each zeta in {q, v, rho}:  f_zeta = M^{-1} (F_zeta - M_zeta vdot),
        obtained by differentiating M vdot = F through the factorization.
        """
        M = self.model.mass_at(t, q, rho)
        if vdot is None:
            vdot = _spd_solve(M, self.model.force_at(t, q, v, rho), "mass matrix", t)
        rhs_q = self.model.force_jac_q(t, q, v, rho) - self.model.mass_q_action(t, q, rho, vdot)
        rhs_v = self.model.force_jac_v(t, q, v, rho)
        rhs_rho = self.model.force_jac_rho(t, q, v, rho) - self.model.mass_rho_action(t, q, rho, vdot)
        n, p = self.dims.n, self.dims.p
        sol = _spd_solve(M, np.hstack([rhs_q, rhs_v, rhs_rho]), "mass matrix", t)
        return sol[:, :n], sol[:, n:2 * n], sol[:, 2 * n:2 * n + p]

    def multiplier_jacobians(self, t, q, v, rho, vdot=None, mu=None):
        return None

    def residuals(self, t, q, v, rho):
        """Constraint residuals; an unconstrained system has none."""
        return 0.0, 0.0


def eom_rhs(dyn, t, q, v, rho) -> np.ndarray:
    """Acceleration of the active dynamics at (t, q, v, rho)."""
    return dyn.accel(t, q, v, rho)


def eom_jacobians(dyn, t, q, v, rho):
    """(f_q, f_v, f_rho) of the active dynamics at (t, q, v, rho)."""
    return dyn.jacobians(t, q, v, rho)


# ---------------------------------------------------------------------------
# Cost functions
# ---------------------------------------------------------------------------


@dataclass
class CostFunctional:
    """Trajectory cost density g and terminal cost w.

    g(t, q, v, vdot, rho, u) -> (nc,)
    w(tF, q, v, rho, u)      -> (nc,)

    The optional argument function u(t, q, v, vdot, rho) -> (nu,) is composed
    into both.  The terminal cost has no direct acceleration or multiplier
    argument (its resolved gradients would otherwise require the sensitivity
    of the final acceleration, which the terminal condition structure does
    not provide); acceleration may still enter w through u.

    A dependence of the density on the constraint multipliers of an index-1
    formulation is declared separately through ``g_of_mu`` (an additive term
    g_of_mu(t, q, v, vdot, rho, mu) -> (nc,)) so that unconstrained costs
    never see a multiplier argument.
    """

    nc: int
    g: Callable | None = None
    w: Callable | None = None
    u_fn: Callable | None = None
    nu: int = 0
    # analytic partials of g (each optional; FD fallback otherwise)
    g_q: Callable | None = None
    g_v: Callable | None = None
    g_vdot: Callable | None = None
    g_rho: Callable | None = None
    g_u: Callable | None = None
    # analytic partials of u
    u_q: Callable | None = None
    u_v: Callable | None = None
    u_vdot: Callable | None = None
    u_rho: Callable | None = None
    # analytic partials of w
    w_q: Callable | None = None
    w_v: Callable | None = None
    w_rho: Callable | None = None
    w_u: Callable | None = None
    # multiplier dependence of g for constrained dynamics
    g_of_mu: Callable | None = None      # g_of_mu(t,q,v,vdot,rho,mu) -> (nc,) additive term
    g_of_mu_jac: Callable | None = None  # d(g_of_mu)/dmu -> (nc, m)
    name: str = "cost"

    # -- raw evaluations ----------------------------------------------------

    def _u(self, t, q, v, vdot, rho):
        if self.u_fn is None:
            return None
        return np.atleast_1d(np.asarray(self.u_fn(t, q, v, vdot, rho), dtype=float))

    def g_value(self, t, q, v, vdot, rho, mu=None) -> np.ndarray:
        if self.g is None:
            return np.zeros(self.nc)
        u = self._u(t, q, v, vdot, rho)
        val = np.atleast_1d(np.asarray(self.g(t, q, v, vdot, rho, u), dtype=float))
        if self.g_of_mu is not None:
            if mu is None:
                raise ValueError(f"cost '{self.name}' needs multipliers but dynamics has none")
            val = val + np.atleast_1d(np.asarray(self.g_of_mu(t, q, v, vdot, rho, mu), dtype=float))
        return val

    def w_value(self, t, q, v, rho, u=None) -> np.ndarray:
        if self.w is None:
            return np.zeros(self.nc)
        return np.atleast_1d(np.asarray(self.w(t, q, v, rho, u), dtype=float))

    # -- partials with FD fallback -------------------------------------------

    def _part(self, analytic, fallback):
        return analytic if analytic is not None else fallback

    def g_partials(self, t, q, v, vdot, rho):
        """Partial derivatives of g with (t, q, v, vdot, rho) all independent."""
        u = self._u(t, q, v, vdot, rho)
        gq = (np.asarray(self.g_q(t, q, v, vdot, rho, u), dtype=float)
              if self.g_q is not None else
              fd_jacobian(lambda qq: np.atleast_1d(self.g(t, qq, v, vdot, rho, u)), q))
        gv = (np.asarray(self.g_v(t, q, v, vdot, rho, u), dtype=float)
              if self.g_v is not None else
              fd_jacobian(lambda vv: np.atleast_1d(self.g(t, q, vv, vdot, rho, u)), v))
        ga = (np.asarray(self.g_vdot(t, q, v, vdot, rho, u), dtype=float)
              if self.g_vdot is not None else
              fd_jacobian(lambda aa: np.atleast_1d(self.g(t, q, v, aa, rho, u)), vdot))
        gr = (np.asarray(self.g_rho(t, q, v, vdot, rho, u), dtype=float)
              if self.g_rho is not None else
              fd_jacobian(lambda rr: np.atleast_1d(self.g(t, q, v, vdot, rr, u)), rho))
        if u is None:
            gu = None
        else:
            gu = (np.asarray(self.g_u(t, q, v, vdot, rho, u), dtype=float)
                  if self.g_u is not None else
                  fd_jacobian(lambda uu: np.atleast_1d(self.g(t, q, v, vdot, rho, uu)), u))
        return gq.reshape(self.nc, q.size), gv.reshape(self.nc, v.size), \
            ga.reshape(self.nc, vdot.size), gr.reshape(self.nc, rho.size), gu

    def u_partials(self, t, q, v, vdot, rho):
        uq = (np.asarray(self.u_q(t, q, v, vdot, rho), dtype=float)
              if self.u_q is not None else
              fd_jacobian(lambda qq: np.atleast_1d(self.u_fn(t, qq, v, vdot, rho)), q))
        uv = (np.asarray(self.u_v(t, q, v, vdot, rho), dtype=float)
              if self.u_v is not None else
              fd_jacobian(lambda vv: np.atleast_1d(self.u_fn(t, q, vv, vdot, rho)), v))
        ua = (np.asarray(self.u_vdot(t, q, v, vdot, rho), dtype=float)
              if self.u_vdot is not None else
              fd_jacobian(lambda aa: np.atleast_1d(self.u_fn(t, q, v, aa, rho)), vdot))
        ur = (np.asarray(self.u_rho(t, q, v, vdot, rho), dtype=float)
              if self.u_rho is not None else
              fd_jacobian(lambda rr: np.atleast_1d(self.u_fn(t, q, v, vdot, rr)), rho))
        nu = np.atleast_1d(self.u_fn(t, q, v, vdot, rho)).size
        return (uq.reshape(nu, q.size), uv.reshape(nu, v.size),
                ua.reshape(nu, vdot.size), ur.reshape(nu, rho.size))

    def w_partials(self, t, q, v, rho, u):
        wq = (np.asarray(self.w_q(t, q, v, rho, u), dtype=float)
              if self.w_q is not None else
              fd_jacobian(lambda qq: np.atleast_1d(self.w(t, qq, v, rho, u)), q))
        wv = (np.asarray(self.w_v(t, q, v, rho, u), dtype=float)
              if self.w_v is not None else
              fd_jacobian(lambda vv: np.atleast_1d(self.w(t, q, vv, rho, u)), v))
        wr = (np.asarray(self.w_rho(t, q, v, rho, u), dtype=float)
              if self.w_rho is not None else
              fd_jacobian(lambda rr: np.atleast_1d(self.w(t, q, v, rr, u)), rho))
        if u is None:
            wu = None
        else:
            wu = (np.asarray(self.w_u(t, q, v, rho, u), dtype=float)
                  if self.w_u is not None else
                  fd_jacobian(lambda uu: np.atleast_1d(self.w(t, q, v, rho, uu)), u))
        return (wq.reshape(self.nc, q.size), wv.reshape(self.nc, v.size),
                wr.reshape(self.nc, rho.size), wu)

    def mu_jacobian(self, t, q, v, vdot, rho, mu):
        if self.g_of_mu is None:
            return None
        if self.g_of_mu_jac is not None:
            return np.asarray(self.g_of_mu_jac(t, q, v, vdot, rho, mu), dtype=float).reshape(self.nc, mu.size)
        return fd_jacobian(lambda mm: np.atleast_1d(self.g_of_mu(t, q, v, vdot, rho, mm)), mu
                           ).reshape(self.nc, mu.size)


def cost_density_value(cost: CostFunctional, dyn, t, q, v, rho) -> np.ndarray:
    """Resolved cost density at a state: acceleration (and multipliers for
    constrained dynamics) are recovered from the active dynamics."""
    vdot, mu = dyn.accel_and_multipliers(t, q, v, rho)
    return cost.g_value(t, q, v, vdot, rho, mu=mu)


def cost_density_gradients(cost: CostFunctional, dyn, t, q, v, rho,
                           vdot=None, mu=None, f_blocks=None):
    """Resolved gradients of the cost density along the dynamics.

    Accelerations are not independent variables, so the returned gradients
    fold the acceleration map into the direct partials:

        resolved_g_zeta = g_zeta + g_vdot f_zeta + g_u (u_zeta + u_vdot f_zeta)
                          [+ g_mu fmu_zeta for constrained dynamics]

    for zeta in {q, v, rho}.  Returns (value, g_q, g_v, g_rho).

    ``f_blocks`` lets a caller that already evaluated dyn.jacobians at this
    state pass them in; otherwise they are computed here.
    """
    if vdot is None:
        vdot, mu = dyn.accel_and_multipliers(t, q, v, rho)
    if cost.g is None:
        nc, n, p = cost.nc, q.size, rho.size
        z = np.zeros
        return z(nc), z((nc, n)), z((nc, n)), z((nc, p))

    gq, gv, ga, gr, gu = cost.g_partials(t, q, v, vdot, rho)
    needs_f = np.any(ga) or (gu is not None) or (cost.g_of_mu is not None)
    if needs_f:
        if f_blocks is None:
            f_blocks = dyn.jacobians(t, q, v, rho, vdot=vdot)
        f_q, f_v, f_rho = f_blocks
    if gu is not None:
        uq, uv, ua, ur = cost.u_partials(t, q, v, vdot, rho)
        gq = gq + gu @ (uq + ua @ f_q)
        gv = gv + gu @ (uv + ua @ f_v)
        gr = gr + gu @ (ur + ua @ f_rho)
    if np.any(ga):
        gq = gq + ga @ f_q
        gv = gv + ga @ f_v
        gr = gr + ga @ f_rho
    if cost.g_of_mu is not None:
        gmu = cost.mu_jacobian(t, q, v, vdot, rho, mu)
        fmu = dyn.multiplier_jacobians(t, q, v, rho, vdot=vdot, mu=mu)
        if fmu is None:
            raise ValueError(f"cost '{cost.name}' depends on multipliers but dynamics has none")
        fmu_q, fmu_v, fmu_rho = fmu
        gq = gq + gmu @ fmu_q
        gv = gv + gmu @ fmu_v
        gr = gr + gmu @ fmu_rho
    value = cost.g_value(t, q, v, vdot, rho, mu=mu)
    return value, gq, gv, gr


def terminal_cost_gradients(cost: CostFunctional, dyn, tF, q, v, rho):
    """Resolved terminal-cost gradients (w, w_q, w_v, w_rho) at tF.

    The acceleration may enter only through the argument function u, whose
    chain terms are folded in the same way as for the density.
    """
    nc, n, p = cost.nc, q.size, rho.size
    if cost.w is None:
        z = np.zeros
        return z(nc), z((nc, n)), z((nc, n)), z((nc, p))
    vdot, _ = dyn.accel_and_multipliers(tF, q, v, rho)
    u = cost._u(tF, q, v, vdot, rho)
    wval = cost.w_value(tF, q, v, rho, u)
    wq, wv, wr, wu = cost.w_partials(tF, q, v, rho, u)
    if wu is not None:
        uq, uv, ua, ur = cost.u_partials(tF, q, v, vdot, rho)
        if np.any(ua):
            f_q, f_v, f_rho = dyn.jacobians(tF, q, v, rho, vdot=vdot)
            uq = uq + ua @ f_q
            uv = uv + ua @ f_v
            ur = ur + ua @ f_rho
        wq = wq + wu @ uq
        wv = wv + wu @ uv
        wr = wr + wu @ ur
    return wval, wq, wv, wr
