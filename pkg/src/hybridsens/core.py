"""Domain types and dimension bookkeeping shared by every other module.

All state is stored dense; target problems have n, p of order ten at most.
The stacking order of the extended state vector is fixed everywhere as
[q; v; rho; z] and the stacked sensitivity/adjoint matrices follow the same
block order.  Jump matrices index into these blocks, so the order must never
change silently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    """Raised when array sizes are inconsistent with the declared dimensions."""


def _as_vector(x, length: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.shape != (length,):
        raise DimensionError(f"{name} must have shape ({length},), got {a.shape}")
    return a


@dataclass(frozen=True)
class Dimensions:
    """Problem sizes.

    n:  generalized coordinates
    p:  parameters
    nc: scalar cost outputs
    m:  constraint equations (0 for unconstrained systems)

    The velocity degree-of-freedom count is f = n - m.
    """

    n: int
    p: int
    nc: int = 1
    m: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DimensionError(f"n must be >= 1, got {self.n}")
        if self.p < 1:
            raise DimensionError(f"p must be >= 1, got {self.p}")
        if self.nc < 1:
            raise DimensionError(f"nc must be >= 1, got {self.nc}")
        if not 0 <= self.m < self.n:
            raise DimensionError(f"m must satisfy 0 <= m < n, got m={self.m}, n={self.n}")

    @property
    def f(self) -> int:
        """Velocity degrees of freedom."""
        return self.n - self.m

    @property
    def canonical_size(self) -> int:
        """Length of the extended state vector [q; v; rho; z]."""
        return 2 * self.n + self.p + self.nc


@dataclass
class GeneralizedState:
    """Positions, velocities and (cached) accelerations at one time instant."""

    t: float
    q: np.ndarray
    v: np.ndarray
    vdot: np.ndarray | None = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.q.shape != self.v.shape or self.q.ndim != 1:
            raise DimensionError(
                f"q and v must be 1-d and equally sized, got {self.q.shape} and {self.v.shape}"
            )
        if self.vdot is not None:
            self.vdot = _as_vector(self.vdot, self.q.size, "vdot")
        if not (np.isfinite(self.q).all() and np.isfinite(self.v).all()):
            raise ValueError(f"non-finite state at t={self.t}")

    @property
    def n(self) -> int:
        return self.q.size

    def copy(self) -> "GeneralizedState":
        return GeneralizedState(
            self.t,
            self.q.copy(),
            self.v.copy(),
            None if self.vdot is None else self.vdot.copy(),
        )


@dataclass
class ParameterVector:
    """Parameter values with human-readable labels."""

    rho: np.ndarray
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if self.rho.ndim != 1 or self.rho.size < 1:
            raise DimensionError(f"rho must be a non-empty 1-d array, got shape {self.rho.shape}")
        if not np.isfinite(self.rho).all():
            raise ValueError("non-finite parameter value")
        if not self.labels:
            self.labels = tuple(f"rho{i}" for i in range(self.rho.size))
        if len(self.labels) != self.rho.size:
            raise DimensionError(
                f"{len(self.labels)} labels for {self.rho.size} parameters"
            )

    @property
    def p(self) -> int:
        return self.rho.size

    def replaced(self, values: np.ndarray) -> "ParameterVector":
        return ParameterVector(np.asarray(values, dtype=float), self.labels)


@dataclass
class QuadratureState:
    """Accumulated trajectory-cost integrals.  Continuous across events."""

    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim != 1:
            raise DimensionError(f"z must be 1-d, got shape {self.z.shape}")

    @classmethod
    def zero(cls, nc: int) -> "QuadratureState":
        return cls(np.zeros(nc))

    @property
    def nc(self) -> int:
        return self.z.size


@dataclass
class SensitivityState:
    """Stacked forward-sensitivity blocks.

    Q:      d q / d rho          (n x p)
    V:      d v / d rho          (n x p)
    Gamma:  d rho / d rho = I    (p x p)
    Z:      d z / d rho          (nc x p)
    Lambda: d mu / d rho         (m x p), algebraic, present only for
            constrained (index-1) dynamics; it is recomputed from Q and V,
            never integrated.
    """

    Q: np.ndarray
    V: np.ndarray
    Gamma: np.ndarray
    Z: np.ndarray
    Lambda: np.ndarray | None = None

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))
        self.Gamma = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        if self.Lambda is not None:
            self.Lambda = np.atleast_2d(np.asarray(self.Lambda, dtype=float))
        p = self.Gamma.shape[0]
        if self.Gamma.shape != (p, p):
            raise DimensionError(f"Gamma must be square, got {self.Gamma.shape}")
        for name, block in (("Q", self.Q), ("V", self.V), ("Z", self.Z)):
            if block.shape[1] != p:
                raise DimensionError(f"{name} has {block.shape[1]} columns, expected {p}")

    @classmethod
    def initial(cls, dims: Dimensions, dq0_drho: np.ndarray, dv0_drho: np.ndarray) -> "SensitivityState":
        """Initial condition: Q = dq0/drho, V = dv0/drho, Gamma = I, Z = 0."""
        return cls(
            Q=np.asarray(dq0_drho, dtype=float).reshape(dims.n, dims.p),
            V=np.asarray(dv0_drho, dtype=float).reshape(dims.n, dims.p),
            Gamma=np.eye(dims.p),
            Z=np.zeros((dims.nc, dims.p)),
        )

    @property
    def p(self) -> int:
        return self.Gamma.shape[0]

    def stacked(self) -> np.ndarray:
        """Return the (2n+p+nc) x p stacked matrix [Q; V; Gamma; Z]."""
        return np.vstack([self.Q, self.V, self.Gamma, self.Z])

    @classmethod
    def from_stacked(cls, X: np.ndarray, dims: Dimensions,
                     Lambda: np.ndarray | None = None) -> "SensitivityState":
        n, p, nc = dims.n, dims.p, dims.nc
        if X.shape != (2 * n + p + nc, p):
            raise DimensionError(
                f"stacked sensitivity must be ({2 * n + p + nc}, {p}), got {X.shape}"
            )
        return cls(
            Q=X[:n].copy(),
            V=X[n:2 * n].copy(),
            Gamma=X[2 * n:2 * n + p].copy(),
            Z=X[2 * n + p:].copy(),
            Lambda=Lambda,
        )

    def copy(self) -> "SensitivityState":
        return SensitivityState(
            self.Q.copy(), self.V.copy(), self.Gamma.copy(), self.Z.copy(),
            None if self.Lambda is None else self.Lambda.copy(),
        )


@dataclass
class AdjointState:
    """Stacked adjoint blocks, one column per cost output.

    lamZ is the nc x nc identity for all time (the quadrature enters the cost
    with unit weight), and lamLambda is identically zero for the index-1
    constrained formulation.  Both invariants are asserted by the test suite
    after every propagation.
    """

    lamQ: np.ndarray
    lamV: np.ndarray
    lamGamma: np.ndarray
    lamZ: np.ndarray
    lamLambda: np.ndarray | None = None

    def __post_init__(self):
        self.lamQ = np.atleast_2d(np.asarray(self.lamQ, dtype=float))
        self.lamV = np.atleast_2d(np.asarray(self.lamV, dtype=float))
        self.lamGamma = np.atleast_2d(np.asarray(self.lamGamma, dtype=float))
        self.lamZ = np.atleast_2d(np.asarray(self.lamZ, dtype=float))
        if self.lamLambda is not None:
            self.lamLambda = np.atleast_2d(np.asarray(self.lamLambda, dtype=float))
        nc = self.lamZ.shape[0]
        if self.lamZ.shape != (nc, nc):
            raise DimensionError(f"lamZ must be square, got {self.lamZ.shape}")
        for name, block in (("lamQ", self.lamQ), ("lamV", self.lamV), ("lamGamma", self.lamGamma)):
            if block.shape[1] != nc:
                raise DimensionError(f"{name} has {block.shape[1]} columns, expected {nc}")

    @property
    def nc(self) -> int:
        return self.lamZ.shape[0]

    def stacked(self) -> np.ndarray:
        """Return the (2n+p+nc) x nc stacked matrix [lamQ; lamV; lamGamma; lamZ]."""
        return np.vstack([self.lamQ, self.lamV, self.lamGamma, self.lamZ])

    @classmethod
    def from_stacked(cls, L: np.ndarray, dims: Dimensions,
                     lamLambda: np.ndarray | None = None) -> "AdjointState":
        n, p, nc = dims.n, dims.p, dims.nc
        if L.shape != (2 * n + p + nc, nc):
            raise DimensionError(
                f"stacked adjoint must be ({2 * n + p + nc}, {nc}), got {L.shape}"
            )
        return cls(
            lamQ=L[:n].copy(),
            lamV=L[n:2 * n].copy(),
            lamGamma=L[2 * n:2 * n + p].copy(),
            lamZ=L[2 * n + p:].copy(),
            lamLambda=lamLambda,
        )

    def copy(self) -> "AdjointState":
        return AdjointState(
            self.lamQ.copy(), self.lamV.copy(), self.lamGamma.copy(), self.lamZ.copy(),
            None if self.lamLambda is None else self.lamLambda.copy(),
        )


def pack_canonical(gs: GeneralizedState, rho: ParameterVector, zq: QuadratureState) -> np.ndarray:
    """Stack [q; v; rho; z] into the extended state vector.

    The packing is a plain concatenation: unpack_canonical is its exact
    (bitwise) inverse for finite inputs.
    """
    if gs.q.size != gs.v.size:
        raise DimensionError("q and v sizes differ")
    return np.concatenate([gs.q, gs.v, rho.rho, zq.z])


def unpack_canonical(x: np.ndarray, dims: Dimensions, t: float = 0.0):
    """Split an extended state vector back into (GeneralizedState, ParameterVector, QuadratureState)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (dims.canonical_size,):
        raise DimensionError(
            f"canonical vector must have shape ({dims.canonical_size},), got {x.shape}"
        )
    n, p = dims.n, dims.p
    gs = GeneralizedState(t, x[:n], x[n:2 * n])
    rho = ParameterVector(x[2 * n:2 * n + p])
    zq = QuadratureState(x[2 * n + p:])
    return gs, rho, zq
