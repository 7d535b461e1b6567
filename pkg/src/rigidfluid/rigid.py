"""Rigid-body kinematics and the compactly supported divergence-free extension field.

The body state carries both body-frame velocities (L, R) and their world-frame
images (l, omega).  The extension field glues the body's rigid velocity to zero
far away through a radial C^2 cutoff:

    extension(x) = psi(x) * V(x) + grad(psi)(x) x W(x)

with V the rigid velocity l + omega x (x - h), W a vector potential chosen so
that the whole field is divergence free, and psi = zeta(|x - h|) a quintic
radial blend.  Because grad(psi) is parallel to (x - h), divergence freeness
holds for the W convention used here regardless of the sign ambiguity in the
curl of W (the mismatch V - curl W is azimuthal, hence orthogonal to the radial
grad(psi)).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStateError, ValidationError

Array = np.ndarray

ORTHONORMALITY_TOL = 1e-10


def skew(v: Array) -> Array:
    """Skew matrix A(v) with A(v) @ w = v x w."""
    v = np.asarray(v, dtype=float)
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def unskew(a: Array) -> Array:
    """Axial vector of a (near-)skew matrix, symmetrized for robustness."""
    return 0.5 * np.array([a[2, 1] - a[1, 2], a[0, 2] - a[2, 0], a[1, 0] - a[0, 1]])


def polar_orthonormalize(q: Array) -> Array:
    """Nearest rotation matrix in the Frobenius sense (polar factor via SVD)."""
    u, _, vt = np.linalg.svd(q)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


@dataclass
class RigidBodyState:
    """Position, orientation and velocities of the body.

    h is the world position of the mass center, Q the rotation matrix,
    (L, R) the body-frame translational/angular velocities.  World-frame
    (l, omega) are derived, never stored.  m, Jbar (inertia at time 0) and
    rho_body are constants of the body.
    """

    t: float
    h: Array
    Q: Array
    L: Array
    R: Array
    m: float
    Jbar: Array
    rho_body: float = 1.0

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        self.Q = np.asarray(self.Q, dtype=float)
        self.L = np.asarray(self.L, dtype=float)
        self.R = np.asarray(self.R, dtype=float)
        self.Jbar = np.asarray(self.Jbar, dtype=float)

    @classmethod
    def at_rest(cls, m, Jbar, rho_body=1.0):
        return cls(t=0.0, h=np.zeros(3), Q=np.eye(3), L=np.zeros(3),
                   R=np.zeros(3), m=m, Jbar=Jbar, rho_body=rho_body)

    @property
    def l(self) -> Array:
        return self.Q @ self.L

    @property
    def omega(self) -> Array:
        return unskew(self.Q @ skew(self.R) @ self.Q.T)

    def validate(self):
        for name in ("h", "Q", "L", "R", "Jbar"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidStateError(f"non-finite entries in {name}")
        if np.max(np.abs(self.Q.T @ self.Q - np.eye(3))) > ORTHONORMALITY_TOL:
            raise InvalidStateError("Q is not orthonormal")
        if np.linalg.det(self.Q) < 0:
            raise InvalidStateError("Q is not proper (det != 1)")
        if np.max(np.abs(self.Jbar - self.Jbar.T)) > 1e-12:
            raise InvalidStateError("inertia matrix not symmetric")
        if np.any(np.linalg.eigvalsh(self.Jbar) <= 0):
            raise InvalidStateError("inertia matrix not positive definite")


def body_to_world(state: RigidBodyState) -> tuple[Array, Array]:
    """World-frame (l, omega) from the body-frame pair: l = Q L, A(omega) = Q A(R) Q^T."""
    return state.l, state.omega


def advance_rotation(Q: Array, R: Array, dt: float) -> Array:
    """One RK4 step of dQ/dt = Q A(R) (R held fixed), re-orthonormalized.

    The polar repair keeps Q on SO(3) to ~1e-15 per step without changing the
    rotation angle at the order of the integrator error.
    """
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(R))):
        raise InvalidStateError("non-finite entries in Q or R")
    A = skew(R)
    k1 = Q @ A
    k2 = (Q + 0.5 * dt * k1) @ A
    k3 = (Q + 0.5 * dt * k2) @ A
    k4 = (Q + dt * k3) @ A
    return polar_orthonormalize(Q + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4))


def _smoothstep_c2(u):
    """Quintic 1 -> 0 blend on [0, 1] with vanishing first/second derivatives at both ends."""
    return 1.0 - u ** 3 * (10.0 - 15.0 * u + 6.0 * u ** 2)


def _smoothstep_c2_d1(u):
    return -30.0 * u ** 2 * (1.0 - u) ** 2


def _smoothstep_c2_d2(u):
    return -60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)


@dataclass
class CutoffProfile:
    """Radial cutoff zeta(r): 1 inside r1, 0 outside r2, quintic C^2 blend between.

    blend holds the monomial coefficients of the transition in the normalized
    coordinate u = (r - r1)/(r2 - r1).
    """

    r1: float
    r2: float
    blend: Array = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, -10.0, 15.0, -6.0]))

    def __post_init__(self):
        if not (0 < self.r1 < self.r2):
            raise ValidationError("cutoff radii must satisfy 0 < r1 < r2")

    def validate_for(self, body_radius: float, outer_radius: float):
        if self.r1 <= body_radius:
            raise ValidationError(
                f"cutoff.r1 = {self.r1} must exceed the circumscribed body radius {body_radius}")
        if self.r2 >= outer_radius:
            raise ValidationError(
                f"cutoff.r2 = {self.r2} must lie strictly inside the mesh truncation radius {outer_radius}")

    def _u(self, r):
        return (np.asarray(r, dtype=float) - self.r1) / (self.r2 - self.r1)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        u = np.clip(self._u(r), 0.0, 1.0)
        return np.where(r <= self.r1, 1.0, np.where(r >= self.r2, 0.0, _smoothstep_c2(u)))

    def dvalue(self, r):
        r = np.asarray(r, dtype=float)
        inside = (r > self.r1) & (r < self.r2)
        u = np.clip(self._u(r), 0.0, 1.0)
        return np.where(inside, _smoothstep_c2_d1(u) / (self.r2 - self.r1), 0.0)

    def ddvalue(self, r):
        r = np.asarray(r, dtype=float)
        inside = (r > self.r1) & (r < self.r2)
        u = np.clip(self._u(r), 0.0, 1.0)
        return np.where(inside, _smoothstep_c2_d2(u) / (self.r2 - self.r1) ** 2, 0.0)


def _as_points(x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    return np.atleast_2d(x), single


def rigid_velocity(x, l, omega, h):
    """Rigid velocity field  l + omega x (x - h)  at points x (shape (..., 3))."""
    pts, single = _as_points(x)
    r = pts - h
    out = l + np.cross(np.broadcast_to(omega, r.shape), r)
    return out[0] if single else out


def stream_moment(x, l, omega, h):
    """Vector potential term  W = l x (x - h)/2 + |x - h|^2 omega / 2."""
    pts, single = _as_points(x)
    r = pts - h
    out = 0.5 * np.cross(np.broadcast_to(l, r.shape), r) \
        + 0.5 * np.sum(r * r, axis=-1, keepdims=True) * omega
    return out[0] if single else out


def cutoff_value(x, h, profile: CutoffProfile):
    """psi at points x.  The radial profile makes the body rotation inert here."""
    pts, single = _as_points(x)
    rho = np.linalg.norm(pts - h, axis=-1)
    out = profile.value(rho)
    return out[0] if single else out


def extension_field(x, l, omega, h, profile: CutoffProfile):
    """The divergence-free extension:  psi V + grad(psi) x W.

    Equals the rigid velocity for |x - h| <= r1 and vanishes for |x - h| >= r2.
    """
    pts, single = _as_points(x)
    r = pts - h
    rho = np.linalg.norm(r, axis=-1)
    psi = profile.value(rho)

    out = psi[..., None] * rigid_velocity(pts, l, omega, h)
    blend = (rho > profile.r1) & (rho < profile.r2)
    if np.any(blend):
        rb = r[blend]
        rhob = rho[blend]
        gpsi = (profile.dvalue(rhob) / rhob)[:, None] * rb
        out[blend] += np.cross(gpsi, stream_moment(pts[blend], l, omega, h))
    return out[0] if single else out


def extension_jacobian(x, l, omega, h, profile: CutoffProfile):
    """Analytic spatial Jacobian d(extension)/dx, shape (..., 3, 3).

    Needed by the flow-map variational equation; assembled from the cutoff
    radial derivatives and the closed-form derivatives of V and W.
    """
    pts, single = _as_points(x)
    n = pts.shape[0]
    r = pts - h
    rho = np.linalg.norm(r, axis=-1)
    jac = np.zeros((n, 3, 3))

    psi = profile.value(rho)
    # psi * dV/dx  (dV/dx = A(omega) everywhere)
    jac += psi[:, None, None] * skew(omega)

    blend = (rho > profile.r1) & (rho < profile.r2)
    if np.any(blend):
        rb = r[blend]
        rhob = rho[blend]
        rhat = rb / rhob[:, None]
        d1 = profile.dvalue(rhob)
        d2 = profile.ddvalue(rhob)

        gpsi = d1[:, None] * rhat
        V = rigid_velocity(pts[blend], l, omega, h)
        W = stream_moment(pts[blend], l, omega, h)

        # V (x) grad(psi)
        jac[blend] += V[:, :, None] * gpsi[:, None, :]

        # Hessian of psi: d2 rhat rhat^T + (d1/rho)(I - rhat rhat^T)
        eye = np.eye(3)[None, :, :]
        rr = rhat[:, :, None] * rhat[:, None, :]
        hess = d2[:, None, None] * rr + (d1 / rhob)[:, None, None] * (eye - rr)

        # d/dx (grad(psi) x W) = eps_ijk (hess_jl W_k + gpsi_j dW_kl)
        dW = 0.5 * skew(l)[None, :, :] + omega[None, :, None] * rb[:, None, :]
        eps = _levi_civita()
        jac[blend] += np.einsum('ijk,njl,nk->nil', eps, hess, W)
        jac[blend] += np.einsum('ijk,nj,nkl->nil', eps, gpsi, dW)

    return jac[0] if single else jac


_EPS = None


def _levi_civita():
    global _EPS
    if _EPS is None:
        e = np.zeros((3, 3, 3))
        e[0, 1, 2] = e[1, 2, 0] = e[2, 0, 1] = 1.0
        e[0, 2, 1] = e[2, 1, 0] = e[1, 0, 2] = -1.0
        _EPS = e
    return _EPS


@dataclass
class RigidTrajectory:
    """Rigid motion data over one time interval, as needed by the flow map.

    l and R are interpolated linearly between the endpoint values; h is the
    exact integral of the interpolated l; the world omega follows from Q.
    Endpoint Q matrices come from the caller (rotation integrator).
    """

    t0: float
    dt: float
    l0: Array
    l1: Array
    omega0: Array
    omega1: Array
    h0: Array

    @classmethod
    def constant(cls, l, omega, h0=np.zeros(3), t0=0.0, dt=1.0):
        l = np.asarray(l, dtype=float)
        omega = np.asarray(omega, dtype=float)
        return cls(t0=t0, dt=dt, l0=l, l1=l, omega0=omega, omega1=omega,
                   h0=np.asarray(h0, dtype=float))

    @classmethod
    def from_endpoints(cls, t0, dt, l0, l1, omega0, omega1, h0):
        return cls(t0=t0, dt=dt, l0=np.asarray(l0, float), l1=np.asarray(l1, float),
                   omega0=np.asarray(omega0, float), omega1=np.asarray(omega1, float),
                   h0=np.asarray(h0, float))

    def at(self, t: float) -> tuple[Array, Array, Array]:
        """(l, omega, h) at absolute time t within [t0, t0 + dt]."""
        s = 0.0 if self.dt == 0 else (t - self.t0) / self.dt
        l = (1 - s) * self.l0 + s * self.l1
        omega = (1 - s) * self.omega0 + s * self.omega1
        # h = h0 + int_0^s (l0 + s'(l1 - l0)) dt = h0 + dt*(s l0 + s^2 (l1-l0)/2)
        h = self.h0 + self.dt * (s * self.l0 + 0.5 * s ** 2 * (self.l1 - self.l0))
        return l, omega, h
