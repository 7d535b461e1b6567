"""Structured body-fitted shell mesh on the truncated exterior domain.

Grid layout: logically rectangular (s, theta, phi) with
  s_i = i / n_r                     radial blend coordinate, i = 0..n_r
  theta_j = (j + 1/2) pi / n_theta  staggered colatitude (no node on the axis)
  phi_k = 2 pi k / n_phi            periodic azimuth (n_phi must be even)

Node positions follow the ray through the origin:
  x(s, theta, phi) = Rb(theta, phi)^(1-s) * R_out^s * d(theta, phi)
with Rb the radius at which the ray hits the body surface and d the unit
direction.  s = 0 is the body surface, s = 1 the spherical truncation sphere
of radius R_out; radial spacing is geometric, clustering nodes near the body.

Finite differences act on the computational axes and map to Cartesian
derivatives through the inverse of the discrete mesh Jacobian (the same
stencil applied to the node coordinates), so affine fields are differentiated
exactly.  Across the poles a field value at (s, -theta, phi) equals the value
at (s, theta, phi + pi), so ghost rows are exact copies of rolled data, not
extrapolations.

For the symmetric elliptic solves the mesh also carries trilinear
isoparametric hexahedra on the same nodes.  The polar gaps between the
theta_0 rings and the axis are closed by wedge elements (hexahedra with one
edge collapsed onto a virtual axis node whose value is constrained to the
mean of the adjacent ring), so the discrete domain tiles the shell exactly
once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError

Array = np.ndarray

_GAUSS_1D = np.array([-1.0, 1.0]) / np.sqrt(3.0)

# one-sided first-derivative stencils (offsets, coefficients)
_ONESIDED_2 = (np.array([0, 1, 2]), np.array([-1.5, 2.0, -0.5]))
_ONESIDED_4_EDGE = (np.array([0, 1, 2, 3, 4]),
                    np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0)
_ONESIDED_4_NEXT = (np.array([-1, 0, 1, 2, 3]),
                    np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0)
_CENTERED_2 = (np.array([-1, 1]), np.array([-0.5, 0.5]))
_CENTERED_4 = (np.array([-2, -1, 1, 2]),
               np.array([1.0, -8.0, 8.0, -1.0]) / 12.0)


def _direction(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    cp, sp_ = np.cos(phi), np.sin(phi)
    return np.stack([st * cp, st * sp_, ct], axis=-1)


def _ray_radius(semi_axes, theta, phi):
    """Radius at which the ray in direction (theta, phi) meets the ellipsoid."""
    a, b, c = semi_axes
    st, ct = np.sin(theta), np.cos(theta)
    cp, sp_ = np.cos(phi), np.sin(phi)
    q = (st * cp / a) ** 2 + (st * sp_ / b) ** 2 + (ct / c) ** 2
    return 1.0 / np.sqrt(q)


@dataclass
class ShellMesh:
    semi_axes: Array
    R_out: float
    n_r: int
    n_theta: int
    n_phi: int

    # populated by generate_shell_mesh
    s: Array = field(default=None, repr=False)
    theta: Array = field(default=None, repr=False)
    phi: Array = field(default=None, repr=False)
    nodes: Array = field(default=None, repr=False)
    node_weights: Array = field(default=None, repr=False)
    surf_points: Array = field(default=None, repr=False)
    surf_normals: Array = field(default=None, repr=False)  # paper convention: into the body
    surf_weights: Array = field(default=None, repr=False)
    outer_normals: Array = field(default=None, repr=False)
    outer_weights: Array = field(default=None, repr=False)
    body_q_points: Array = field(default=None, repr=False)
    body_q_weights: Array = field(default=None, repr=False)
    min_spacing: float = 0.0

    _cache: dict = field(default_factory=dict, repr=False)

    # ------------------------------------------------------------------ shape
    @property
    def grid_shape(self):
        return (self.n_r + 1, self.n_theta, self.n_phi)

    @property
    def n_nodes(self):
        nr, nt, np_ = self.grid_shape
        return nr * nt * np_

    @property
    def body_radius(self):
        return float(np.max(self.semi_axes))

    def flat_nodes(self):
        return self.nodes.reshape(-1, 3)

    # --------------------------------------------------------------- calculus
    def _axis_derivative(self, f, axis, order):
        """d f / d xi along one computational axis; f shaped (NR, NT, NP, ...)."""
        nr = self.n_r + 1
        if axis == 0:
            h = 1.0 / self.n_r
            out = np.empty_like(f)
            if order == 2:
                out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
                off, co = _ONESIDED_2
                out[0] = sum(c * f[int(o)] for o, c in zip(off, co)) / h
                out[nr - 1] = -sum(c * f[nr - 1 - int(o)] for o, c in zip(off, co)) / h
            else:
                out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
                for row, (off, co) in ((0, _ONESIDED_4_EDGE), (1, _ONESIDED_4_NEXT)):
                    out[row] = sum(c * f[row + int(o)] for o, c in zip(off, co)) / h
                for row, (off, co) in ((nr - 1, _ONESIDED_4_EDGE), (nr - 2, _ONESIDED_4_NEXT)):
                    out[row] = -sum(c * f[row - int(o)] for o, c in zip(off, co)) / h
            return out
        if axis == 1:
            h = np.pi / self.n_theta
            ext = self._pole_extend(f, order // 2)
            if order == 2:
                return (ext[:, 2:] - ext[:, :-2]) / (2 * h)
            return (ext[:, :-4] - 8 * ext[:, 1:-3] + 8 * ext[:, 3:-1] - ext[:, 4:]) / (12 * h)
        h = 2 * np.pi / self.n_phi
        if order == 2:
            return (np.roll(f, -1, axis=2) - np.roll(f, 1, axis=2)) / (2 * h)
        return (np.roll(f, 2, axis=2) - 8 * np.roll(f, 1, axis=2)
                + 8 * np.roll(f, -1, axis=2) - np.roll(f, -2, axis=2)) / (12 * h)

    def _pole_extend(self, f, g):
        """Pad the theta axis with g exact ghost rows on each side."""
        np2 = self.n_phi // 2
        lo = [np.roll(f[:, m], np2, axis=1)[:, None] for m in range(g)]
        hi = [np.roll(f[:, -1 - m], np2, axis=1)[:, None] for m in range(g)]
        return np.concatenate(list(reversed(lo)) + [f] + hi, axis=1)

    def jacobian_inv(self, order=2):
        """Inverse of the discrete mesh Jacobian at matching stencil order.

        Using the same stencil on the coordinates makes the chain rule exact
        for affine fields (free-stream preservation).
        """
        key = ('jinv', order)
        if key not in self._cache:
            cols = [self._axis_derivative(self.nodes, ax, order) for ax in range(3)]
            jac = np.stack(cols, axis=-1)  # (..., xyz, xi)
            det = np.linalg.det(jac)
            if np.any(det <= 0):
                raise ValidationError("discrete mesh Jacobian is not orientation preserving")
            self._cache[key] = np.linalg.inv(jac)
        return self._cache[key]

    def gradient(self, f, order=2):
        """Cartesian gradient of a nodal field.

        f shaped (NR, NT, NP) or (NR, NT, NP, C); returns an array with one
        extra trailing axis of length 3 holding d/dy_a.
        """
        d = [self._axis_derivative(f, ax, order) for ax in range(3)]
        ji = self.jacobian_inv(order)  # (..., xi, xyz)
        if f.ndim == 3:
            return sum(ji[..., k, :] * d[k][..., None] for k in range(3))
        return sum(ji[..., None, k, :] * d[k][..., None] for k in range(3))

    def divergence(self, vec, order=2):
        """Cartesian divergence of a nodal vector field (NR, NT, NP, 3)."""
        g = self.gradient(vec, order=order)  # (..., comp, deriv)
        return g[..., 0, 0] + g[..., 1, 1] + g[..., 2, 2]

    # ------------------------------------------------------- sparse gradient
    def diff_matrix(self, axis, order=2):
        """Sparse matrix form of _axis_derivative on flattened nodes."""
        key = ('diff', axis, order)
        if key in self._cache:
            return self._cache[key]
        nr, nt, np_ = self.grid_shape
        n = nr * nt * np_
        I, J, V = [], [], []

        def flat(i, j, k):
            return (i * nt + j) * np_ + k

        ii, jj, kk = np.meshgrid(np.arange(nr), np.arange(nt), np.arange(np_),
                                 indexing='ij')
        ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()
        rows = flat(ii, jj, kk)

        if axis == 0:
            h = 1.0 / self.n_r
            if order == 2:
                plan = [(_CENTERED_2, (ii >= 1) & (ii <= nr - 2), 1),
                        (_ONESIDED_2, ii == 0, 1), (_ONESIDED_2, ii == nr - 1, -1)]
            else:
                plan = [(_CENTERED_4, (ii >= 2) & (ii <= nr - 3), 1),
                        (_ONESIDED_4_EDGE, ii == 0, 1), (_ONESIDED_4_NEXT, ii == 1, 1),
                        (_ONESIDED_4_EDGE, ii == nr - 1, -1), (_ONESIDED_4_NEXT, ii == nr - 2, -1)]
            for (off, co), mask, sgn in plan:
                for o, c in zip(off, co):
                    I.append(rows[mask])
                    J.append(flat(ii[mask] + sgn * int(o), jj[mask], kk[mask]))
                    V.append(np.full(int(mask.sum()), sgn * c / h))
        elif axis == 1:
            h = np.pi / self.n_theta
            off, co = (_CENTERED_2 if order == 2 else _CENTERED_4)
            np2 = np_ // 2
            for o, c in zip(off, co):
                tj = jj + int(o)
                tk = kk.copy()
                below = tj < 0
                above = tj > nt - 1
                tj = np.where(below, -tj - 1, tj)
                tj = np.where(above, 2 * nt - 1 - tj, tj)
                tk = np.where(below | above, (tk + np2) % np_, tk)
                I.append(rows)
                J.append(flat(ii, tj, tk))
                V.append(np.full(n, c / h))
        else:
            h = 2 * np.pi / self.n_phi
            off, co = (_CENTERED_2 if order == 2 else _CENTERED_4)
            for o, c in zip(off, co):
                I.append(rows)
                J.append(flat(ii, jj, (kk + int(o)) % np_))
                V.append(np.full(n, c / h))

        m = sp.coo_matrix((np.concatenate(V), (np.concatenate(I), np.concatenate(J))),
                          shape=(n, n)).tocsr()
        self._cache[key] = m
        return m

    def gradient_matrix(self, order=2):
        """Sparse (3N x N) map from nodal scalars to Cartesian gradient components."""
        key = ('grad', order)
        if key in self._cache:
            return self._cache[key]
        n = self.n_nodes
        ji = self.jacobian_inv(order).reshape(n, 3, 3)
        blocks = []
        for a in range(3):
            block = None
            for d in range(3):
                term = sp.diags(ji[:, d, a]) @ self.diff_matrix(d, order)
                block = term if block is None else block + term
            blocks.append(block)
        g = sp.vstack(blocks).tocsr()
        self._cache[key] = g
        return g

    # ----------------------------------------------------------- body geometry
    def body_surface_point(self, theta, phi):
        return _ray_radius(self.semi_axes, theta, phi)[..., None] * _direction(theta, phi)

    def body_mass(self, rho):
        a, b, c = self.semi_axes
        return rho * 4.0 * np.pi / 3.0 * a * b * c

    def body_inertia(self, rho):
        a, b, c = self.semi_axes
        m = self.body_mass(rho)
        return (m / 5.0) * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])

    def body_mass_quadrature(self, rho):
        return rho * float(np.sum(self.body_q_weights))

    def body_inertia_quadrature(self, rho):
        y = self.body_q_points.reshape(-1, 3)
        w = rho * self.body_q_weights.reshape(-1)
        r2 = np.sum(y * y, axis=1)
        return np.einsum('n,n,ij->ij', w, r2, np.eye(3)) - np.einsum('n,ni,nj->ij', w, y, y)

    def body_moment(self):
        """First moment of the body volume (should vanish: centered body)."""
        y = self.body_q_points.reshape(-1, 3)
        w = self.body_q_weights.reshape(-1)
        return w @ y

    def surface_normal_jacobian(self):
        """Analytic d n_j / d y_i at the body-surface nodes, n into the body.

        n(y) = -w/|w| with w = y / semi_axes^2, therefore
        dn_j/dy_i = -D_ij/|w| + (D w)_i w_j / |w|^3 with D = diag(1/axes^2).
        Returned with axes (..., i, j).
        """
        D = 1.0 / self.semi_axes ** 2
        w = self.surf_points * D
        nw = np.linalg.norm(w, axis=-1)
        term1 = -(np.eye(3) * D[None, :])[None, None] / nw[..., None, None]
        term2 = np.einsum('tpi,tpj->tpij', w * D[None, None, :], w) / nw[..., None, None] ** 3
        return term1 + term2

    # -------------------------------------------------------------- FEM pieces
    def fem(self):
        """Precomputed isoparametric data: dict with elements, wdet, gradN, shapeN, T.

        elements index into the extended node list (real nodes followed by
        2*(n_r+1) virtual axis nodes); T is the sparse constraint map from
        real nodal values to extended values.
        """
        if 'fem' in self._cache:
            return self._cache['fem']
        nr, nt, np_ = self.grid_shape
        n = self.n_nodes

        def flat(i, j, k):
            return (i * nt + j) * np_ + k

        elems = []
        ii, jj, kk = np.meshgrid(np.arange(nr - 1), np.arange(nt - 1), np.arange(np_),
                                 indexing='ij')
        ii, jj, kk = ii.ravel(), jj.ravel(), kk.ravel()
        kp = (kk + 1) % np_
        elems.append(np.stack([
            flat(ii, jj, kk), flat(ii + 1, jj, kk), flat(ii, jj + 1, kk), flat(ii + 1, jj + 1, kk),
            flat(ii, jj, kp), flat(ii + 1, jj, kp), flat(ii, jj + 1, kp), flat(ii + 1, jj + 1, kp),
        ], axis=1))
        # polar cap wedges: theta edge collapsed onto the virtual axis node
        for pole, jring in ((0, 0), (1, nt - 1)):
            ax0 = n + pole * nr
            ii, kk = np.meshgrid(np.arange(nr - 1), np.arange(np_), indexing='ij')
            ii, kk = ii.ravel(), kk.ravel()
            kp = (kk + 1) % np_
            elems.append(np.stack([
                flat(ii, jring, kk), flat(ii + 1, jring, kk), ax0 + ii, ax0 + ii + 1,
                flat(ii, jring, kp), flat(ii + 1, jring, kp), ax0 + ii, ax0 + ii + 1,
            ], axis=1))
        elements = np.concatenate(elems, axis=0)

        # extended positions: virtual axis nodes on the +z / -z axis
        c = self.semi_axes[2]
        mu_axis = c ** (1.0 - self.s) * self.R_out ** self.s
        axis_pos = np.zeros((2 * nr, 3))
        axis_pos[:nr, 2] = mu_axis
        axis_pos[nr:, 2] = -mu_axis
        pos_ext = np.concatenate([self.flat_nodes(), axis_pos], axis=0)

        # constraint: virtual axis value = ring mean
        rows = list(range(n))
        cols = list(range(n))
        vals = [1.0] * n
        for pole, jring in ((0, 0), (1, nt - 1)):
            for i in range(nr):
                r = n + pole * nr + i
                rows.extend([r] * np_)
                cols.extend(flat(i, jring, k) for k in range(np_))
                vals.extend([1.0 / np_] * np_)
        T = sp.coo_matrix((vals, (rows, cols)), shape=(n + 2 * nr, n)).tocsr()

        # trilinear shape data; local node order = (s-bit fastest, then theta, then phi)
        corners = np.array([[sa, sb, sc] for sc in (-1, 1) for sb in (-1, 1) for sa in (-1, 1)])
        gauss = np.array([[ga, gb, gc] for gc in _GAUSS_1D for gb in _GAUSS_1D for ga in _GAUSS_1D])
        shapeN = np.empty((8, 8))
        dN = np.empty((8, 8, 3))
        for g, xi in enumerate(gauss):
            for a_ in range(8):
                sgn = corners[a_]
                fac = (1 + xi * sgn) / 2.0
                shapeN[g, a_] = fac.prod()
                for d in range(3):
                    terms = fac.copy()
                    terms[d] = sgn[d] / 2.0
                    dN[g, a_, d] = terms.prod()

        X = pos_ext[elements]                          # (ne, 8, 3)
        Jg = np.einsum('gad,eac->egcd', dN, X)         # (ne, 8g, xyz, ref)
        detJ = np.linalg.det(Jg)
        if np.any(np.abs(detJ) < 1e-30):
            raise ValidationError("degenerate element in shell mesh")
        Jinv = np.linalg.inv(Jg)
        gradN = np.einsum('gad,egdc->egac', dN, Jinv)  # (ne, 8g, node, xyz)
        wdet = np.abs(detJ)

        fem = dict(elements=elements, wdet=wdet, gradN=gradN, shapeN=shapeN,
                   T=T, n_virtual=2 * nr)
        self._cache['fem'] = fem
        return fem

    def fem_volume(self):
        return float(np.sum(self.fem()['wdet']))


def generate_shell_mesh(semi_axes, R_out, n_r, n_theta, n_phi,
                        body_quad=(8, 24, 48)) -> ShellMesh:
    """Build the body-fitted shell mesh with all quadratures populated.

    body_quad = (radial Gauss, cos-theta Gauss, azimuth trapezoid) counts for
    the dense body-interior quadrature grid; it is independent of the shell
    resolution so the mass/inertia cross-checks are quadrature-limited, not
    mesh-limited.
    """
    semi_axes = np.asarray(semi_axes, dtype=float)
    if np.min(semi_axes) <= 0:
        raise ValidationError("semi-axes must be positive")
    if np.max(semi_axes) / np.min(semi_axes) > 20:
        raise ValidationError("degenerate ellipsoid: axis ratio above 20 is not supported")
    if R_out <= np.max(semi_axes):
        raise ValidationError("truncation radius must exceed the body")
    if n_phi % 2:
        raise ValidationError("n_phi must be even (pole ghost exchange)")

    mesh = ShellMesh(semi_axes=semi_axes, R_out=float(R_out),
                     n_r=int(n_r), n_theta=int(n_theta), n_phi=int(n_phi))

    s = np.arange(n_r + 1) / n_r
    theta = (np.arange(n_theta) + 0.5) * np.pi / n_theta
    phi = np.arange(n_phi) * 2 * np.pi / n_phi
    mesh.s, mesh.theta, mesh.phi = s, theta, phi

    S, T, P = np.meshgrid(s, theta, phi, indexing='ij')
    st, ct = np.sin(T), np.cos(T)
    cp, sp_ = np.cos(P), np.sin(P)
    d = np.stack([st * cp, st * sp_, ct], axis=-1)

    Rb = _ray_radius(semi_axes, T, P)
    mu = Rb ** (1.0 - S) * R_out ** S
    mesh.nodes = mu[..., None] * d

    # analytic tangent vectors (for quadrature weights and surface elements)
    a, b, c = semi_axes
    q = (st * cp / a) ** 2 + (st * sp_ / b) ** 2 + (ct / c) ** 2
    dlnq_dt = 2 * st * ct * ((cp / a) ** 2 + (sp_ / b) ** 2 - 1.0 / c ** 2) / q
    dlnq_dp = st * st * np.sin(2 * P) * (1.0 / b ** 2 - 1.0 / a ** 2) / q
    dlnRb_dt = -0.5 * dlnq_dt
    dlnRb_dp = -0.5 * dlnq_dp
    dd_dt = np.stack([ct * cp, ct * sp_, -st], axis=-1)
    dd_dp = np.stack([-st * sp_, st * cp, np.zeros_like(st)], axis=-1)

    dx_ds = (mu * np.log(R_out / Rb))[..., None] * d
    dx_dt = ((1.0 - S) * mu * dlnRb_dt)[..., None] * d + mu[..., None] * dd_dt
    dx_dp = ((1.0 - S) * mu * dlnRb_dp)[..., None] * d + mu[..., None] * dd_dp

    jac = np.stack([dx_ds, dx_dt, dx_dp], axis=-1)
    detj = np.linalg.det(jac)
    if np.any(detj <= 0):
        raise ValidationError("mesh mapping is not orientation preserving")

    # volume quadrature: trapezoid in s, exact-sine cells in theta, uniform phi
    ds = 1.0 / n_r
    ws = np.full(n_r + 1, ds)
    ws[0] = ws[-1] = ds / 2
    dth = np.pi / n_theta
    wt = np.cos(theta - dth / 2) - np.cos(theta + dth / 2)
    dph = 2 * np.pi / n_phi
    mesh.node_weights = (ws[:, None, None] * (wt / np.sin(theta))[None, :, None]
                         * dph * detj)

    # body surface quadrature (s = 0), normals point into the body
    mesh.surf_points = mesh.nodes[0].copy()
    w_out = mesh.surf_points / (semi_axes ** 2)
    mesh.surf_normals = -w_out / np.linalg.norm(w_out, axis=-1, keepdims=True)
    area_el = np.linalg.norm(np.cross(dx_dt[0], dx_dp[0]), axis=-1)
    mesh.surf_weights = (wt[:, None] / np.sin(theta)[:, None]) * dph * area_el

    # outer sphere quadrature, outward normals
    mesh.outer_normals = d[-1].copy()
    mesh.outer_weights = (wt[:, None] / np.sin(theta)[:, None]) * dph \
        * np.linalg.norm(np.cross(dx_dt[-1], dx_dp[-1]), axis=-1)

    # dense body-interior quadrature along rays y = tau * Rb * d
    n_tau, n_u, n_pq = body_quad
    gt, wgt = np.polynomial.legendre.leggauss(n_tau)
    tau = 0.5 * (gt + 1.0)
    wtau = 0.5 * wgt
    gu, wgu = np.polynomial.legendre.leggauss(n_u)
    thq = np.arccos(gu)
    phq = np.arange(n_pq) * 2 * np.pi / n_pq
    TQ, PQ = np.meshgrid(thq, phq, indexing='ij')
    RbQ = _ray_radius(semi_axes, TQ, PQ)
    dQ = _direction(TQ, PQ)
    mesh.body_q_points = tau[:, None, None, None] * (RbQ[..., None] * dQ)[None]
    # dV = tau^2 Rb^3 dtau d(cos theta) dphi
    mesh.body_q_weights = (wtau * tau ** 2)[:, None, None] \
        * (RbQ ** 3 * wgu[:, None])[None] * (2 * np.pi / n_pq)

    # shortest node-to-node distance (for CFL checks)
    dr = np.linalg.norm(np.diff(mesh.nodes, axis=0), axis=-1).min()
    dt_ = np.linalg.norm(np.diff(mesh.nodes, axis=1), axis=-1).min()
    dp_ = np.linalg.norm(mesh.nodes - np.roll(mesh.nodes, 1, axis=2), axis=-1).min()
    mesh.min_spacing = float(min(dr, dt_, dp_))

    return mesh


def field_from_callable(mesh: ShellMesh, fn) -> Array:
    """Sample a callable of point arrays on the mesh nodes."""
    pts = mesh.flat_nodes()
    vals = np.asarray(fn(pts))
    if vals.ndim == 1:
        return vals.reshape(mesh.grid_shape)
    return vals.reshape(mesh.grid_shape + (vals.shape[-1],))
