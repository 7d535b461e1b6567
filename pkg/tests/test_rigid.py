import numpy as np
import pytest
from scipy.linalg import expm

from rigidfluid.rigid import (
    CutoffProfile,
    RigidBodyState,
    RigidTrajectory,
    advance_rotation,
    body_to_world,
    cutoff_value,
    extension_field,
    extension_jacobian,
    rigid_velocity,
    skew,
    stream_moment,
    unskew,
)
from rigidfluid.errors import InvalidStateError, ValidationError


def rotation_about_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def fd_divergence(f, x, step):
    """4th-order central FD divergence of a vector field callable."""
    div = 0.0
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        div += (-f(x + 2 * e)[i] + 8 * f(x + e)[i]
                - 8 * f(x - e)[i] + f(x - 2 * e)[i]) / (12 * step)
    return div


class TestAdvanceRotation:
    def test_zero_angular_velocity(self):
        Q = advance_rotation(np.eye(3), np.zeros(3), 0.3)
        assert np.allclose(Q, np.eye(3), atol=1e-15)

    def test_quarter_turn_matches_matrix_exponential(self):
        # oracle: closed-form exp(A(R) t) for constant R
        R = np.array([0.0, 0.0, 1.0])
        Q = np.eye(3)
        n, dt = 100, (np.pi / 2) / 100
        for _ in range(n):
            Q = advance_rotation(Q, R, dt)
        exact = expm(skew(R) * (np.pi / 2))
        assert np.max(np.abs(Q - exact)) < 1e-8
        assert np.allclose(exact, rotation_about_z(np.pi / 2), atol=1e-12)

    def test_full_turn_returns_identity(self):
        R = np.array([0.0, 0.0, 1.0])
        Q = np.eye(3)
        n, dt = 400, (2 * np.pi) / 400
        for _ in range(n):
            Q = advance_rotation(Q, R, dt)
        assert np.max(np.abs(Q - np.eye(3))) < 1e-6

    def test_orthonormality_preserved(self):
        rng = np.random.default_rng(7)
        Q = np.eye(3)
        R = rng.normal(size=3)
        for _ in range(200):
            Q = advance_rotation(Q, R, 0.05)
            assert np.max(np.abs(Q.T @ Q - np.eye(3))) < 1e-10
        assert np.linalg.det(Q) > 0

    def test_composed_steps_fourth_order(self):
        # halving dt should cut the global error ~16x (order 4)
        rng = np.random.default_rng(11)
        for _ in range(3):
            R = rng.normal(size=3)
            T = 1.0
            errs = []
            for n in (50, 100):
                Q = np.eye(3)
                for _ in range(n):
                    Q = advance_rotation(Q, R, T / n)
                errs.append(np.max(np.abs(Q - expm(skew(R) * T))))
            assert errs[0] / errs[1] > 10.0

    def test_nonfinite_input_rejected(self):
        with pytest.raises(InvalidStateError):
            advance_rotation(np.full((3, 3), np.nan), np.zeros(3), 0.1)


class TestBodyToWorld:
    def _state(self, Q, L, R):
        return RigidBodyState(t=0.0, h=np.zeros(3), Q=Q, L=L, R=R,
                              m=1.0, Jbar=np.eye(3))

    def test_identity_rotation(self):
        st = self._state(np.eye(3), np.array([1.0, 0, 0]), np.array([0.0, 1, 0]))
        l, om = body_to_world(st)
        assert np.allclose(l, [1, 0, 0])
        assert np.allclose(om, [0, 1, 0])

    def test_quarter_turn_translation(self):
        st = self._state(rotation_about_z(np.pi / 2), np.array([1.0, 0, 0]), np.zeros(3))
        l, _ = body_to_world(st)
        # oracle: direct matrix multiply
        assert np.allclose(l, st.Q @ st.L, atol=1e-14)
        assert np.allclose(l, [0, 1, 0], atol=1e-14)

    def test_omega_by_conjugation(self):
        Q = expm(skew([1.0, 0, 0]) * np.pi)  # rotation by pi about x
        st = self._state(Q, np.zeros(3), np.array([0.0, 0, 1.0]))
        _, om = body_to_world(st)
        oracle = unskew(Q @ skew(st.R) @ Q.T)
        assert np.allclose(om, oracle, atol=1e-12)
        assert np.allclose(om, [0, 0, -1], atol=1e-12)


class TestRigidVelocity:
    def test_zero(self):
        x = np.random.default_rng(0).normal(size=(10, 3))
        v = rigid_velocity(x, np.zeros(3), np.zeros(3), np.zeros(3))
        assert np.all(v == 0)

    def test_pure_translation(self):
        v = rigid_velocity(np.array([3.0, -2.0, 5.0]), np.array([1.0, 0, 0]),
                           np.zeros(3), np.zeros(3))
        assert np.allclose(v, [1, 0, 0])

    def test_pure_rotation(self):
        v = rigid_velocity(np.array([1.0, 0, 0]), np.zeros(3),
                           np.array([0.0, 0, 1.0]), np.zeros(3))
        assert np.allclose(v, [0, 1, 0])


class TestStreamMoment:
    def test_zero(self):
        assert np.all(stream_moment(np.ones(3), np.zeros(3), np.zeros(3), np.zeros(3)) == 0)

    def test_omega_term_convention(self):
        # |x - h|^2/2 factor on the omega term
        w = stream_moment(np.array([1.0, 0, 0]), np.zeros(3),
                          np.array([0.0, 0, 1.0]), np.zeros(3))
        assert np.allclose(w, [0, 0, 0.5])

    def test_extension_divergence_free_at_random_points(self):
        rng = np.random.default_rng(3)
        profile = CutoffProfile(r1=1.2, r2=2.5)
        l, om, h = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3) * 0.1
        f = lambda x: extension_field(x, l, om, h, profile)
        for _ in range(10):
            # sample inside the blend annulus, away from its edges
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            x = h + d * rng.uniform(1.35, 2.35)
            assert abs(fd_divergence(f, x, 1e-2)) < 1e-6


class TestCutoff:
    def test_inner_and_outer_plateaus(self):
        profile = CutoffProfile(r1=1.0, r2=2.0)
        st = None
        h = np.zeros(3)
        assert cutoff_value(np.array([0.5, 0, 0]), h, profile) == 1.0
        assert cutoff_value(np.array([0.0, 0.9, 0]), h, profile) == 1.0
        assert cutoff_value(np.array([2.0, 0, 0]), h, profile) == 0.0
        assert cutoff_value(np.array([0, 0, 5.0]), h, profile) == 0.0

    def test_midpoint_and_monotonicity(self):
        profile = CutoffProfile(r1=1.0, r2=2.0)
        # quintic evaluated symbolically: u=1/2 -> 1 - (10/8 - 15/16 + 6/32) = 1/2
        assert np.isclose(profile.value(1.5), 0.5)
        r = np.linspace(1.0, 2.0, 100)
        vals = profile.value(r)
        assert np.all(np.diff(vals) <= 0)
        assert 0 <= vals.min() and vals.max() <= 1

    def test_c2_matching_at_edges(self):
        profile = CutoffProfile(r1=1.0, r2=2.0)
        for r in (1.0, 2.0):
            assert np.isclose(profile.dvalue(r), 0.0)
            assert np.isclose(profile.ddvalue(r), 0.0)

    def test_invalid_radii_rejected(self):
        with pytest.raises(ValidationError):
            CutoffProfile(r1=2.0, r2=1.0)


class TestExtensionField:
    def setup_method(self):
        self.profile = CutoffProfile(r1=1.3, r2=2.8)
        self.rng = np.random.default_rng(21)

    def test_rigid_inside_r1(self):
        l, om = self.rng.normal(size=3), self.rng.normal(size=3)
        h = np.array([0.2, -0.1, 0.4])
        pts = h + self.rng.normal(size=(20, 3)) * 0.3
        lam = extension_field(pts, l, om, h, self.profile)
        vr = rigid_velocity(pts, l, om, h)
        assert np.array_equal(lam, vr)  # psi = 1, grad psi = 0 exactly there

    def test_zero_outside_r2(self):
        l, om = self.rng.normal(size=3), self.rng.normal(size=3)
        h = np.zeros(3)
        d = self.rng.normal(size=(20, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        pts = d * self.rng.uniform(2.8, 6.0, size=(20, 1))
        lam = extension_field(pts, l, om, h, self.profile)
        assert np.all(lam == 0)

    def test_linearity_in_rigid_data(self):
        h = np.array([0.1, 0.0, -0.2])
        l1, om1 = self.rng.normal(size=3), self.rng.normal(size=3)
        l2, om2 = self.rng.normal(size=3), self.rng.normal(size=3)
        pts = self.rng.normal(size=(30, 3)) * 1.5 + h
        a, b = 0.7, -1.3
        lam = extension_field(pts, a * l1 + b * l2, a * om1 + b * om2, h, self.profile)
        sup = a * extension_field(pts, l1, om1, h, self.profile) \
            + b * extension_field(pts, l2, om2, h, self.profile)
        assert np.allclose(lam, sup, atol=1e-13)

    def test_divergence_fourth_order_decay(self):
        # FD divergence oracle: |div| should drop ~16x per step halving,
        # measured on the same rigid states and sample points at every step
        rng = np.random.default_rng(5)
        cases = []
        for _ in range(10):
            l, om, h = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3) * 0.2
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            x = h + d * rng.uniform(1.5, 2.6)
            cases.append((l, om, h, x))
        steps = [2e-2, 1e-2, 5e-3]
        worst = []
        for s in steps:
            m = 0.0
            for l, om, h, x in cases:
                f = lambda y: extension_field(y, l, om, h, self.profile)
                m = max(m, abs(fd_divergence(f, x, s)))
            worst.append(m)
        rate1 = np.log2(worst[0] / worst[1])
        rate2 = np.log2(worst[1] / worst[2])
        assert min(rate1, rate2) > 3.4

    def test_jacobian_matches_fd(self):
        l, om = self.rng.normal(size=3), self.rng.normal(size=3)
        h = np.array([0.3, 0.1, 0.0])
        for _ in range(10):
            d = self.rng.normal(size=3)
            d /= np.linalg.norm(d)
            x = h + d * self.rng.uniform(0.5, 3.2)
            jac = extension_jacobian(x, l, om, h, self.profile)
            fd = np.zeros((3, 3))
            s = 1e-6
            for j in range(3):
                e = np.zeros(3)
                e[j] = s
                fd[:, j] = (extension_field(x + e, l, om, h, self.profile)
                            - extension_field(x - e, l, om, h, self.profile)) / (2 * s)
            assert np.max(np.abs(jac - fd)) < 1e-7


class TestRigidTrajectory:
    def test_constant_motion(self):
        tr = RigidTrajectory.constant([1.0, 0, 0], [0, 0, 2.0], h0=[0, 0, 0], t0=0.0, dt=0.5)
        l, om, h = tr.at(0.3)
        assert np.allclose(l, [1, 0, 0])
        assert np.allclose(om, [0, 0, 2])
        assert np.allclose(h, [0.3, 0, 0])

    def test_linear_interpolation_and_h_integral(self):
        tr = RigidTrajectory.from_endpoints(1.0, 0.2, [0, 0, 0], [1.0, 0, 0],
                                            [0, 0, 0], [0, 0, 1.0], h0=[0.5, 0, 0])
        l, om, h = tr.at(1.2)
        assert np.allclose(l, [1, 0, 0])
        assert np.allclose(om, [0, 0, 1])
        # h = h0 + int of linearly ramping l = 0.5 + 0.2 * 0.5
        assert np.allclose(h, [0.6, 0, 0])


class TestStateValidation:
    def test_rejects_bad_inertia(self):
        st = RigidBodyState(t=0, h=np.zeros(3), Q=np.eye(3), L=np.zeros(3),
                            R=np.zeros(3), m=1.0, Jbar=-np.eye(3))
        with pytest.raises(InvalidStateError):
            st.validate()

    def test_world_frame_consistency(self):
        rng = np.random.default_rng(2)
        Q = advance_rotation(np.eye(3), rng.normal(size=3), 0.7)
        st = RigidBodyState(t=0, h=np.zeros(3), Q=Q, L=rng.normal(size=3),
                            R=rng.normal(size=3), m=2.0, Jbar=np.diag([1.0, 2.0, 3.0]))
        st.validate()
        l, om = body_to_world(st)
        assert np.allclose(skew(om), Q @ skew(st.R) @ Q.T, atol=1e-12)
