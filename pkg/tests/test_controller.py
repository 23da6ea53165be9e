import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import nadi
from nadi import (
    ConfigurationError,
    ControllerState,
    DivergenceError,
    GainSet,
    PlantInstance,
    RankError,
    ReferenceStack,
    SystemModel,
    build_error_dynamics,
    closed_loop_matrix,
    control_derivative,
    gain_bound_at,
    get_plant,
    min_gain_bound,
    pole_gains,
    prescribed_z,
    residual,
    step,
    zdot,
)
from nadi.controller import inversion_matrix


def affine_scalar_model():
    """dx/dt = u, y = x: the simplest relative-degree-1 plant."""
    return SystemModel(
        name="affine-scalar",
        n=1,
        m=1,
        alphas=(1,),
        dynamics=lambda x, u: np.array([u[0]]),
        output=lambda x: np.array([x[0]]),
        v_map=lambda x, u: np.array([u[0]]),
        partial_state_chain=lambda x, u: np.array([x[0]]),
    )


@pytest.fixture(scope="module")
def benchmark():
    return get_plant("benchmark-scalar")


class TestBuildErrorDynamics:
    def test_single_integrator(self):
        a, b = build_error_dynamics([1])
        np.testing.assert_allclose(a, [[0.0]])
        np.testing.assert_allclose(b, [[1.0]])

    def test_double_integrator(self):
        a, b = build_error_dynamics([2])
        np.testing.assert_allclose(a, [[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_allclose(b, [[0.0], [1.0]])

    def test_three_double_blocks(self):
        a, b = build_error_dynamics([2, 2, 2])
        assert a.shape == (6, 6)
        assert b.shape == (6, 3)
        expected_a = np.zeros((6, 6))
        for off in (0, 2, 4):
            expected_a[off, off + 1] = 1.0
        np.testing.assert_allclose(a, expected_a)
        expected_b = np.zeros((6, 3))
        for i, off in enumerate((1, 3, 5)):
            expected_b[off, i] = 1.0
        np.testing.assert_allclose(b, expected_b)

    def test_rejects_empty(self):
        with pytest.raises(ConfigurationError):
            build_error_dynamics([])


class TestPoleGains:
    def test_first_order(self):
        (k,) = pole_gains([[-3.0]])
        np.testing.assert_allclose(k, [3.0])

    def test_second_order_real(self):
        (k,) = pole_gains([[-1.0, -2.0]])
        np.testing.assert_allclose(k, [2.0, 3.0])

    def test_conjugate_pair(self):
        (k,) = pole_gains([[-2 + 2j, -2 - 2j]])
        np.testing.assert_allclose(k, [8.0, 4.0])

    def test_unpaired_complex_rejected(self):
        with pytest.raises(ConfigurationError, match="conjugate"):
            pole_gains([[-1 + 1j, -2.0]])

    def test_unstable_pole_rejected(self):
        with pytest.raises(ConfigurationError):
            pole_gains([[1.0, -2.0]])

    def test_placement_matches_request(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            reals = -rng.uniform(0.2, 5.0, size=2)
            gains = GainSet.from_poles([list(reals), list(reals)], 1.0)
            eigs = np.sort(np.linalg.eigvals(closed_loop_matrix(gains)).real)
            want = np.sort(np.concatenate([reals, reals]))
            np.testing.assert_allclose(eigs, want, atol=1e-9)


class TestGainSetValidation:
    def test_k_s_must_be_positive_definite(self):
        with pytest.raises(ConfigurationError, match="positive-definite"):
            GainSet((np.array([1.0]),), np.array([[-1.0]]), np.zeros(1))

    def test_k_s_must_be_symmetric(self):
        with pytest.raises(ConfigurationError, match="symmetric"):
            GainSet.from_poles(
                [[-1.0], [-2.0]], np.array([[1.0, 0.5], [0.0, 1.0]])
            )

    def test_unstable_block_rejected(self):
        with pytest.raises(ConfigurationError, match="stable"):
            GainSet((np.array([-1.0, 2.0]),), np.eye(1), np.zeros(1))

    def test_negative_integral_gain_rejected(self):
        with pytest.raises(ConfigurationError):
            GainSet((np.array([2.0, 3.0]),), np.eye(1), np.array([-0.1]))


class TestPrescribedZ:
    def test_feedforward_only(self):
        gains = GainSet.from_poles([[-1.0, -2.0]], 1.0)
        ref = ReferenceStack.from_lists([[1.0, 2.0, 3.0, 0.0]])
        z = prescribed_z(np.zeros(2), ref, np.zeros(1), gains)
        np.testing.assert_allclose(z, [3.0])

    def test_position_velocity_feedback(self):
        # one axis with gains (2, 3), position error 10, rate error 0
        gains = GainSet((np.array([2.0, 3.0]),), np.eye(1), np.zeros(1))
        ref = ReferenceStack.from_lists([[0.0, 0.0, 0.0, 0.0]])
        z = prescribed_z(np.array([10.0, 0.0]), ref, np.zeros(1), gains)
        np.testing.assert_allclose(z, [-20.0])

    def test_integral_term(self):
        gains = GainSet((np.array([2.0, 3.0]),), np.eye(1), np.array([0.5]))
        ref = ReferenceStack.from_lists([[0.0, 0.0, 0.0, 0.0]])
        z = prescribed_z(np.array([10.0, 0.0]), ref, np.array([4.0]), gains)
        np.testing.assert_allclose(z, [-22.0])

    @settings(deadline=None, max_examples=50)
    @given(
        e1=st.floats(-100, 100),
        e2=st.floats(-100, 100),
        ff=st.floats(-10, 10),
        k1=st.floats(0.1, 5.0),
        k2=st.floats(0.1, 5.0),
    )
    def test_matches_explicit_two_gain_form(self, e1, e2, ff, k1, k2):
        # guard: the block must be stable for GainSet to accept it
        gains = GainSet((np.array([k1, k2]),), np.eye(1), np.zeros(1))
        ref = ReferenceStack.from_lists([[0.0, 0.0, ff, 0.0]])
        z = prescribed_z(np.array([e1, e2]), ref, np.zeros(1), gains)
        assert math.isclose(z[0], -k1 * e1 - k2 * e2 + ff, rel_tol=1e-12, abs_tol=1e-12)


class TestResidual:
    def test_exact_solution(self, benchmark):
        h, vs = residual(benchmark, [0.0], [1.0], [2.0])
        np.testing.assert_allclose(h, [0.0])
        assert vs == 0.0

    def test_quadratic_measure(self):
        model = affine_scalar_model()
        h, vs = residual(model, [0.0], [3.0], [0.0])
        assert vs == pytest.approx(4.5)

    def test_benchmark_offset(self, benchmark):
        h, vs = residual(benchmark, [0.0], [1.0], [0.0])
        np.testing.assert_allclose(h, [2.0])
        assert vs == pytest.approx(2.0)


class TestControlDerivative:
    def setup_method(self):
        self.model = affine_scalar_model()
        self.gains = GainSet((np.array([1.0]),), np.array([[10.0]]), np.zeros(1))
        self.args = (
            np.array([0.0]),
            np.array([0.0]),
            np.array([1.0]),
            np.array([0.0]),
            np.array([1.0]),
        )

    def _du(self, mode):
        x, xdot, u, z, z_dot = self.args
        return control_derivative(self.model, x, xdot, u, z, z_dot, self.gains, mode)

    def test_full_mode(self):
        np.testing.assert_allclose(self._du("full"), [-9.0])

    def test_inverse_free_mode(self):
        np.testing.assert_allclose(self._du("inverse-free"), [-10.0])

    def test_pure_inverse_mode(self):
        np.testing.assert_allclose(self._du("pure-inverse"), [1.0])

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            self._du("newton")

    def test_mode_decomposition(self, benchmark):
        gains = GainSet((np.array([2.0]),), np.array([[10.0]]), np.zeros(1))
        rng = np.random.default_rng(3)
        for _ in range(100):
            x = rng.uniform(-2, 2, size=1)
            u = rng.uniform(-2, 2, size=1)
            z = rng.uniform(-3, 3, size=1)
            z_dot = rng.uniform(-3, 3, size=1)
            xdot = benchmark.dynamics(x, u)
            full = control_derivative(benchmark, x, xdot, u, z, z_dot, gains, "full")
            part1 = control_derivative(
                benchmark, x, xdot, u, z, z_dot, gains, "inverse-free"
            )
            part2 = control_derivative(
                benchmark, x, xdot, u, z, z_dot, gains, "pure-inverse"
            )
            np.testing.assert_allclose(full, part1 + part2, atol=1e-12)

    def test_singular_jacobian_falls_back(self):
        # v = u^2 at u = 0 has dv/du = 0: the inversion term must not blow up
        model = SystemModel(
            name="flat",
            n=1,
            m=1,
            alphas=(1,),
            dynamics=lambda x, u: np.array([u[0] ** 2]),
            output=lambda x: np.array([x[0]]),
            v_map=lambda x, u: np.array([u[0] ** 2]),
            partial_state_chain=lambda x, u: np.array([x[0]]),
        )
        gains = GainSet((np.array([1.0]),), np.eye(1), np.zeros(1))
        du = control_derivative(
            model,
            np.array([0.0]),
            np.array([0.0]),
            np.array([0.0]),
            np.array([0.0]),
            np.array([5.0]),
            gains,
            "full",
        )
        assert np.all(np.isfinite(du))
        # pseudo-inverse of a zero row is zero, so only the descent term acts
        np.testing.assert_allclose(du, [0.0])


class TestInversionMatrix:
    def test_regular(self):
        inv, det, fallback = inversion_matrix(np.array([[2.0]]))
        np.testing.assert_allclose(inv, [[0.5]])
        assert det == pytest.approx(2.0)
        assert not fallback

    def test_singular_flags_fallback(self):
        inv, det, fallback = inversion_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert fallback
        assert abs(det) < 1e-12

    def test_matches_solve_on_random(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            j = rng.normal(size=(3, 3)) + 3.0 * np.eye(3)
            rhs = rng.normal(size=3)
            inv, _, fallback = inversion_matrix(j)
            assert not fallback
            np.testing.assert_allclose(inv @ rhs, np.linalg.solve(j, rhs), atol=1e-9)


class TestZdot:
    def test_constant_reference_at_rest(self):
        gains = GainSet.from_poles([[-1.0, -2.0]], 1.0)
        ref = ReferenceStack.from_lists([[5.0, 0.0, 0.0, 0.0]])
        zd = zdot(np.zeros(2), np.zeros(2), ref, gains)
        np.testing.assert_allclose(zd, [0.0])

    def test_ramp_channel(self):
        # gains (k1, k2), ramp reference: third derivative vanishes, so
        # zdot = -k1 * rate_error - k2 * accel_error
        gains = GainSet((np.array([2.0, 3.0]),), np.eye(1), np.zeros(1))
        ref = ReferenceStack.from_lists([[0.0, 50.0, 0.0, 0.0]])
        e = np.array([0.0, -1.5])
        e_dot = np.array([-1.5, 0.25])
        zd = zdot(e, e_dot, ref, gains)
        np.testing.assert_allclose(zd, [-2.0 * (-1.5) - 3.0 * 0.25])

    def test_integral_contribution(self):
        gains = GainSet((np.array([2.0, 3.0]),), np.eye(1), np.array([0.5]))
        ref = ReferenceStack.from_lists([[0.0, 0.0, 0.0, 0.0]])
        e = np.array([4.0, 0.0])
        zd = zdot(e, np.zeros(2), ref, gains)
        np.testing.assert_allclose(zd, [-0.5 * 4.0])

    def test_missing_high_order_reference(self):
        gains = GainSet.from_poles([[-1.0, -2.0]], 1.0)
        ref = ReferenceStack.from_lists([[0.0, 0.0, 0.0]])
        with pytest.raises(ConfigurationError):
            zdot(np.zeros(2), np.zeros(2), ref, gains)


class TestStep:
    def test_fixed_point_is_stationary(self, benchmark):
        # x = 2, u solving the implicit equation for z = 0, constant reference
        plant = PlantInstance(benchmark, np.array([2.0]))
        gains = GainSet((np.array([2.0]),), np.array([[10.0]]), np.zeros(1))
        ref = ReferenceStack.from_lists([[2.0, 0.0, 0.0]])
        u_root = 1.0  # -2 + 1 + 1 = -1+... solves -x + u + u^3 = 0 at x = 2
        ctrl = ControllerState(np.array([u_root]), np.zeros(1), "full")
        out = step(ctrl, plant, ref, gains, 1e-3)
        np.testing.assert_allclose(out.u, [u_root], atol=1e-12)

    def test_converges_to_cubic_root(self, benchmark):
        plant = PlantInstance(benchmark, np.array([0.0]))
        gains = GainSet((np.array([2.0]),), np.array([[10.0]]), np.zeros(1))
        # constant reference chosen so the frozen prescribed value is 2
        ref = ReferenceStack.from_lists([[1.0, 0.0, 0.0]])
        ctrl = ControllerState(np.array([0.0]), np.zeros(1), "full")
        z = prescribed_z(
            nadi.error_coordinates(benchmark, plant.state, ctrl.u, ref),
            ref,
            ctrl.integral_err,
            gains,
        )
        assert z == pytest.approx([2.0])
        for _ in range(2000):
            ctrl = step(ctrl, plant, ref, gains, 1e-3)
        assert ctrl.u[0] == pytest.approx(1.0, abs=1e-6)

    def test_saturation_applied_after_integration(self, benchmark):
        # prescribed value -10 wants the control at the cubic root near -2.05,
        # well past the clamp: the stored value must settle on the bound
        plant = PlantInstance(benchmark, np.array([0.0]))
        gains = GainSet((np.array([2.0]),), np.array([[50.0]]), np.zeros(1))
        ref = ReferenceStack.from_lists([[-5.0, 0.0, 0.0]])
        ctrl = ControllerState(np.array([0.0]), np.zeros(1), "inverse-free")
        bound = math.radians(20.0)
        sat = (np.array([-bound]), np.array([bound]))
        for _ in range(200):
            ctrl = step(ctrl, plant, ref, gains, 1e-3, saturation=sat)
        assert ctrl.u[0] == pytest.approx(-bound)

    def test_integral_accumulates_output_error(self, benchmark):
        plant = PlantInstance(benchmark, np.array([1.0]))
        gains = GainSet((np.array([2.0]),), np.eye(1), np.array([0.1]))
        ref = ReferenceStack.from_lists([[0.0, 0.0, 0.0]])
        ctrl = ControllerState(np.array([0.0]), np.zeros(1), "full")
        out = step(ctrl, plant, ref, gains, 1e-3)
        assert out.integral_err[0] == pytest.approx(1e-3)

    def test_integral_clamped(self, benchmark):
        plant = PlantInstance(benchmark, np.array([1.0]))
        gains = GainSet((np.array([2.0]),), np.eye(1), np.array([0.1]))
        ref = ReferenceStack.from_lists([[0.0, 0.0, 0.0]])
        ctrl = ControllerState(np.array([0.0]), np.array([0.05]), "full")
        out = step(ctrl, plant, ref, gains, 1e-3, integral_limit=0.05)
        assert out.integral_err[0] == pytest.approx(0.05)

    def test_divergence_carries_time(self, benchmark):
        plant = PlantInstance(benchmark, np.array([0.0]), time=1.5)
        gains = GainSet((np.array([2.0]),), np.array([[10.0]]), np.zeros(1))
        ref = ReferenceStack.from_lists([[-5.0, 0.0, 0.0]])
        ctrl = ControllerState(np.array([0.0]), np.zeros(1), "inverse-free")
        with pytest.raises(DivergenceError) as excinfo:
            step(ctrl, plant, ref, gains, 1e-3, u_bound=1e-4)
        assert excinfo.value.time == pytest.approx(1.5 + 1e-3)


class TestDescentProperty:
    def test_quadratic_measure_never_increases_frozen(self, benchmark):
        gains = GainSet((np.array([2.0]),), np.array([[10.0]]), np.zeros(1))
        rng = np.random.default_rng(12)
        for _ in range(100):
            x = rng.uniform(-2.0, 2.0, size=1)
            u = rng.uniform(-2.0, 2.0, size=1)
            z = rng.uniform(-4.0, 4.0, size=1)
            plant = PlantInstance(benchmark, x)
            # constant reference whose frozen prescribed value equals z
            ref = ReferenceStack.from_lists([[x[0] + z[0] / 2.0, 0.0, 0.0]])
            ctrl = ControllerState(u, np.zeros(1), "inverse-free")
            _, vs0 = residual(benchmark, x, u, z)
            out = step(ctrl, plant, ref, gains, 1e-3)
            _, vs1 = residual(benchmark, x, out.u, z)
            assert vs1 <= vs0 + 1e-12


class TestMinGainBound:
    def test_zero_curvature(self):
        assert min_gain_bound(np.eye(2), np.zeros((2, 2))) == pytest.approx(0.0)

    def test_identity_curvature(self):
        assert min_gain_bound(np.eye(2), 2.0 * np.eye(2)) == pytest.approx(2.0)

    def test_scaled_jacobian(self):
        assert min_gain_bound(np.diag([1.0, 2.0]), np.eye(2)) == pytest.approx(1.0)

    def test_singular_jacobian_rejected(self):
        with pytest.raises(RankError):
            min_gain_bound(np.array([[1.0, 0.0], [0.0, 0.0]]), np.eye(2))

    def test_gain_bound_at_benchmark(self, benchmark):
        # v depends on x through -x and z through -k(y - y_r): the curvature
        # collapses to (k - 1) for the scalar chain, giving (2k-2)/(2 J^2)
        gains = GainSet((np.array([2.0]),), np.array([[10.0]]), np.zeros(1))
        x = np.array([1.0])
        u = np.array([0.682])
        bound = gain_bound_at(benchmark, x, u, gains)
        j = 1.0 + 3.0 * u[0] ** 2
        assert bound == pytest.approx((2.0 * (2.0 - 1.0)) / (2.0 * j * j), rel=1e-5)
