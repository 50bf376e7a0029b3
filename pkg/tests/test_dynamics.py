import math

import numpy as np
import pytest

from losc.dynamics import (
    RHO0,
    EngagementState,
    EpisodeTrace,
    IntegratorConfig,
    MissileDragParams,
    TargetDragParams,
    density,
    integrate_to_termination,
    missile_derivatives,
    realized_target_accel,
    rk4,
    rk4_step,
    target_derivatives,
)

NO_DRAG = MissileDragParams(k_m=0.25, cd0=0.0)


class TestDensity:
    def test_sea_level(self):
        assert density(0.0) == 1.225

    def test_scale_height(self):
        assert density(8500.0) == pytest.approx(1.225 / math.e, rel=1e-15)
        assert density(8500.0) == pytest.approx(0.4507, abs=1e-4)

    def test_clamped_below_ground(self):
        assert density(-100.0) == 1.225


def state(h_m=0.0, v_m=(1000.0, 0, 0), h_t=0.0, v_t=(-500.0, 0, 0), x_t=5000.0):
    return EngagementState.from_velocities([0, 0, h_m], v_m, [x_t, 0, h_t], v_t)


class TestMissileDerivatives:
    def test_vacuum_no_accel(self):
        s = state(h_m=1e7)
        _, _, v_dot = missile_derivatives(s, np.zeros(3))
        assert v_dot == pytest.approx(0.0, abs=1e-200)

    def test_sea_level_drag(self):
        _, _, v_dot = missile_derivatives(state(), np.zeros(3))
        assert v_dot == pytest.approx(-(0.5 * 1.225 * 1e6 * 0.35 * 0.05) / 450, rel=1e-14)
        assert v_dot == pytest.approx(-23.82, abs=0.005)

    def test_unit_area_drag(self):
        mp = MissileDragParams(s_ref=1.0)
        _, _, v_dot = missile_derivatives(state(), np.zeros(3), mp)
        assert v_dot == pytest.approx(-476.4, abs=0.05)

    def test_induced_drag(self):
        a = np.array([0.0, 60.0, 80.0])
        r_dot, vt_dot, v_dot = missile_derivatives(state(), a, NO_DRAG)
        assert v_dot == pytest.approx(-25.0)
        # lateral acceleration turns the velocity, the speed rate shortens it
        np.testing.assert_allclose(vt_dot, [-25.0, 60.0, 80.0])
        np.testing.assert_allclose(r_dot, [1000.0, 0, 0])


class TestTargetDerivatives:
    def test_no_drag_constant_speed(self):
        _, _, v_dot = target_derivatives(state(), np.array([0, 100.0, 0]), TargetDragParams(0.0, 0.0))
        assert v_dot == 0.0

    def test_sea_level_drag(self):
        s = state(v_t=(-600.0, 0, 0))
        _, _, v_dot = target_derivatives(s, np.zeros(3), TargetDragParams(k_t=0.2, cd0=0.2))
        assert v_dot == pytest.approx(-98.0, rel=1e-14)

    def test_perpendicular_accel_keeps_speed_without_drag(self):
        s = state(v_t=(-500.0, 0, 0))
        a_t = np.array([0.0, 200.0, 0.0])
        for _ in range(50):
            s = rk4_step(s, np.zeros(3), a_t, 0.02, NO_DRAG, TargetDragParams())
        assert np.linalg.norm(s.v_t) == pytest.approx(500.0, rel=1e-12)


class TestRealizedTargetAccel:
    def test_reference_point(self):
        a = np.array([0.0, 100.0, 50.0])
        np.testing.assert_allclose(realized_target_accel(a, 0.0, 600.0), a, rtol=1e-15)

    def test_quarter_at_half_speed(self):
        a = np.array([0.0, 100.0, 0.0])
        np.testing.assert_allclose(realized_target_accel(a, 0.0, 300.0), 0.25 * a)

    def test_zero(self):
        np.testing.assert_array_equal(realized_target_accel(np.zeros(3), 0.0, 500.0), np.zeros(3))

    def test_altitude_scaling(self):
        a = np.array([10.0, 0, 0])
        np.testing.assert_allclose(realized_target_accel(a, 8500.0, 600.0), a / math.e)


class TestRk4:
    def test_generic_constant_acceleration_exact(self):
        acc = np.array([3.0, -9.81, 40.0])

        def f(_t, y):
            return np.concatenate([y[3:], acc])

        y = np.array([10.0, -5.0, 2.0, 100.0, 50.0, -20.0])
        t = 0.0
        for _ in range(25):
            y = rk4(f, t, y, 0.2)
            t += 0.2
        exact_r = np.array([10.0, -5.0, 2.0]) + np.array([100.0, 50.0, -20.0]) * t + 0.5 * acc * t * t
        np.testing.assert_allclose(y[:3], exact_r, rtol=1e-9)

    def _quad_drag_error(self, dt, total=2.0):
        mp = MissileDragParams(k_m=0.25, cd0=0.35, s_ref=1.0)
        s = EngagementState.from_velocities([0, 0, 0.0], [1000.0, 0, 0], [1e6, 0, 0], [0.0, 0, 0])
        for _ in range(int(round(total / dt))):
            s = rk4_step(s, np.zeros(3), np.zeros(3), dt, mp, TargetDragParams())
        c = RHO0 * 0.35 / (2 * 450.0)
        exact = 1000.0 / (1 + c * 1000.0 * total)
        return abs(s.speed_m - exact) / exact

    def test_fourth_order_convergence(self):
        e1 = self._quad_drag_error(0.1)
        e2 = self._quad_drag_error(0.05)
        assert 12.0 <= e1 / e2 <= 20.0

    def test_zero_dt_rejected(self):
        with pytest.raises(ValueError):
            rk4_step(state(), np.zeros(3), np.zeros(3), 0.0)

    def test_speed_monotone_without_accel(self):
        s = state(h_m=3000.0)
        prev = s.speed_m
        for _ in range(100):
            s = rk4_step(s, np.zeros(3), np.zeros(3), 0.02)
            assert s.speed_m < prev
            prev = s.speed_m

    def test_velocity_magnitude_matches_speed(self):
        s = state(h_m=3000.0)
        rng = np.random.default_rng(0)
        for _ in range(100):
            s = rk4_step(s, rng.normal(size=3) * 100, rng.normal(size=3) * 50, 0.02, MissileDragParams(), TargetDragParams(0.2, 0.2))
            assert np.linalg.norm(s.v_m) == pytest.approx(s.speed_m, rel=1e-9)
            assert np.linalg.norm(s.v_t) == pytest.approx(s.speed_t, rel=1e-9)
            assert np.linalg.norm(s.vt_m) == pytest.approx(s.speed_m, rel=1e-9)


def zero_controller(_s):
    return np.zeros(3), np.zeros(3)


class TestIntegrateToTermination:
    def test_head_on_collision_resolution(self):
        s = EngagementState.from_velocities([0, 0, 5000.0], [900.0, 0, 0], [6000.0, 0.1, 5000.0], [-500.0, 0, 0])
        tr = integrate_to_termination(s, zero_controller, IntegratorConfig(), NO_DRAG)
        assert tr.termination == "closing"
        assert tr.miss < 0.4

    def test_immediate_termination_when_opening(self):
        s = EngagementState.from_velocities([0, 0, 0.0], [-900.0, 0, 0], [5000.0, 0, 0], [500.0, 0, 0])
        tr = integrate_to_termination(s, zero_controller)
        assert len(tr) == 1
        assert tr.termination == "closing"
        assert tr.miss == pytest.approx(5000.0)

    def test_time_cap_reported(self):
        s = EngagementState.from_velocities([0, 0, 0.0], [500.0, 0, 0], [0, 3000.0, 0], [500.0, 0, 0])
        tr = integrate_to_termination(s, zero_controller, IntegratorConfig(t_max=1.0), NO_DRAG)
        assert tr.termination == "time_cap"
        assert len(tr) == 50

    def test_matches_uniform_fine_reference(self):
        s = EngagementState.from_velocities([0, 0, 4000.0], [850.0, 30.0, 0], [7000.0, 50.0, 4500.0], [-450.0, 0, -20.0])

        def ctrl(st):
            # crude pursuit-ish lateral command so the path is curved
            lam = st.r_tm / st.range
            v_hat = st.v_m / st.speed_m
            a = 3.0 * st.closing_velocity * (lam - np.dot(lam, v_hat) * v_hat) / 2.0
            return a, np.array([0.0, 0.0, 30.0])

        coarse = integrate_to_termination(s, ctrl)
        fine = integrate_to_termination(s, ctrl, IntegratorConfig(uniform_fine=True))
        assert abs(coarse.miss - fine.miss) < 0.4

    def test_trace_csv(self, tmp_path):
        s = EngagementState.from_velocities([0, 0, 5000.0], [900.0, 0, 0], [3000.0, 0, 5000.0], [-500.0, 0, 0])
        tr = integrate_to_termination(s, zero_controller, IntegratorConfig(), NO_DRAG)
        path = tmp_path / "trace.csv"
        tr.to_csv(path)
        header = path.read_text().splitlines()[0].split(",")
        assert tuple(header) == EpisodeTrace.columns
        data = np.loadtxt(path, delimiter=",", skiprows=1)
        assert data.shape == (len(tr), len(EpisodeTrace.columns))

    def test_deterministic(self):
        s = EngagementState.from_velocities([0, 0, 5000.0], [900.0, 10, 0], [6000.0, 0.1, 5000.0], [-500.0, 0, 0])
        a = integrate_to_termination(s, lambda st: (np.array([0, 5.0, 0]), np.array([0, 0, 10.0])))
        b = integrate_to_termination(s, lambda st: (np.array([0, 5.0, 0]), np.array([0, 0, 10.0])))
        np.testing.assert_array_equal(a.as_array(), b.as_array())
        assert a.miss == b.miss
