import numpy as np
import pytest

from ngrc_control import (
    ConfigurationError,
    DomainError,
    EscapedStateError,
    HenonParams,
    HenonPlant,
    NoiseSpec,
    PlantState,
    fixed_points,
    has_escaped,
    henon_step,
    period4_orbit,
)

# Reference coordinates of the invariant sets for a=1.4, b=0.3.
PU1 = PlantState(0.63135, 0.18941)
PU2 = PlantState(-1.13135, -0.33941)


class TestHenonStep:
    def test_origin(self, params):
        assert henon_step(PlantState(0.0, 0.0), 0.0, params) == PlantState(1.0, 0.0)

    def test_fixed_point_maps_to_itself(self, params):
        nxt = henon_step(PU1, 0.0, params)
        assert abs(nxt.x - PU1.x) < 1e-4
        assert abs(nxt.y - PU1.y) < 1e-4

    def test_control_shifts_x_only(self, params):
        # 1 - 1.4 + 0.3 + 0.5 = 0.4, y' = 0.3 * 1
        nxt = henon_step(PlantState(1.0, 0.3), 0.5, params)
        assert nxt.x == pytest.approx(0.4, abs=1e-12)
        assert nxt.y == pytest.approx(0.3, abs=0)

    def test_non_finite_input_rejected(self, params):
        with pytest.raises(EscapedStateError):
            henon_step(PlantState(float("nan"), 0.0), 0.0, params)
        with pytest.raises(EscapedStateError):
            henon_step(PlantState(float("inf"), 0.0), 0.0, params)

    def test_noise_requires_rng(self, params):
        with pytest.raises(ConfigurationError):
            henon_step(PlantState(0.0, 0.0), 0.0, params, NoiseSpec(0.1), rng=None)

    def test_noiseless_is_bit_exact(self, params):
        s = PlantState(0.4, 0.2)
        a = henon_step(s, 0.3, params, NoiseSpec(0.0), np.random.default_rng(0))
        b = henon_step(s, 0.3, params)
        assert a == b

    def test_noise_draw_order_is_x_then_y(self, params):
        rng = np.random.default_rng(5)
        d_x, d_y = rng.normal(0.0, 0.01), rng.normal(0.0, 0.01)
        nxt = henon_step(
            PlantState(0.0, 0.0), 0.0, params, NoiseSpec(0.01), np.random.default_rng(5)
        )
        assert nxt == PlantState(1.0 + d_x, d_y)

    def test_noise_statistics(self, params):
        # Sample std of x' over many draws from a fixed (state, u).
        sigma = 0.01
        rng = np.random.default_rng(123)
        s = PlantState(0.5, 0.1)
        xs = np.array(
            [henon_step(s, 0.0, params, NoiseSpec(sigma), rng).x for _ in range(100_000)]
        )
        assert abs(xs.std(ddof=1) - sigma) / sigma < 0.02


class TestFixedPoints:
    def test_match_reference_values(self, params):
        p1, p2 = fixed_points(params)
        assert p1.x == pytest.approx(PU1.x, abs=1e-5)
        assert p1.y == pytest.approx(PU1.y, abs=1e-5)
        assert p2.x == pytest.approx(PU2.x, abs=1e-5)
        assert p2.y == pytest.approx(PU2.y, abs=1e-5)

    def test_ordered_by_descending_x(self, params):
        p1, p2 = fixed_points(params)
        assert p1.x > p2.x

    def test_step_residual(self, params):
        for p in fixed_points(params):
            nxt = henon_step(p, 0.0, params)
            assert abs(nxt.x - p.x) < 1e-12
            assert abs(nxt.y - p.y) < 1e-12

    def test_roots_solve_quadratic(self, params):
        # a*x^2 + (1-b)*x - 1 = 0 and y = b*x
        for p in fixed_points(params):
            assert params.a * p.x**2 + (1 - params.b) * p.x - 1 == pytest.approx(
                0.0, abs=1e-12
            )
            assert p.y == params.b * p.x

    def test_invalid_coefficient_rejected(self):
        with pytest.raises(DomainError):
            HenonParams(a=-1.0)


class TestPeriod4Orbit:
    def test_consecutive_points_chain(self, params):
        orbit = period4_orbit()
        for k in range(4):
            nxt = henon_step(orbit[k], 0.0, params)
            tgt = orbit[(k + 1) % 4]
            assert abs(nxt.x - tgt.x) < 1e-4
            assert abs(nxt.y - tgt.y) < 1e-4

    def test_four_iterations_close(self, params):
        s = period4_orbit()[0]
        for _ in range(4):
            s = henon_step(s, 0.0, params)
        assert abs(s.x - period4_orbit()[0].x) < 1e-3
        assert abs(s.y - period4_orbit()[0].y) < 1e-3

    def test_y_coordinates_follow_second_equation(self, params):
        orbit = period4_orbit()
        for k in range(4):
            assert abs(orbit[(k + 1) % 4].y - params.b * orbit[k].x) < 1e-4


class TestEscape:
    def test_examples(self):
        assert not has_escaped(PlantState(0.0, 0.0))
        assert has_escaped(PlantState(10.0, 0.0))
        assert not has_escaped(PU2)  # finite fixed point outside trapping region

    def test_non_finite_counts_as_escape(self):
        assert has_escaped(PlantState(float("nan"), 0.0))
        assert has_escaped(PlantState(0.0, float("-inf")))

    def test_escape_is_absorbing_uncontrolled(self, params):
        # Beyond the bound the L1 norm grows (or blows up) within 5 iterations.
        for x0 in (-5.0, -4.0, -3.05, 3.05, 4.0, 5.0):
            for y0 in (-3.0, -1.5, 0.0, 1.5, 3.0):
                s = PlantState(x0, y0)
                start = abs(s.x) + abs(s.y)
                grew = False
                for _ in range(5):
                    if not s.is_finite():
                        grew = True
                        break
                    s = henon_step(s, 0.0, params)
                    if not s.is_finite() or abs(s.x) + abs(s.y) > start:
                        grew = True
                        break
                assert grew, (x0, y0)


class TestHenonPlant:
    def test_contract(self, params):
        from ngrc_control import DiscretePlant

        plant = HenonPlant(params, NoiseSpec(0.0))
        assert isinstance(plant, DiscretePlant)
        s = PlantState(0.2, 0.1)
        assert np.array_equal(plant.observe(s), [0.2, 0.1])
        assert plant.step(s, 0.0) == henon_step(s, 0.0, params)
        assert not plant.escaped(s)
        assert plant.escaped(PlantState(4.0, 0.0))

    def test_negative_noise_rejected(self):
        with pytest.raises(DomainError):
            NoiseSpec(-0.1)
