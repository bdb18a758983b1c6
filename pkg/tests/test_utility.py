import math

import numpy as np
import pytest

from errors import ValidationError
from models.utility import (
    UtilitySpec, expected_slot_utility, tangent_envelope, utility_derivative, utility_inverse,
    utility_value,
)


def test_square_root_utility(spec):
    assert utility_value(spec, 4.0) == pytest.approx(4.0)
    assert utility_value(spec, 0.0) == 0.0
    assert utility_derivative(spec, 4.0) == pytest.approx(0.5)


def test_log_utility_uses_floor():
    log_spec = UtilitySpec(factor_A=2.0, curvature_a=1.0)
    assert log_spec.is_log
    assert utility_value(log_spec, math.e) == pytest.approx(2.0)
    assert utility_value(log_spec, 0.0) == pytest.approx(2.0 * math.log(1e-6))


def test_arrays_in_arrays_out(spec):
    values = utility_value(spec, np.array([0.0, 1.0, 4.0]))
    assert isinstance(values, np.ndarray)
    assert values == pytest.approx([0.0, 2.0, 4.0])
    assert isinstance(utility_value(spec, 1.0), float)


def test_invalid_volumes(spec):
    with pytest.raises(ValidationError):
        utility_value(spec, -1.0)
    with pytest.raises(ValidationError):
        utility_derivative(spec, 0.0)


@pytest.mark.parametrize("kwargs", [
    {"factor_A": 0.0},
    {"curvature_a": 0.0},
    {"curvature_a": 1.5},
    {"eval_floor": 0.0},
])
def test_invalid_utility_parameters(kwargs):
    with pytest.raises(ValidationError):
        UtilitySpec(**kwargs)


@pytest.mark.parametrize("curvature", [0.1, 0.5, 1.0])
def test_inverse_recovers_volume(curvature):
    spec = UtilitySpec(factor_A=0.08, curvature_a=curvature)
    for volume in (0.5, 3.0, 3600.0 * 120):
        assert utility_inverse(spec, utility_value(spec, volume)) == pytest.approx(volume, rel=1e-9)


def test_inverse_below_range_is_zero(spec):
    assert utility_inverse(spec, -1.0) == 0.0


class TestExpectedSlotUtility:
    def test_two_realizations(self, spec):
        value = expected_slot_utility(spec, [(4.0, 0.5), (8.0, 0.5)], slot_seconds=1.0, usage=6.0)
        assert value == pytest.approx(0.5 * 4.0 + 0.5 * 2.0 * math.sqrt(6.0))

    def test_usage_above_every_demand_saturates(self, spec):
        dist = [(4.0, 0.25), (9.0, 0.75)]
        assert expected_slot_utility(spec, dist, 1.0, 9.0) == expected_slot_utility(spec, dist, 1.0, 50.0)

    def test_probabilities_must_sum_to_one(self, spec):
        with pytest.raises(ValidationError):
            expected_slot_utility(spec, [(4.0, 0.5), (8.0, 0.4)], 1.0, 1.0)


class TestTangents:
    def test_single_tangent_toy(self, spec):
        lines = tangent_envelope(spec, demand=4.0, slot_seconds=1.0, count_N=1)
        assert len(lines.lines) == 1
        assert lines.lines[0] == pytest.approx((0.5, 2.0))

    def test_envelope_bounds_utility_from_above(self):
        spec = UtilitySpec(factor_A=0.08, curvature_a=0.1)
        lines = tangent_envelope(spec, demand=40.0, slot_seconds=3600.0, count_N=3)
        volumes = np.linspace(0.0, 3600.0 * 40.0, 257)
        exact = utility_value(spec, volumes)
        assert np.all(lines.value_at(volumes) >= exact * (1 - 1e-12) - 1e-12)

    def test_envelope_touches_at_anchors(self, spec):
        lines = tangent_envelope(spec, demand=9.0, slot_seconds=1.0, count_N=3)
        anchors = np.array([3.0, 6.0, 9.0])
        assert lines.value_at(anchors) == pytest.approx(utility_value(spec, anchors))

    def test_zero_demand_gives_flat_line(self, spec):
        lines = tangent_envelope(spec, demand=0.0, slot_seconds=1.0, count_N=3)
        assert lines.lines == ((0.0, 0.0),)

    def test_count_must_be_positive(self, spec):
        with pytest.raises(ValidationError):
            tangent_envelope(spec, demand=1.0, slot_seconds=1.0, count_N=0)


class TestShape:
    VOLUMES = np.linspace(0.5, 400.0, 800)

    @pytest.mark.parametrize("curvature", [0.1, 0.5, 1.0])
    def test_increasing_and_concave(self, curvature):
        spec = UtilitySpec(factor_A=0.08, curvature_a=curvature)
        values = utility_value(spec, self.VOLUMES)
        assert np.all(np.diff(values) > 0)
        assert np.all(np.diff(values, 2) <= 1e-12)

    @pytest.mark.parametrize("curvature", [0.1, 0.5, 1.0])
    def test_derivative_matches_finite_differences(self, curvature):
        spec = UtilitySpec(factor_A=0.08, curvature_a=curvature)
        for volume in (0.7, 5.0, 60.0, 3600.0 * 40):
            h = 1e-6 * volume
            slope = (utility_value(spec, volume + h) - utility_value(spec, volume - h)) / (2 * h)
            assert utility_derivative(spec, volume) == pytest.approx(slope, rel=1e-5)

    def test_expected_slot_utility_nondecreasing_and_concave(self, spec):
        dist = [(2.0, 0.2), (5.0, 0.5), (9.0, 0.3)]
        usage = np.linspace(0.0, 12.0, 241)
        values = np.array([expected_slot_utility(spec, dist, 1.0, x) for x in usage])
        assert np.all(np.diff(values) >= 0)
        assert np.all(np.diff(values, 2) <= 1e-12)
        assert np.all(values[usage >= 9.0] == values[-1])
