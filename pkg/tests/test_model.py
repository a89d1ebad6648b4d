"""Core domain types: validation, wire round-trips, dataset file contract."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coolguard.model import (
    CENSOR_HORIZON_HOURS,
    CHANNELS,
    DATASET_COLUMNS,
    LABEL_COLUMN,
    ParseError,
    SensorReading,
    parse_reading,
    quantize,
    read_dataset,
    serialize_reading,
    validate_reading,
    write_dataset,
)


def make_reading(pressure=2.0, flow=1.5, humidity=50.0, temperature=25.0,
                 timestamp=0, rack_id="rack-01"):
    return SensorReading(timestamp=timestamp, rack_id=rack_id, pressure=pressure,
                         flow=flow, humidity=humidity, temperature=temperature)


class TestValidateReading:
    def test_nominal_reading_is_valid(self):
        assert validate_reading(make_reading(2.0, 1.5, 50.0, 25.0)) == []

    def test_negative_pressure_flagged(self):
        violations = validate_reading(make_reading(pressure=-1.0))
        assert len(violations) == 1
        assert "pressure" in violations[0]
        assert "out of range" in violations[0]

    def test_humidity_above_100_flagged(self):
        violations = validate_reading(make_reading(humidity=120.0))
        assert len(violations) == 1
        assert "humidity" in violations[0]

    def test_multiple_violations_all_reported(self):
        violations = validate_reading(make_reading(pressure=-1.0, humidity=120.0))
        assert len(violations) == 2

    def test_nan_reported_as_not_finite(self):
        violations = validate_reading(make_reading(flow=float("nan")))
        assert violations == ["flow is not finite"]

    def test_negative_timestamp_flagged(self):
        violations = validate_reading(make_reading(timestamp=-5))
        assert any("timestamp" in v for v in violations)

    def test_bounds_are_inclusive(self):
        assert validate_reading(make_reading(pressure=0.0, humidity=100.0)) == []


class TestWireFormat:
    def test_serialize_fixed_decimals(self):
        line = serialize_reading(make_reading(2.0, 1.5, 50.0, 25.0, timestamp=120))
        assert line == "120,rack-01,2.0000,1.5000,50.0000,25.0000"

    def test_parse_round_trip(self):
        r = make_reading(1.8321, 1.4012, 55.5, 24.9, timestamp=10**18)
        assert parse_reading(serialize_reading(r)) == r

    def test_round_trip_10k_random_readings(self):
        # Quantized values must survive serialize -> parse bit-exactly.
        rng = np.random.Generator(np.random.PCG64(20260819))
        for _ in range(10_000):
            r = SensorReading(
                timestamp=int(rng.integers(0, 2**62)),
                rack_id=f"rack-{rng.integers(0, 100):02d}",
                pressure=quantize(rng.uniform(0.0, 5.0)),
                flow=quantize(rng.uniform(0.0, 10.0)),
                humidity=quantize(rng.uniform(0.0, 100.0)),
                temperature=quantize(rng.uniform(-10.0, 60.0)),
            )
            assert parse_reading(serialize_reading(r)) == r

    @given(
        timestamp=st.integers(min_value=0, max_value=2**63 - 1),
        pressure=st.floats(0.0, 5.0),
        flow=st.floats(0.0, 10.0),
        humidity=st.floats(0.0, 100.0),
        temperature=st.floats(-10.0, 60.0),
    )
    @settings(max_examples=200)
    def test_round_trip_property(self, timestamp, pressure, flow, humidity, temperature):
        r = SensorReading(
            timestamp=timestamp,
            rack_id="rack-xy",
            pressure=quantize(pressure),
            flow=quantize(flow),
            humidity=quantize(humidity),
            temperature=quantize(temperature),
        )
        assert parse_reading(serialize_reading(r)) == r

    def test_missing_column_error(self):
        with pytest.raises(ParseError, match="missing column"):
            parse_reading("120,rack-01,2.0")

    def test_extra_column_error(self):
        with pytest.raises(ParseError, match="extra column"):
            parse_reading("120,rack-01,2.0,1.5,50.0,25.0,junk")

    def test_non_numeric_pressure_names_column(self):
        with pytest.raises(ParseError) as exc:
            parse_reading("120,rack-01,abc,1.5,50.0,25.0")
        assert exc.value.column == 2
        assert "pressure" in str(exc.value)

    def test_non_numeric_temperature_names_column(self):
        with pytest.raises(ParseError) as exc:
            parse_reading("120,rack-01,2.0,1.5,50.0,oops")
        assert exc.value.column == 5

    def test_bad_timestamp(self):
        with pytest.raises(ParseError) as exc:
            parse_reading("12.5,rack-01,2.0,1.5,50.0,25.0")
        assert exc.value.column == 0

    def test_empty_rack_id(self):
        with pytest.raises(ParseError, match="rack_id"):
            parse_reading("120,,2.0,1.5,50.0,25.0")

    def test_infinite_value_rejected(self):
        with pytest.raises(ParseError, match="not finite"):
            parse_reading("120,rack-01,inf,1.5,50.0,25.0")


class TestDatasetFile:
    def test_header_matches_contract(self, tmp_path):
        path = tmp_path / "ds.csv"
        readings = [make_reading(timestamp=i * 60 * 10**9) for i in range(3)]
        write_dataset(path, readings, [False, True, False], labels=[8.0, 0.0, 8.0])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "timestamp_ns,rack_id,pressure_bar,flow_lpm,humidity_rh,temp_c,is_leaking,time_to_leak_h"

    def test_header_without_labels(self, tmp_path):
        path = tmp_path / "ds.csv"
        write_dataset(path, [make_reading()], [False])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == ",".join(DATASET_COLUMNS)
        assert LABEL_COLUMN not in lines[0]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "ds.csv"
        readings = [make_reading(pressure=1.7 + 0.01 * i, timestamp=i * 60 * 10**9)
                    for i in range(5)]
        flags = [False, False, True, True, False]
        labels = [2.0, 1.0, 0.0, 0.0, 8.0]
        write_dataset(path, readings, flags, labels=labels,
                      header_comments=["generator config: {}"])
        got_readings, got_flags, got_labels = read_dataset(path)
        assert got_readings == readings
        assert got_flags == flags
        assert got_labels == labels

    def test_comments_skipped_on_read(self, tmp_path):
        path = tmp_path / "ds.csv"
        write_dataset(path, [make_reading()], [False],
                      header_comments=["alpha", "beta gamma"])
        text = path.read_text(encoding="utf-8")
        assert text.startswith("# alpha\n# beta gamma\n")
        readings, flags, labels = read_dataset(path)
        assert len(readings) == 1 and labels is None

    def test_length_mismatch_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="leak_flags"):
            write_dataset(tmp_path / "x.csv", [make_reading()], [])
        with pytest.raises(ValueError, match="labels"):
            write_dataset(tmp_path / "y.csv", [make_reading()], [False], labels=[1.0, 2.0])

    def test_malformed_row_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text(",".join(DATASET_COLUMNS) + "\n1,rack-01,2.0,1.5\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_dataset(path)

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("# only comments\n", encoding="utf-8")
        with pytest.raises(ParseError, match="no header"):
            read_dataset(path)


def test_censor_horizon_is_eight_hours():
    assert CENSOR_HORIZON_HOURS == 8.0


def test_channel_order_fixed():
    # Feature vectors everywhere rely on this exact order.
    assert CHANNELS == ("pressure", "flow", "humidity", "temperature")


def test_quantize_idempotent():
    for v in (0.0, 1.23456789, -9.87654321, 99.99995):
        assert quantize(quantize(v)) == quantize(v)


def test_reading_channel_values_order():
    r = make_reading(2.0, 1.5, 50.0, 25.0)
    assert r.channel_values() == (2.0, 1.5, 50.0, 25.0)


def test_leak_event_covers_half_open():
    from coolguard.model import LeakEvent, SteadyState

    ev = LeakEvent(id="ev-1", rack_id="rack-01", onset=0, ramp_minutes=30,
                   duration_minutes=60, severity=1.0,
                   steady_state=SteadyState(pressure=1.7, flow=1.2, humidity=58.0))
    assert ev.covers(0)
    assert ev.covers(ev.end - 1)
    assert not ev.covers(ev.end)
    assert not ev.covers(-1)


def test_forecast_result_probability_lookup():
    from coolguard.model import ForecastResult

    fc = ForecastResult(issued_at=0, rack_id="rack-01", point_estimate=2.0,
                        eps90=0.7, prob_within=((2.0, 0.8), (4.0, 0.97)))
    assert fc.probability_within(4.0) == 0.97
    with pytest.raises(KeyError):
        fc.probability_within(3.0)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as exc:
        parse_reading("120,rack-01,2.0,xx,50.0,25.0")
    line = "120,rack-01,2.0,xx,50.0,25.0"
    assert exc.value.position == line.index("xx")
    assert math.isfinite(exc.value.column)
