"""Record and outcome parsing, error taxonomy, and round-trips."""

import numpy as np
import pytest

from icurisk.ingest import (
    DEFAULT_REGISTRY,
    Measurement,
    ParameterRegistry,
    RawEpisode,
    RecordParseError,
    RecordStructureError,
    StaticObservation,
    UnknownParameterError,
    join_labels,
    parse_outcomes,
    parse_record,
    serialize_record,
)

from conftest import record_text


HR = DEFAULT_REGISTRY.series_index("HR")


class TestParseRecord:
    def test_basic_fields(self):
        text = (
            "Time,Parameter,Value\n"
            "00:00,RecordID,132539\n"
            "00:00,Age,54\n"
            "00:07,HR,73\n"
        )
        ep = parse_record(text)
        assert ep.record_id == 132539
        assert ep.statics[DEFAULT_REGISTRY.static_index("Age")] == 54.0
        assert ep.measurements == [Measurement(7, HR, 73.0)]

    def test_height_sentinel_is_missing(self):
        ep = parse_record(record_text(1, {"Height": -1}))
        assert ep.statics[DEFAULT_REGISTRY.static_index("Height")] is None

    def test_gender_and_weight_sentinels(self):
        ep = parse_record(record_text(1, {"Gender": -1, "Weight": -1}))
        assert ep.statics[DEFAULT_REGISTRY.static_index("Gender")] is None
        assert ep.statics[DEFAULT_REGISTRY.static_index("Weight")] is None

    def test_age_minus_one_is_kept(self):
        # The -1 convention is documented only for Gender/Height/Weight.
        ep = parse_record(record_text(1, {"Age": -1}))
        assert ep.statics[DEFAULT_REGISTRY.static_index("Age")] == -1.0

    def test_48_hour_boundary_accepted(self):
        ep = parse_record(record_text(1, rows=[(2880, "HR", 80)]))
        assert ep.measurements[0].minutes == 2880

    def test_beyond_48_hours_rejected(self):
        with pytest.raises(RecordParseError, match="48-hour"):
            parse_record(record_text(1, rows=[(2881, "HR", 80)]))

    def test_malformed_line_reports_line_number(self):
        text = "Time,Parameter,Value\n00:00,RecordID,1\nnot a row\n"
        with pytest.raises(RecordParseError, match="line 3"):
            parse_record(text)

    def test_bad_time_field(self):
        text = "Time,Parameter,Value\n00:00,RecordID,1\n0a:00,HR,70\n"
        with pytest.raises(RecordParseError, match="time"):
            parse_record(text)

    def test_bad_value_field(self):
        text = "Time,Parameter,Value\n00:00,RecordID,1\n00:05,HR,abc\n"
        with pytest.raises(RecordParseError, match="value"):
            parse_record(text)

    def test_non_finite_value_rejected(self):
        text = "Time,Parameter,Value\n00:00,RecordID,1\n00:05,HR,inf\n"
        with pytest.raises(RecordParseError, match="non-finite"):
            parse_record(text)

    def test_missing_record_id(self):
        with pytest.raises(RecordStructureError, match="RecordID"):
            parse_record("Time,Parameter,Value\n00:00,Age,60\n")

    def test_duplicate_record_id(self):
        text = "Time,Parameter,Value\n00:00,RecordID,1\n00:00,RecordID,2\n"
        with pytest.raises(RecordStructureError, match="duplicate"):
            parse_record(text)

    def test_unknown_parameter_named(self):
        with pytest.raises(UnknownParameterError, match="Misc"):
            parse_record(record_text(1, rows=[(5, "Misc", 1.0)]))

    def test_missing_header(self):
        with pytest.raises(RecordStructureError, match="header"):
            parse_record("00:00,RecordID,1\n")

    def test_late_weight_goes_to_extras(self):
        ep = parse_record(record_text(1, {"Weight": 80.0}, [(300, "Weight", 81.5)]))
        weight_idx = DEFAULT_REGISTRY.static_index("Weight")
        assert ep.statics[weight_idx] == 80.0
        assert ep.static_extras == [StaticObservation(300, weight_idx, 81.5)]
        assert ep.measurements == []

    def test_repeated_static_at_time_zero(self):
        # First time-00:00 row claims the slot, even when it is the sentinel.
        text = (
            "Time,Parameter,Value\n"
            "00:00,RecordID,1\n"
            "00:00,Weight,-1\n"
            "00:00,Weight,82.0\n"
        )
        ep = parse_record(text)
        weight_idx = DEFAULT_REGISTRY.static_index("Weight")
        assert ep.statics[weight_idx] is None
        assert ep.static_extras == [StaticObservation(0, weight_idx, 82.0)]

    def test_equal_timestamps_keep_file_order(self):
        rows = [(10, "HR", 70), (10, "HR", 75), (10, "GCS", 14)]
        ep = parse_record(record_text(1, rows=rows))
        assert [m.value for m in ep.measurements] == [70.0, 75.0, 14.0]

    def test_out_of_order_input_is_sorted_stably(self):
        rows = [(30, "HR", 1), (10, "HR", 2), (30, "HR", 3)]
        ep = parse_record(record_text(1, rows=rows))
        assert [(m.minutes, m.value) for m in ep.measurements] == [
            (10, 2.0), (30, 1.0), (30, 3.0)]

    def test_blank_lines_skipped(self):
        text = "Time,Parameter,Value\n\n00:00,RecordID,9\n\n00:05,HR,70\n\n"
        assert parse_record(text).record_id == 9


class TestRoundTrip:
    def test_explicit_episode(self):
        text = record_text(
            77,
            {"Age": 61, "Gender": 1, "Height": -1, "ICUType": 2, "Weight": 74.3},
            [(0, "HR", 71.5), (7, "GCS", 15), (7, "HR", 72), (2880, "Urine", 120)],
        )
        ep = parse_record(text)
        assert parse_record(serialize_record(ep)) == ep

    def test_random_episodes(self):
        rng = np.random.default_rng(11)
        params = DEFAULT_REGISTRY.time_series
        for trial in range(25):
            rows = []
            for minutes in np.sort(rng.integers(0, 2881, size=rng.integers(0, 40))):
                rows.append((int(minutes), params[int(rng.integers(len(params)))],
                             float(np.round(rng.normal(50, 20), 3))))
            if rng.random() < 0.5:
                rows.append((int(rng.integers(1, 2881)), "Weight",
                             float(np.round(rng.uniform(40, 120), 1))))
            statics = {"Age": int(rng.integers(16, 100))}
            if rng.random() < 0.5:
                statics["Weight"] = float(np.round(rng.uniform(40, 120), 1))
            ep = parse_record(record_text(trial + 1, statics, rows))
            assert parse_record(serialize_record(ep)) == ep


class TestOutcomes:
    HEADER = "RecordID,SAPS-I,SOFA,Length_of_stay,Survival,In-hospital_death\n"

    def test_single_row(self):
        labels = parse_outcomes(self.HEADER + "132539,6,1,5,-1,0\n")
        assert labels == {132539: 0}

    def test_duplicate_id_rejected(self):
        text = self.HEADER + "1,6,1,5,-1,0\n1,6,1,5,-1,1\n"
        with pytest.raises(RecordStructureError, match="duplicate"):
            parse_outcomes(text)

    def test_label_outside_01_rejected(self):
        with pytest.raises(RecordParseError, match="0 or 1"):
            parse_outcomes(self.HEADER + "1,6,1,5,-1,2\n")

    def test_non_numeric_label_rejected(self):
        with pytest.raises(RecordParseError, match="label"):
            parse_outcomes(self.HEADER + "1,6,1,5,-1,dead\n")

    def test_missing_columns_rejected(self):
        with pytest.raises(RecordStructureError, match="header"):
            parse_outcomes("RecordID,Survival\n1,0\n")


class TestJoinLabels:
    def _episode(self, record_id):
        return parse_record(record_text(record_id, {"Age": 50}))

    def test_join(self):
        eps = [self._episode(1), self._episode(2)]
        joined = join_labels(eps, {1: 0, 2: 1})
        assert [ep.label for ep in joined] == [0, 1]
        assert all(ep.label is None for ep in eps)  # inputs untouched

    def test_missing_label_names_id(self):
        with pytest.raises(RecordStructureError, match="2"):
            join_labels([self._episode(1), self._episode(2)], {1: 0})


class TestRegistry:
    def test_counts(self):
        assert len(DEFAULT_REGISTRY.time_series) == 36
        assert len(DEFAULT_REGISTRY.statics) == 5
        names = DEFAULT_REGISTRY.time_series + DEFAULT_REGISTRY.statics
        assert len(set(names)) == 41

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError, match="41"):
            ParameterRegistry(time_series=("HR",) * 36)
