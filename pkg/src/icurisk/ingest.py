"""Parsing of PhysioNet-2012-style record and outcome files.

A record file starts with the header ``Time,Parameter,Value`` followed by
rows ``HH:MM,<parameter>,<number>`` where the hour field may run up to 48.
Five parameters (age, gender, height, ICU type, initial weight) are static
and are read from the time-00:00 block; the other 36 registered parameters
form the time-series.  All functions here are pure: parsing many files
concurrently is safe.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field, replace

# 48-hour observation window, in minutes.
MAX_MINUTES = 48 * 60

TIME_SERIES_PARAMETERS = (
    "Albumin", "ALP", "ALT", "AST", "Bilirubin", "BUN", "Cholesterol",
    "Creatinine", "DiasABP", "FiO2", "GCS", "Glucose", "HCO3", "HCT", "HR",
    "K", "Lactate", "Mg", "MAP", "MechVent", "Na", "NIDiasABP", "NIMAP",
    "NISysABP", "PaCO2", "PaO2", "pH", "Platelets", "RespRate", "SaO2",
    "SysABP", "Temp", "TroponinI", "TroponinT", "Urine", "WBC",
)

STATIC_PARAMETERS = ("Age", "Gender", "Height", "ICUType", "Weight")

# Static descriptors where the corpus uses -1 as "not recorded".
SENTINEL_STATICS = frozenset({"Gender", "Height", "Weight"})

_TIME_RE = re.compile(r"^(\d{1,2}):([0-5]\d)$")


class IngestError(Exception):
    """Base class for record/outcome ingestion failures."""


class RecordParseError(IngestError):
    """A line could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class RecordStructureError(IngestError):
    """The file is well-formed line by line but structurally invalid."""


class UnknownParameterError(IngestError):
    """A row names a parameter absent from the registry."""

    def __init__(self, name: str, line_no: int):
        super().__init__(f"line {line_no}: unknown parameter {name!r}")
        self.parameter = name
        self.line_no = line_no


@dataclass(frozen=True)
class ParameterRegistry:
    """The fixed list of 36 time-series and 5 static parameter names."""

    time_series: tuple[str, ...] = TIME_SERIES_PARAMETERS
    statics: tuple[str, ...] = STATIC_PARAMETERS

    def __post_init__(self):
        names = self.time_series + self.statics
        if len(names) != 41 or len(set(names)) != 41:
            raise ValueError(
                "registry must hold exactly 41 unique names, got "
                f"{len(names)} with {len(set(names))} unique"
            )

    def series_index(self, name: str) -> int | None:
        try:
            return self.time_series.index(name)
        except ValueError:
            return None

    def static_index(self, name: str) -> int | None:
        try:
            return self.statics.index(name)
        except ValueError:
            return None


DEFAULT_REGISTRY = ParameterRegistry()


@dataclass(frozen=True)
class Measurement:
    """One time-stamped observation of a registered time-series parameter."""

    minutes: int
    parameter: int
    value: float


@dataclass(frozen=True)
class StaticObservation:
    """A repeat of a static-named parameter (e.g. Weight re-measured later).

    Kept so that serialization round-trips; excluded from the feature matrix
    because the static slot already accounts for the parameter.
    """

    minutes: int
    parameter: int
    value: float


@dataclass
class RawEpisode:
    """One patient's parsed record.

    ``statics`` is aligned with ``ParameterRegistry.statics``; ``None`` marks
    a missing descriptor.  ``measurements`` is sorted non-decreasing by time,
    preserving file order among equal timestamps.
    """

    record_id: int
    statics: list[float | None]
    measurements: list[Measurement]
    static_extras: list[StaticObservation] = field(default_factory=list)
    label: int | None = None


def _parse_minutes(token: str, line_no: int) -> int:
    m = _TIME_RE.match(token)
    if m is None:
        raise RecordParseError(line_no, f"bad time field {token!r}")
    minutes = int(m.group(1)) * 60 + int(m.group(2))
    if minutes > MAX_MINUTES:
        raise RecordParseError(
            line_no, f"time {token} exceeds the 48-hour window"
        )
    return minutes


def _parse_value(token: str, line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise RecordParseError(line_no, f"bad value field {token!r}") from None
    if not math.isfinite(value):
        raise RecordParseError(line_no, f"non-finite value {token!r}")
    return value


def parse_record(text: str, registry: ParameterRegistry = DEFAULT_REGISTRY) -> RawEpisode:
    """Parse one record file's contents into a :class:`RawEpisode`.

    The first time-00:00 row of each static parameter fills the static slot
    (with -1 mapped to missing for Gender/Height/Weight); later or repeated
    static rows are retained as :class:`StaticObservation`.  Measurements are
    stably sorted by time so equal timestamps keep file order.
    """
    lines = text.splitlines()
    if not lines or lines[0].strip() != "Time,Parameter,Value":
        raise RecordStructureError(
            "record file must start with a 'Time,Parameter,Value' header"
        )

    record_id: int | None = None
    statics: list[float | None] = [None] * len(registry.statics)
    statics_seen = [False] * len(registry.statics)
    measurements: list[Measurement] = []
    extras: list[StaticObservation] = []

    for line_no, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise RecordParseError(line_no, f"expected 3 fields, got {len(parts)}")
        time_tok, name, value_tok = (p.strip() for p in parts)
        minutes = _parse_minutes(time_tok, line_no)

        if name == "RecordID":
            if record_id is not None:
                raise RecordStructureError("duplicate RecordID row")
            value = _parse_value(value_tok, line_no)
            if value <= 0 or value != int(value):
                raise RecordStructureError(
                    f"RecordID must be a positive integer, got {value_tok!r}"
                )
            record_id = int(value)
            continue

        value = _parse_value(value_tok, line_no)

        static_idx = registry.static_index(name)
        if static_idx is not None:
            if minutes == 0 and not statics_seen[static_idx]:
                statics_seen[static_idx] = True
                if name in SENTINEL_STATICS and value == -1:
                    statics[static_idx] = None
                else:
                    statics[static_idx] = value
            else:
                extras.append(StaticObservation(minutes, static_idx, value))
            continue

        series_idx = registry.series_index(name)
        if series_idx is None:
            raise UnknownParameterError(name, line_no)
        measurements.append(Measurement(minutes, series_idx, value))

    if record_id is None:
        raise RecordStructureError("missing RecordID row")

    measurements.sort(key=lambda m: m.minutes)  # stable: keeps ties in file order
    extras.sort(key=lambda m: m.minutes)
    return RawEpisode(record_id, statics, measurements, extras)


def serialize_record(
    episode: RawEpisode, registry: ParameterRegistry = DEFAULT_REGISTRY
) -> str:
    """Render an episode back to the record file format.

    ``parse_record(serialize_record(ep))`` reproduces ``ep`` exactly; missing
    statics are omitted rather than written as -1.
    """
    out = io.StringIO()
    out.write("Time,Parameter,Value\n")
    out.write(f"00:00,RecordID,{episode.record_id}\n")
    for idx, value in enumerate(episode.statics):
        if value is not None:
            out.write(f"00:00,{registry.statics[idx]},{value!r}\n")

    # Merge the two streams by time; the merge is stable within each stream,
    # which is all the round-trip needs.
    rows: list[tuple[int, int, str]] = []
    for order, m in enumerate(episode.measurements):
        rows.append((m.minutes, order, f"{registry.time_series[m.parameter]},{m.value!r}"))
    for order, s in enumerate(episode.static_extras):
        rows.append((s.minutes, order, f"{registry.statics[s.parameter]},{s.value!r}"))
    rows.sort(key=lambda r: (r[0], r[1]))
    for minutes, _, tail in rows:
        out.write(f"{minutes // 60:02d}:{minutes % 60:02d},{tail}\n")
    return out.getvalue()


def parse_outcomes(text: str) -> dict[int, int]:
    """Parse an outcomes file into ``{record_id: label}``.

    The header must include ``RecordID`` and ``In-hospital_death`` columns.
    Labels must be exactly 0 or 1; duplicate record ids are an error.
    """
    reader = csv.DictReader(io.StringIO(text))
    fields = reader.fieldnames or []
    if "RecordID" not in fields or "In-hospital_death" not in fields:
        raise RecordStructureError(
            "outcomes header must contain RecordID and In-hospital_death columns"
        )
    labels: dict[int, int] = {}
    for row_no, row in enumerate(reader, start=2):
        try:
            record_id = int(row["RecordID"])
        except (TypeError, ValueError):
            raise RecordParseError(row_no, f"bad RecordID {row['RecordID']!r}") from None
        if record_id in labels:
            raise RecordStructureError(f"duplicate record id {record_id}")
        raw_label = row["In-hospital_death"]
        try:
            label = int(raw_label)
        except (TypeError, ValueError):
            raise RecordParseError(row_no, f"bad label {raw_label!r}") from None
        if label not in (0, 1):
            raise RecordParseError(row_no, f"label must be 0 or 1, got {label}")
        labels[record_id] = label
    return labels


def join_labels(
    episodes: list[RawEpisode], labels: dict[int, int]
) -> list[RawEpisode]:
    """Attach outcome labels to episodes; every episode must have one."""
    missing = [ep.record_id for ep in episodes if ep.record_id not in labels]
    if missing:
        raise RecordStructureError(
            f"no outcome label for record ids: {sorted(missing)}"
        )
    return [replace(ep, label=labels[ep.record_id]) for ep in episodes]
