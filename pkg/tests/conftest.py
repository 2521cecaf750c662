"""Shared builders for synthetic records, corpora, and feature sets."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from icurisk.ingest import TIME_SERIES_PARAMETERS
from icurisk.preprocess import EpisodeFeatures


def hhmm(minutes: int) -> str:
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def record_text(record_id: int, statics: dict | None = None,
                rows: list[tuple[int, str, float]] | None = None) -> str:
    """Assemble a record file from explicit static and measurement rows."""
    lines = ["Time,Parameter,Value", f"00:00,RecordID,{record_id}"]
    for name, value in (statics or {}).items():
        lines.append(f"00:00,{name},{value}")
    for minutes, name, value in (rows or []):
        lines.append(f"{hhmm(minutes)},{name},{value}")
    return "\n".join(lines) + "\n"


def synth_record_text(record_id: int, rng: np.random.Generator,
                      sick: bool = False, horizon: int = 2880,
                      n_measurements: int | None = None) -> str:
    """A plausible random record; sick episodes run high HR and Lactate."""
    statics = {
        "Age": int(rng.integers(40, 90)),
        "Gender": int(rng.integers(0, 2)),
        "Height": round(float(rng.uniform(150, 195)), 1),
        "ICUType": int(rng.integers(1, 5)),
        "Weight": round(float(rng.uniform(50, 110)), 1),
    }
    n = int(rng.integers(25, 70)) if n_measurements is None else n_measurements
    rows = []
    for minutes in np.sort(rng.integers(0, horizon + 1, size=n)):
        name = TIME_SERIES_PARAMETERS[int(rng.integers(len(TIME_SERIES_PARAMETERS)))]
        value = float(rng.normal(80.0, 10.0))
        if sick and name == "HR":
            value += 45.0
        if sick and name == "Lactate":
            value += 6.0
        rows.append((int(minutes), name, round(value, 2)))
    if rng.random() < 0.5:
        rows.append((min(horizon, 1440), "Weight", round(float(rng.uniform(50, 110)), 1)))
    return record_text(record_id, statics, rows)


def write_corpus(directory: Path, n: int = 12, seed: int = 0,
                 sick_every: int = 3) -> tuple[Path, Path]:
    """Write a synthetic data dir + outcomes file; returns their paths."""
    data_dir = directory / "set-x"
    data_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    outcome_rows = ["RecordID,SAPS-I,SOFA,Length_of_stay,Survival,In-hospital_death"]
    for i in range(n):
        record_id = 140000 + i
        sick = (i % sick_every) == 0
        (data_dir / f"{record_id}.txt").write_text(
            synth_record_text(record_id, rng, sick=sick)
        )
        outcome_rows.append(f"{record_id},10,5,12,-1,{1 if sick else 0}")
    outcomes = directory / "outcomes.csv"
    outcomes.write_text("\n".join(outcome_rows) + "\n")
    return data_dir, outcomes


def separable_features(n: int = 32, intervals: int = 4, dim: int = 10,
                       seed: int = 0, gap: float = 2.0,
                       noise: float = 0.3) -> list[EpisodeFeatures]:
    """Synthetic feature sets where column 0 alone determines the label."""
    rng = np.random.default_rng(seed)
    features = []
    for i in range(n):
        label = i % 2
        matrix = rng.normal(0.0, noise, size=(intervals, dim))
        matrix[:, 0] += gap if label == 1 else -gap
        features.append(EpisodeFeatures(record_id=i + 1, matrix=matrix, label=label))
    return features


@pytest.fixture
def tiny_corpus(tmp_path):
    return write_corpus(tmp_path, n=12, seed=7)
