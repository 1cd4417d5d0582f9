"""On-disk subject storage: canonical CGM CSVs plus optional modality logs.

Layout under a data directory:

    <subject>.csv              canonical glucose series
    <subject>.insulin.csv      optional: timestamp,units
    <subject>.carbohydrate.csv optional: timestamp,grams
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .data import DataError, GlucoseSeries, load_cgm_csv, parse_timestamp, save_cgm_csv

MODALITY_COLUMNS = {"insulin": "units", "carbohydrate": "grams"}


@dataclass(frozen=True)
class ModalityRecord:
    timestamp: datetime
    amount: float


@dataclass
class DataStore:
    """Read-only bundle of one subject's local data."""

    series: GlucoseSeries
    modalities: dict[str, tuple[ModalityRecord, ...]] = field(default_factory=dict)

    @property
    def subject_id(self) -> str:
        return self.series.subject_id


def load_modality_csv(path: str | Path, amount_col: str) -> tuple[ModalityRecord, ...]:
    path = Path(path)
    records: list[ModalityRecord] = []
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            ts = parse_timestamp(row.get("timestamp") or "")
            try:
                amount = float((row.get(amount_col) or "").strip())
            except ValueError:
                amount = math.nan
            if ts is None or not math.isfinite(amount) or amount < 0:
                continue
            records.append(ModalityRecord(ts, amount))
    records.sort(key=lambda r: r.timestamp)
    return tuple(records)


class SubjectDirectory:
    """A directory of subjects, one canonical CSV each."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def series_path(self, subject_id: str) -> Path:
        return self.root / f"{subject_id}.csv"

    def subjects(self) -> list[str]:
        if not self.root.is_dir():
            return []
        out = []
        for p in sorted(self.root.glob("*.csv")):
            if "." in p.stem:  # modality files like P1.insulin.csv
                continue
            out.append(p.stem)
        return out

    def save(self, series: GlucoseSeries) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.series_path(series.subject_id)
        save_cgm_csv(series, path)
        return path

    def load(self, subject_id: str) -> DataStore:
        path = self.series_path(subject_id)
        if not path.is_file():
            raise DataError(f"unknown subject: {subject_id!r} (no {path})")
        series = load_cgm_csv(path, subject_id=subject_id)
        modalities: dict[str, tuple[ModalityRecord, ...]] = {}
        for modality, column in MODALITY_COLUMNS.items():
            mpath = self.root / f"{subject_id}.{modality}.csv"
            if mpath.is_file():
                modalities[modality] = load_modality_csv(mpath, column)
        return DataStore(series=series, modalities=modalities)

    def load_all(self) -> dict[str, DataStore]:
        return {sid: self.load(sid) for sid in self.subjects()}
