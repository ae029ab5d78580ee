"""Study-level 2x2 count data: types, validation, CSV ingestion, bundled examples."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "StudyArm",
    "Study",
    "MetaDataset",
    "load_dataset",
    "write_dataset",
    "crins_death",
    "crins_ptld",
]

CSV_HEADER = ("study", "r_ctrl", "n_ctrl", "r_trt", "n_trt")


class DataError(ValueError):
    """Dataset contents violate a structural invariant."""


@dataclass(frozen=True)
class StudyArm:
    """Event count and patient count for one treatment arm."""

    events: int
    total: int

    def __post_init__(self) -> None:
        if self.total < 1:
            raise DataError(f"total >= 1 violated: total={self.total}")
        if self.events < 0:
            raise DataError(f"events >= 0 violated: events={self.events}")
        if self.events > self.total:
            raise DataError(
                f"events <= total violated: events={self.events}, total={self.total}"
            )


@dataclass(frozen=True)
class Study:
    label: str
    control: StudyArm
    experimental: StudyArm


@dataclass(frozen=True)
class MetaDataset:
    """Ordered collection of two-arm studies with unique labels."""

    studies: tuple[Study, ...]

    def __post_init__(self) -> None:
        if len(self.studies) < 1:
            raise DataError("at least 1 study required")
        labels = [s.label for s in self.studies]
        if len(set(labels)) != len(labels):
            dup = sorted({x for x in labels if labels.count(x) > 1})
            raise DataError(f"study labels must be unique, duplicated: {dup}")

    @property
    def k(self) -> int:
        return len(self.studies)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.studies)

    def counts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(r_ctrl, n_ctrl, r_trt, n_trt) as float64 arrays, one entry per study."""
        r0 = np.array([s.control.events for s in self.studies], dtype=np.float64)
        n0 = np.array([s.control.total for s in self.studies], dtype=np.float64)
        r1 = np.array([s.experimental.events for s in self.studies], dtype=np.float64)
        n1 = np.array([s.experimental.total for s in self.studies], dtype=np.float64)
        return r0, n0, r1, n1


def _study_from_row(label: str, r0: int, n0: int, r1: int, n1: int) -> Study:
    return Study(label, StudyArm(r0, n0), StudyArm(r1, n1))


def load_dataset(path: str | Path) -> MetaDataset:
    """Read a dataset from CSV with header ``study,r_ctrl,n_ctrl,r_trt,n_trt``.

    Raises DataError naming the offending line and the violated invariant.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(field.strip() for field in r)]
    if not rows:
        raise DataError(f"{path}: empty file, at least 1 study required")
    header = tuple(h.strip() for h in rows[0])
    if header != CSV_HEADER:
        raise DataError(
            f"{path}: line 1: expected header {','.join(CSV_HEADER)}, got {','.join(header)}"
        )
    studies = []
    for lineno, row in enumerate(rows[1:], start=2):
        cells = [c.strip() for c in row]
        if len(cells) != 5 or any(c == "" for c in cells):
            raise DataError(
                f"{path}: line {lineno}: expected 5 non-empty fields "
                f"(study,r_ctrl,n_ctrl,r_trt,n_trt), got {row}"
            )
        label = cells[0]
        try:
            r0, n0, r1, n1 = (int(c) for c in cells[1:])
        except ValueError:
            raise DataError(
                f"{path}: line {lineno}: counts must be integers, got {cells[1:]}"
            ) from None
        try:
            studies.append(_study_from_row(label, r0, n0, r1, n1))
        except DataError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
    try:
        return MetaDataset(tuple(studies))
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_dataset(data: MetaDataset, path: str | Path) -> None:
    """Write a dataset in the CSV schema accepted by :func:`load_dataset`."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in data.studies:
            writer.writerow(
                [s.label, s.control.events, s.control.total,
                 s.experimental.events, s.experimental.total]
            )


# Example data: IL-2 receptor antibody vs control in paediatric liver
# transplantation, from the systematic review of Crins et al. (2014),
# Pediatric Transplantation 18(8). Counts are (events, total) per arm.

def crins_death() -> MetaDataset:
    """Death outcome: four controlled studies, no zero cells."""
    return MetaDataset((
        _study_from_row("Heffron 2003", 3, 20, 4, 61),
        _study_from_row("Ganschow 2005", 3, 54, 1, 54),
        _study_from_row("Spada 2006", 3, 36, 4, 36),
        _study_from_row("Gras 2008", 3, 34, 2, 50),
    ))


def crins_ptld() -> MetaDataset:
    """Post-transplant lymphoproliferative disease: one single-zero and one double-zero study."""
    return MetaDataset((
        _study_from_row("Schuller 2005", 0, 12, 0, 18),
        _study_from_row("Ganschow 2005", 0, 54, 1, 54),
        _study_from_row("Spada 2006", 1, 36, 1, 36),
    ))
