"""Construction of constant-exposure eras from raw longitudinal records.

All day intervals are half-open, ``[start, end)``.
"""

from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, field
from os import PathLike

from .data import DrugDictionary, Era, SubjectRecord
from .errors import IngestError

logger = logging.getLogger(__name__)

EXPOSURE_HEADER = ("subject_id", "drug_id", "start_day", "end_day")
EVENT_HEADER = ("subject_id", "day")
OBSERVATION_HEADER = ("subject_id", "start_day", "end_day")


@dataclass(frozen=True)
class ExposureInterval:
    subject_id: str
    drug_id: str
    start_day: int
    end_day: int

    def __post_init__(self):
        if self.start_day >= self.end_day:
            raise IngestError(
                f"subject {self.subject_id!r}: exposure to {self.drug_id!r} "
                f"[{self.start_day}, {self.end_day}) is empty")


@dataclass(frozen=True)
class EventRecord:
    subject_id: str
    day: int


@dataclass(frozen=True)
class ObservationPeriod:
    subject_id: str
    start_day: int
    end_day: int

    def __post_init__(self):
        if self.start_day >= self.end_day:
            raise IngestError(
                f"subject {self.subject_id!r}: observation period "
                f"[{self.start_day}, {self.end_day}) is empty")


@dataclass
class RawSubject:
    observation: ObservationPeriod
    intervals: list[ExposureInterval] = field(default_factory=list)
    events: list[EventRecord] = field(default_factory=list)


def clip_intervals(obs: ObservationPeriod, intervals: list[ExposureInterval]
                   ) -> tuple[list[tuple[str, int, int]], int]:
    """Clip intervals to the observation period; return kept (drug, start, end) and a drop count."""
    kept, dropped = [], 0
    for iv in intervals:
        s, e = max(iv.start_day, obs.start_day), min(iv.end_day, obs.end_day)
        if s >= e:
            dropped += 1
        else:
            kept.append((iv.drug_id, s, e))
    return kept, dropped


def build_eras(obs: ObservationPeriod, intervals: list[ExposureInterval],
               events: list[EventRecord], drugs: DrugDictionary | None = None) -> list[Era]:
    """Partition one subject's observation period into maximal constant-exposure eras.

    Exposure indices come from ``drugs`` (a fresh first-appearance dictionary if
    omitted). Intervals entirely outside the period are dropped and logged;
    events outside it are an error.
    """
    sid = obs.subject_id
    for rec in (*intervals, *events):
        if rec.subject_id != sid:
            raise IngestError(f"record for subject {rec.subject_id!r} passed with subject {sid!r}")
    drugs = drugs if drugs is not None else DrugDictionary()

    clipped, dropped = clip_intervals(obs, intervals)
    if dropped:
        logger.warning("subject %s: %d exposure interval(s) outside the observation period dropped",
                       sid, dropped)

    days = sorted(ev.day for ev in events)
    for day in days:
        if not obs.start_day <= day < obs.end_day:
            raise IngestError(
                f"subject {sid!r}: event on day {day} outside observation period "
                f"[{obs.start_day}, {obs.end_day})")

    cuts = {obs.start_day, obs.end_day}
    for _, s, e in clipped:
        cuts.add(s)
        cuts.add(e)
    cuts = sorted(cuts)

    index = {label: drugs.index(label) for label, _, _ in clipped}
    eras: list[Era] = []
    prev_exposure = None
    for a, b in zip(cuts, cuts[1:]):
        exposure = tuple(sorted({index[d] for d, s, e in clipped if s <= a and b <= e}))
        count = bisect.bisect_left(days, b) - bisect.bisect_left(days, a)
        if exposure == prev_exposure:
            last = eras[-1]
            eras[-1] = Era(last.length_days + b - a, last.event_count + count, exposure)
        else:
            eras.append(Era(b - a, count, exposure))
        prev_exposure = exposure
    return eras


# ---------------------------------------------------------------------------
# raw file parsing
# ---------------------------------------------------------------------------

def _rows(path, header):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if lineno == 1 and [f.strip().lower() for f in fields] == list(header):
                continue
            if len(fields) != len(header):
                raise IngestError(
                    f"{path}:{lineno}: expected {len(header)} tab-separated fields, got {len(fields)}")
            yield lineno, fields


def _int(path, lineno, text, what):
    try:
        return int(text)
    except ValueError:
        raise IngestError(f"{path}:{lineno}: {what} {text!r} is not an integer") from None


def parse_raw_files(exposures_path: str | PathLike, events_path: str | PathLike,
                    observation_path: str | PathLike) -> dict[str, RawSubject]:
    """Read the three raw TSV files and group records by subject.

    Subjects are ordered as in the observation file; records for subjects
    without an observation period are rejected (logged, not returned).
    """
    groups: dict[str, RawSubject] = {}
    for lineno, (sid, start, end) in _rows(observation_path, OBSERVATION_HEADER):
        if sid in groups:
            raise IngestError(f"{observation_path}:{lineno}: duplicate observation period for subject {sid!r}")
        try:
            groups[sid] = RawSubject(ObservationPeriod(
                sid, _int(observation_path, lineno, start, "start_day"),
                _int(observation_path, lineno, end, "end_day")))
        except IngestError as exc:
            raise IngestError(f"{observation_path}:{lineno}: {exc}") from None

    orphans: set[str] = set()
    for lineno, (sid, drug, start, end) in _rows(exposures_path, EXPOSURE_HEADER):
        s = _int(exposures_path, lineno, start, "start_day")
        e = _int(exposures_path, lineno, end, "end_day")
        if not drug.strip():
            raise IngestError(f"{exposures_path}:{lineno}: empty drug_id")
        try:
            iv = ExposureInterval(sid, drug.strip(), s, e)
        except IngestError as exc:
            raise IngestError(f"{exposures_path}:{lineno}: {exc}") from None
        if sid in groups:
            groups[sid].intervals.append(iv)
        else:
            orphans.add(sid)

    for lineno, (sid, day) in _rows(events_path, EVENT_HEADER):
        ev = EventRecord(sid, _int(events_path, lineno, day, "day"))
        if sid in groups:
            groups[sid].events.append(ev)
        else:
            orphans.add(sid)

    if orphans:
        logger.warning("%d subject(s) without an observation period rejected", len(orphans))
    return groups


def build_subject_records(groups: dict[str, RawSubject], drugs: DrugDictionary
                          ) -> tuple[list[SubjectRecord], int]:
    """Era records for every subject plus the total number of dropped intervals."""
    records, dropped = [], 0
    for sid, raw in groups.items():
        dropped += clip_intervals(raw.observation, raw.intervals)[1]
        eras = build_eras(raw.observation, raw.intervals, raw.events, drugs)
        records.append(SubjectRecord(sid, tuple(eras)))
    return records, dropped
