"""House logs: parsing, minute discretization, encodings and day folds.

File formats (UTF-8, tab separated, ``#`` starts a comment line):

* events:       ``START<TAB>END<TAB>SENSOR_ID``
* annotations:  ``START<TAB>END<TAB>ACTIVITY_ID``
* meta:         ``sensor<TAB>ID<TAB>NAME`` and ``activity<TAB>ID<TAB>NAME``

Timestamps are ``YYYY-MM-DD HH:MM:SS`` local time. Activity 0 is reserved
for Idle (unannotated time) and never appears in the files.
"""

from __future__ import annotations

import datetime as dt
import enum
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .numeric import Rng

SLICES_PER_DAY = 1440
IDLE = 0
TIME_FORMAT = "%Y-%m-%d %H:%M:%S"

# Sensor / activity counts per house (activities exclude Idle) and days logged.
KASTEREN_HOUSES = {
    "A": {"sensors": 14, "activities": 10, "days": 25},
    "B": {"sensors": 23, "activities": 13, "days": 14},
    "C": {"sensors": 21, "activities": 16, "days": 19},
}


class DatasetError(ValueError):
    """Malformed input file or violated dataset invariant."""

    def __init__(self, message: str, path: str | None = None,
                 line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None or line is not None:
            where = f"{path or '<stream>'}:{line if line is not None else '?'}: "
        super().__init__(where + message)


class EncodingKind(enum.Enum):
    RAW = "raw"
    LAST_FIRED = "last-fired"

    @classmethod
    def parse(cls, value: "str | EncodingKind") -> "EncodingKind":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == text:
                return kind
        raise ValueError(f"unknown encoding {value!r}; expected raw or last-fired")


@dataclass(frozen=True)
class SensorEvent:
    sensor_id: int
    start: dt.datetime
    end: dt.datetime


@dataclass(frozen=True)
class ActivityAnnotation:
    activity_id: int
    start: dt.datetime
    end: dt.datetime


@dataclass
class HouseMeta:
    name: str
    sensor_names: list[str]
    activity_names: list[str]  # index 0 is "Idle"

    @property
    def sensor_count(self) -> int:
        return len(self.sensor_names)

    @property
    def activity_count(self) -> int:
        return len(self.activity_names)

    @classmethod
    def generic(cls, name: str, sensors: int, activities: int) -> "HouseMeta":
        """Meta with placeholder names; ``activities`` excludes Idle."""
        return cls(name, [f"sensor{i}" for i in range(sensors)],
                   ["Idle"] + [f"activity{i}" for i in range(1, activities + 1)])


@dataclass
class DayGrid:
    date: dt.date
    features: np.ndarray  # (1440, N) uint8
    labels: np.ndarray  # (1440,) int64

    def __post_init__(self):
        if self.features.shape[0] != SLICES_PER_DAY:
            raise DatasetError(f"day {self.date}: expected {SLICES_PER_DAY} slices, "
                               f"got {self.features.shape[0]}")
        if self.labels.shape != (SLICES_PER_DAY,):
            raise DatasetError(f"day {self.date}: labels must have shape (1440,)")


@dataclass
class House:
    """A parsed house: its metadata plus raw-encoded day grids."""

    meta: HouseMeta
    days: list[DayGrid] = field(default_factory=list)


# --------------------------------------------------------------------------
# parsing

def _parse_time(text: str, path, lineno) -> dt.datetime:
    try:
        return dt.datetime.strptime(text.strip(), TIME_FORMAT)
    except ValueError:
        raise DatasetError(f"malformed timestamp {text.strip()!r}", path, lineno) from None


def _interval_lines(stream: TextIO, path):
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetError(f"expected 3 tab-separated fields, got {len(parts)}",
                               path, lineno)
        start = _parse_time(parts[0], path, lineno)
        end = _parse_time(parts[1], path, lineno)
        try:
            ident = int(parts[2])
        except ValueError:
            raise DatasetError(f"malformed id {parts[2]!r}", path, lineno) from None
        if start > end:
            raise DatasetError(f"interval ends before it starts ({parts[0]} > {parts[1]})",
                               path, lineno)
        yield lineno, start, end, ident


def parse_events(stream: TextIO, sensor_count: int | None = None,
                 path: str | None = None) -> list[SensorEvent]:
    events = []
    for lineno, start, end, sid in _interval_lines(stream, path):
        if sid < 0 or (sensor_count is not None and sid >= sensor_count):
            raise DatasetError(f"unknown sensor id {sid}", path, lineno)
        events.append(SensorEvent(sid, start, end))
    return events


def parse_annotations(stream: TextIO, activity_count: int | None = None,
                      path: str | None = None) -> list[ActivityAnnotation]:
    """Parse an annotations file. ``activity_count`` includes Idle."""
    out = []
    for lineno, start, end, aid in _interval_lines(stream, path):
        if aid == IDLE:
            raise DatasetError("activity id 0 is reserved for Idle", path, lineno)
        if aid < 0 or (activity_count is not None and aid >= activity_count):
            raise DatasetError(f"unknown activity id {aid}", path, lineno)
        out.append(ActivityAnnotation(aid, start, end))
    return out


def parse_meta(stream: TextIO, name: str = "", path: str | None = None) -> HouseMeta:
    sensors: dict[int, str] = {}
    activities: dict[int, str] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[0] not in ("sensor", "activity"):
            raise DatasetError("expected 'sensor|activity<TAB>ID<TAB>NAME'", path, lineno)
        try:
            ident = int(parts[1])
        except ValueError:
            raise DatasetError(f"malformed id {parts[1]!r}", path, lineno) from None
        table = sensors if parts[0] == "sensor" else activities
        if parts[0] == "activity" and ident == IDLE:
            raise DatasetError("activity id 0 is reserved for Idle", path, lineno)
        if ident in table:
            raise DatasetError(f"duplicate {parts[0]} id {ident}", path, lineno)
        table[ident] = parts[2]
    if sorted(sensors) != list(range(len(sensors))):
        raise DatasetError("sensor ids must be exactly 0..N-1", path)
    if sorted(activities) != list(range(1, len(activities) + 1)):
        raise DatasetError("activity ids must be exactly 1..K", path)
    return HouseMeta(name=name,
                     sensor_names=[sensors[i] for i in range(len(sensors))],
                     activity_names=["Idle"] + [activities[i] for i in range(1, len(activities) + 1)])


def _open_parse(path, fn, **kwargs):
    with open(path, encoding="utf-8") as fh:
        return fn(fh, path=os.fspath(path), **kwargs)


def load_house(events_path, annotations_path, meta_path, name: str = "") -> House:
    """Parse the three house files and build one raw DayGrid per calendar day
    between the first and last logged timestamp."""
    meta = _open_parse(meta_path, parse_meta, name=name)
    events = _open_parse(events_path, parse_events, sensor_count=meta.sensor_count)
    annotations = _open_parse(annotations_path, parse_annotations,
                              activity_count=meta.activity_count)
    return House(meta, build_days(events, annotations, meta))


def build_days(events: list[SensorEvent], annotations: list[ActivityAnnotation],
               meta: HouseMeta) -> list[DayGrid]:
    intervals = [(e.start, e.end) for e in events] + [(a.start, a.end) for a in annotations]
    if not intervals:
        return []
    # an interval ending exactly at midnight does not reach into the next day
    tick = dt.timedelta(microseconds=1)
    first = min(s for s, _ in intervals).date()
    last = max((e - tick if e > s else e).date() for s, e in intervals)
    days = []
    day = first
    while day <= last:
        features = discretize_raw(events, day, meta)
        labels = label_slices(annotations, day, meta)
        days.append(DayGrid(day, features, labels))
        day += dt.timedelta(days=1)
    return days


# --------------------------------------------------------------------------
# discretization

def _day_seconds(day: dt.date, start: dt.datetime, end: dt.datetime):
    """Interval as (start, end) seconds relative to the day's midnight."""
    midnight = dt.datetime.combine(day, dt.time())
    return (start - midnight).total_seconds(), (end - midnight).total_seconds()


def _slice_overlaps(s: float, e: float):
    """Slices with positive overlap against [s, e], and each overlap in seconds."""
    s = max(s, 0.0)
    e = min(e, SLICES_PER_DAY * 60.0)
    if e <= s:
        return range(0), []
    lo = int(s // 60)
    hi = min(int(np.ceil(e / 60.0)), SLICES_PER_DAY)
    slices = range(lo, hi)
    overlaps = [min(e, (t + 1) * 60.0) - max(s, t * 60.0) for t in slices]
    return slices, overlaps


def discretize_raw(events: Iterable[SensorEvent], day: dt.date,
                   meta: HouseMeta) -> np.ndarray:
    """Binary (1440, N) grid: bit [t, s] is set iff sensor s is active for a
    positive duration inside minute [t, t+1) of ``day``."""
    grid = np.zeros((SLICES_PER_DAY, meta.sensor_count), dtype=np.uint8)
    for ev in events:
        s, e = _day_seconds(day, ev.start, ev.end)
        slices, _ = _slice_overlaps(s, e)
        if len(slices):
            grid[slices.start:slices.stop, ev.sensor_id] = 1
    return grid


def encode_last_fired(raw: np.ndarray, carry_in: int | None = None) -> np.ndarray:
    """Last-fired encoding of a raw grid.

    A sensor fires on a 0->1 transition (or when already on at slice 0).
    Each row holds a single 1 at the most recently fired sensor; when several
    fire in the same slice the lowest index wins. Rows before the first
    firing are zero unless ``carry_in`` names the sensor active on entry.
    """
    raw = np.asarray(raw)
    T, N = raw.shape
    on = raw.astype(bool)
    prev = np.zeros_like(on)
    prev[1:] = on[:-1]
    rising = on & ~prev
    out = np.zeros((T, N), dtype=np.uint8)
    current = carry_in
    if current is not None and not 0 <= current < N:
        raise ValueError(f"carry_in {current} outside 0..{N - 1}")
    fired_rows = np.flatnonzero(rising.any(axis=1))
    fired_cols = rising[fired_rows].argmax(axis=1)
    cursor = 0
    for row, col in zip(fired_rows, fired_cols):
        if current is not None:
            out[cursor:row, current] = 1
        current = int(col)
        cursor = int(row)
    if current is not None:
        out[cursor:, current] = 1
    return out


def encode(raw: np.ndarray, kind: EncodingKind | str,
           carry_in: int | None = None) -> np.ndarray:
    kind = EncodingKind.parse(kind)
    if kind is EncodingKind.RAW:
        return np.asarray(raw, dtype=np.uint8)
    return encode_last_fired(raw, carry_in)


def label_slices(annotations: Iterable[ActivityAnnotation], day: dt.date,
                 meta: HouseMeta) -> np.ndarray:
    """Per-slice activity labels for ``day``; Idle where nothing is annotated.

    A slice touched by several annotations takes the one overlapping it
    longest, ties going to the earlier annotation start.
    """
    labels = np.full(SLICES_PER_DAY, IDLE, dtype=np.int64)
    best = np.zeros(SLICES_PER_DAY)
    best_start = [None] * SLICES_PER_DAY
    for ann in annotations:
        if not 0 < ann.activity_id < meta.activity_count:
            raise DatasetError(f"activity id {ann.activity_id} outside 1..{meta.activity_count - 1}")
        s, e = _day_seconds(day, ann.start, ann.end)
        slices, overlaps = _slice_overlaps(s, e)
        for t, ov in zip(slices, overlaps):
            if ov > best[t] or (ov == best[t] and best_start[t] is not None
                                and ann.start < best_start[t]):
                best[t] = ov
                best_start[t] = ann.start
                labels[t] = ann.activity_id
    return labels


def make_folds(days: list[DayGrid]) -> list[tuple[list[DayGrid], DayGrid]]:
    """Leave-one-day-out folds, one per day, in input order."""
    if len(days) < 2:
        raise DatasetError(f"leave-one-day-out needs at least 2 days, got {len(days)}")
    dates = [d.date for d in days]
    if len(set(dates)) != len(dates):
        dupes = sorted({d for d in dates if dates.count(d) > 1})
        raise DatasetError(f"duplicate dates: {', '.join(map(str, dupes))}")
    return [(days[:k] + days[k + 1:], days[k]) for k in range(len(days))]


# --------------------------------------------------------------------------
# synthetic fixture

SYNTH_START = dt.date(2008, 2, 25)


def injective_profile(meta: HouseMeta, repeat: float = 0.05) -> np.ndarray:
    """Sensor profile where activity l owns sensor l and nothing else fires.

    ``repeat`` is the per-minute chance that the owned sensor pulses again
    during its activity. Under the last-fired encoding the label is then a
    deterministic function of the active sensor.
    """
    L, N = meta.activity_count, meta.sensor_count
    if N < L:
        raise ValueError(f"injective profile needs sensors >= activities ({N} < {L})")
    profile = np.zeros((L, N))
    profile[np.arange(L), np.arange(L)] = repeat
    return profile


def synth_events(meta: HouseMeta, days: int, seed: int,
                 profile: np.ndarray | None = None,
                 min_minutes: int = 30, max_minutes: int = 180):
    """Sample a synthetic activity schedule and the sensor events it causes.

    Each day is cut into segments of ``min_minutes..max_minutes`` minutes,
    each with an activity different from the previous one. The signature
    sensor (largest profile entry) of an activity fires in the first minute
    of its segment; afterwards every sensor s fires in a given minute with
    probability ``profile[activity, s]``. Idle segments produce no annotation.
    """
    if profile is None:
        profile = injective_profile(meta)
    profile = np.asarray(profile, dtype=np.float64)
    L, N = meta.activity_count, meta.sensor_count
    if profile.shape != (L, N):
        raise ValueError(f"profile shape {profile.shape} != {(L, N)}")
    signature = profile.argmax(axis=1)
    rng = Rng(seed)
    events: list[SensorEvent] = []
    annotations: list[ActivityAnnotation] = []
    prev = None
    for d in range(days):
        midnight = dt.datetime.combine(SYNTH_START + dt.timedelta(days=d), dt.time())
        minute = 0
        while minute < SLICES_PER_DAY:
            length = min_minutes + rng.randbelow(max_minutes - min_minutes + 1)
            end = min(minute + length, SLICES_PER_DAY)
            choices = [a for a in range(L) if a != prev]
            act = choices[rng.randbelow(len(choices))]
            prev = act
            seg_start = midnight + dt.timedelta(minutes=minute)
            seg_end = midnight + dt.timedelta(minutes=end)
            if act != IDLE:
                annotations.append(ActivityAnnotation(act, seg_start, seg_end))
            pulses = rng.random((end - minute, N)) < profile[act]
            pulses[0, signature[act]] = True
            for off, sid in zip(*np.nonzero(pulses)):
                t0 = seg_start + dt.timedelta(minutes=int(off), seconds=10)
                events.append(SensorEvent(int(sid), t0, t0 + dt.timedelta(seconds=30)))
            minute = end
    events.sort(key=lambda e: (e.start, e.sensor_id))
    return events, annotations


def synth_house(meta: HouseMeta, days: int, seed: int,
                profile: np.ndarray | None = None) -> list[DayGrid]:
    """Deterministic synthetic dataset with known ground truth."""
    if days <= 0:
        return []
    events, annotations = synth_events(meta, days, seed, profile)
    grids = []
    for d in range(days):
        day = SYNTH_START + dt.timedelta(days=d)
        grids.append(DayGrid(day, discretize_raw(events, day, meta),
                             label_slices(annotations, day, meta)))
    return grids


def format_intervals(items, id_attr: str) -> str:
    buf = io.StringIO()
    for item in items:
        buf.write(f"{item.start.strftime(TIME_FORMAT)}\t{item.end.strftime(TIME_FORMAT)}"
                  f"\t{getattr(item, id_attr)}\n")
    return buf.getvalue()


def format_meta(meta: HouseMeta) -> str:
    lines = [f"sensor\t{i}\t{n}" for i, n in enumerate(meta.sensor_names)]
    lines += [f"activity\t{i}\t{n}" for i, n in enumerate(meta.activity_names) if i != IDLE]
    return "\n".join(lines) + "\n"
