"""Alignment ingestion, phoneme categories, and per-segment scoring.

Alignments arrive as minimal CSV files (``phoneme,start,end`` in
seconds); silence rows are dropped but counted, so callers can verify
that scored + skipped + silence covers every input row. Categories come
from a two-column CSV map; the bundled default covers the standard
English IPA phone set with the articulatory consonant classes and
vowel-height classes used for aggregation.
"""

import csv
import logging
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .bsseval import segment_metrics

logger = logging.getLogger(__name__)

SILENCE_LABELS = frozenset({"sil", "sp", ""})
UNKNOWN_CATEGORY = "other"

# articulatory classes, then vowel height classes
CATEGORIES = (
    "plosive", "fricative", "sibilant", "affricate", "nasal", "lateral",
    "approximant", "tap", "close", "near-close", "close-mid", "open-mid",
    "open",
)

# Assignments that must hold in any usable map: the near-close class
# exists precisely to separate these from close/close-mid, and e/ej are
# treated as one close-mid family.
PINNED_ASSIGNMENTS = {
    "ɪ": "near-close",
    "ʊ": "near-close",
    "e": "close-mid",
    "ej": "close-mid",
}

DEFAULT_MIN_SEGMENT_S = 0.032


@dataclass(frozen=True)
class PhonemeSegment:
    """One aligned phoneme interval, in seconds."""

    label: str
    start: float
    end: float

    def __post_init__(self):
        if not self.label:
            raise ValueError("empty phoneme label")
        if not 0.0 <= self.start < self.end:
            raise ValueError(
                f"need 0 <= start < end, got [{self.start}, {self.end}] "
                f"for {self.label!r}"
            )

    @property
    def duration(self):
        return self.end - self.start


@dataclass(frozen=True)
class Alignment:
    """Parsed alignment with row accounting.

    total_rows counts every data row in the file, so
    len(segments) + silence_rows == total_rows always holds.
    """

    segments: tuple
    silence_rows: int
    total_rows: int


def parse_alignment(path):
    """Read a ``phoneme,start,end`` CSV into ordered segments.

    Rows must be time-ordered and non-overlapping; silence labels
    (sil, sp, empty) are dropped from the segments but counted.
    """
    segments = []
    silence_rows = 0
    total_rows = 0
    previous_end = 0.0
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != ["phoneme", "start", "end"]:
            raise ValueError(f"{path}: expected header phoneme,start,end, got {header}")
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != 3:
                raise ValueError(f"{path}:{line}: expected 3 fields, got {len(row)}")
            label = row[0].strip()
            try:
                start, end = float(row[1]), float(row[2])
            except ValueError:
                raise ValueError(f"{path}:{line}: non-numeric time in {row[1:]!r}")
            if start < 0.0 or end < start:
                raise ValueError(
                    f"{path}:{line}: invalid interval [{start}, {end}]"
                )
            if start < previous_end - 1e-9:
                raise ValueError(
                    f"{path}:{line}: segment starting at {start} overlaps the "
                    f"previous one ending at {previous_end}"
                )
            total_rows += 1
            previous_end = max(previous_end, end)
            if label in SILENCE_LABELS:
                silence_rows += 1
                continue
            if end == start:
                raise ValueError(f"{path}:{line}: zero-length segment {label!r}")
            segments.append(PhonemeSegment(label, start, end))
    return Alignment(tuple(segments), silence_rows, total_rows)


class PhonemeCategoryMap:
    """Phoneme label -> category lookup with an unknown-label policy.

    Unknown labels go to the "other" category; each distinct unknown
    label is warned about once per map instance.
    """

    def __init__(self, mapping):
        if not mapping:
            raise ValueError("empty category map")
        for label, category in mapping.items():
            if not label or not category:
                raise ValueError(f"blank label or category in map entry {label!r}")
        for label, required in PINNED_ASSIGNMENTS.items():
            actual = mapping.get(label)
            if actual != required:
                raise ValueError(
                    f"category map must send {label!r} to {required!r}, "
                    f"got {actual!r}"
                )
        self._mapping = dict(mapping)
        self._warned = set()

    def __contains__(self, label):
        return label in self._mapping

    def __len__(self):
        return len(self._mapping)

    @property
    def categories(self):
        return tuple(sorted(set(self._mapping.values()) | {UNKNOWN_CATEGORY}))

    def categorize(self, label):
        category = self._mapping.get(label)
        if category is None:
            if label not in self._warned:
                self._warned.add(label)
                logger.warning(
                    "phoneme %r is not in the category map; scoring it as %r",
                    label, UNKNOWN_CATEGORY,
                )
            return UNKNOWN_CATEGORY
        return category


def categorize(label, category_map):
    """Category for one phoneme label (unknowns land in "other")."""
    return category_map.categorize(label)


def load_category_map(path=None):
    """Load a two-column ``phoneme,category`` CSV; None means bundled."""
    if path is None:
        source = resources.files("phonobeam").joinpath("data/phoneme_categories.csv")
        text = source.read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    mapping = {}
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header != ["phoneme", "category"]:
        raise ValueError(f"expected header phoneme,category, got {header}")
    for row in reader:
        if not row:
            continue
        if len(row) != 2:
            raise ValueError(f"category map line {reader.line_num}: expected 2 fields")
        label, category = row[0].strip(), row[1].strip()
        if label in mapping:
            raise ValueError(f"duplicate category map entry for {label!r}")
        mapping[label] = category
    return PhonemeCategoryMap(mapping)


@dataclass(frozen=True)
class SegmentScores:
    """Scored segments plus the too-short skip count."""

    scored: tuple  # pairs of (PhonemeSegment, MetricTriple)
    skipped_short: int


def _sample_index(seconds, sample_rate):
    # round half up for deterministic boundaries
    return int(np.floor(seconds * sample_rate + 0.5))


def score_segments(decomposition, segments, sample_rate,
                   min_duration=DEFAULT_MIN_SEGMENT_S):
    """Segment-restricted metrics for every long-enough phoneme.

    Segments shorter than min_duration (measured in rounded samples)
    are skipped and counted. A segment extending past the decomposed
    signal is an error.
    """
    min_samples = _sample_index(min_duration, sample_rate)
    scored = []
    skipped = 0
    for segment in segments:
        start = _sample_index(segment.start, sample_rate)
        end = _sample_index(segment.end, sample_rate)
        if end > decomposition.n_samples:
            raise ValueError(
                f"segment {segment.label!r} [{segment.start}, {segment.end}] s "
                f"extends past the {decomposition.n_samples}-sample signal"
            )
        if end - start < max(min_samples, 1):
            skipped += 1
            continue
        scored.append((segment, segment_metrics(decomposition, start, end)))
    return SegmentScores(tuple(scored), skipped)


RECORD_SCOPES = ("utterance", "phoneme")
METRIC_FIELDS = ("sir_in_db", "sdr_out_db", "sir_out_db", "sar_out_db")


@dataclass(frozen=True)
class EvalRecord:
    """One metric observation, either whole-utterance or per-phoneme."""

    utterance_id: str
    ear: str
    algorithm: str
    noise_kind: str
    noise_angle_deg: int
    target_snr_db: float
    scope: str
    phoneme: Optional[str]
    category: Optional[str]
    sir_in_db: float
    sdr_out_db: float
    sir_out_db: float
    sar_out_db: float
    segment_duration_s: float
    segment_start_s: Optional[float] = None  # sort key only, not reported

    def __post_init__(self):
        if self.scope not in RECORD_SCOPES:
            raise ValueError(f"unknown scope {self.scope!r}")
        labelled = (self.phoneme is not None, self.category is not None)
        expected = (True, True) if self.scope == "phoneme" else (False, False)
        if labelled != expected:
            raise ValueError(
                f"phoneme and category must be present exactly for "
                f"phoneme-scope records (scope={self.scope!r}, "
                f"phoneme={self.phoneme!r}, category={self.category!r})"
            )


def _group_token(value):
    # stable ordering across mixed and missing values
    if value is None:
        return (0, "")
    if isinstance(value, (int, float)):
        return (1, float(value))
    return (2, str(value))


def aggregate(records, group_by):
    """Mean of each dB metric within each group, with counts.

    Parameters
    ----------
    records : list of EvalRecord
    group_by : sequence of EvalRecord field names

    Returns
    -------
    List of dicts ordered deterministically by group key: the group
    fields, then "count", then "<metric>_mean" for the four metrics.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    group_by = tuple(group_by)
    for field in group_by:
        if not hasattr(records[0], field):
            raise ValueError(f"unknown record field {field!r}")
    groups = {}
    for record in records:
        key = tuple(getattr(record, field) for field in group_by)
        groups.setdefault(key, []).append(record)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(_group_token(v) for v in k)):
        members = groups[key]
        row = dict(zip(group_by, key))
        row["count"] = len(members)
        for metric in METRIC_FIELDS:
            row[f"{metric}_mean"] = sum(getattr(r, metric) for r in members) / len(members)
        rows.append(row)
    return rows
