"""Ingestion of the UCI-format daily/sports activity corpus.

The expected directory tree is ``a{01..19}/p{1..8}/s{NN}.txt`` where each
segment file holds 125 rows x 45 comma- or whitespace-separated columns:
nine columns per sensor unit in the order T, RA, LA, RL, LL, of which the
first three are the accelerometer x, y, z channels (the remaining six are
gyroscope/magnetometer and are ignored here).
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from enum import IntEnum
from glob import glob

import numpy as np

from .seeds import substream

FS_HZ = 25
SEGMENT_SECONDS = 5
SEGMENT_SAMPLES = FS_HZ * SEGMENT_SECONDS      # 125 rows per file
FILE_COLUMNS = 45                              # 9 per unit x 5 units
N_ACTIVITIES = 19
N_SUBJECTS = 8
ARCHIVE_FORMAT = "atcs-corpus"
ARCHIVE_VERSION = 1


class Location(IntEnum):
    """On-body unit position, in file column-block order."""

    T = 0    # torso
    RA = 1   # right arm
    LA = 2   # left arm
    RL = 3   # right leg
    LL = 4   # left leg


ALL_LOCATIONS = tuple(Location)


def accel_columns(location: Location) -> list[int]:
    """Indices of the accelerometer x,y,z columns for one unit."""
    base = 9 * int(location)
    return [base, base + 1, base + 2]


class CorpusError(Exception):
    """Malformed corpus tree or segment file."""


@dataclass(frozen=True)
class Segment:
    """One 5-second, 125-sample, 3-axis accelerometer window."""

    samples: np.ndarray            # (125, 3)
    location: Location
    activity: int                  # 1..19
    subject: int                   # 1..8
    segment_index: int             # 1-based index within (activity, subject)
    fs: float = float(FS_HZ)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] != 3:
            raise CorpusError(f"segment needs shape (n, 3), got {s.shape}")
        if s.shape[0] != SEGMENT_SAMPLES:
            raise CorpusError(
                f"segment needs {SEGMENT_SAMPLES} rows, got {s.shape[0]}")
        if not np.isfinite(s).all():
            raise CorpusError("segment contains non-finite samples")
        if not 1 <= self.activity <= N_ACTIVITIES:
            raise CorpusError(f"activity {self.activity} outside 1..19")
        object.__setattr__(self, "samples", s)

    @property
    def key(self):
        return (self.activity, self.subject, self.segment_index,
                int(self.location))


@dataclass
class Corpus:
    """Canonically ordered collection of segments with unique keys."""

    segments: list[Segment]
    provenance: str = ""

    def __post_init__(self):
        self.segments = sorted(self.segments, key=lambda s: s.key)
        keys = [s.key for s in self.segments]
        if len(set(keys)) != len(keys):
            raise CorpusError("duplicate (activity, subject, segment, location) keys")

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, i):
        return self.segments[i]

    def locations(self):
        return sorted({s.location for s in self.segments})

    def for_location(self, location: Location) -> "Corpus":
        return Corpus([s for s in self.segments if s.location == location],
                      provenance=self.provenance)

    def activity_labels(self) -> np.ndarray:
        return np.array([s.activity for s in self.segments], dtype=int)

    def location_labels(self) -> np.ndarray:
        return np.array([int(s.location) for s in self.segments], dtype=int)


@dataclass
class Split:
    """Deterministic stratified partition of a corpus."""

    train: Corpus
    test: Corpus
    ratio: float
    seed: int


def _parse_segment_file(path: str) -> np.ndarray:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if len(lines) != SEGMENT_SAMPLES:
        raise CorpusError(
            f"{path}: expected {SEGMENT_SAMPLES} rows, found {len(lines)}")
    tokens = []
    for i, ln in enumerate(lines):
        row = ln.replace(",", " ").split()
        if len(row) != FILE_COLUMNS:
            raise CorpusError(
                f"{path}, line {i + 1}: expected {FILE_COLUMNS} columns, "
                f"found {len(row)}")
        tokens.extend(row)
    try:
        values = np.asarray(tokens, dtype=float)
    except ValueError:
        for i, ln in enumerate(lines):
            for tok in ln.replace(",", " ").split():
                try:
                    float(tok)
                except ValueError:
                    raise CorpusError(
                        f"{path}, line {i + 1}: non-numeric token {tok!r}") from None
        raise
    return values.reshape(SEGMENT_SAMPLES, FILE_COLUMNS)


def _segment_files(root: str):
    """Yield (activity, subject, segment_index, path), sorted."""
    pattern = os.path.join(root, "a[0-9][0-9]", "p[0-9]", "s*.txt")
    paths = sorted(glob(pattern))
    if not paths:
        raise CorpusError(f"no a*/p*/s*.txt segment files under {root}")
    for path in paths:
        sdir, fname = os.path.split(path)
        pdir, pname = os.path.split(sdir)
        _, aname = os.path.split(pdir)
        yield (int(aname[1:]), int(pname[1:]), int(fname[1:-4]), path)


def corpus_digest(root: str) -> str:
    """SHA-256 over the sorted relative paths and contents of segment files."""
    h = hashlib.sha256()
    for activity, subject, seg, path in _segment_files(root):
        h.update(f"a{activity:02d}/p{subject}/s{seg:02d}".encode())
        with open(path, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def load_corpus(root: str, locations=ALL_LOCATIONS) -> Corpus:
    """Load one Segment per (file, requested location) from a corpus tree."""
    locations = sorted(Location(l) for l in locations)
    if not locations:
        raise CorpusError("no locations requested")
    segments = []
    for activity, subject, seg_index, path in _segment_files(root):
        table = _parse_segment_file(path)
        if not np.isfinite(table).all():
            raise CorpusError(f"{path}: non-finite values")
        for loc in locations:
            segments.append(Segment(
                samples=table[:, accel_columns(loc)],
                location=loc, activity=activity, subject=subject,
                segment_index=seg_index))
    return Corpus(segments, provenance=corpus_digest(root))


def split_corpus(corpus: Corpus, ratio: float, seed: int) -> Split:
    """Stratified (location, activity) split, deterministic per seed.

    The total train size is round(ratio * n) and every stratum with at
    least two segments keeps at least one segment on each side.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if len(corpus) == 0:
        raise CorpusError("cannot split an empty corpus")

    groups: dict[tuple, list[int]] = {}
    for i, seg in enumerate(corpus.segments):
        groups.setdefault((int(seg.location), seg.activity), []).append(i)
    keys = sorted(groups)

    n_total = len(corpus)
    target = int(round(ratio * n_total))
    target = min(max(target, 1), n_total - 1) if n_total > 1 else target

    take = {}
    lo, hi = {}, {}
    for k in keys:
        n = len(groups[k])
        lo[k] = 1 if n >= 2 else 0
        hi[k] = n - 1 if n >= 2 else n
        take[k] = min(max(int(round(ratio * n)), lo[k]), hi[k])

    # nudge the per-stratum takes until the total matches the target exactly
    def overshoot(k):
        return take[k] - ratio * len(groups[k])

    total = sum(take.values())
    while total != target:
        if total > target:
            cands = [k for k in keys if take[k] > lo[k]]
            if not cands:
                break
            k = max(cands, key=lambda k: (overshoot(k), k))
            take[k] -= 1
            total -= 1
        else:
            cands = [k for k in keys if take[k] < hi[k]]
            if not cands:
                break
            k = min(cands, key=lambda k: (overshoot(k), k))
            take[k] += 1
            total += 1

    train_idx, test_idx = [], []
    for k in keys:
        idx = np.array(groups[k])
        order = substream(seed, "split", *k).permutation(len(idx))
        shuffled = idx[order]
        train_idx.extend(shuffled[:take[k]])
        test_idx.extend(shuffled[take[k]:])

    train = Corpus([corpus.segments[i] for i in train_idx],
                   provenance=corpus.provenance)
    test = Corpus([corpus.segments[i] for i in test_idx],
                  provenance=corpus.provenance)
    return Split(train=train, test=test, ratio=ratio, seed=seed)


def write_archive(corpus: Corpus, path: str) -> None:
    """Write the corpus as line-delimited JSON, one record per segment."""
    with open(path, "w") as fh:
        header = {"format": ARCHIVE_FORMAT, "version": ARCHIVE_VERSION,
                  "count": len(corpus), "provenance": corpus.provenance}
        fh.write(json.dumps(header) + "\n")
        for seg in corpus:
            rec = {"activity": seg.activity, "subject": seg.subject,
                   "segment": seg.segment_index,
                   "location": Location(seg.location).name, "fs": seg.fs,
                   "samples": [round(float(v), 6)
                               for v in seg.samples.ravel(order="C")]}
            fh.write(json.dumps(rec) + "\n")


def read_archive(path: str) -> Corpus:
    """Read a corpus archive written by :func:`write_archive`."""
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != ARCHIVE_FORMAT:
            raise CorpusError(f"{path}: not a corpus archive")
        if header.get("version") != ARCHIVE_VERSION:
            raise CorpusError(
                f"{path}: unsupported archive version {header.get('version')}")
        segments = []
        for line in fh:
            rec = json.loads(line)
            samples = np.asarray(rec["samples"], dtype=float).reshape(-1, 3)
            segments.append(Segment(
                samples=samples, location=Location[rec["location"]],
                activity=rec["activity"], subject=rec["subject"],
                segment_index=rec["segment"], fs=rec.get("fs", float(FS_HZ))))
    return Corpus(segments, provenance=header.get("provenance", ""))
