"""Morphological features of 3-axis windows.

Ten per-axis statistics in fixed order, expanded axis-minor into a
30-vector: ampX ampY ampZ medX ... s2eZ.  ``rms**2 == var + mn**2`` holds
per axis (population variance).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

STAT_NAMES = ("amp", "med", "mn", "max", "min", "p2p", "var", "std", "rms",
              "s2e")
AXIS_NAMES = ("X", "Y", "Z")
N_FEATURES = len(STAT_NAMES) * len(AXIS_NAMES)


def feature_names() -> list[str]:
    return [s + a for s in STAT_NAMES for a in AXIS_NAMES]


FEATURE_NAMES = tuple(feature_names())


def feature_vector(samples: np.ndarray) -> np.ndarray:
    """30 statistics of one (n, 3) window, in FEATURE_NAMES order."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] != 3 or x.shape[0] < 2:
        raise ValueError(f"expected (n>=2, 3) samples, got {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("non-finite samples")
    mx = x.max(axis=0)
    mi = x.min(axis=0)
    mn = x.mean(axis=0)
    var = x.var(axis=0)
    stats = [
        np.abs(x).max(axis=0),        # amp
        np.median(x, axis=0),         # med
        mn,                           # mn
        mx,                           # max
        mi,                           # min
        mx - mi,                      # p2p
        var,                          # var
        np.sqrt(var),                 # std
        np.sqrt(var + mn * mn),       # rms
        x[-1] - x[0],                 # s2e
    ]
    return np.concatenate(stats)


def feature_matrix(segments) -> np.ndarray:
    """(N, 30) matrix over an iterable of segments (or raw windows)."""
    rows = [feature_vector(getattr(s, "samples", s)) for s in segments]
    if not rows:
        return np.empty((0, N_FEATURES))
    return np.vstack(rows)


@dataclass(frozen=True)
class FeatureSelection:
    """Boolean mask over the 30 canonical features."""

    mask: tuple

    def __post_init__(self):
        m = tuple(bool(v) for v in self.mask)
        if len(m) != N_FEATURES:
            raise ValueError(f"mask needs {N_FEATURES} entries, got {len(m)}")
        if not any(m):
            raise ValueError("empty feature selection")
        object.__setattr__(self, "mask", m)

    @classmethod
    def from_names(cls, names) -> "FeatureSelection":
        want = set(names)
        unknown = want - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"unknown feature names {sorted(unknown)}")
        return cls(tuple(n in want for n in FEATURE_NAMES))

    @classmethod
    def from_indices(cls, indices) -> "FeatureSelection":
        idx = set(int(i) for i in indices)
        if not idx <= set(range(N_FEATURES)):
            raise ValueError(f"indices outside 0..{N_FEATURES - 1}: {sorted(idx)}")
        return cls(tuple(i in idx for i in range(N_FEATURES)))

    @classmethod
    def all(cls) -> "FeatureSelection":
        return cls((True,) * N_FEATURES)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(np.array(self.mask))

    @property
    def names(self) -> list[str]:
        return [FEATURE_NAMES[i] for i in self.indices]

    def __len__(self):
        return int(np.sum(self.mask))

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X)
        if X.shape[-1] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} columns, got {X.shape}")
        return X[..., self.indices]


@dataclass(frozen=True)
class FeatureVector:
    """A 30-entry feature vector where only masked entries are populated.

    Unpopulated entries hold nan so accidental use surfaces as a finiteness
    error downstream instead of a silently wrong number.
    """

    values: np.ndarray
    mask: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        m = tuple(bool(b) for b in self.mask)
        if len(v) != N_FEATURES or len(m) != N_FEATURES:
            raise ValueError(f"need {N_FEATURES} values and mask entries")
        populated = np.array(m)
        if not np.isfinite(v[populated]).all():
            raise ValueError("populated entries must be finite")
        v = np.where(populated, v, np.nan)
        for a in range(len(AXIS_NAMES)):
            i_var = STAT_NAMES.index("var") * len(AXIS_NAMES) + a
            i_std = STAT_NAMES.index("std") * len(AXIS_NAMES) + a
            if m[i_var] and m[i_std]:
                var, std = v[i_var], v[i_std]
                if abs(std * std - var) > 1e-9 * abs(var) + 1e-12:
                    raise ValueError(
                        f"std^2 != var on axis {AXIS_NAMES[a]}: {std**2} vs {var}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    @property
    def selection(self) -> FeatureSelection:
        return FeatureSelection(self.mask)

    def dense(self) -> np.ndarray:
        if not all(self.mask):
            missing = [FEATURE_NAMES[i] for i, b in enumerate(self.mask) if not b]
            raise ValueError(f"unpopulated entries: {missing}")
        return np.array(self.values)

    def compressed(self) -> np.ndarray:
        return self.values[np.array(self.mask)].copy()


def _axis_index(axis) -> int:
    if isinstance(axis, str):
        if axis.upper() not in AXIS_NAMES:
            raise ValueError(f"unknown axis {axis!r}")
        return AXIS_NAMES.index(axis.upper())
    axis = int(axis)
    if not 0 <= axis < len(AXIS_NAMES):
        raise ValueError(f"axis index {axis} outside 0..{len(AXIS_NAMES) - 1}")
    return axis


def extract(sequence, which: FeatureSelection | None = None,
            axis="X") -> FeatureVector:
    """Statistics of one axis sequence as a partial FeatureVector.

    Entries belonging to other axes stay unpopulated, as do unselected ones.
    """
    x = np.asarray(sequence, dtype=float).reshape(-1)
    if len(x) < 2:
        raise ValueError(f"need at least 2 samples, got {len(x)}")
    if not np.isfinite(x).all():
        raise ValueError("non-finite samples")
    a = _axis_index(axis)
    mx, mi, mn, var = x.max(), x.min(), x.mean(), x.var()
    stats = (np.abs(x).max(), np.median(x), mn, mx, mi, mx - mi, var,
             np.sqrt(var), np.sqrt(var + mn * mn), x[-1] - x[0])
    sel = FeatureSelection.all() if which is None else which
    values = np.full(N_FEATURES, np.nan)
    mask = [False] * N_FEATURES
    for s, value in enumerate(stats):
        i = s * len(AXIS_NAMES) + a
        if sel.mask[i]:
            values[i] = value
            mask[i] = True
    return FeatureVector(values=values, mask=tuple(mask))


def extract_segment(segment, which: FeatureSelection | None = None) -> FeatureVector:
    """Per-axis statistics of an (n, 3) window; unselected entries unpopulated."""
    full = feature_vector(getattr(segment, "samples", segment))
    sel = FeatureSelection.all() if which is None else which
    mask = np.array(sel.mask)
    return FeatureVector(values=np.where(mask, full, np.nan), mask=sel.mask)


def write_feature_csv(path: str, X: np.ndarray, activities, locations) -> None:
    """Feature matrix with activity/location label columns."""
    X = np.asarray(X)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["activity", "location"] + list(FEATURE_NAMES))
        for row, a, l in zip(X, activities, locations):
            w.writerow([int(a), int(l)] + [f"{v:.9g}" for v in row])


def read_feature_csv(path: str):
    """Inverse of write_feature_csv: (X, activities, locations)."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header[2:] != list(FEATURE_NAMES):
            raise ValueError(f"{path}: unexpected feature columns")
        acts, locs, rows = [], [], []
        for rec in r:
            acts.append(int(rec[0]))
            locs.append(int(rec[1]))
            rows.append([float(v) for v in rec[2:]])
    X = np.asarray(rows) if rows else np.empty((0, N_FEATURES))
    return X, np.asarray(acts, dtype=int), np.asarray(locs, dtype=int)
