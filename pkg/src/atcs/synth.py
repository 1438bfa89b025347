"""Seeded synthetic accelerometer corpus in the 19x8 activity/subject layout.

Segments are built as mean orientation + a harmonic comb placed directly on
transform bins + white noise, so every window is exactly sparse in the codec
basis up to the noise floor.  The parameter tables encode three properties
the rest of the toolkit exercises:

* the two leg units are near-duplicates of each other, so position
  classifiers see far more left/right leg confusion than arm/leg confusion;
* arm and torso combs decay steeply (recovery degrades gracefully as weak
  lines vanish) while leg combs are nearly flat, so leg windows break down
  sharply, and earlier, under subsampling;
* paired activities (5/6, 10/11, 13/14, 15/16) share the same mean
  orientation and differ by primary amplitude plus a small contrast in how
  fast the comb decays.
"""

from __future__ import annotations

import os

import numpy as np

from .dataset import (ALL_LOCATIONS, FILE_COLUMNS, FS_HZ, SEGMENT_SAMPLES,
                      Corpus, Location, Segment, accel_columns)
from .seeds import substream
from .sensing import dct_basis

N_ACTIVITIES = 19
STATIC_ACTIVITIES = (1, 2, 3, 4, 7)
WALKING_ACTIVITIES = (9, 10, 11)
# second member of each pair shares the first's mean direction; the pair is
# told apart by amplitude on the arms but mostly by crest shape on the legs
PAIRED_ACTIVITIES = {6: 5, 11: 10, 14: 13, 16: 15}

MAX_HARMONIC_HZ = 11.9

# per-activity gait frequency (Hz) and dynamic rms amplitude (g)
_DYNAMICS = {
    1: (0.0, 0.0), 2: (0.41, 0.012), 3: (0.0, 0.0), 4: (0.0, 0.0),
    5: (1.37, 0.50), 6: (1.52, 0.50), 7: (0.0, 0.0), 8: (0.31, 0.12),
    9: (1.83, 0.42), 10: (1.91, 0.40), 11: (1.91, 0.40), 12: (2.57, 0.72),
    13: (0.93, 0.34), 14: (0.93, 0.34), 15: (1.43, 0.38), 16: (1.43, 0.38),
    17: (0.77, 0.45), 18: (2.21, 0.80), 19: (1.67, 0.55),
}

# activities whose motion is carried by the arms rather than the legs
_ARM_DOMINANT = (17, 19)

# comb = spacing of harmonic lines in multiples of the gait frequency; the
# sub-unit leg comb stands for step-asymmetry subharmonics and shifts the
# leg lines to lower frequencies than the arms'
_LOC = {
    Location.T: dict(g=(0.05, -0.10, 0.99), rho=0.30, gain=0.55,
                     decay=0.55, n_harm=6, comb=1.0, sigma=0.012,
                     axis_w=(0.90, 0.70, 1.10)),
    Location.RA: dict(g=(0.62, -0.18, 0.72), rho=0.32, gain=0.75,
                      decay=0.58, n_harm=6, comb=1.0, sigma=0.008,
                      axis_w=(1.00, 1.10, 0.70)),
    Location.LA: dict(g=(-0.60, -0.15, 0.74), rho=0.32, gain=0.60,
                      decay=0.58, n_harm=6, comb=1.0, sigma=0.008,
                      axis_w=(1.00, 1.10, 0.70)),
    Location.RL: dict(g=(0.10, 0.06, 0.97), rho=0.22, gain=1.00,
                      decay=0.93, n_harm=12, comb=0.52, sigma=0.020,
                      axis_w=(1.20, 0.80, 1.00)),
    Location.LL: dict(g=(0.165, 0.015, 0.99), rho=0.22, gain=1.04,
                      decay=0.94, n_harm=12, comb=0.52, sigma=0.020,
                      axis_w=(1.20, 0.80, 1.00)),
}

# within-pair contrast applied to the second member of a pair
_PAIR_AMP_RATIO = {Location.T: 1.18, Location.RA: 1.12, Location.LA: 1.12,
                   Location.RL: 1.12, Location.LL: 1.22}
_PAIR_DECAY = {Location.T: (0.50, 0.62), Location.RA: (0.56, 0.62),
               Location.LA: (0.56, 0.62), Location.RL: (0.88, 0.98),
               Location.LL: (0.86, 1.00)}


def _directions(n: int = N_ACTIVITIES) -> np.ndarray:
    """n well-spread unit vectors (golden-angle spiral on the sphere)."""
    i = np.arange(n)
    z = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(1.0 - z * z)
    th = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([r * np.cos(th), r * np.sin(th), z], axis=1)


_DIR = _directions()


def _direction_index(activity: int) -> int:
    return PAIRED_ACTIVITIES.get(activity, activity) - 1


def segment_mean(activity: int, location: Location) -> np.ndarray:
    """Noise-free mean orientation vector for one activity/location."""
    p = _LOC[Location(location)]
    return np.asarray(p["g"]) + p["rho"] * _DIR[_direction_index(activity)]


def _params(activity: int, location: Location):
    """(freq, per-axis amps for each comb line, noise sigma, comb spacing)."""
    loc = _LOC[Location(location)]
    freq, amp = _DYNAMICS[activity]
    gain, decay, n_harm, comb, sigma = (loc["gain"], loc["decay"],
                                        loc["n_harm"], loc["comb"],
                                        loc["sigma"])

    if activity in _ARM_DOMINANT:
        gain *= {Location.RA: 1.60, Location.LA: 1.35}.get(
            Location(location), 0.45 if location in (Location.RL, Location.LL)
            else 1.0)
    if activity in PAIRED_ACTIVITIES or activity in PAIRED_ACTIVITIES.values():
        first, second = _PAIR_DECAY[Location(location)]
        decay = first if activity in PAIRED_ACTIVITIES.values() else second
        if activity in PAIRED_ACTIVITIES:
            gain *= _PAIR_AMP_RATIO[Location(location)]
    if activity in (12, 18):
        decay = min(decay + 0.10, 0.93)
    if activity == 19:
        sigma *= 2.2

    if activity in STATIC_ACTIVITIES or amp == 0.0:
        return 0.0, np.zeros((0, 3)), sigma * (0.5 if amp == 0.0 else 1.0), comb

    # drop comb lines past the representable band
    n_harm = max(1, min(n_harm, int(MAX_HARMONIC_HZ / (freq * comb))))
    k = np.arange(1, n_harm + 1)
    ladder = decay ** (k - 1.0)
    ladder /= np.linalg.norm(ladder)                    # dynamic rms == amp
    w = np.asarray(loc["axis_w"], dtype=float)
    w = w / np.sqrt(np.mean(w ** 2))
    amps = (amp * gain) * ladder[:, None] * w[None, :]  # (n_harm, 3)
    return freq, amps, sigma, comb


def synth_segment(master: int, activity: int, subject: int,
                  seg_index: int, location: Location) -> np.ndarray:
    """One (125, 3) accelerometer window, deterministic in all labels."""
    location = Location(location)
    freq, amps, sigma, comb = _params(activity, location)
    mean = segment_mean(activity, location)

    srng = substream(master, "subject", subject, location.name)
    mean = mean + 0.030 * srng.standard_normal(3)
    amp_scale = 1.0 + 0.05 * srng.standard_normal()
    freq = freq * (1.0 + 0.02 * srng.standard_normal())

    rng = substream(master, "segment", activity, subject, seg_index,
                    location.name)
    p = SEGMENT_SAMPLES
    root = np.sqrt(float(p))
    coef = np.zeros((p, 3))
    coef[0, :] = mean * root                   # constant basis row is 1/sqrt(p)
    if len(amps):
        # transform bin b holds frequency b/10 Hz at fs=25 Hz, p=125
        k = np.arange(1, len(amps) + 1)
        bins = np.rint(2.0 * p / FS_HZ * freq * comb * k).astype(int)
        # a wearer's spectral comb is stable across windows, so the grid
        # rounding offsets belong to (activity, subject), not the segment
        brng = substream(master, "subject-bins", activity, subject,
                        location.name)
        bins = bins + brng.integers(-1, 2, size=len(bins))
        sign = rng.choice((-1.0, 1.0), size=amps.shape)
        jitter = 1.0 + 0.03 * rng.standard_normal(3)
        ok = (bins >= 1) & (bins < p)
        np.add.at(coef, bins[ok],
                  root * amp_scale * sign[ok] * amps[ok] * jitter[None, :])
    x = dct_basis(p).matrix @ coef
    x = x + sigma * rng.standard_normal((p, 3))
    return x


def generate_corpus(master: int, activities=range(1, N_ACTIVITIES + 1),
                    subjects=range(1, 9), segments_per: int = 6,
                    locations=ALL_LOCATIONS) -> Corpus:
    """In-memory corpus; equals a written tree loaded back, up to rounding."""
    segments = []
    for a in activities:
        for p in subjects:
            for s in range(1, segments_per + 1):
                for loc in locations:
                    segments.append(Segment(
                        samples=synth_segment(master, a, p, s, loc),
                        location=Location(loc), activity=a, subject=p,
                        segment_index=s))
    return Corpus(segments, provenance=f"synth(master={master})")


def write_tree(root: str, master: int,
               activities=range(1, N_ACTIVITIES + 1), subjects=range(1, 9),
               segments_per: int = 6) -> int:
    """Write a{A}/p{P}/s{S}.txt files; returns the number of files."""
    n = 0
    for a in activities:
        for p in subjects:
            d = os.path.join(root, f"a{a:02d}", f"p{p}")
            os.makedirs(d, exist_ok=True)
            for s in range(1, segments_per + 1):
                pad = substream(master, "pad", a, p, s)
                table = 0.05 * pad.standard_normal(
                    (SEGMENT_SAMPLES, FILE_COLUMNS))
                for loc in ALL_LOCATIONS:
                    table[:, accel_columns(loc)] = synth_segment(
                        master, a, p, s, loc)
                path = os.path.join(d, f"s{s:02d}.txt")
                with open(path, "w") as fh:
                    for row in table:
                        fh.write(",".join(f"{v:.6f}" for v in row) + "\n")
                n += 1
    return n
