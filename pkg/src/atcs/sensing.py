"""Random-subsampling codec: DCT dictionary, sensing patterns, l1 recovery.

A window x of length p is modeled as x = Psi c with Psi the orthonormal
inverse type-II DCT and c sparse.  The node keeps q of p samples (a seeded
index subset); the back end solves min ||c||_1 s.t. ||y - A c||_2 <= eps
with A the kept rows of Psi, then re-fits the detected support by least
squares to undo shrinkage bias.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft

P_DEFAULT = 125
NO_CLUSTER = 255
_HEADER = struct.Struct("<HHQBBB")


class CodecError(Exception):
    pass


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class DctBasis:
    """Orthonormal synthesis dictionary; columns are DCT-II atoms."""

    p: int
    matrix: np.ndarray       # (p, p); first column constant 1/sqrt(p)

    def analyze(self, x: np.ndarray) -> np.ndarray:
        return self.matrix.T @ x

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        return self.matrix @ c


@lru_cache(maxsize=8)
def dct_basis(p: int = P_DEFAULT) -> DctBasis:
    if p < 1:
        raise CodecError(f"basis dimension must be >= 1, got {p}")
    analysis = scipy.fft.dct(np.eye(p), axis=0, norm="ortho")
    m = analysis.T
    m.setflags(write=False)
    return DctBasis(p=p, matrix=m)


@dataclass(frozen=True)
class SensingPattern:
    """q strictly increasing sample indices out of p, reproducible by seed."""

    p: int
    kept: tuple
    seed: int

    def __post_init__(self):
        kept = tuple(int(i) for i in self.kept)
        if any(b <= a for a, b in zip(kept, kept[1:])):
            raise CodecError("pattern indices must be strictly increasing")
        if kept and not 0 <= kept[0] <= kept[-1] < self.p:
            raise CodecError("pattern indices out of range")
        if not 1 <= len(kept) <= self.p:
            raise CodecError(f"need 1..{self.p} indices, got {len(kept)}")
        object.__setattr__(self, "kept", kept)

    @property
    def q(self) -> int:
        return len(self.kept)

    @classmethod
    def draw(cls, p: int, q: int, seed: int) -> "SensingPattern":
        """Partial Fisher-Yates over [0, p); sorted prefix of length q."""
        if not 1 <= q <= p:
            raise CodecError(f"need 1 <= q <= {p}, got q={q}")
        rng = np.random.default_rng(int(seed))
        idx = np.arange(p)
        for i in range(q):
            j = i + int(rng.integers(0, p - i))
            idx[i], idx[j] = idx[j], idx[i]
        return cls(p=p, kept=tuple(sorted(int(v) for v in idx[:q])),
                   seed=int(seed))


def keep_fraction_q(p: int, keep_fraction: float) -> int:
    if not 0.0 < keep_fraction <= 1.0:
        raise CodecError(f"keep fraction must be in (0, 1], got {keep_fraction}")
    q = round_half_up(p * keep_fraction)
    if q < 1:
        raise CodecError(f"keep fraction {keep_fraction} keeps no samples")
    return min(q, p)


def sparse_filter(axis_values: np.ndarray, keep_fraction: float, seed: int):
    """(kept values in index order, pattern) for one axis."""
    x = np.asarray(axis_values, dtype=float)
    if x.ndim != 1:
        raise CodecError(f"expected 1-D axis values, got shape {x.shape}")
    pattern = SensingPattern.draw(len(x), keep_fraction_q(len(x), keep_fraction),
                                  seed)
    return x[list(pattern.kept)], pattern


@dataclass(frozen=True)
class MeasurementMatrix:
    """Kept rows of the synthesis dictionary."""

    A: np.ndarray            # (q, p)
    pattern: SensingPattern


def measurement_matrix(basis: DctBasis, pattern: SensingPattern) -> MeasurementMatrix:
    if pattern.p != basis.p:
        raise CodecError(f"pattern is for p={pattern.p}, basis p={basis.p}")
    return MeasurementMatrix(A=basis.matrix[list(pattern.kept), :],
                             pattern=pattern)


@dataclass
class RecoveryConfig:
    epsilon: float | None = None     # None -> 0.05 * ||y||_2
    max_iter: int = 2000
    check_every: int = 25

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon < 0:
            raise CodecError("epsilon must be >= 0")
        if self.max_iter < 1:
            raise CodecError("max_iter must be >= 1")


def default_epsilon(y: np.ndarray) -> float:
    return 0.05 * float(np.linalg.norm(y))


@dataclass
class RecoveryResult:
    c: np.ndarray
    x: np.ndarray
    residual: float
    iterations: int
    converged: bool


def _soft(v: np.ndarray, t) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _debias_row(A: np.ndarray, y: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Least-squares refit on the detected support (if determined)."""
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return c
    support = np.flatnonzero(np.abs(c) > 1e-10 * scale)
    if not 1 <= len(support) <= len(y):
        return c
    sol, *_ = np.linalg.lstsq(A[:, support], y, rcond=None)
    out = np.zeros_like(c)
    out[support] = sol
    return out


def _fista_batch(Y: np.ndarray, A: np.ndarray, eps: np.ndarray,
                 max_iter: int, check_every: int):
    """Accelerated shrinkage on B stacked systems with lambda continuation.

    Y: (B, q), A: (B, q, p), eps: (B,).  Step size 1 is exact because the
    rows of A are orthonormal (A A^T = I).  Rows failing their residual
    after a block of iterations get lambda halved; rows already inside eps
    keep their lambda.
    """
    B, q = Y.shape
    p = A.shape[2]
    c = np.zeros((B, p))
    z = c.copy()
    t = 1.0
    lam = 0.5 * np.max(np.abs(np.einsum("bqp,bq->bp", A, Y)), axis=1)
    lam = np.maximum(lam, 1e-300)
    it = 0
    while it < max_iter:
        steps = min(check_every, max_iter - it)
        for _ in range(steps):
            r = np.einsum("bqp,bp->bq", A, z) - Y
            g = np.einsum("bqp,bq->bp", A, r)
            c_new = _soft(z - g, lam[:, None])
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            z = c_new + ((t - 1.0) / t_new) * (c_new - c)
            c, t = c_new, t_new
        it += steps
        resid = np.linalg.norm(np.einsum("bqp,bp->bq", A, c) - Y, axis=1)
        if np.all(resid <= eps):
            break
        lam = np.where(resid > eps, 0.5 * lam, lam)
    for b in range(B):
        c[b] = _debias_row(A[b], Y[b], c[b])
    resid = np.linalg.norm(np.einsum("bqp,bp->bq", A, c) - Y, axis=1)
    return c, resid, it, resid <= eps


def reconstruct(y: np.ndarray, A: MeasurementMatrix | np.ndarray,
                cfg: RecoveryConfig | None = None,
                basis: DctBasis | None = None) -> RecoveryResult:
    """Recover (c, x = Psi c) for one axis from its kept samples."""
    mat = A.A if isinstance(A, MeasurementMatrix) else np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    q, p = mat.shape
    if y.shape != (q,):
        raise CodecError(f"y has shape {y.shape}, expected ({q},)")
    cfg = cfg or RecoveryConfig()
    basis = basis or dct_basis(p)
    if q == p:
        c = mat.T @ y                      # full sampling: A is orthogonal
        return RecoveryResult(c=c, x=basis.synthesize(c), residual=0.0,
                              iterations=0, converged=True)
    eps = default_epsilon(y) if cfg.epsilon is None else cfg.epsilon
    C, resid, it, ok = _fista_batch(y[None, :], mat[None, :, :],
                                    np.array([eps]), cfg.max_iter,
                                    cfg.check_every)
    return RecoveryResult(c=C[0], x=basis.synthesize(C[0]),
                          residual=float(resid[0]), iterations=it,
                          converged=bool(ok[0]))


def reconstruct_batch(Y: np.ndarray, A: np.ndarray,
                      cfg: RecoveryConfig | None = None,
                      basis: DctBasis | None = None):
    """Recover many axes at once.  Y: (B, q), A: (B, q, p) -> (C, X, ok)."""
    Y = np.asarray(Y, dtype=float)
    A = np.asarray(A, dtype=float)
    B, q = Y.shape
    p = A.shape[2]
    cfg = cfg or RecoveryConfig()
    basis = basis or dct_basis(p)
    if q == p:
        C = np.einsum("bpq,bq->bp", A.transpose(0, 2, 1), Y)
        return C, C @ basis.matrix.T, np.ones(B, dtype=bool)
    if cfg.epsilon is None:
        eps = 0.05 * np.linalg.norm(Y, axis=1)
    else:
        eps = np.full(B, float(cfg.epsilon))
    C, _, _, ok = _fista_batch(Y, A, eps, cfg.max_iter, cfg.check_every)
    return C, C @ basis.matrix.T, ok


def nrmse(x: np.ndarray, xr: np.ndarray) -> float:
    """Root-mean-square error normalized by the range of the reference."""
    x = np.asarray(x, dtype=float)
    xr = np.asarray(xr, dtype=float)
    if x.shape != xr.shape:
        raise CodecError(f"shape mismatch {x.shape} vs {xr.shape}")
    span = float(np.max(x) - np.min(x))
    if span == 0.0:
        raise CodecError("reference signal is constant; NRMSE undefined")
    return float(np.sqrt(np.mean((x - xr) ** 2)) / span)


def segment_nrmse(x: np.ndarray, xr: np.ndarray) -> float:
    """Mean per-axis NRMSE of a (p, 3) window."""
    return float(np.mean([nrmse(x[:, a], xr[:, a]) for a in range(x.shape[1])]))


@dataclass
class CompressedSegment:
    """Kept samples of all three axes under one shared pattern."""

    y: np.ndarray                    # (3, q)
    pattern: SensingPattern
    ratio_reported: int              # percent removed
    location_hint: int
    cluster_id: int = NO_CLUSTER

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        q = self.pattern.q
        if self.y.shape != (3, q):
            raise CodecError(f"y has shape {self.y.shape}, expected (3, {q})")
        if not 0 <= self.ratio_reported <= 100:
            raise CodecError(f"bad ratio {self.ratio_reported}")
        expect = round_half_up(self.pattern.p *
                               (1.0 - self.ratio_reported / 100.0))
        if q != expect:
            raise CodecError(
                f"q={q} inconsistent with cr={self.ratio_reported}% "
                f"(expected {expect})")

    def pack(self) -> bytes:
        head = _HEADER.pack(self.pattern.p, self.pattern.q, self.pattern.seed,
                            self.ratio_reported, self.location_hint,
                            self.cluster_id)
        body = np.asarray(self.y, dtype="<f4").tobytes(order="C")
        return head + body

    @classmethod
    def unpack(cls, blob: bytes) -> "CompressedSegment":
        if len(blob) < _HEADER.size:
            raise CodecError("truncated compressed segment")
        p, q, seed, cr, loc, cluster = _HEADER.unpack_from(blob)
        want = _HEADER.size + 3 * q * 4
        if len(blob) != want:
            raise CodecError(f"expected {want} bytes, got {len(blob)}")
        y = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
        return cls(y=y.reshape(3, q).astype(float),
                   pattern=SensingPattern.draw(p, q, seed),
                   ratio_reported=cr, location_hint=loc, cluster_id=cluster)


def compress(samples: np.ndarray, cr_percent: int, seed: int,
             location_hint: int, cluster_id: int = NO_CLUSTER) -> CompressedSegment:
    """Subsample a (p, 3) window at cr percent removed; axes share a pattern."""
    x = np.asarray(samples, dtype=float)
    p = x.shape[0]
    keep = 1.0 - cr_percent / 100.0
    pattern = SensingPattern.draw(p, keep_fraction_q(p, keep), seed)
    return CompressedSegment(y=x[list(pattern.kept), :].T, pattern=pattern,
                             ratio_reported=int(cr_percent),
                             location_hint=int(location_hint),
                             cluster_id=int(cluster_id))


def decompress(cseg: CompressedSegment, cfg: RecoveryConfig | None = None,
               basis: DctBasis | None = None) -> np.ndarray:
    """Reconstruct a (p, 3) window from a compressed segment."""
    basis = basis or dct_basis(cseg.pattern.p)
    A = measurement_matrix(basis, cseg.pattern).A
    stack = np.broadcast_to(A, (3,) + A.shape)
    _, X, _ = reconstruct_batch(cseg.y, stack, cfg, basis)
    return X.T
