"""Codec: transform basis, sensing patterns, wire format, reconstruction."""

import numpy as np
import pytest

from atcs.sensing import (CodecError, CompressedSegment, RecoveryConfig,
                          SensingPattern, compress, dct_basis, decompress,
                          default_epsilon, keep_fraction_q,
                          measurement_matrix, nrmse, reconstruct,
                          reconstruct_batch, round_half_up, segment_nrmse,
                          sparse_filter)


def test_round_half_up():
    assert round_half_up(0.5) == 1
    assert round_half_up(1.5) == 2
    assert round_half_up(2.4) == 2
    assert round_half_up(-0.5) == 0


def test_basis_orthonormal():
    B = dct_basis(125).matrix
    assert np.abs(B.T @ B - np.eye(125)).max() < 1e-10
    assert np.abs(B @ B.T - np.eye(125)).max() < 1e-10


def test_basis_cached():
    assert dct_basis(125) is dct_basis(125)


def test_basis_first_column_constant():
    B = dct_basis(125).matrix
    assert np.allclose(B[:, 0], 1.0 / np.sqrt(125.0))


def test_keep_fraction_q():
    assert keep_fraction_q(125, 1.0) == 125
    assert keep_fraction_q(125, 0.33) == 41
    assert keep_fraction_q(125, 0.004) == 1
    with pytest.raises(CodecError):
        keep_fraction_q(125, 0.0)
    with pytest.raises(CodecError):
        keep_fraction_q(125, 1.5)


def test_pattern_draw_properties():
    pat = SensingPattern.draw(125, 40, seed=7)
    assert pat.q == 40
    assert list(pat.kept) == sorted(set(pat.kept))
    assert 0 <= pat.kept[0] and pat.kept[-1] < 125
    assert SensingPattern.draw(125, 40, seed=7).kept == pat.kept
    assert SensingPattern.draw(125, 40, seed=8).kept != pat.kept


def test_pattern_validation():
    with pytest.raises(CodecError):
        SensingPattern(p=10, kept=(3, 3), seed=0)
    with pytest.raises(CodecError):
        SensingPattern(p=10, kept=(2, 11), seed=0)
    with pytest.raises(CodecError):
        SensingPattern.draw(10, 0, seed=0)


def test_sparse_filter_keeps_values_in_order():
    x = np.arange(125, dtype=float)
    kept, pat = sparse_filter(x, 0.33, seed=3)
    assert len(kept) == 41
    assert np.array_equal(kept, x[list(pat.kept)])


def test_measurement_matrix_rows():
    basis = dct_basis(125)
    pat = SensingPattern.draw(125, 10, seed=1)
    mm = measurement_matrix(basis, pat)
    assert mm.A.shape == (10, 125)
    assert np.array_equal(mm.A, basis.matrix[list(pat.kept), :])
    with pytest.raises(CodecError):
        measurement_matrix(dct_basis(64), pat)


def test_nrmse_range_normalization():
    x = np.array([0.0, 4.0, 2.0])
    xr = x + 1.0
    assert nrmse(x, xr) == pytest.approx(1.0 / 4.0)


def test_full_sampling_identity(rng):
    basis = dct_basis(125)
    for _ in range(10):
        x = rng.standard_normal((125, 3))
        cs = compress(x, 0, seed=5, location_hint=0)
        xr = decompress(cs, basis=basis)
        assert segment_nrmse(x, xr) < 1e-9


def test_exact_sparse_recovery(rng):
    """3-sparse synthesis coefficients recover through the tight solver."""
    basis = dct_basis(125)
    cfg = RecoveryConfig(epsilon=1e-8)
    hits = 0
    for i in range(20):
        c = np.zeros(125)
        idx = rng.choice(125, size=3, replace=False)
        c[idx] = rng.standard_normal(3) + np.sign(rng.standard_normal(3))
        x = basis.matrix @ c
        pat = SensingPattern.draw(125, 50, seed=1000 + i)
        A = measurement_matrix(basis, pat).A
        res = reconstruct(x[list(pat.kept)], A, cfg, basis)
        if nrmse(x, res.x) < 1e-3:
            hits += 1
    assert hits >= 19


def test_recovery_error_monotone_in_keep(rng):
    """More kept samples cannot make a compressible signal much worse."""
    basis = dct_basis(125)
    c = np.zeros(125)
    c[[0, 3, 7, 11, 19]] = [2.0, 1.0, 0.8, 0.6, 0.5]
    x = basis.matrix @ c
    errs = []
    for cr in (80, 60, 40, 20):
        cs = compress(np.tile(x[:, None], (1, 3)), cr, seed=9, location_hint=0)
        errs.append(segment_nrmse(np.tile(x[:, None], (1, 3)), decompress(cs)))
    assert errs[-1] <= errs[0] + 1e-6
    assert errs[-1] < 1e-3


def test_reconstruct_batch_matches_single(rng):
    basis = dct_basis(125)
    x = rng.standard_normal(125)
    pat = SensingPattern.draw(125, 60, seed=2)
    A = measurement_matrix(basis, pat).A
    y = x[list(pat.kept)]
    single = reconstruct(y, A, None, basis)
    batch_y = np.stack([y, y])
    batch_A = np.broadcast_to(A, (2,) + A.shape)
    _, X, _ = reconstruct_batch(batch_y, batch_A, None, basis)
    assert np.allclose(X[0], single.x)
    assert np.allclose(X[0], X[1])


def test_default_epsilon():
    y = np.array([3.0, 4.0])
    assert default_epsilon(y) == pytest.approx(0.25)


def test_compress_decompress_round_trip_fields():
    x = np.random.default_rng(0).standard_normal((125, 3))
    cs = compress(x, 36, seed=17, location_hint=2, cluster_id=4)
    assert cs.ratio_reported == 36
    assert cs.location_hint == 2
    assert cs.cluster_id == 4
    assert cs.pattern.q == round_half_up(125 * 0.64)
    assert cs.y.shape == (3, cs.pattern.q)


def test_wire_round_trip():
    x = np.random.default_rng(1).standard_normal((125, 3))
    cs = compress(x, 52, seed=23, location_hint=1, cluster_id=0)
    blob = cs.pack()
    assert len(blob) == 15 + 3 * cs.pattern.q * 4   # '<HHQBBB' header
    back = CompressedSegment.unpack(blob)
    assert back.pattern.kept == cs.pattern.kept
    assert back.ratio_reported == cs.ratio_reported
    assert back.location_hint == cs.location_hint
    assert back.cluster_id == cs.cluster_id
    assert np.allclose(back.y, cs.y, atol=1e-6)


def test_wire_rejects_corruption():
    x = np.random.default_rng(2).standard_normal((125, 3))
    blob = compress(x, 40, seed=3, location_hint=0).pack()
    with pytest.raises(CodecError):
        CompressedSegment.unpack(blob[:5])
    with pytest.raises(CodecError):
        CompressedSegment.unpack(blob + b"\x00\x00\x00\x00")


def test_compressed_segment_consistency_check():
    pat = SensingPattern.draw(125, 50, seed=0)
    with pytest.raises(CodecError):
        CompressedSegment(y=np.zeros((3, 50)), pattern=pat,
                          ratio_reported=90, location_hint=0)
    with pytest.raises(CodecError):
        CompressedSegment(y=np.zeros((2, 50)), pattern=pat,
                          ratio_reported=60, location_hint=0)
