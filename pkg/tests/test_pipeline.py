"""Pipeline pieces: tables, deployment artifacts, node/backend steps."""

import numpy as np
import pytest

from atcs.clustering import ClusterModel, RatioAssignment, assign, kmeans_fit
from atcs.dataset import Location
from atcs.energy import default_model
from atcs.features import FeatureSelection, feature_matrix
from atcs.forest import predict_many
from atcs.pipeline import (REDUCED_FEATURE_NAMES, BackendModels, LookupTable,
                           NodeState, PipelineError, ReportRow, RunReport,
                           ScaleConfig, backend_step, baseline_accuracies,
                           correct_table, energy_total, naive_ratio_from_lut,
                           node_step, simulate, solution_error)


def _small_lut(split, k=2, ratios=(40, 72)):
    entries = {}
    for loc in Location:
        X = feature_matrix(split.train.for_location(loc))
        model = kmeans_fit(X, k=k, seed=13, location=int(loc))
        entries[loc] = (model, RatioAssignment(ratios))
    return LookupTable(entries)


def test_scale_config():
    desk = ScaleConfig.desk()
    assert (desk.p1_pop, desk.p1_generations) == (50, 60)
    assert desk.table_draws == 2 and desk.table_per_activity is None
    paper = ScaleConfig.named("paper")
    assert paper.p1_generations > desk.p1_generations
    assert ScaleConfig.named("desk") == desk
    with pytest.raises(PipelineError):
        ScaleConfig.named("galactic")


def test_backend_structure(backend):
    assert backend.fine_location.feature_dim == 30
    assert set(backend.activity) == set(Location)
    partial = BackendModels(fine_location=backend.fine_location,
                            activity={Location.T: backend.activity[Location.T]})
    with pytest.raises(PipelineError):
        partial.activity_model(Location.RA)


def test_baseline_accuracies(backend, split, baseline):
    again = baseline_accuracies(backend, split.test)
    assert set(again) == set(Location)
    for loc in Location:
        assert again[loc] == baseline[loc]
        assert 80.0 < again[loc] <= 100.0


def test_correct_table_semantics(backend, split):
    segs = [s for s in split.train.for_location(Location.T)
            if s.activity in (9, 12, 18)][:12]
    ar = backend.activity[Location.T]
    table = correct_table(segs, ar, seed=99, recovery=backend.recovery,
                          grid=(0, 96), draws=2)
    assert table.shape == (12, 2)
    assert table.min() >= 0.0 and table.max() <= 1.0
    truth = np.array([s.activity for s in segs])
    exact = (predict_many(ar, feature_matrix(segs)) == truth).astype(float)
    assert np.array_equal(table[:, 0], exact)
    # removing 96% of the samples cannot help recognition
    assert table[:, 1].mean() <= table[:, 0].mean()
    again = correct_table(segs, ar, seed=99, recovery=backend.recovery,
                          grid=(0, 96), draws=2)
    assert np.array_equal(table, again)
    with pytest.raises(PipelineError):
        correct_table(segs, ar, seed=99, draws=0)


def test_solution_error_uncompressed_oracle(backend, split):
    segs = list(split.test.for_location(Location.T))[:20]
    X = feature_matrix(segs)
    model = kmeans_fit(X, k=2, seed=3)
    ar = backend.activity[Location.T]
    err, mean_cr = solution_error(segs, model, RatioAssignment((0, 0)), ar,
                                  seed=123, draws=2)
    truth = np.array([s.activity for s in segs])
    direct = 100.0 * float(np.mean(predict_many(ar, X) != truth))
    assert err == pytest.approx(direct, abs=1e-9)
    assert mean_cr == 0.0
    with pytest.raises(PipelineError):
        solution_error([], model, RatioAssignment((0, 0)), ar, seed=1)
    with pytest.raises(PipelineError):
        solution_error(segs, model, RatioAssignment((0, 0)), ar, seed=1,
                       draws=0)


def test_lookup_table_round_trip(tmp_path, split):
    lut = _small_lut(split)
    assert lut.complete and lut.locations == sorted(Location)
    fv = feature_matrix(split.test.for_location(Location.RL))[0]
    cluster, cr = lut.ratio_for(Location.RL, fv)
    model, assignment = lut.entry(Location.RL)
    assert cluster == assign(model, fv)
    assert cr == assignment.crs[cluster]
    path = tmp_path / "lut.json"
    lut.save(path)
    loaded = LookupTable.load(path)
    for loc in Location:
        m1, a1 = lut.entry(loc)
        m2, a2 = loaded.entry(loc)
        assert np.allclose(m1.centroids, m2.centroids)
        assert tuple(a1.crs) == tuple(a2.crs)
    with pytest.raises(PipelineError):
        LookupTable.from_json({"format": "nope"})
    with pytest.raises(PipelineError):
        LookupTable({})
    model, _ = lut.entry(Location.T)
    with pytest.raises(PipelineError):
        LookupTable({Location.T: (model, RatioAssignment((40,)))})


def test_partial_lookup_table(split):
    lut = _small_lut(split)
    only_t = LookupTable({Location.T: lut.entry(Location.T)})
    assert not only_t.complete
    with pytest.raises(PipelineError):
        only_t.entry(Location.LL)


def test_naive_ratio_from_lut():
    def mk(counts):
        k = len(counts)
        return ClusterModel(k=k, centroids=np.arange(2.0 * k).reshape(k, 2),
                            counts=counts, seed=0)

    lut = LookupTable({
        Location.T: (mk((10, 30)), RatioAssignment((40, 80))),   # mean 70
        Location.RA: (mk((1, 1)), RatioAssignment((40, 44))),    # mean 42
    })
    assert naive_ratio_from_lut(lut) == 42


def _row(mode, location, **over):
    base = dict(mode=mode, location=location, n_segments=4, cr_mean=50.0,
                samples_per_5s=120.0, ar_accuracy=95.0,
                loc_coarse_accuracy=90.0, loc_fine_accuracy=99.0,
                sigma_mj=13.4, pi_mj=1.0, tau_mj=20.0, total_mj=34.4,
                savings_pct=40.0, over_compressed=0, sub_compressed=1,
                unconverged=0)
    base.update(over)
    return ReportRow(**base)


def test_run_report_round_trip(tmp_path):
    rows = [_row("baseline", "T", loc_coarse_accuracy=None),
            _row("adaptive", "T"), _row("adaptive", "avg")]
    report = RunReport(rows=rows, seed=7, naive_cr=64, baseline_total_mj=92.3)
    assert report.modes() == ["baseline", "adaptive"]
    assert report.row("adaptive", "avg").savings_pct == 40.0
    with pytest.raises(PipelineError):
        report.row("naive", "T")
    jpath = tmp_path / "report.json"
    report.write_json(jpath)
    loaded = RunReport.load(jpath)
    assert loaded.seed == 7 and loaded.naive_cr == 64
    assert [r.as_dict() for r in loaded.rows] == [r.as_dict() for r in rows]
    cpath = tmp_path / "report.csv"
    report.write_csv(cpath)
    lines = cpath.read_text().strip().splitlines()
    assert lines[0].startswith("mode,location,n_segments,cr_mean")
    assert len(lines) == 4
    assert lines[1].split(",")[6] == ""       # None renders empty
    with pytest.raises(PipelineError):
        RunReport.from_json({"format": "wrong"})


def test_energy_total():
    model = default_model()
    bd = energy_total("naive", 0.0, 180.0, 5.0, model)
    s, p, t, tot = model.total("naive", 0.0, 36.0)
    assert (bd.sigma, bd.pi, bd.tau, bd.total) == (s, p, t, tot)
    with pytest.raises(PipelineError):
        energy_total("warp", 0.0, 1.0, 5.0, model)
    with pytest.raises(PipelineError):
        energy_total("naive", -1.0, 1.0, 5.0, model)
    with pytest.raises(PipelineError):
        energy_total("naive", 0.0, 1.0, 0.0, model)


def test_node_step_then_backend_step(split, backend, coarse_model):
    lut = _small_lut(split)
    state = NodeState(lut=lut, location_model=coarse_model, seed=21,
                      node_features=FeatureSelection.from_names(
                          REDUCED_FEATURE_NAMES))
    segs = list(split.test.for_location(Location.T))[:2]
    cs1, state = node_step(state, segs[0])
    assert state.step == 1
    assert cs1.ratio_reported in (40, 72)
    assert state.current_cr == cs1.ratio_reported
    assert cs1.cluster_id == state.last_cluster
    cs2, state = node_step(state, segs[1])
    assert state.step == 2
    result = backend_step(cs1, backend)
    assert isinstance(result.location, Location)
    assert isinstance(result.activity, int)
    assert result.samples.shape == (125, 3)
    with pytest.raises(PipelineError):
        NodeState(lut=lut, location_model=coarse_model, seed=1, current_cr=40)


def test_coarse_model_uses_reduced_features(coarse_model):
    assert coarse_model.feature_dim == len(REDUCED_FEATURE_NAMES)
    assert set(coarse_model.classes) == {int(loc) for loc in Location}


def test_simulate_validation(split, backend):
    energy = default_model()
    with pytest.raises(PipelineError):
        simulate(split.test, backend, energy, seed=1, modes=("warp",))
    with pytest.raises(PipelineError):
        simulate(split.test, backend, energy, seed=1, modes=("adaptive",))
    with pytest.raises(PipelineError):
        simulate(split.test, backend, energy, seed=1, modes=("baseline",),
                 locations=[])


def test_reduced_feature_names():
    sel = FeatureSelection.from_names(REDUCED_FEATURE_NAMES)
    assert len(sel) == 6
    assert tuple(sel.names) == REDUCED_FEATURE_NAMES
