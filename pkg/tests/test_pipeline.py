import json

import numpy as np
import pytest

from neurospect.dataset import FeatureSchema, SubjectRecord, TensorScaler
from neurospect.neuralnet import Network, reference_network, reference_specs
from neurospect.pipeline import (
    ArtifactError,
    ModelArtifact,
    TrainConfig,
    ablation_compare,
    confusion_matrix,
    evaluate,
    evaluation_report,
    load_artifact,
    matrix_to_grids,
    parallel_gradient,
    records_to_matrix,
    save_artifact,
    train,
)
from neurospect.preprocess import ResamplePolicy
from neurospect.synthdata import (
    band_contrast_specs,
    generate_feature_records,
    seven_class_specs,
)


def metrics_oracle(y_true, y_pred, n_classes):
    """Brute-force counting oracle for accuracy/precision/recall/F1."""
    acc = sum(1 for t, p in zip(y_true, y_pred) if t == p) / len(y_true)
    per = []
    for c in range(n_classes):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        per.append((prec, rec, f1))
    return acc, per


@pytest.fixture(scope="module")
def tiny_training_set():
    records = generate_feature_records(band_contrast_specs(), per_class=40, seed=30)
    schema = FeatureSchema.full()
    return records, schema


FAST_CFG = dict(epochs=12, batch_size=16, lr=3e-3, workers=2, patience=6,
                validation_fraction=0.1)


# ---------------------------------------------------------------------------
# parallel gradient
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def gradient_fixture():
    rng = np.random.default_rng(31)
    net = reference_network(n_classes=3, seed=32)  # float64 verify mode
    grids = rng.standard_normal((24, 6, 19, 19))
    aux = rng.random((24, 4))
    targets = rng.integers(0, 3, size=24)
    return net, grids, aux, targets


def test_single_worker_matches_direct_call(gradient_fixture):
    net, grids, aux, targets = gradient_fixture
    grads, mean_loss, correct = parallel_gradient(net, grids, aux, targets, workers=1)
    loss_sum, correct_direct, grads_direct, _ = net.loss_and_gradients(grids, aux, targets)
    assert mean_loss == loss_sum / len(targets)
    assert correct == correct_direct
    for a, b in zip(grads, grads_direct):
        for name in a:
            assert np.array_equal(a[name], b[name] / len(targets))


@pytest.mark.parametrize("workers", [2, 4, 8])
def test_partitioned_gradient_matches_single_worker(gradient_fixture, workers):
    net, grids, aux, targets = gradient_fixture
    base, _, _ = parallel_gradient(net, grids, aux, targets, workers=1)
    part, _, _ = parallel_gradient(net, grids, aux, targets, workers=workers)
    for a, b in zip(base, part):
        for name in a:
            denom = np.maximum(np.abs(a[name]), 1e-30)
            rel = np.abs(a[name] - b[name]) / denom
            assert rel.max() < 1e-8


def test_too_many_workers_rejected(gradient_fixture):
    net, grids, aux, targets = gradient_fixture
    with pytest.raises(ValueError, match="empty partition"):
        parallel_gradient(net, grids[:4], aux[:4], targets[:4], workers=5)


def test_gradient_average_permutation_invariant(gradient_fixture):
    # shuffling the batch (hence the partition contents) moves the average
    # only by reassociation noise
    net, grids, aux, targets = gradient_fixture
    base, _, _ = parallel_gradient(net, grids, aux, targets, workers=4)
    perm = np.random.default_rng(40).permutation(len(targets))
    shuffled, _, _ = parallel_gradient(net, grids[perm], aux[perm], targets[perm], workers=4)
    for a, b in zip(base, shuffled):
        for name in a:
            rel = np.abs(a[name] - b[name]) / np.maximum(np.abs(a[name]), 1e-30)
            assert rel.max() < 1e-8


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def test_perfect_predictions():
    report = evaluation_report([0, 1, 2, 1], [0, 1, 2, 1], ["a", "b", "c"])
    assert report["accuracy"] == 1.0
    for stats in report["per_class"].values():
        assert stats["f1"] == (1.0 if stats["support"] else 0.0)


def test_hand_confusion_case():
    # confusion matrix [[1,1],[0,2]]
    y_true = [0, 0, 1, 1]
    y_pred = [0, 1, 1, 1]
    report = evaluation_report(y_true, y_pred, ["x", "y"])
    assert report["confusion_matrix"] == [[1, 1], [0, 2]]
    assert report["per_class"]["x"]["precision"] == 1.0
    assert report["per_class"]["x"]["recall"] == 0.5
    assert report["per_class"]["x"]["f1"] == pytest.approx(2 / 3)
    assert report["per_class"]["y"]["precision"] == pytest.approx(2 / 3)
    assert report["per_class"]["y"]["recall"] == 1.0


def test_absent_class_gets_zero_precision():
    report = evaluation_report([0, 1, 2], [0, 1, 1], ["a", "b", "c"])
    assert report["per_class"]["c"]["precision"] == 0.0
    assert report["per_class"]["c"]["recall"] == 0.0
    assert report["per_class"]["c"]["f1"] == 0.0


def test_metrics_match_bruteforce_oracle():
    rng = np.random.default_rng(33)
    for _ in range(200):
        k = int(rng.integers(2, 8))
        n = int(rng.integers(1, 60))
        y_true = rng.integers(0, k, size=n)
        y_pred = rng.integers(0, k, size=n)
        labels = [f"c{i}" for i in range(k)]
        report = evaluation_report(y_true, y_pred, labels)
        acc, per = metrics_oracle(list(y_true), list(y_pred), k)
        assert report["accuracy"] == acc
        for i, lab in enumerate(labels):
            got = report["per_class"][lab]
            assert got["precision"] == per[i][0]
            assert got["recall"] == per[i][1]
            assert got["f1"] == pytest.approx(per[i][2], abs=1e-12)


def test_confusion_matrix_row_sums_are_support():
    y_true = [0, 0, 1, 2, 2, 2]
    y_pred = [1, 0, 1, 2, 0, 2]
    m = confusion_matrix(y_true, y_pred, 3)
    assert m.sum() == 6
    assert list(m.sum(axis=1)) == [2, 1, 3]


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def test_train_separable_classes(tiny_training_set):
    records, schema = tiny_training_set
    cfg = TrainConfig(seed=1, include_coherence=True, **FAST_CFG)
    result = train(records, schema, cfg)
    final = result.history[-1]
    assert final["train_accuracy"] == 1.0
    assert final["val_accuracy"] >= 0.95
    assert result.evaluation["accuracy"] >= 0.9
    assert result.artifact.evaluation == result.evaluation


def test_train_rejects_single_class():
    records = generate_feature_records(band_contrast_specs()[:1], per_class=20, seed=34)
    with pytest.raises(ValueError, match="degenerate class counts"):
        train(records, FeatureSchema.full(), TrainConfig(seed=0, **FAST_CFG))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(workers=0)
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=0.5)


def test_shuffled_labels_peform_at_chance():
    records = generate_feature_records(seven_class_specs(), per_class=20, seed=35)
    rng = np.random.default_rng(36)
    labels = [r.label for r in records]
    shuffled = list(rng.permutation(labels))
    scrambled = [
        SubjectRecord(r.id, r.demographics, r.psd, r.coherence, lab)
        for r, lab in zip(records, shuffled)
    ]
    cfg = TrainConfig(epochs=8, batch_size=16, lr=3e-3, workers=2, patience=4,
                      validation_fraction=0.1, seed=2)
    result = train(scrambled, FeatureSchema.full(), cfg)
    assert 0.04 <= result.evaluation["accuracy"] <= 0.25


def test_training_reproducible_for_fixed_seed_and_workers(tiny_training_set):
    records, schema = tiny_training_set
    cfg = TrainConfig(seed=3, **{**FAST_CFG, "epochs": 4})
    a = train(records, schema, cfg)
    b = train(records, schema, cfg)
    assert a.history == b.history
    for la, lb in zip(a.artifact.params, b.artifact.params):
        for name in la:
            assert np.array_equal(la[name], lb[name])
    assert a.evaluation == b.evaluation


def test_scaler_fits_training_split_only(tiny_training_set):
    records, schema = tiny_training_set
    cfg = TrainConfig(seed=4, **{**FAST_CFG, "epochs": 2})
    result = train(records, schema, cfg)
    # corrupt every test record wildly; the fitted scaler must not move
    test_ids = set(result.test_ids)
    mutated = [
        SubjectRecord(r.id, r.demographics, r.psd * (1000.0 if r.id in test_ids else 1.0),
                      r.coherence, r.label)
        for r in records
    ]
    result2 = train(mutated, schema, cfg)
    assert np.array_equal(result.artifact.scaler.psd_log_mean,
                          result2.artifact.scaler.psd_log_mean)
    assert np.array_equal(result.artifact.scaler.psd_log_std,
                          result2.artifact.scaler.psd_log_std)


def test_resampling_never_touches_test_proportions():
    lo, hi = band_contrast_specs()
    records = (generate_feature_records((lo,), per_class=60, seed=37)
               + generate_feature_records((hi,), per_class=20, seed=38))
    schema = FeatureSchema.full()
    cfg = TrainConfig(seed=5, **{**FAST_CFG, "epochs": 2})
    result = train(records, schema, cfg, resample_policy=ResamplePolicy(method="smote", k=3, seed=5))
    test_labels = [r.label for r in records if r.id in set(result.test_ids)]
    # 80/20 split of a 60/20 mix keeps the 3:1 test ratio exactly
    assert test_labels.count(lo.label) == 12
    assert test_labels.count(hi.label) == 4


def test_early_stopping_stops_before_epoch_budget(tiny_training_set):
    records, schema = tiny_training_set
    cfg = TrainConfig(epochs=200, batch_size=16, lr=5e-3, workers=1, patience=3,
                      validation_fraction=0.15, seed=6)
    result = train(records, schema, cfg)
    assert len(result.history) < 200


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def trained_result(tiny_training_set):
    records, schema = tiny_training_set
    cfg = TrainConfig(seed=7, **{**FAST_CFG, "epochs": 3})
    return train(records, schema, cfg)


def test_artifact_round_trip_predictions(tmp_path, tiny_training_set, trained_result):
    records, schema = tiny_training_set
    eval_records = generate_feature_records(band_contrast_specs(), per_class=50, seed=39)
    path = tmp_path / "model.artifact"
    save_artifact(trained_result.artifact, path)
    loaded = load_artifact(path)
    probs_a, codes_a = trained_result.artifact.predict_records(eval_records, schema)
    probs_b, codes_b = loaded.predict_records(eval_records, schema)
    assert np.array_equal(probs_a, probs_b)
    assert np.array_equal(codes_a, codes_b)
    assert loaded.version == trained_result.artifact.version


def test_artifact_tamper_detected(tmp_path, trained_result):
    path = tmp_path / "model.artifact"
    save_artifact(trained_result.artifact, path)
    doc = json.loads(path.read_text())
    blob = doc["payload"]["params"][0]["W"]["data"]
    flip = ("A" if blob[10] != "A" else "B")
    doc["payload"]["params"][0]["W"]["data"] = blob[:10] + flip + blob[11:]
    path.write_text(json.dumps(doc))
    with pytest.raises(ArtifactError, match="checksum"):
        load_artifact(path)


def test_artifact_version_checked(tmp_path, trained_result):
    path = tmp_path / "model.artifact"
    save_artifact(trained_result.artifact, path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ArtifactError, match="version"):
        load_artifact(path)


def test_schema_fingerprint_mismatch_rejected(tmp_path, tiny_training_set):
    records, schema = tiny_training_set
    psd_records = [SubjectRecord(r.id, r.demographics, r.psd, None, r.label) for r in records]
    psd_schema = FeatureSchema.psd_only()
    cfg = TrainConfig(seed=8, include_coherence=False, **{**FAST_CFG, "epochs": 2})
    result = train(psd_records, psd_schema, cfg)
    with pytest.raises(ArtifactError, match="fingerprint"):
        result.artifact.predict_records(records, schema)


def test_train_with_coherence_needs_full_schema(tiny_training_set):
    records, schema = tiny_training_set
    psd_records = [SubjectRecord(r.id, r.demographics, r.psd, None, r.label) for r in records]
    cfg = TrainConfig(seed=9, include_coherence=True, **{**FAST_CFG, "epochs": 2})
    with pytest.raises(ValueError, match="coherence"):
        train(psd_records, FeatureSchema.psd_only(), cfg)


def test_evaluate_rejects_empty(trained_result, tiny_training_set):
    _, schema = tiny_training_set
    with pytest.raises(ValueError, match="empty"):
        evaluate(trained_result.artifact, [], schema)


# ---------------------------------------------------------------------------
# ablation
# ---------------------------------------------------------------------------

def test_ablation_forced_equal_flags_is_deterministic(tiny_training_set):
    records, schema = tiny_training_set
    cfg = TrainConfig(seed=10, **{**FAST_CFG, "epochs": 3})
    report = ablation_compare(records, schema, cfg, flags=(True, True))
    assert report["with_coherence"] == report["without_coherence"]
    assert report["accuracy_delta"] == 0.0


def test_ablation_reports_paper_reference_without_asserting(tiny_training_set):
    records, schema = tiny_training_set
    cfg = TrainConfig(seed=11, **{**FAST_CFG, "epochs": 2})
    report = ablation_compare(records, schema, cfg)
    assert report["paper_reference"]["with_coherence"] == 0.964
    assert report["paper_reference"]["without_coherence"] == 0.887
    assert report["paper_reference"]["asserted"] is False
    assert set(report["per_class_delta"]) == set(report["with_coherence"]["labels"])


def test_ablation_requires_coherence(tiny_training_set):
    records, _ = tiny_training_set
    psd_records = [SubjectRecord(r.id, r.demographics, r.psd, None, r.label) for r in records]
    cfg = TrainConfig(seed=12, **{**FAST_CFG, "epochs": 2})
    with pytest.raises(ValueError, match="coherence"):
        ablation_compare(psd_records, FeatureSchema.psd_only(), cfg)


# ---------------------------------------------------------------------------
# vector/grid plumbing
# ---------------------------------------------------------------------------

def test_grids_match_assemble_tensor(tiny_training_set):
    from neurospect.dataset import assemble_tensor

    records, schema = tiny_training_set
    scaler = TensorScaler().fit(records[:50])
    X = records_to_matrix(records[:5], schema, scaler)
    grids, aux = matrix_to_grids(X, schema, include_coherence=True, dtype=np.float64)
    for i, r in enumerate(records[:5]):
        grid_ref, aux_ref = assemble_tensor(r, True, scaler)
        assert np.allclose(grids[i], grid_ref, atol=1e-12)
        assert np.allclose(aux[i], aux_ref, atol=1e-12)


def test_ablated_grids_zero_off_diagonal(tiny_training_set):
    records, schema = tiny_training_set
    scaler = TensorScaler().fit(records[:50])
    X = records_to_matrix(records[:3], schema, scaler)
    grids, _ = matrix_to_grids(X, schema, include_coherence=False)
    off = grids.copy()
    off[:, :, np.arange(19), np.arange(19)] = 0.0
    assert np.all(off == 0.0)
