import numpy as np
import pytest

from neurospect.dataset import FeatureSchema
from neurospect.pipeline import TrainConfig, train
from neurospect.synthdata import band_contrast_specs, generate_feature_records


def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when == "call" and "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        print(f"\n[{'PASS' if report.passed else 'FAIL'}] {name}", flush=True)


@pytest.fixture(scope="session")
def served_model():
    """A small trained artifact plus matching records/schema, shared by the
    service and CLI tests."""
    records = generate_feature_records(band_contrast_specs(), per_class=40, seed=77)
    schema = FeatureSchema.full()
    cfg = TrainConfig(epochs=6, batch_size=16, lr=3e-3, workers=2, patience=4,
                      validation_fraction=0.1, seed=77)
    result = train(records, schema, cfg)
    return result, records, schema
