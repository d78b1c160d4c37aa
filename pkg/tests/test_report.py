import json

import numpy as np
import pytest

from surfparc.ai.gradcheck import tiny_run_config
from surfparc.ai.network import COARSE, ParcellationModel
from surfparc.ai.subject import Subject
from surfparc.errors import DataError
from surfparc.utils.export import export_predictions
from surfparc.utils.mesh_io import read_labels
from surfparc.utils.report import build_report, confusion_matrix, evaluate, majority_baseline


@pytest.fixture(scope='module')
def striped(sphere2):
    """Two interleaved labels on a 162-vertex sphere."""
    labels = np.arange(sphere2.num_vertices) % 2
    return Subject.build('striped', sphere2, np.zeros((sphere2.num_vertices, 3)), labels, pool_depth=1)


def test_perfect_prediction(striped):
    """Test the report of a perfect prediction."""
    report = build_report(COARSE, 2, [striped], {'striped': striped.labels.copy()})
    assert report.mean_dice == pytest.approx(1.0, abs=1e-6)
    assert report.std_dice == 0.0


def test_single_class_prediction(striped):
    """Test the report when every vertex gets one label."""
    report = build_report(COARSE, 2, [striped], {'striped': np.zeros(162, dtype=np.int64)})
    assert report.region_dice['striped'] == pytest.approx([2.0 / 3.0, 0.0], abs=1e-6)
    assert report.mean_dice == pytest.approx(1.0 / 3.0, abs=1e-6)
    np.testing.assert_array_equal(report.confusion, [[81, 0], [81, 0]])


def test_subject_order_does_not_matter(striped, small_subject):
    """Test that subject order does not change the report."""
    rng = np.random.default_rng(0)
    predictions = {
        striped.subject_id: rng.integers(0, 3, size=striped.num_vertices),
        small_subject.subject_id: rng.integers(0, 3, size=small_subject.num_vertices),
    }
    forward = build_report(COARSE, 3, [striped, small_subject], predictions)
    backward = build_report(COARSE, 3, [small_subject, striped], predictions)
    assert forward.to_json() == backward.to_json()
    assert forward.confusion.sum() == striped.num_vertices + small_subject.num_vertices


def test_report_json(striped, tmp_path):
    """Test saving a report as JSON."""
    report = build_report(COARSE, 2, [striped], {'striped': striped.labels.copy()})
    path = tmp_path / 'report.json'
    report.save(str(path))
    data = json.loads(path.read_text())
    assert data['stage'] == COARSE
    assert [r['label'] for r in data['regions']] == [0, 1]
    assert data['subjects'] == {'striped': pytest.approx(1.0, abs=1e-6)}
    assert data['components']['striped'] >= 2


def test_unlabelled_subject_rejected(sphere2):
    """Test rejection of unlabelled subjects."""
    subject = Subject.build('blind', sphere2, np.zeros((sphere2.num_vertices, 3)), pool_depth=1)
    with pytest.raises(DataError):
        build_report(COARSE, 2, [subject], {'blind': np.zeros(sphere2.num_vertices, dtype=np.int64)})


def test_confusion_matrix_rows_are_truth():
    """Test that confusion matrix rows are ground-truth labels."""
    truth = np.array([0, 0, 1, 2])
    pred = np.array([0, 1, 1, 1])
    np.testing.assert_array_equal(confusion_matrix(truth, pred, 3), [[1, 1, 0], [0, 1, 0], [0, 1, 0]])


def test_majority_baseline(striped, sphere2):
    """Test the majority-label baseline."""
    labels = np.ones(sphere2.num_vertices, dtype=np.int64)
    labels[:10] = 0
    mostly_one = Subject.build('ones', sphere2, np.zeros((sphere2.num_vertices, 3)), labels, pool_depth=1)
    report = majority_baseline([mostly_one], [striped], 2)
    assert report.stage == 'baseline'
    assert report.region_dice['striped'] == pytest.approx([0.0, 2.0 / 3.0], abs=1e-6)


def test_evaluate_uses_model_predictions(small_subject):
    """Test that evaluate scores the model's predictions."""
    model = ParcellationModel(tiny_run_config(), seed=0)
    output = model.coarse.mlp.output_layer
    output.weight.value[:] = 0.0
    output.bias.value = np.array([0.0, 5.0, 0.0])
    report = evaluate(model, [small_subject], COARSE)
    ones = np.ones(small_subject.num_vertices, dtype=np.int64)
    expected = build_report(COARSE, 3, [small_subject], {small_subject.subject_id: ones})
    assert report.to_json() == expected.to_json()


def test_export_predictions(small_subject, tmp_path):
    """Test exporting labels, probabilities and a VTK mesh."""
    model = ParcellationModel(tiny_run_config(), seed=0)
    paths = export_predictions(model, small_subject, str(tmp_path), COARSE)
    labels = read_labels(paths.labels, expected_rows=42, num_labels=3)
    probs = np.loadtxt(paths.probabilities)
    assert probs.shape == (42, 3)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_array_equal(labels, np.argmax(probs, axis=1))
    vtk = open(paths.mesh).read().splitlines()
    assert 'POINTS 42 double' in vtk
    assert 'POLYGONS 80 320' in vtk
    assert 'SCALARS labels int 1' in vtk
