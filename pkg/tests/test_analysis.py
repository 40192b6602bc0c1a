import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperinv.analysis import (
    DASH,
    BoundInputs,
    bound_sanity_check,
    confidence_term,
    estimate_norm_bounds,
    format_descriptor,
    generalization_bound,
    interpolation_sweep,
    loss_descriptor_sweep,
    make_report,
    measure_invariance,
    parse_csv,
    ramp_loss,
    rows_to_csv,
    spearman,
    summarize,
)
from hyperinv.data import SYNTHETIC_FAMILIES, TransformFamily, subsample_per_class
from hyperinv.hypernet import PlainEncoder, TaskHead
from hyperinv.numerics import Tensor
from hyperinv.training import DOWNSTREAM, DownstreamResult, downstream_fit_discrete
from hyperinv.training.downstream import features_of

from conftest import TINY_ARCH

FAST = DOWNSTREAM.but(epochs=6, lr=1e-2)


# -- measured invariance -----------------------------------------------------------

def test_identity_transform_gives_similarity_one(tiny_bundle, tiny_target):
    fams = [TransformFamily("rotation", 0.0), TransformFamily("color", 0.0)]
    curve = measure_invariance(tiny_bundle, tiny_target[1], fams)
    for f in ("rotation", "color"):
        assert np.allclose(curve.series(f), 1.0, atol=1e-12)


def test_random_encoder_similarity_in_range(tiny_target):
    model = PlainEncoder(TINY_ARCH, rng=np.random.default_rng(3))
    curve = measure_invariance(model, tiny_target[1], SYNTHETIC_FAMILIES, n_aug=2)
    for f in curve.families:
        s = curve.series(f)
        assert np.all((s >= -1) & (s <= 1))
    assert len(curve.points) == 11
    assert curve.n_samples == 2 * len(tiny_target[1])


def test_measure_rejects_empty(tiny_bundle):
    with pytest.raises(ValueError, match="at least one"):
        measure_invariance(tiny_bundle, np.zeros((0, 3, 28, 28)), SYNTHETIC_FAMILIES)
    with pytest.raises(ValueError):
        measure_invariance(tiny_bundle, np.zeros((2, 3, 28, 28)), SYNTHETIC_FAMILIES, n_aug=0)


def test_interpolation_sweep_endpoints():
    ts, sweep = interpolation_sweep(11)
    assert ts[0] == 0 and ts[-1] == 1
    assert sweep[0].tolist() == [0.0, 1.0] and sweep[-1].tolist() == [1.0, 0.0]


def test_standard_error_shrinks_with_samples(tiny_bundle, tiny_target):
    # 4x the (image, draw) pairs should halve the standard error
    train = tiny_target[0]
    fam = [TransformFamily("color")]
    sweep = [np.array([0.5, 0.5])]
    small = measure_invariance(tiny_bundle, train.subset(np.arange(30)), fam, sweep, n_aug=1, seed=1)
    big = measure_invariance(tiny_bundle, train.subset(np.arange(120)), fam, sweep, n_aug=1, seed=1)
    ratio = small.points[0].sem["color"] / big.points[0].sem["color"]
    assert 1.4 < ratio < 2.8


def test_measure_is_read_only(tiny_bundle, tiny_target):
    before = tiny_bundle.digest()
    measure_invariance(tiny_bundle, tiny_target[1], SYNTHETIC_FAMILIES, interpolation_sweep(3)[1])
    assert tiny_bundle.digest() == before


# -- loss sweep ---------------------------------------------------------------------

def test_single_point_sweep_matches_discrete_fit(tiny_bundle, tiny_target):
    data = subsample_per_class(tiny_target[0], 4, "digit", 0)
    (pt,) = loss_descriptor_sweep(tiny_bundle, data, "digit", 10, [[1.0, 0.0]], FAST)
    _, _, metrics = downstream_fit_discrete(tiny_bundle, data, "digit", 10, [1.0, 0.0], FAST)
    assert pt.loss == metrics["loss_history"][-1]
    assert pt.accuracy == metrics["train"]["accuracy"]


# -- bound ----------------------------------------------------------------------------

def test_bound_trivial_case():
    for n in (1, 7, 1000):
        assert generalization_bound(BoundInputs(0.5, 0.0, 0.0, n, 1, 1.0)) == 0.5


def test_bound_worked_example():
    got = generalization_bound(BoundInputs(0.0, 1.0, 1.0, 100, 4, 0.05))
    assert abs(got - 0.644063) < 1e-6


def _reference_bound(risk, X, B, n, card, delta):
    # written out longhand as a spreadsheet would
    a = 2 * X * B / n ** 0.5
    b = 3 * (math.log(card) - math.log(delta)) ** 0.5 / (2 * n) ** 0.5
    return risk + a + b


def test_bound_matches_reference_on_random_inputs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        args = (rng.uniform(0, 1), rng.uniform(0, 10), rng.uniform(0, 10), int(rng.integers(1, 10_000)),
                int(rng.integers(1, 64)), rng.uniform(1e-4, 1))
        assert generalization_bound(BoundInputs(*args)) == pytest.approx(_reference_bound(*args), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5000), st.integers(1, 100), st.floats(0.001, 1.0))
def test_bound_monotone(n, card, delta):
    b = lambda n, card: generalization_bound(BoundInputs(0.1, 1.0, 1.0, n, card, delta))
    assert b(n, card + 1) > b(n, card)
    assert b(n + 1, card) < b(n, card)


@pytest.mark.parametrize("delta", [0.0, -0.1, 1.5])
def test_bound_rejects_bad_delta(delta):
    with pytest.raises(ValueError, match="delta"):
        BoundInputs(0.0, 1.0, 1.0, 10, 4, delta)


def test_fixed_feature_variant_difference():
    n, card, delta = 50, 4, 0.05
    gap = (generalization_bound(BoundInputs(0.2, 1, 1, n, card, delta))
           - generalization_bound(BoundInputs(0.2, 1, 1, n, 1, delta)))
    expected = 3 * (math.sqrt(math.log(card / delta)) - math.sqrt(math.log(1 / delta))) / math.sqrt(2 * n)
    assert gap == pytest.approx(expected, abs=1e-12)
    assert confidence_term(1, delta, n) < confidence_term(card, delta, n)


def test_ramp_loss_values():
    logits = np.array([[3.0, 0.0], [0.5, 0.0], [0.0, 2.0]])
    assert ramp_loss(logits, np.array([0, 0, 0])).tolist() == [0.0, 0.5, 1.0]


# -- norm bounds -----------------------------------------------------------------------

def test_zero_head_has_zero_norm(tiny_bundle, tiny_target):
    _, B = estimate_norm_bounds(tiny_bundle, [1.0, 1.0], tiny_target[1], TaskHead.zeros(TINY_ARCH.feature_dim, 10))
    assert B == 0.0


def test_feature_scaling_scales_X(tiny_bundle, tiny_target):
    head = TaskHead(Tensor(np.ones((TINY_ARCH.feature_dim, 10))))
    X, _ = estimate_norm_bounds(tiny_bundle, [1.0, 0.0], tiny_target[1], head)
    scaled = copy.deepcopy(tiny_bundle)
    # relu(c * (gamma xhat + beta)) = c * relu(...) for c > 0
    for k, p in scaled.model.norm.params.items():
        p.data = 2.5 * p.data
    X2, _ = estimate_norm_bounds(scaled, [1.0, 0.0], tiny_target[1], head)
    assert X2 == pytest.approx(2.5 * X, rel=1e-12)


def test_X_matches_per_image_scan(tiny_bundle, tiny_target):
    images = tiny_target[0].images[:100]
    model = tiny_bundle.frozen_model()
    head = TaskHead.zeros(TINY_ARCH.feature_dim, 10)
    X, _ = estimate_norm_bounds(tiny_bundle, [0.0, 1.0], images, head)
    best = 0.0
    for x in images:
        f = model.features(np.array([0.0, 1.0]), x[None], mode="eval").data[0]
        best = max(best, math.sqrt(sum(v * v for v in f)))
    assert X == pytest.approx(best, rel=1e-12)


def test_sanity_check_report(tiny_bundle, tiny_target):
    before = tiny_bundle.digest()
    rep = bound_sanity_check(tiny_bundle, tiny_target[0], tiny_target[1], "digit", 10, trials=3, n_per_class=3,
                             config=FAST)
    assert rep["cardinality"] == 4 and len(rep["trials"]) == 3
    assert rep["violations"] == 0
    for t in rep["trials"]:
        assert t["bound_fixed"] < t["bound"]
        assert {"empirical_risk", "test_risk"} <= set(t)
    assert tiny_bundle.digest() == before


# -- report -----------------------------------------------------------------------------

def test_descriptor_percent_format():
    assert format_descriptor([0.61, 0.65]) == "[61, 65]"


def _result(n, seed, acc, base=None):
    m = {"accuracy": acc, "loss": 1.0}
    return DownstreamResult(task="digit", label_field="digit", n_per_class=n, seed=seed, descriptor=[0.6, 0.7],
                            rounded=[1.0, 1.0], train_continuous=m, test_continuous=m, train_discrete=m,
                            test_discrete=m, baseline_train=None,
                            baseline_test=None if base is None else {"accuracy": base, "loss": 1.0},
                            descriptor_path=[], loss_history=[])


def test_missing_baseline_renders_dash():
    _, text = make_report([_result(10, 0, 0.3), _result(10, 1, 0.5)])
    assert DASH in text
    assert "40.0 ± 10.0" in text


def test_csv_round_trip_is_exact():
    rs = [_result(n, s, 0.1 + 0.07 * s + n / 1000, 0.2 / (s + 1)) for n in (10, 20) for s in range(3)]
    rows = summarize(rs)
    assert parse_csv(rows_to_csv(rows)) == rows


# -- stats -------------------------------------------------------------------------------

def test_spearman_matches_scipy():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.integers(0, 6, 15).astype(float)  # with ties
        y = x + rng.normal(0, 2, 15)
        assert spearman(x, y) == pytest.approx(scipy_stats.spearmanr(x, y)[0], abs=1e-12)
    assert math.isnan(spearman([1, 1, 1], [1, 2, 3]))
