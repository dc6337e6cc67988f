"""Item bank persistence and the alternating calibration loop.

The joint objective must be nondecreasing across half-steps; the loop raises
CalibrationError if a half-step ever lowers it, so a completed run doubles as
a monotonicity check.
"""

import numpy as np
import pytest

from ogive.calibration import (
    CalibrationConfig,
    ItemBank,
    _item_negative_objective,
    calibrate,
    recovery_correlations,
)
from ogive.dataio import DataError, Dataset, InteractionRecord
from ogive.irt_core import ItemParams, probit


def make_bank(params):
    return ItemBank({p.item_id: p for p in params})


def test_bank_csv_round_trip_exact(tmp_path):
    bank = make_bank([
        ItemParams("q1", 1.2345678901234567, -0.9876543210987654, "alg"),
        ItemParams("q2", 0.3, 2.0, "geo"),
    ])
    path = tmp_path / "bank.csv"
    bank.save_csv(path)
    loaded = ItemBank.load_csv(path)
    assert list(loaded.items) == ["q1", "q2"]
    for item_id in bank.items:
        # .17g serialization round-trips float64 bit for bit
        assert loaded[item_id].discrimination == bank[item_id].discrimination
        assert loaded[item_id].difficulty == bank[item_id].difficulty
        assert loaded[item_id].concept_id == bank[item_id].concept_id


def test_bank_load_errors(tmp_path):
    path = tmp_path / "bank.csv"
    path.write_text("wrong,header,entirely,here\n")
    with pytest.raises(DataError, match="header"):
        ItemBank.load_csv(path)
    path.write_text(
        "item_id,concept_id,discrimination,difficulty\n"
        "q1,all,1.0,0.0\n"
        "q1,all,1.5,0.5\n"
    )
    with pytest.raises(DataError, match="duplicate"):
        ItemBank.load_csv(path)
    path.write_text(
        "item_id,concept_id,discrimination,difficulty\nq1,all,-2.0,0.0\n"
    )
    with pytest.raises(DataError, match="line 2"):
        ItemBank.load_csv(path)


def test_bank_container_protocol():
    bank = make_bank([ItemParams("a", 1.0, 0.0, "x"), ItemParams("b", 2.0, 1.0, "y")])
    assert len(bank) == 2
    assert "a" in bank and "z" not in bank
    assert bank["b"].difficulty == 1.0
    assert bank.concepts() == ("x", "y")
    ids, alphas, betas, concepts = bank.arrays()
    assert ids == ["a", "b"]
    np.testing.assert_array_equal(alphas, [1.0, 2.0])
    np.testing.assert_array_equal(betas, [0.0, 1.0])
    assert concepts == ["x", "y"]


def test_config_validation():
    with pytest.raises(ValueError):
        CalibrationConfig(student_prior_variance=0.0)
    with pytest.raises(ValueError):
        CalibrationConfig(convergence_delta=0.0)
    with pytest.raises(ValueError):
        CalibrationConfig(discrimination_floor=-1.0)
    with pytest.raises(ValueError):
        CalibrationConfig(max_outer_rounds=-1)


def test_item_objective_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    cfg = CalibrationConfig()
    theta = rng.normal(size=60)
    correct = (rng.random(60) < 0.6).astype(float)
    x = np.array([0.3, -0.4])
    _, grad = _item_negative_objective(x, theta, correct, cfg)
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fp, _ = _item_negative_objective(x + e, theta, correct, cfg)
        fm, _ = _item_negative_objective(x - e, theta, correct, cfg)
        assert grad[k] == pytest.approx((fp - fm) / (2 * h), rel=1e-5, abs=1e-7)


def synthetic_training(seed, n_students, n_items, responses_each, bank=None):
    rng = np.random.default_rng(seed)
    if bank is None:
        bank = make_bank([
            ItemParams(f"q{j:03d}", rng.uniform(0.6, 2.0), rng.uniform(-1.5, 1.5))
            for j in range(n_items)
        ])
    ids = list(bank.items)
    theta = rng.normal(scale=np.sqrt(0.5), size=n_students)
    records = []
    for s in range(n_students):
        for t in range(responses_each):
            item = bank[ids[int(rng.integers(len(ids)))]]
            p = probit(item.discrimination * (theta[s] - item.difficulty))
            records.append(
                InteractionRecord(f"s{s:04d}", item.item_id, int(rng.random() < p), t)
            )
    return Dataset.from_records(records), bank


def test_calibrate_small_run_metadata_and_recovery():
    training, truth = synthetic_training(31, 150, 12, 40)
    fitted = calibrate(training, CalibrationConfig(max_outer_rounds=30))
    assert fitted.meta is not None
    assert 1 <= fitted.meta.rounds <= 30
    assert fitted.meta.final_delta is not None
    assert set(fitted.meta.response_counts) == set(truth.items)
    assert sum(fitted.meta.response_counts.values()) == training.n_responses
    assert np.isfinite(fitted.meta.objective)
    for p in fitted.items.values():
        assert p.discrimination >= CalibrationConfig().discrimination_floor
        assert p.concept_id == "all"
    corr = recovery_correlations(fitted, truth)
    assert corr["n_shared_items"] == 12
    assert corr["difficulty"] > 0.9
    assert corr["discrimination"] > 0.5


def test_calibrate_concept_map_applied():
    training, _ = synthetic_training(5, 40, 4, 15)
    cmap = {"q000": "alg", "q001": "alg", "q002": "geo"}
    fitted = calibrate(training, CalibrationConfig(max_outer_rounds=3), concept_map=cmap)
    assert fitted["q000"].concept_id == "alg"
    assert fitted["q002"].concept_id == "geo"
    assert fitted["q003"].concept_id == "all"


def test_calibrate_zero_rounds_returns_prior_means():
    training, _ = synthetic_training(8, 30, 5, 10)
    cfg = CalibrationConfig(max_outer_rounds=0)
    fitted = calibrate(training, cfg)
    for p in fitted.items.values():
        assert p.discrimination == pytest.approx(cfg.discrimination_prior_mean)
        assert p.difficulty == pytest.approx(cfg.difficulty_prior_mean)
    assert fitted.meta.rounds == 0
    assert fitted.meta.objective is None


def test_calibrate_empty_training_rejected():
    with pytest.raises(DataError, match="empty"):
        calibrate(Dataset.from_records([]))


def test_calibrate_initial_theta_shape_checked():
    training, _ = synthetic_training(9, 10, 3, 8)
    with pytest.raises(DataError, match="shape"):
        calibrate(training, initial_theta=np.zeros(3))


def test_calibrate_deterministic():
    training, _ = synthetic_training(12, 50, 6, 20)
    cfg = CalibrationConfig(max_outer_rounds=5)
    a = calibrate(training, cfg)
    b = calibrate(training, cfg)
    for item_id in a.items:
        assert a[item_id].discrimination == b[item_id].discrimination
        assert a[item_id].difficulty == b[item_id].difficulty


def test_recovery_correlations_perfect_and_errors():
    bank = make_bank([
        ItemParams("a", 1.0, -1.0), ItemParams("b", 1.5, 0.0), ItemParams("c", 2.0, 1.0),
    ])
    corr = recovery_correlations(bank, bank)
    assert corr["discrimination"] == pytest.approx(1.0)
    assert corr["difficulty"] == pytest.approx(1.0)
    other = make_bank([ItemParams("a", 1.0, 0.0), ItemParams("z", 1.0, 0.0)])
    with pytest.raises(DataError, match="2 shared"):
        recovery_correlations(bank, other)
