"""Metrics, learning-rate schedule, and training-loop mechanics."""

import numpy as np
import pytest

from hgmts.autodiff import ContractError, ShapeMismatch
from hgmts.data import SplitSpec
from hgmts.experiments import EvalReport, prepare_windows
from hgmts.metrics import mae, mse, mse_loss, persistence_forecast
from hgmts.model import ModelConfig, build_variant
from hgmts.synthetic import generate_coupled
from hgmts.training import (
    TrainConfig,
    TrainingDiverged,
    evaluate,
    lr_schedule,
    train,
)


class TestMetrics:
    def test_equal_arrays_score_zero(self):
        y = np.random.default_rng(0).uniform(-1, 1, (3, 4))
        assert mse(y, y) == 0.0
        assert mae(y, y) == 0.0

    def test_unit_error(self):
        assert mse([[0.0, 0.0]], [[1.0, 1.0]]) == 1.0
        assert mae([[0.0, 0.0]], [[1.0, 1.0]]) == 1.0

    def test_hand_arithmetic(self):
        y = [[1.0, 2.0], [3.0, 4.0]]
        y_hat = [[2.0, 2.0], [3.0, 2.0]]
        assert mse(y, y_hat) == 1.25
        assert mae(y, y_hat) == 0.75

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(1)
        y = rng.uniform(-5, 5, (6, 7))
        y_hat = rng.uniform(-5, 5, (6, 7))
        acc_sq = acc_abs = 0.0
        for i in range(6):
            for j in range(7):
                acc_sq += (y[i, j] - y_hat[i, j]) ** 2
                acc_abs += abs(y[i, j] - y_hat[i, j])
        assert abs(mse(y, y_hat) - acc_sq / 42) < 1e-12
        assert abs(mae(y, y_hat) - acc_abs / 42) < 1e-12

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatch):
            mse(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_loss_tensor_matches_metric(self):
        rng = np.random.default_rng(2)
        from hgmts.autodiff import Tensor

        pred = Tensor(rng.uniform(-1, 1, (3, 4)))
        target = rng.uniform(-1, 1, (3, 4))
        assert abs(mse_loss(pred, target).item() - mse(target, pred.values)) < 1e-15

    def test_persistence_repeats_last_value(self):
        x = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        np.testing.assert_array_equal(persistence_forecast(x, 2),
                                      [[3.0, 3.0], [6.0, 6.0]])


class TestLrSchedule:
    def test_paper_values(self):
        assert lr_schedule(0) == 1e-4
        assert lr_schedule(1) == 1e-4
        assert lr_schedule(4) == 2.5e-5

    def test_non_increasing_piecewise_constant(self):
        values = [lr_schedule(e) for e in range(12)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        for even in range(0, 12, 2):
            assert values[even] == values[even + 1]

    def test_negative_epoch_rejected(self):
        with pytest.raises(ContractError):
            lr_schedule(-1)


def small_setup(seed=0, variant="hgmts1", length=400):
    ds, _ = generate_coupled(n_series=4, length=length, seed=3)
    prepared = prepare_windows(ds, SplitSpec(0.7, 0.1, 0.2), 12, 4)
    cfg = ModelConfig(n_nodes=4, input_len=12, horizon=4, embed_dim=4, kernel=5,
                      stacks=1, rounds=1, gamma=1.0, seed=seed, variant=variant)
    return build_variant(cfg), prepared


class TestTrainLoop:
    def test_validation_improves_from_first_epoch(self):
        model, prepared = small_setup()
        result = train(model, prepared.train, prepared.val,
                       TrainConfig(lr0=1e-3, max_epochs=4, seed=0))
        assert result.history[-1].val_mse < result.history[0].val_mse

    def test_patience_stops_after_exactly_patience_plus_one_epochs(self):
        # frozen model (lr 0): the first epoch sets the best, nothing improves after
        model, prepared = small_setup()
        cfg = TrainConfig(lr0=0.0, patience=3, max_epochs=50, seed=0)
        result = train(model, prepared.train[:40], prepared.val[:10], cfg)
        assert result.stopped_early
        assert result.epochs_run == 4  # patience + 1

    def test_identical_seeds_give_bitwise_identical_history(self):
        a, prepared = small_setup(seed=7)
        b, _ = small_setup(seed=7)
        cfg = TrainConfig(max_epochs=3, seed=7)
        ra = train(a, prepared.train[:60], prepared.val[:10], cfg)
        rb = train(b, prepared.train[:60], prepared.val[:10], cfg)
        assert ra.history_csv() == rb.history_csv()

    def test_best_checkpoint_restored(self):
        model, prepared = small_setup()
        result = train(model, prepared.train[:60], prepared.val[:20],
                       TrainConfig(lr0=1e-3, max_epochs=5, seed=1))
        assert result.best_val_mse == min(r.val_mse for r in result.history)
        val_now, _ = evaluate(model, prepared.val[:20])
        np.testing.assert_allclose(val_now, result.best_val_mse, rtol=1e-12)

    def test_history_records_schedule(self):
        model, prepared = small_setup()
        result = train(model, prepared.train[:40], prepared.val[:10],
                       TrainConfig(max_epochs=5, seed=0))
        for row in result.history:
            assert row.lr == lr_schedule(row.epoch)

    @pytest.mark.filterwarnings("ignore:overflow")
    @pytest.mark.filterwarnings("ignore:invalid value")
    def test_divergence_aborts_with_diagnostics(self):
        model, prepared = small_setup(variant="hgmts4")
        for p in model.parameters():
            p.tensor.values = p.tensor.values * 1e200
        with pytest.raises(TrainingDiverged, match="epoch 0, batch 0"):
            train(model, prepared.train[:40], prepared.val[:10],
                  TrainConfig(max_epochs=1, seed=0))

    def test_empty_training_set_rejected(self):
        model, prepared = small_setup()
        with pytest.raises(ContractError):
            train(model, [], prepared.val, TrainConfig(max_epochs=1))

    def test_backcast_penalty_changes_training(self):
        a, prepared = small_setup(seed=5)
        b, _ = small_setup(seed=5)
        plain = train(a, prepared.train[:40], prepared.val[:10],
                      TrainConfig(max_epochs=2, seed=5))
        with_aux = train(b, prepared.train[:40], prepared.val[:10],
                         TrainConfig(max_epochs=2, seed=5, backcast_loss_weight=0.5))
        assert plain.history[0].train_loss != with_aux.history[0].train_loss

    def test_raw_space_evaluation_roundtrips_normalization(self):
        model, prepared = small_setup()
        norm_mse, _ = evaluate(model, prepared.test[:10])
        raw_mse, _ = evaluate(model, prepared.test[:10], prepared.stats, raw_space=True)
        assert raw_mse > 0 and norm_mse > 0 and raw_mse != norm_mse


class TestReportAveraging:
    def test_average_over_seeds_is_arithmetic_mean(self):
        rows = [
            {"dataset": "d", "variant": "hgmts1", "gamma": 0.5, "horizon": 4,
             "seed": s, "mse": m, "mae": a, "epochs": 3, "wall_s": 1.0}
            for s, m, a in [(0, 0.3, 0.2), (1, 0.6, 0.5), (2, 0.9, 0.8)]
        ]
        avg = EvalReport(rows).averaged()
        assert len(avg.rows) == 1
        np.testing.assert_allclose(avg.rows[0]["mse"], 0.6)
        np.testing.assert_allclose(avg.rows[0]["mae"], 0.5)
        assert avg.rows[0]["seed"] == "avg3"

    def test_csv_header(self):
        text = EvalReport([]).to_csv()
        assert text.splitlines()[0] == "dataset,variant,gamma,horizon,seed,mse,mae,epochs,wall_s"
