import copy

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from hern.cfa import synthesize_raw, RgbImage
from hern.checkpoint import (
    Checkpoint,
    apply_checkpoint,
    deserialize_checkpoint,
    load_checkpoint,
    model_from_checkpoint,
    save_checkpoint,
    serialize_checkpoint,
)
from hern.errors import CheckpointError, ConfigError, TrainingError
from hern.model import init_params
from hern.training import (
    AdamState,
    TrainSchedule,
    TrainStage,
    CheckpointKeeper,
    adam_state_from_checkpoint,
    adam_step,
    init_adam_state,
    l1_loss,
    progressive_train,
    train_stage,
)


def make_dataset(n=4, size=16, seed=0, sigma=0.0):
    samples = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        rgb = RgbImage(rng.uniform(0, 1, (size, size, 3)).astype(np.float32))
        samples.append(synthesize_raw(rgb, (2.0, 1.0, 1.5), sigma, i))
    return samples


class TestL1Loss:
    def test_identical_is_zero(self):
        x = torch.rand(2, 3, 4, 4)
        assert float(l1_loss(x, x)) == 0.0

    def test_constant_offset(self):
        x = torch.rand(2, 3, 4, 4, dtype=torch.float64)
        assert float(l1_loss(x + 0.1, x)) == pytest.approx(0.1, rel=1e-9)

    def test_matches_scalar_loop(self):
        a = torch.rand(2, 3, 4, 4, dtype=torch.float64)
        b = torch.rand(2, 3, 4, 4, dtype=torch.float64)
        total = 0.0
        for x, y in zip(a.flatten().tolist(), b.flatten().tolist()):
            total += abs(x - y)
        assert float(l1_loss(a, b)) == pytest.approx(total / a.numel(), rel=1e-12)

    @given(seed=st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=20, deadline=None)
    def test_symmetric_and_nonnegative(self, seed):
        g = torch.Generator().manual_seed(seed)
        a = torch.rand(1, 3, 4, 4, generator=g)
        b = torch.rand(1, 3, 4, 4, generator=g)
        assert float(l1_loss(a, b)) == float(l1_loss(b, a))
        assert float(l1_loss(a, b)) >= 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            l1_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 5))


class TestAdamStep:
    def test_zero_gradient_fixed_point(self):
        params = {"w": torch.tensor([1.0, -2.0])}
        state = init_adam_state(params)
        adam_step(params, {"w": torch.zeros(2)}, state, lr=0.1)
        assert torch.equal(params["w"], torch.tensor([1.0, -2.0]))

    def test_first_step_closed_form(self):
        # bias-corrected m_hat / sqrt(v_hat) equals 1 after one unit gradient
        params = {"w": torch.tensor([0.0], dtype=torch.float64)}
        state = init_adam_state(params)
        adam_step(params, {"w": torch.tensor([1.0], dtype=torch.float64)}, state, lr=0.01)
        expected = -0.01 * 1.0 / (1.0 + 1e-8)
        assert float(params["w"]) == pytest.approx(expected, rel=1e-12)

    def test_nan_gradient_names_parameter(self):
        params = {"layer.weight": torch.zeros(2)}
        state = init_adam_state(params)
        with pytest.raises(TrainingError, match="layer.weight"):
            adam_step(
                params, {"layer.weight": torch.tensor([float("nan"), 0.0])}, state, 0.1
            )

    def test_deterministic_trajectory(self):
        def run():
            torch.manual_seed(0)
            params = {"w": torch.randn(5)}
            state = init_adam_state(params)
            for t in range(10):
                g = torch.full((5,), 0.1 * (t + 1))
                adam_step(params, {"w": g}, state, lr=0.05)
            return params["w"]

        assert torch.equal(run(), run())


class TestSchedule:
    def test_paper_default(self):
        sched = TrainSchedule.paper()
        table = [
            (s.patch_size, s.epochs, s.learning_rate, s.batch_size)
            for s in sched.stages
        ]
        assert table == [
            (72, 48, 1e-4, 16),
            (144, 36, 1e-5, 4),
            (192, 24, 1e-5, 2),
            (224, 8, 1e-5, 2),
        ]

    def test_sizes_must_increase(self):
        with pytest.raises(ConfigError):
            TrainSchedule((TrainStage(32, 1, 1e-4, 1), TrainStage(16, 1, 1e-4, 1)))

    def test_stage_validation(self):
        with pytest.raises(ConfigError):
            TrainStage(18, 1, 1e-4, 1)
        with pytest.raises(ConfigError):
            TrainStage(16, 0, 1e-4, 1)
        with pytest.raises(ConfigError):
            TrainStage(16, 1, -1e-4, 1)


class TestCheckpointFormat:
    def make_checkpoint(self, tiny_config, seed=0):
        model = init_params(tiny_config, seed)
        params = {
            k: p.detach().numpy().astype(np.float32)
            for k, p in model.named_parameters()
        }
        state = init_adam_state(dict(model.named_parameters()))
        return Checkpoint(
            config=tiny_config,
            params=params,
            opt_m={k: t.numpy().astype(np.float32) for k, t in state.m.items()},
            opt_v={k: t.numpy().astype(np.float32) for k, t in state.v.items()},
            step=3,
            stage_index=1,
            epoch_index=2,
        )

    def test_round_trip_byte_identical(self, tiny_config, tmp_path):
        ckpt = self.make_checkpoint(tiny_config)
        path = tmp_path / "a.ckpt"
        save_checkpoint(ckpt, path)
        first = path.read_bytes()
        save_checkpoint(load_checkpoint(path), path)
        assert path.read_bytes() == first

    def test_round_trip_tensor_equality(self, tiny_config, tmp_path):
        ckpt = self.make_checkpoint(tiny_config)
        path = tmp_path / "a.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.config == ckpt.config
        assert (loaded.step, loaded.stage_index, loaded.epoch_index) == (3, 1, 2)
        for name, arr in ckpt.params.items():
            np.testing.assert_array_equal(loaded.params[name], arr)

    def test_corrupt_magic(self, tiny_config):
        data = serialize_checkpoint(self.make_checkpoint(tiny_config))
        with pytest.raises(CheckpointError, match="magic"):
            deserialize_checkpoint(b"XXXX" + data[4:])

    def test_truncation(self, tiny_config):
        data = serialize_checkpoint(self.make_checkpoint(tiny_config))
        with pytest.raises(CheckpointError, match="truncated"):
            deserialize_checkpoint(data[: len(data) // 2])

    def test_version_mismatch(self, tiny_config):
        data = bytearray(serialize_checkpoint(self.make_checkpoint(tiny_config)))
        data[4] = 99
        with pytest.raises(CheckpointError, match="version"):
            deserialize_checkpoint(bytes(data))

    def test_config_mismatch_names_tensor(self, tiny_config):
        from dataclasses import replace

        ckpt = self.make_checkpoint(tiny_config)
        other = init_params(replace(tiny_config, global_width=16, encoder_dim=16), 0)
        with pytest.raises(CheckpointError) as err:
            apply_checkpoint(other, ckpt)
        assert "shape mismatch" in str(err.value)
        assert "'" in str(err.value)  # names the offending tensor

    def test_model_from_checkpoint_restores_weights(self, tiny_config, tmp_path):
        model = init_params(tiny_config, 7)
        state = init_adam_state(dict(model.named_parameters()))
        from hern.training import _make_checkpoint

        ckpt = _make_checkpoint(model, state, 0, 0)
        restored = model_from_checkpoint(ckpt)
        for (n1, p1), (n2, p2) in zip(
            model.named_parameters(), restored.named_parameters()
        ):
            assert n1 == n2
            assert torch.equal(p1, p2)


class TestTrainStage:
    def test_zero_lr_leaves_params_unchanged(self, tiny_config):
        model = init_params(tiny_config, 0)
        before = {k: p.detach().clone() for k, p in model.named_parameters()}
        dataset = make_dataset(n=1, size=16)
        _, metrics = train_stage(model, dataset, TrainStage(16, 1, 0.0, 1), seed=0)
        for k, p in model.named_parameters():
            assert torch.equal(p, before[k])
        assert metrics[0]["mean_l1"] > 0

    def test_checkpoint_per_epoch(self, tiny_config, tmp_path):
        model = init_params(tiny_config, 0)
        keeper = CheckpointKeeper(tmp_path / "ckpts")
        train_stage(
            model,
            make_dataset(n=2, size=16),
            TrainStage(16, 3, 1e-3, 2),
            seed=0,
            keeper=keeper,
        )
        assert len(list((tmp_path / "ckpts").glob("*.ckpt"))) == 3

    def test_keeper_retention(self, tiny_config, tmp_path):
        model = init_params(tiny_config, 0)
        keeper = CheckpointKeeper(tmp_path / "ckpts", retain_last=5)
        train_stage(
            model,
            make_dataset(n=2, size=16),
            TrainStage(16, 8, 1e-3, 2),
            seed=0,
            keeper=keeper,
        )
        files = list((tmp_path / "ckpts").glob("*.ckpt"))
        assert len(files) <= 6  # last five plus possibly the best

    def test_empty_dataset_rejected(self, tiny_config):
        model = init_params(tiny_config, 0)
        with pytest.raises(TrainingError, match="empty"):
            train_stage(model, [], TrainStage(16, 1, 1e-3, 1), seed=0)

    def test_too_small_samples_rejected(self, tiny_config):
        model = init_params(tiny_config, 0)
        with pytest.raises(TrainingError, match="patch size"):
            train_stage(
                model, make_dataset(n=1, size=16), TrainStage(32, 1, 1e-3, 1), seed=0
            )

    def test_bit_deterministic(self, tiny_config):
        def run():
            model = init_params(tiny_config, 0)
            train_stage(
                model, make_dataset(n=3, size=16), TrainStage(16, 2, 1e-3, 2), seed=9
            )
            return {k: p.detach().clone() for k, p in model.named_parameters()}

        a, b = run(), run()
        for k in a:
            assert torch.equal(a[k], b[k])


class TestProgressiveTrain:
    def test_weight_carry_with_frozen_second_stage(self, tiny_config):
        dataset = make_dataset(n=2, size=32)
        schedule1 = TrainSchedule((TrainStage(16, 2, 1e-3, 2),))
        schedule2 = TrainSchedule(
            (TrainStage(16, 2, 1e-3, 2), TrainStage(32, 2, 0.0, 2))
        )
        m1 = init_params(tiny_config, 0)
        progressive_train(m1, dataset, schedule1, seed=4)
        m2 = init_params(tiny_config, 0)
        progressive_train(m2, dataset, schedule2, seed=4)
        for (k, p1), (_, p2) in zip(m1.named_parameters(), m2.named_parameters()):
            assert torch.equal(p1, p2), k

    def test_shapes_stable_across_transitions(self, tiny_config):
        dataset = make_dataset(n=2, size=32)
        model = init_params(tiny_config, 0)
        before = {k: tuple(p.shape) for k, p in model.named_parameters()}
        progressive_train(
            model,
            dataset,
            TrainSchedule((TrainStage(16, 1, 1e-3, 2), TrainStage(32, 1, 1e-3, 2))),
            seed=0,
        )
        after = {k: tuple(p.shape) for k, p in model.named_parameters()}
        assert before == after

    def test_metrics_timeline_tagged_by_stage(self, tiny_config, tmp_path):
        dataset = make_dataset(n=2, size=32)
        model = init_params(tiny_config, 0)
        timeline = progressive_train(
            model,
            dataset,
            TrainSchedule((TrainStage(16, 2, 1e-3, 2), TrainStage(32, 1, 1e-3, 2))),
            seed=0,
            out_dir=tmp_path,
        )
        assert [(r["stage"], r["epoch"]) for r in timeline] == [
            (0, 0),
            (0, 1),
            (1, 0),
        ]
        csv_text = (tmp_path / "metrics.csv").read_text()
        assert csv_text.startswith("stage,epoch,mean_l1,lr,patch_size,wall_seconds")

    def test_resume_equivalence(self, tiny_config, tmp_path):
        dataset = make_dataset(n=2, size=32)
        schedule = TrainSchedule(
            (TrainStage(16, 2, 1e-3, 2), TrainStage(32, 2, 1e-3, 2))
        )
        # uninterrupted run
        m_full = init_params(tiny_config, 0)
        progressive_train(m_full, dataset, schedule, seed=1, out_dir=tmp_path / "full")
        # interrupted after stage 0: reload its last checkpoint and resume
        m_half = init_params(tiny_config, 0)
        progressive_train(
            m_half,
            dataset,
            TrainSchedule((TrainStage(16, 2, 1e-3, 2),)),
            seed=1,
            out_dir=tmp_path / "half",
        )
        ckpt = load_checkpoint(tmp_path / "half" / "checkpoints" / "stage0_epoch1.ckpt")
        m_resumed = model_from_checkpoint(ckpt)
        state = adam_state_from_checkpoint(ckpt, m_resumed)
        progressive_train(
            m_resumed,
            dataset,
            schedule,
            seed=1,
            resume_cursor=(ckpt.stage_index, ckpt.epoch_index + 1),
            state=state,
        )
        for (k, p1), (_, p2) in zip(
            m_full.named_parameters(), m_resumed.named_parameters()
        ):
            assert torch.equal(p1, p2), k
