import numpy as np
import pytest

from fedinit.domain.coprefl.entities import BalancerConfig
from fedinit.domain.coprefl.meta import (
    meta_gradient,
    meta_loss,
    meta_update,
    pretrain_coprefl_sgd,
    pretrain_scenario1,
    pretrain_scenario2,
    query_evaluate,
)
from fedinit.domain.data.entities import LabeledDataset
from fedinit.domain.data.partition import synth_dataset
from fedinit.domain.errors import InvalidInputError
from fedinit.domain.federated.entities import RngPolicy, RoundConfig, StreamTag
from fedinit.domain.federated.runtime import local_train, select_participants
from fedinit.domain.model.entities import ModelSpec
from fedinit.domain.model.network import forward_loss, gradient, parameter_count

H = 1e-6


def combined_loss(params, spec, query_sets, gamma):
    losses = [forward_loss(params, spec, q.as_batch())[0] for q in query_sets]
    return meta_loss(losses, gamma).combined


class TestBalancerConfig:
    @pytest.mark.parametrize("kwargs", [{"gamma": -0.1}, {"gamma": 1.5}, {"gamma": 0.5, "meta_lr": -1.0}])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidInputError):
            BalancerConfig(**kwargs)


class TestMetaLoss:
    @pytest.mark.parametrize("gamma", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_blend_of_total_and_variance(self, gamma):
        # Act
        report = meta_loss([1.0, 2.0, 3.0, 6.0], gamma)

        # Assert
        assert report.total == pytest.approx(12.0, abs=1e-12)
        assert report.mean == pytest.approx(3.0, abs=1e-12)
        assert report.variance == pytest.approx(3.5, abs=1e-12)
        assert report.combined == pytest.approx(gamma * 12.0 + (1 - gamma) * 3.5, abs=1e-12)
        assert report.per_client_losses == (1.0, 2.0, 3.0, 6.0)

    def test_equal_losses_have_zero_variance(self):
        report = meta_loss([0.1] * 7, 0.3)

        assert report.variance == 0.0
        assert report.mean == 0.1

    def test_single_loss(self):
        report = meta_loss([2.5], 0.5)

        assert report.variance == 0.0
        assert report.combined == pytest.approx(1.25)

    def test_empty(self):
        with pytest.raises(InvalidInputError):
            meta_loss([], 0.5)

    def test_order_of_clients_does_not_matter(self):
        # Arrange
        rng = np.random.default_rng(5)
        losses = list(rng.uniform(0.1, 3.0, size=6))
        order = rng.permutation(6)

        # Act
        report = meta_loss(losses, 0.4)
        shuffled = meta_loss([losses[i] for i in order], 0.4)

        # Assert
        assert shuffled.total == pytest.approx(report.total, abs=1e-12)
        assert shuffled.variance == pytest.approx(report.variance, abs=1e-12)
        assert shuffled.combined == pytest.approx(report.combined, abs=1e-12)


class TestMetaGradient:
    def test_matches_directional_differences(self):
        # Arrange
        rng = np.random.default_rng(31)

        for trial in range(60):
            dim = int(rng.integers(1, 5))
            classes = int(rng.integers(2, 5))
            spec = ModelSpec(input_dim=dim, n_classes=classes)
            params = rng.standard_normal(parameter_count(spec))
            query_sets = [
                LabeledDataset(
                    rng.standard_normal((n, dim)),
                    rng.integers(0, classes, size=n),
                )
                for n in rng.integers(1, 6, size=int(rng.integers(2, 9)))
            ]
            gamma = (0.0, 0.3, 0.7, 1.0)[trial % 4]
            direction = rng.standard_normal(params.size)
            direction /= np.linalg.norm(direction)

            # Act
            losses, grads = query_evaluate(params, spec, query_sets)
            analytic = float(meta_gradient(losses, grads, gamma) @ direction)
            numeric = (
                combined_loss(params + H * direction, spec, query_sets, gamma)
                - combined_loss(params - H * direction, spec, query_sets, gamma)
            ) / (2 * H)

            # Assert
            assert abs(analytic - numeric) <= 1e-5 * max(abs(analytic), abs(numeric)) + 1e-7

    def test_pure_total_is_the_sum_of_gradients(self):
        grads = [np.array([1.0, 0.0]), np.array([0.5, 2.0])]

        np.testing.assert_allclose(meta_gradient([1.0, 3.0], grads, 1.0), [1.5, 2.0])

    def test_pure_variance_of_two_clients(self):
        # losses (2, 4): deviations (-1, 1), so the gradient is g2 - g1
        grads = [np.array([1.0, 0.0]), np.array([0.5, 2.0])]

        np.testing.assert_allclose(meta_gradient([2.0, 4.0], grads, 0.0), [-0.5, 2.0])

    @pytest.mark.parametrize("gamma", [0.0, 0.3, 1.0])
    def test_order_of_clients_does_not_matter(self, gamma):
        # Arrange
        rng = np.random.default_rng(17)
        losses = list(rng.uniform(0.1, 3.0, size=5))
        grads = list(rng.standard_normal((5, 7)))
        order = rng.permutation(5)

        # Act
        result = meta_gradient(losses, grads, gamma)
        shuffled = meta_gradient([losses[i] for i in order], [grads[i] for i in order], gamma)

        # Assert
        np.testing.assert_allclose(shuffled, result, atol=1e-12)

    def test_count_mismatch(self):
        with pytest.raises(InvalidInputError):
            meta_gradient([1.0, 2.0], [np.zeros(3)], 0.5)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            meta_gradient([1.0, 2.0], [np.zeros(3), np.zeros(2)], 0.5)


class TestMetaUpdate:
    def test_step(self):
        np.testing.assert_allclose(meta_update(np.array([1.0, 1.0]), np.array([2.0, -2.0]), 0.25), [0.5, 1.5])

    def test_zero_step_returns_a_copy(self):
        # Arrange
        params = np.array([1.0, -2.0])

        # Act
        result = meta_update(params, np.array([np.nan, 1.0]), 0.0)

        # Assert
        np.testing.assert_array_equal(result, params)
        assert result is not params

    def test_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            meta_update(np.zeros(2), np.zeros(3), 0.1)


class TestQueryEvaluate:
    def test_no_query_sets(self, toy_spec, toy_init):
        with pytest.raises(InvalidInputError):
            query_evaluate(toy_init, toy_spec, [])

    def test_empty_query_set(self, toy_spec, toy_init, toy_dataset):
        with pytest.raises(InvalidInputError):
            query_evaluate(toy_init, toy_spec, [toy_dataset, toy_dataset.subset([])])


class TestPretrainScenarios:
    def test_scenario1_reports_every_round(self, toy_spec, toy_init, toy_shards):
        # Arrange
        cfg = RoundConfig(rounds=3, participants_per_round=3, local_iters=2, local_lr=0.1, batch_size=4)

        # Act
        result = pretrain_scenario1(toy_init, toy_spec, toy_shards, cfg, BalancerConfig(0.5, 0.05), RngPolicy(4))

        # Assert
        assert len(result.history) == 3
        assert result.final_params.shape == toy_init.shape
        for report in result.history:
            assert len(report.per_client_losses) == 3
            assert np.isfinite(report.combined)
            assert report.variance >= 0.0

    def test_scenario2_reports_every_round(self, toy_spec, toy_init, toy_clients, toy_dataset):
        # Arrange
        cfg = RoundConfig(rounds=2, participants_per_round=4, local_iters=2, local_lr=0.1, batch_size=4)
        server = toy_dataset.subset(list(range(8)))

        # Act
        result = pretrain_scenario2(
            toy_init, toy_spec, toy_clients, server, cfg, BalancerConfig(0.0, 0.05), RngPolicy(4)
        )

        # Assert
        assert len(result.history) == 2
        assert all(len(r.per_client_losses) == 4 for r in result.history)

    def test_scenario2_needs_a_server_sample_per_participant(self, toy_spec, toy_init, toy_clients, toy_dataset):
        cfg = RoundConfig(rounds=1, participants_per_round=4)

        with pytest.raises(InvalidInputError):
            pretrain_scenario2(
                toy_init, toy_spec, toy_clients, toy_dataset.subset([0, 1, 2]), cfg, BalancerConfig(0.5), RngPolicy(0)
            )

    def test_server_refinement_needs_server_data(self, toy_spec, toy_init, toy_shards):
        cfg = RoundConfig(rounds=1, participants_per_round=2)

        with pytest.raises(InvalidInputError):
            pretrain_coprefl_sgd(
                toy_init, toy_spec, toy_shards, LabeledDataset.empty(4), cfg, BalancerConfig(0.5), 1, RngPolicy(0)
            )

    def test_scenario1_is_deterministic(self, toy_spec, toy_init, toy_shards):
        cfg = RoundConfig(rounds=2, participants_per_round=3, local_iters=2, local_lr=0.1, batch_size=4)
        bal = BalancerConfig(0.3, 0.1)

        first = pretrain_scenario1(toy_init, toy_spec, toy_shards, cfg, bal, RngPolicy(8))
        second = pretrain_scenario1(toy_init, toy_spec, toy_shards, cfg, bal, RngPolicy(8))

        np.testing.assert_array_equal(first.final_params, second.final_params)

    def test_meta_step_moves_towards_lower_combined_loss(self):
        # Arrange
        data = synth_dataset(n_classes=3, n_per_class=20, dim=2, separation=3.0, seed=1)
        spec = ModelSpec(input_dim=2, n_classes=3)
        params = np.zeros(parameter_count(spec))
        query_sets = [data.subset(list(range(i, 60, 4))) for i in range(4)]
        losses, grads = query_evaluate(params, spec, query_sets)

        # Act
        stepped = meta_update(params, meta_gradient(losses, grads, 0.5), 1e-3)

        # Assert
        assert combined_loss(stepped, spec, query_sets, 0.5) < combined_loss(params, spec, query_sets, 0.5)

    def test_small_total_loss_step_descends(self):
        rng = np.random.default_rng(23)
        failures = 0

        for _ in range(20):
            # Arrange
            dim = int(rng.integers(2, 6))
            classes = int(rng.integers(2, 5))
            spec = ModelSpec(input_dim=dim, n_classes=classes)
            params = rng.standard_normal(parameter_count(spec))
            query_sets = [
                LabeledDataset(rng.standard_normal((n, dim)), rng.integers(0, classes, size=n))
                for n in rng.integers(3, 9, size=int(rng.integers(2, 6)))
            ]
            losses, grads = query_evaluate(params, spec, query_sets)

            # Act
            stepped = meta_update(params, meta_gradient(losses, grads, 1.0), 1e-4)

            # Assert
            failures += combined_loss(stepped, spec, query_sets, 1.0) >= combined_loss(
                params, spec, query_sets, 1.0
            )

        assert failures <= 1


class TestSingleParticipantRounds:
    def test_scenario1_round_is_train_then_query_step(self, toy_spec, toy_init, toy_shards):
        # Arrange
        cfg = RoundConfig(rounds=1, participants_per_round=1, local_iters=3, local_lr=0.1, batch_size=4)
        policy = RngPolicy(12)
        (client,) = select_participants(len(toy_shards), 1, 0, policy)
        shard = toy_shards[client]
        trained = local_train(
            toy_init,
            toy_spec,
            shard.support_data,
            cfg.local_iters,
            cfg.local_lr,
            cfg.batch_size,
            policy.stream(StreamTag.CLIENT, 0, client),
        )
        expected = meta_update(trained, gradient(trained, toy_spec, shard.query_data.as_batch()), 0.05)

        # Act
        result = pretrain_scenario1(toy_init, toy_spec, toy_shards, cfg, BalancerConfig(1.0, 0.05), policy)

        # Assert
        np.testing.assert_allclose(result.final_params, expected, rtol=0, atol=1e-12)

    def test_scenario2_round_uses_the_whole_server_set(self, toy_spec, toy_init, toy_clients, toy_dataset):
        # Arrange
        cfg = RoundConfig(rounds=1, participants_per_round=1, local_iters=3, local_lr=0.1, batch_size=4)
        policy = RngPolicy(12)
        server = toy_dataset.subset(list(range(0, 60, 6)))
        (client,) = select_participants(len(toy_clients), 1, 0, policy)
        trained = local_train(
            toy_init,
            toy_spec,
            toy_clients[client],
            cfg.local_iters,
            cfg.local_lr,
            cfg.batch_size,
            policy.stream(StreamTag.CLIENT, 0, client),
        )
        expected = trained - 0.05 * 0.5 * gradient(trained, toy_spec, server.as_batch())

        # Act
        result = pretrain_scenario2(
            toy_init, toy_spec, toy_clients, server, cfg, BalancerConfig(0.5, 0.05), policy
        )

        # Assert
        assert result.history[0].variance == 0.0
        np.testing.assert_allclose(result.final_params, expected, rtol=0, atol=1e-10)
