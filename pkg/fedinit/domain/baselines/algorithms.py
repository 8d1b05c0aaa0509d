"""Baseline pre-training algorithms and alternative local-update rules.

All federated baselines run on the shared round engine, so with their
distinguishing hyperparameter switched off they reproduce FedAvg exactly.
"""

import logging
import math

import numpy as np

from fedinit.domain.baselines.entities import FedProxConfig, QfflConfig
from fedinit.domain.data.entities import ClientShard, LabeledDataset
from fedinit.domain.errors import InvalidInputError
from fedinit.domain.federated.entities import (
    ClientUpdate,
    RngPolicy,
    RoundCallback,
    RoundConfig,
    StreamTag,
)
from fedinit.domain.federated.pool import ClientPool
from fedinit.domain.federated.runtime import (
    PostRound,
    local_train,
    minibatch_sgd,
    run_fedavg,
    run_rounds,
    weighted_average,
)
from fedinit.domain.model.entities import Batch, GradientVector, ModelSpec, ParameterVector
from fedinit.domain.model.network import forward_loss, gradient, sgd_step

logger = logging.getLogger(__name__)

QFFL_EPSILON = 1e-10


def pretrain_fedavg(
    init: ParameterVector,
    spec: ModelSpec,
    clients: list[LabeledDataset],
    cfg: RoundConfig,
    rng_policy: RngPolicy,
    *,
    post_round: PostRound | None = None,
    pool: ClientPool | None = None,
    on_round: RoundCallback | None = None,
) -> ParameterVector:
    """Standard FedAvg pre-training."""
    return run_fedavg(
        init, spec, clients, cfg, rng_policy, post_round=post_round, pool=pool, on_round=on_round
    )


def server_refine(
    global_params: ParameterVector,
    spec: ModelSpec,
    server_data: LabeledDataset,
    iters: int,
    lr: float,
    rng: np.random.Generator,
    batch_size: int = 32,
) -> ParameterVector:
    """Minibatch SGD on the server dataset.

    Raises:
        InvalidInputError: If the server data is empty.
    """
    if len(server_data) == 0:
        raise InvalidInputError("Server refinement needs non-empty server data")
    return minibatch_sgd(global_params, spec, server_data, iters, lr, batch_size, rng)


def server_refiner(
    spec: ModelSpec,
    server_data: LabeledDataset,
    iters: int,
    lr: float,
    batch_size: int,
    rng_policy: RngPolicy,
) -> PostRound:
    """Post-round hook refining every round's global model on the server data."""

    def refine(round_index: int, global_params: ParameterVector) -> ParameterVector:
        rng = rng_policy.stream(StreamTag.SERVER_REFINE, round_index)
        return server_refine(global_params, spec, server_data, iters, lr, rng, batch_size)

    return refine


def pretrain_fedavg_refined(
    init: ParameterVector,
    spec: ModelSpec,
    clients: list[LabeledDataset],
    server_data: LabeledDataset,
    cfg: RoundConfig,
    refine_iters: int,
    rng_policy: RngPolicy,
    *,
    pool: ClientPool | None = None,
    on_round: RoundCallback | None = None,
) -> ParameterVector:
    """Hybrid FedAvg: each round's aggregate is refined with SGD on the server data."""
    refine = server_refiner(spec, server_data, refine_iters, cfg.local_lr, cfg.batch_size, rng_policy)
    return run_fedavg(init, spec, clients, cfg, rng_policy, post_round=refine, pool=pool, on_round=on_round)


def pretrain_fedmeta(
    init: ParameterVector,
    spec: ModelSpec,
    shards: list[ClientShard],
    cfg: RoundConfig,
    inner_lr: float,
    outer_lr: float,
    rng_policy: RngPolicy,
    *,
    post_round: PostRound | None = None,
    pool: ClientPool | None = None,
    on_round: RoundCallback | None = None,
) -> ParameterVector:
    """First-order FedMeta: every participant adapts on support, then steps on its query loss.

    The server averages the meta-updated local models weighted by support size.
    """
    if not shards:
        raise InvalidInputError("At least one client shard is required")
    supports = [shard.support_data for shard in shards]
    queries = [shard.query_data for shard in shards]

    def client_step(broadcast: ParameterVector, client_id: int, rng: np.random.Generator) -> ClientUpdate:
        support = supports[client_id]
        adapted = local_train(broadcast, spec, support, cfg.local_iters, inner_lr, cfg.batch_size, rng)
        query_batch = queries[client_id].as_batch()
        params = sgd_step(adapted, gradient(adapted, spec, query_batch), outer_lr)
        loss, _ = forward_loss(params, spec, query_batch)
        return ClientUpdate(client_id, params, len(support), loss)

    return run_rounds(
        init, len(shards), cfg, rng_policy, client_step, post_round=post_round, pool=pool, on_round=on_round
    )


def qffl_aggregate(
    updates: list[ClientUpdate],
    per_client_train_loss: list[float],
    q: float,
    base: ParameterVector,
) -> ParameterVector:
    """Loss-power reweighting of the client deltas around `base`.

    base + sum_j w_j (p_j - base) / sum_j w_j with w_j = n_j (loss_j + eps)^q,
    evaluated as the equal weighted average sum_j w_j p_j / sum_j w_j so that
    q = 0 coincides with plain aggregation bit for bit.

    Raises:
        InvalidInputError: On count/length mismatches or negative losses.
    """
    if not updates or len(updates) != len(per_client_train_loss):
        raise InvalidInputError("One training loss per update is required")
    if any(loss < 0 for loss in per_client_train_loss):
        raise InvalidInputError("Training losses must be non-negative")
    if any(u.params.shape != base.shape for u in updates):
        raise InvalidInputError("Updates and base must have the same parameter length")
    weights = [
        float(u.n_samples) * (loss + QFFL_EPSILON) ** q
        for u, loss in zip(updates, per_client_train_loss, strict=True)
    ]
    return weighted_average([u.params for u in updates], weights)


def pretrain_qffl(
    init: ParameterVector,
    spec: ModelSpec,
    clients: list[LabeledDataset],
    cfg: RoundConfig,
    qcfg: QfflConfig,
    rng_policy: RngPolicy,
    *,
    post_round: PostRound | None = None,
    pool: ClientPool | None = None,
    on_round: RoundCallback | None = None,
) -> ParameterVector:
    """FedAvg loop whose aggregation up-weights clients with high post-training loss."""
    if not clients:
        raise InvalidInputError("At least one client is required")

    def client_step(broadcast: ParameterVector, client_id: int, rng: np.random.Generator) -> ClientUpdate:
        data = clients[client_id]
        params = local_train(broadcast, spec, data, cfg.local_iters, cfg.local_lr, cfg.batch_size, rng)
        loss, _ = forward_loss(params, spec, data.as_batch())
        return ClientUpdate(client_id, params, len(data), loss)

    def server_step(round_index: int, broadcast: ParameterVector, updates: list[ClientUpdate]) -> ParameterVector:
        return qffl_aggregate(updates, [u.loss for u in updates], qcfg.q, broadcast)

    return run_rounds(
        init, len(clients), cfg, rng_policy, client_step, server_step, post_round=post_round, pool=pool, on_round=on_round
    )


def centralized_schedule(n_samples: int, batch_size: int) -> int:
    """Number of SGD steps in one epoch over `n_samples`."""
    return math.ceil(n_samples / min(batch_size, n_samples))


def pretrain_centralized(
    init: ParameterVector,
    spec: ModelSpec,
    pooled: LabeledDataset,
    epochs: int,
    lr: float,
    batch_size: int,
    seed: int,
) -> ParameterVector:
    """Plain minibatch SGD over freshly shuffled epochs of the pooled data.

    Each epoch draws its shuffle from the same stream a single FedAvg client
    would use in the matching round, so a one-client FedAvg run with
    ceil(n / batch_size) local iterations per round coincides with it.

    Raises:
        InvalidInputError: If the pooled data is empty.
    """
    if len(pooled) == 0:
        raise InvalidInputError("Centralized training needs data")
    policy = RngPolicy(seed)
    steps = centralized_schedule(len(pooled), batch_size)
    params = init.copy()
    for epoch in range(epochs):
        rng = policy.stream(StreamTag.CLIENT, epoch, 0)
        params = local_train(params, spec, pooled, steps, lr, batch_size, rng)
        logger.debug("Epoch %d loss %.6f", epoch, forward_loss(params, spec, pooled.as_batch())[0])
    return params


def proximal_loss(
    params: ParameterVector, anchor: ParameterVector, spec: ModelSpec, batch: Batch, mu: float
) -> float:
    """Cross-entropy plus (mu / 2) * ||params - anchor||^2."""
    loss, _ = forward_loss(params, spec, batch)
    diff = params - anchor
    return loss + 0.5 * mu * float(diff @ diff)


def proximal_gradient(
    params: ParameterVector, anchor: ParameterVector, spec: ModelSpec, batch: Batch, mu: float
) -> GradientVector:
    """Gradient of `proximal_loss`."""
    return gradient(params, spec, batch) + mu * (params - anchor)


def fedprox_local_train(
    start: ParameterVector,
    global_anchor: ParameterVector,
    spec: ModelSpec,
    data: LabeledDataset,
    iters: int,
    lr: float,
    mu: float,
    batch_size: int,
    rng: np.random.Generator,
) -> ParameterVector:
    """Local SGD on the loss augmented with a proximal pull toward `global_anchor`.

    Raises:
        InvalidInputError: If mu is negative.
    """
    prox = FedProxConfig(mu)
    if prox.mu == 0:
        return local_train(start, spec, data, iters, lr, batch_size, rng)
    return minibatch_sgd(
        start,
        spec,
        data,
        iters,
        lr,
        batch_size,
        rng,
        extra_gradient=lambda params: prox.mu * (params - global_anchor),
    )
