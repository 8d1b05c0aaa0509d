"""Balanced meta-learning pre-training of a global initialization.

Each round builds a temporary global model by FedAvg-style aggregation, then
moves it one step along the gradient of a meta-loss that blends the total
query loss of the participants with the variance of their query losses:

    combined = gamma * sum_j L_j + (1 - gamma) * (1/m) * sum_j (L_j - mean)^2

The step differentiates only through the temporary global model (first
order); local training is never differentiated.
"""

import logging

import numpy as np

from fedinit.domain.baselines.algorithms import server_refiner
from fedinit.domain.coprefl.entities import BalancerConfig, MetaLossReport, PretrainResult
from fedinit.domain.data.entities import ClientShard, LabeledDataset
from fedinit.domain.data.partition import partition_equal
from fedinit.domain.errors import InvalidInputError
from fedinit.domain.federated.entities import (
    ClientUpdate,
    RngPolicy,
    RoundCallback,
    RoundConfig,
    StreamTag,
)
from fedinit.domain.federated.pool import SERIAL, ClientPool
from fedinit.domain.federated.runtime import (
    PostRound,
    aggregate,
    local_train,
    run_rounds,
)
from fedinit.domain.model.entities import GradientVector, ModelSpec, ParameterVector
from fedinit.domain.model.network import forward_loss, gradient

logger = logging.getLogger(__name__)


def query_evaluate(
    temp_global: ParameterVector,
    spec: ModelSpec,
    query_sets: list[LabeledDataset],
    pool: ClientPool | None = None,
) -> tuple[list[float], list[GradientVector]]:
    """Loss and exact gradient of the temporary global model on every query set.

    Raises:
        InvalidInputError: If no query set is given or one of them is empty.
    """
    if not query_sets:
        raise InvalidInputError("At least one query set is required")
    if any(len(q) == 0 for q in query_sets):
        raise InvalidInputError("Query sets must be non-empty")

    def evaluate(query: LabeledDataset) -> tuple[float, GradientVector]:
        batch = query.as_batch()
        loss, _ = forward_loss(temp_global, spec, batch)
        return loss, gradient(temp_global, spec, batch)

    results = (pool or SERIAL).map(evaluate, query_sets)
    return [loss for loss, _ in results], [grad for _, grad in results]


def meta_loss(losses: list[float], gamma: float) -> MetaLossReport:
    """Total, mean, population variance and gamma-blend of the query losses.

    Raises:
        InvalidInputError: If `losses` is empty.
    """
    if len(losses) == 0:
        raise InvalidInputError("At least one loss is required")
    values = np.asarray(losses, dtype=np.float64)
    total = float(values.sum())
    if np.all(values == values[0]):
        mean, variance = float(values[0]), 0.0
    else:
        mean = total / values.size
        variance = float(np.mean((values - mean) ** 2))
    return MetaLossReport(
        per_client_losses=tuple(float(v) for v in values),
        total=total,
        mean=mean,
        variance=variance,
        combined=gamma * total + (1.0 - gamma) * variance,
        gamma=gamma,
    )


def meta_gradient(losses: list[float], grads: list[GradientVector], gamma: float) -> GradientVector:
    """Exact gradient of `meta_loss(...).combined` at the shared parameter point.

    The variance part is (2/m) * sum_j (L_j - mean) * g_j; the term involving
    the mean gradient vanishes because the deviations sum to zero.

    Raises:
        InvalidInputError: On count or length mismatches.
    """
    if len(losses) != len(grads) or not grads:
        raise InvalidInputError("One gradient per loss is required")
    if any(g.shape != grads[0].shape for g in grads):
        raise InvalidInputError("All gradients must have the same length")
    report = meta_loss(losses, gamma)
    stacked = np.stack(grads)
    deviations = np.asarray(report.per_client_losses) - report.mean
    total_grad = stacked.sum(axis=0)
    variance_grad = (2.0 / len(grads)) * (deviations @ stacked)
    return gamma * total_grad + (1.0 - gamma) * variance_grad


def meta_update(temp_global: ParameterVector, meta_grad: GradientVector, zeta: float) -> ParameterVector:
    """One gradient step on the temporary global model.

    Raises:
        InvalidInputError: If the vectors differ in length.
    """
    if temp_global.shape != meta_grad.shape:
        raise InvalidInputError("Parameter and meta-gradient vectors differ in length")
    if zeta == 0:
        return temp_global.copy()
    return temp_global - zeta * meta_grad


def _meta_step(
    round_index: int,
    temp_global: ParameterVector,
    spec: ModelSpec,
    query_sets: list[LabeledDataset],
    bal: BalancerConfig,
    history: list[MetaLossReport],
    pool: ClientPool | None,
) -> ParameterVector:
    losses, grads = query_evaluate(temp_global, spec, query_sets, pool)
    report = meta_loss(losses, bal.gamma)
    history.append(report)
    logger.info(
        "Round %d meta-loss: total=%.6f mean=%.6f variance=%.6f combined=%.6f",
        round_index,
        report.total,
        report.mean,
        report.variance,
        report.combined,
    )
    return meta_update(temp_global, meta_gradient(losses, grads, bal.gamma), bal.meta_lr)


def _check_shards(shards: list[ClientShard]) -> None:
    if not shards:
        raise InvalidInputError("At least one client shard is required")
    for shard in shards:
        if shard.support.size == 0 or shard.query.size == 0:
            raise InvalidInputError(f"Client {shard.client_id} needs non-empty support and query sets")


def pretrain_scenario1(
    init: ParameterVector,
    spec: ModelSpec,
    shards: list[ClientShard],
    cfg: RoundConfig,
    bal: BalancerConfig,
    rng_policy: RngPolicy,
    *,
    post_round: PostRound | None = None,
    pool: ClientPool | None = None,
    on_round: RoundCallback | None = None,
) -> PretrainResult:
    """Pre-training with client data only.

    Participants train on their support sets; the temporary global model is
    meta-updated with their query losses and gradients.
    """
    _check_shards(shards)
    supports = [shard.support_data for shard in shards]
    queries = [shard.query_data for shard in shards]
    history: list[MetaLossReport] = []

    def client_step(broadcast: ParameterVector, client_id: int, rng: np.random.Generator) -> ClientUpdate:
        support = supports[client_id]
        params = local_train(
            broadcast, spec, support, cfg.local_iters, cfg.local_lr, cfg.batch_size, rng
        )
        loss, _ = forward_loss(params, spec, support.as_batch())
        return ClientUpdate(client_id, params, len(support), loss)

    def server_step(round_index: int, broadcast: ParameterVector, updates: list[ClientUpdate]) -> ParameterVector:
        temp_global = aggregate(updates)
        query_sets = [queries[u.client_id] for u in updates]
        return _meta_step(round_index, temp_global, spec, query_sets, bal, history, pool)

    final = run_rounds(
        init,
        len(shards),
        cfg,
        rng_policy,
        client_step,
        server_step,
        post_round=post_round,
        pool=pool,
        on_round=on_round,
    )
    return PretrainResult(final_params=final, history=history)


def pretrain_scenario2(
    init: ParameterVector,
    spec: ModelSpec,
    clients: list[LabeledDataset],
    server_data: LabeledDataset,
    cfg: RoundConfig,
    bal: BalancerConfig,
    rng_policy: RngPolicy,
    *,
    pool: ClientPool | None = None,
    on_round: RoundCallback | None = None,
) -> PretrainResult:
    """Pre-training with client data plus a small server dataset.

    Participants train on all their data; every round the server data is
    re-split into one equal partition per participant and those partitions
    play the role of the query sets.

    Raises:
        InvalidInputError: If the server holds fewer samples than participants.
    """
    if not clients:
        raise InvalidInputError("At least one client is required")
    if len(server_data) < cfg.participants_per_round:
        raise InvalidInputError(
            f"Server data ({len(server_data)} samples) is smaller than the "
            f"{cfg.participants_per_round} participants per round"
        )
    history: list[MetaLossReport] = []

    def client_step(broadcast: ParameterVector, client_id: int, rng: np.random.Generator) -> ClientUpdate:
        data = clients[client_id]
        params = local_train(
            broadcast, spec, data, cfg.local_iters, cfg.local_lr, cfg.batch_size, rng
        )
        loss, _ = forward_loss(params, spec, data.as_batch())
        return ClientUpdate(client_id, params, len(data), loss)

    def server_step(round_index: int, broadcast: ParameterVector, updates: list[ClientUpdate]) -> ParameterVector:
        temp_global = aggregate(updates)
        seed = rng_policy.derive_seed(StreamTag.SERVER_SPLIT, round_index)
        partitions = partition_equal(server_data, len(updates), seed)
        return _meta_step(round_index, temp_global, spec, partitions, bal, history, pool)

    final = run_rounds(
        init, len(clients), cfg, rng_policy, client_step, server_step, pool=pool, on_round=on_round
    )
    return PretrainResult(final_params=final, history=history)


def pretrain_coprefl_sgd(
    init: ParameterVector,
    spec: ModelSpec,
    shards: list[ClientShard],
    server_data: LabeledDataset,
    cfg: RoundConfig,
    bal: BalancerConfig,
    refine_iters: int,
    rng_policy: RngPolicy,
    *,
    pool: ClientPool | None = None,
    on_round: RoundCallback | None = None,
) -> PretrainResult:
    """Client-only meta pre-training followed each round by SGD on the server data.

    Raises:
        InvalidInputError: If the server data is empty.
    """
    if len(server_data) == 0:
        raise InvalidInputError("Server refinement needs non-empty server data")
    refine = server_refiner(spec, server_data, refine_iters, cfg.local_lr, cfg.batch_size, rng_policy)
    return pretrain_scenario1(
        init, spec, shards, cfg, bal, rng_policy, post_round=refine, pool=pool, on_round=on_round
    )
