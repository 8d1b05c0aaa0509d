"""Downstream FL tasks: sampling, training from a given initialization, evaluation."""

import logging

import numpy as np

from fedinit.domain.baselines.algorithms import fedprox_local_train, qffl_aggregate
from fedinit.domain.data.entities import LabeledDataset
from fedinit.domain.data.partition import (
    dirichlet_partition,
    iid_partition,
    relabel,
    select_classes,
    support_query_split,
)
from fedinit.domain.downstream.entities import (
    WORST_PERCENTILES,
    DownstreamAlgorithm,
    DownstreamRunParams,
    SuiteReport,
    TaskClient,
    TaskMetrics,
    TaskParams,
    TaskSpec,
)
from fedinit.domain.errors import InvalidInputError
from fedinit.domain.federated.entities import (
    ClientUpdate,
    RngPolicy,
    RoundCallback,
    RoundConfig,
    StreamTag,
)
from fedinit.domain.federated.pool import SERIAL, ClientPool
from fedinit.domain.federated.runtime import ServerStep, local_train, run_rounds
from fedinit.domain.model.entities import ModelSpec, ParameterVector
from fedinit.domain.model.network import accuracy, forward_loss, parameter_count

logger = logging.getLogger(__name__)


def sample_task(
    downstream_pool: LabeledDataset,
    n_way: int,
    n_clients: int,
    distribution: str,
    seed: int,
    alpha: float = 0.5,
    train_frac: float = 0.8,
) -> TaskSpec:
    """Draws a class subset and spreads its samples over the task's clients.

    Labels are remapped to 0..n_way-1 in ascending original class order.

    Raises:
        InvalidInputError: If the pool has too few classes or samples.
    """
    available = np.array(sorted(downstream_pool.class_ids), dtype=np.int64)
    if available.size < n_way:
        raise InvalidInputError(
            f"Downstream pool has {available.size} classes, task needs {n_way}"
        )
    seeds = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF).generate_state(3, np.uint64)
    rng = np.random.default_rng(int(seeds[0]))
    classes = tuple(sorted(int(c) for c in rng.choice(available, size=n_way, replace=False)))
    task_data, _ = relabel(select_classes(downstream_pool, classes))
    if len(task_data) < 2 * n_clients:
        raise InvalidInputError(
            f"{len(task_data)} samples cannot give {n_clients} clients a train and a test split"
        )

    if distribution == "iid":
        parts = iid_partition(task_data, n_clients, int(seeds[1]))
    elif distribution == "dirichlet":
        parts = dirichlet_partition(task_data, n_clients, alpha, int(seeds[1]), min_size=2)
    else:
        raise InvalidInputError(f"Unknown distribution: {distribution}")

    split_seeds = np.random.SeedSequence(int(seeds[2])).generate_state(n_clients, np.uint64)
    clients = []
    for client_id, part in enumerate(parts):
        shard = support_query_split(part, train_frac, int(split_seeds[client_id]), client_id)
        clients.append(TaskClient(client_id, shard.support_data, shard.query_data))
    return TaskSpec(classes=classes, clients=clients, distribution=distribution, alpha=alpha)


def run_downstream(
    init: ParameterVector,
    spec: ModelSpec,
    task: TaskSpec,
    algorithm: DownstreamAlgorithm,
    rounds: int,
    local_iters: int,
    lr: float,
    rng_policy: RngPolicy,
    *,
    batch_size: int = 32,
    pool: ClientPool | None = None,
    on_round: RoundCallback | None = None,
) -> ParameterVector:
    """Trains the task from `init` with every client participating in every round.

    Raises:
        InvalidInputError: If the model does not fit the task.
    """
    if init.shape != (parameter_count(spec),):
        raise InvalidInputError("Initial parameters do not match the model spec")
    if spec.n_classes < len(task.classes):
        raise InvalidInputError(
            f"Model head has {spec.n_classes} outputs, task needs {len(task.classes)}"
        )
    cfg = RoundConfig(rounds, len(task.clients), local_iters, lr, batch_size)
    trains = [client.train for client in task.clients]

    def client_step(broadcast: ParameterVector, client_id: int, rng: np.random.Generator) -> ClientUpdate:
        data = trains[client_id]
        if algorithm.name == "fedprox":
            params = fedprox_local_train(
                broadcast, broadcast, spec, data, local_iters, lr, algorithm.mu, batch_size, rng
            )
        else:
            params = local_train(broadcast, spec, data, local_iters, lr, batch_size, rng)
        loss, _ = forward_loss(params, spec, data.as_batch())
        return ClientUpdate(client_id, params, len(data), loss)

    server_step: ServerStep | None = None
    if algorithm.name == "qffl":

        def server_step(round_index: int, broadcast: ParameterVector, updates: list[ClientUpdate]) -> ParameterVector:
            return qffl_aggregate(updates, [u.loss for u in updates], algorithm.q, broadcast)

    return run_rounds(
        init, len(trains), cfg, rng_policy, client_step, server_step, pool=pool, on_round=on_round
    )


def task_metrics(per_client_acc: list[float]) -> TaskMetrics:
    """Mean, population variance and worst-k% means of client accuracies.

    Worst-k% is the mean of the ceil(k * |G| / 100) lowest accuracies.
    """
    accs = np.asarray(per_client_acc, dtype=np.float64)
    if accs.size == 0:
        raise InvalidInputError("At least one client accuracy is required")
    mean = float(accs.mean())
    variance = float(np.mean((accs - mean) ** 2))
    ordered = np.sort(accs)
    worst: dict[int, float] = {}
    ceiling = mean
    for k in sorted(WORST_PERCENTILES, reverse=True):
        count = -(-k * accs.size // 100)
        # Exact prefix means are monotone; clamp one-ulp rounding inversions.
        ceiling = min(float(ordered[:count].mean()), ceiling)
        worst[k] = ceiling
    return TaskMetrics(
        per_client_acc=tuple(float(a) for a in accs),
        mean_acc=mean,
        acc_variance=variance,
        worst_k=dict(sorted(worst.items())),
    )


def evaluate_task(final: ParameterVector, spec: ModelSpec, task: TaskSpec) -> TaskMetrics:
    """Accuracy of the final model on every client's test split."""
    return task_metrics(
        [accuracy(final, spec, client.test.as_batch()) for client in task.clients]
    )


def run_suite(
    init: ParameterVector,
    spec: ModelSpec,
    downstream_pool: LabeledDataset,
    n_tasks: int,
    task_params: TaskParams,
    run_params: DownstreamRunParams,
    master_seed: int,
    *,
    pool: ClientPool | None = None,
) -> SuiteReport:
    """Samples, trains and evaluates `n_tasks` tasks and averages their metrics.

    Task seeds depend only on `master_seed` and the task index, so two
    initializations evaluated with the same seed see the same tasks. Tasks
    run in parallel on `pool`; clients within a task run serially.

    Raises:
        InvalidInputError: If `n_tasks` is not positive.
    """
    if n_tasks < 1:
        raise InvalidInputError("At least one downstream task is required")
    policy = RngPolicy(master_seed)

    def run_task(task_index: int) -> tuple[TaskSpec, TaskMetrics]:
        task = sample_task(
            downstream_pool,
            task_params.n_way,
            task_params.n_clients,
            task_params.distribution,
            policy.derive_seed(StreamTag.TASK, task_index),
            alpha=task_params.alpha,
            train_frac=task_params.train_frac,
        )
        final = run_downstream(
            init,
            spec,
            task,
            run_params.algorithm,
            run_params.rounds,
            run_params.local_iters,
            run_params.lr,
            policy.child(StreamTag.CLIENT, task_index),
            batch_size=run_params.batch_size,
        )
        metrics = evaluate_task(final, spec, task)
        logger.info(
            "Task %d classes=%s mean_acc=%.4f variance=%.6f",
            task_index,
            list(task.classes),
            metrics.mean_acc,
            metrics.acc_variance,
        )
        return task, metrics

    results = (pool or SERIAL).map(run_task, range(n_tasks))
    per_task = [metrics for _, metrics in results]
    pooled = np.concatenate([np.asarray(m.per_client_acc) for m in per_task])
    counts, edges = np.histogram(pooled, bins=run_params.histogram_bins, range=(0.0, 1.0))
    return SuiteReport(
        per_task=per_task,
        task_classes=[task.classes for task, _ in results],
        mean_acc=float(np.mean([m.mean_acc for m in per_task])),
        acc_variance=float(np.mean([m.acc_variance for m in per_task])),
        worst_k={k: float(np.mean([m.worst_k[k] for m in per_task])) for k in WORST_PERCENTILES},
        histogram_edges=tuple(float(e) for e in edges),
        histogram_counts=tuple(int(c) for c in counts),
    )
