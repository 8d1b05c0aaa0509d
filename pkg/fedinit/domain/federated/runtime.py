"""Synchronous round-based federated orchestration.

Every FL algorithm in the package is built on `run_rounds`: select the
round's participants, let each of them train from the same broadcast model
(possibly in parallel), then reduce their updates on the server in
ascending client order. Sharing this engine (and its random streams) is what
makes the degenerate configurations of the richer algorithms reproduce
FedAvg bit for bit.
"""

import logging
from collections.abc import Callable

import numpy as np

from fedinit.domain.data.entities import LabeledDataset
from fedinit.domain.errors import InvalidInputError
from fedinit.domain.federated.entities import (
    ClientUpdate,
    RngPolicy,
    RoundCallback,
    RoundConfig,
    RoundTelemetry,
    StreamTag,
)
from fedinit.domain.federated.pool import SERIAL, ClientPool
from fedinit.domain.model.entities import GradientVector, ModelSpec, ParameterVector
from fedinit.domain.model.network import forward_loss, gradient, sgd_step

logger = logging.getLogger(__name__)

ClientStep = Callable[[ParameterVector, int, np.random.Generator], ClientUpdate]
ServerStep = Callable[[int, ParameterVector, list[ClientUpdate]], ParameterVector]
PostRound = Callable[[int, ParameterVector], ParameterVector]
ExtraGradient = Callable[[ParameterVector], GradientVector]


def select_participants(
    n_clients: int, m: int, round_index: int, rng_policy: RngPolicy
) -> list[int]:
    """Uniform draw of m distinct clients for a round, sorted ascending.

    Raises:
        InvalidInputError: If m is not in [1, n_clients].
    """
    if not 1 <= m <= n_clients:
        raise InvalidInputError(f"Cannot select {m} participants out of {n_clients} clients")
    rng = rng_policy.stream(StreamTag.SELECTION, round_index)
    chosen = rng.choice(n_clients, size=m, replace=False)
    return sorted(int(c) for c in chosen)


def minibatch_sgd(
    start: ParameterVector,
    spec: ModelSpec,
    data: LabeledDataset,
    iters: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
    extra_gradient: ExtraGradient | None = None,
) -> ParameterVector:
    """Runs `iters` SGD steps over minibatches of one shuffle of the data.

    Minibatches are consecutive windows of a single permutation; when the
    permutation is exhausted the windows wrap around to its start. The batch
    size is clamped to the data size. `extra_gradient`, when given, is added
    to the data gradient at every step (e.g. a proximal term).

    Raises:
        InvalidInputError: If the data is empty.
    """
    n = len(data)
    if n == 0:
        raise InvalidInputError("Cannot train on an empty dataset")
    if iters == 0 or lr == 0:
        return start.copy()
    size = min(batch_size, n)
    if size < batch_size:
        logger.warning("Batch size %d clamped to shard size %d", batch_size, n)
    perm = rng.permutation(n)
    params = start
    for step in range(iters):
        rows = perm[np.arange(step * size, (step + 1) * size) % n]
        grad = gradient(params, spec, data.subset(rows).as_batch())
        if extra_gradient is not None:
            grad = grad + extra_gradient(params)
        params = sgd_step(params, grad, lr)
    return params


def local_train(
    start: ParameterVector,
    spec: ModelSpec,
    data: LabeledDataset,
    iters: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
) -> ParameterVector:
    """A client's local minibatch SGD from the broadcast model."""
    return minibatch_sgd(start, spec, data, iters, lr, batch_size, rng)


def weighted_average(params: list[ParameterVector], weights: list[float] | np.ndarray) -> ParameterVector:
    """Sum of w_j / sum(w) * p_j, accumulated in list order.

    Raises:
        InvalidInputError: On empty input, mismatched lengths or non-positive total weight.
    """
    if not params:
        raise InvalidInputError("Cannot aggregate an empty list of updates")
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[0] != len(params):
        raise InvalidInputError("One weight per update is required")
    if any(p.shape != params[0].shape for p in params):
        raise InvalidInputError("All updates must have the same parameter length")
    total = weights.sum()
    if not total > 0:
        raise InvalidInputError("Aggregation weights must have a positive sum")
    shares = weights / total
    out = shares[0] * params[0]
    for share, p in zip(shares[1:], params[1:], strict=True):
        out = out + share * p
    return out


def aggregate(updates: list[ClientUpdate]) -> ParameterVector:
    """Sample-weighted average of the participants' parameters."""
    return weighted_average(
        [u.params for u in updates], [float(u.n_samples) for u in updates]
    )


def run_rounds(
    init: ParameterVector,
    n_clients: int,
    cfg: RoundConfig,
    rng_policy: RngPolicy,
    client_step: ClientStep,
    server_step: ServerStep | None = None,
    *,
    post_round: PostRound | None = None,
    pool: ClientPool | None = None,
    on_round: RoundCallback | None = None,
) -> ParameterVector:
    """Generic synchronous FL loop.

    Args:
        init: Initial global model.
        n_clients: Size of the client population |M|.
        cfg: Round schedule; only `rounds` and `participants_per_round` are read here.
        rng_policy: Source of every per-round and per-client random stream.
        client_step: Trains one participant from the broadcast model.
        server_step: Reduces the round's updates into the next global model;
            plain `aggregate` when omitted.
        post_round: Optional server-side refinement applied after the reduction.
        pool: Executes client steps, in parallel when it has several threads.
        on_round: Receives a `RoundTelemetry` after every round.

    Returns:
        The global model after `cfg.rounds` rounds.
    """
    if n_clients < 1:
        raise InvalidInputError("At least one client is required")
    pool = pool or SERIAL
    global_params = init.copy()
    for round_index in range(cfg.rounds):
        participants = select_participants(
            n_clients, cfg.participants_per_round, round_index, rng_policy
        )
        broadcast = global_params

        def train(client_id: int, broadcast: ParameterVector = broadcast, round_index: int = round_index) -> ClientUpdate:
            rng = rng_policy.stream(StreamTag.CLIENT, round_index, client_id)
            return client_step(broadcast, client_id, rng)

        updates = pool.map(train, participants)
        if server_step is None:
            global_params = aggregate(updates)
        else:
            global_params = server_step(round_index, broadcast, updates)
        if post_round is not None:
            global_params = post_round(round_index, global_params)

        mean_loss = float(np.mean([u.loss for u in updates]))
        logger.debug(
            "Round %d: %d participants, mean client loss %.6f",
            round_index,
            len(participants),
            mean_loss,
        )
        if on_round is not None:
            on_round(RoundTelemetry(round_index, tuple(participants), mean_loss))
    return global_params


def run_fedavg(
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
    """FedAvg: local SGD on each participant's full data, weighted by its size."""
    if not clients:
        raise InvalidInputError("FedAvg needs at least one client")

    def client_step(broadcast: ParameterVector, client_id: int, rng: np.random.Generator) -> ClientUpdate:
        data = clients[client_id]
        params = local_train(
            broadcast, spec, data, cfg.local_iters, cfg.local_lr, cfg.batch_size, rng
        )
        loss, _ = forward_loss(params, spec, data.as_batch())
        return ClientUpdate(client_id, params, len(data), loss)

    return run_rounds(
        init,
        len(clients),
        cfg,
        rng_policy,
        client_step,
        post_round=post_round,
        pool=pool,
        on_round=on_round,
    )
