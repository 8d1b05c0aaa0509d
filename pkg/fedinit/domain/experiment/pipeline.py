"""Turns a validated experiment configuration into data, initializations and suites.

Every random draw derives from `ExperimentConfig.seed`: the data streams, the
shared initial model and the downstream task seeds do not depend on the
pre-training method, so methods compared under one config see identical data
and identical downstream tasks.
"""

import logging
from dataclasses import dataclass

from fedinit.domain.baselines.algorithms import (
    pretrain_centralized,
    pretrain_fedavg,
    pretrain_fedmeta,
    pretrain_qffl,
    server_refiner,
)
from fedinit.domain.baselines.entities import QfflConfig
from fedinit.domain.coprefl.entities import BalancerConfig, PretrainResult
from fedinit.domain.coprefl.meta import (
    pretrain_coprefl_sgd,
    pretrain_scenario1,
    pretrain_scenario2,
)
from fedinit.domain.data.entities import (
    ClientShard,
    FederatedDataset,
    LabeledDataset,
    concat,
)
from fedinit.domain.data.partition import (
    build_federated_dataset,
    merge_server_into_clients,
    relabel,
    split_classes,
    support_query_split,
    synth_dataset,
)
from fedinit.domain.downstream.entities import (
    DownstreamAlgorithm,
    DownstreamRunParams,
    SuiteReport,
    TaskParams,
)
from fedinit.domain.downstream.harness import run_suite
from fedinit.domain.errors import InvalidInputError
from fedinit.domain.experiment.schema import ExperimentConfig
from fedinit.domain.federated.entities import (
    RngPolicy,
    RoundCallback,
    RoundConfig,
    StreamTag,
)
from fedinit.domain.federated.pool import ClientPool
from fedinit.domain.model.entities import ModelSpec, ParameterVector
from fedinit.domain.model.network import init_params

logger = logging.getLogger(__name__)

COPREFL_METHODS = ("coprefl_s1", "coprefl_s2", "coprefl_sgd")
HYBRID_METHODS = ("fedavg", "fedmeta", "qffl")


@dataclass(frozen=True)
class ExperimentData:
    """Model architecture, federated pre-training data and the held-out downstream pool."""

    spec: ModelSpec
    federated: FederatedDataset
    downstream_pool: LabeledDataset
    label_map: dict[int, int]


def model_spec(cfg: ExperimentConfig) -> ModelSpec:
    """Architecture whose head covers both pre-training classes and n-way tasks."""
    return ModelSpec(
        input_dim=cfg.dataset.dim,
        n_classes=max(cfg.dataset.pretrain_classes, cfg.downstream.n_way),
        hidden_dims=tuple(cfg.model.hidden_dims),
    )


def build_experiment_data(cfg: ExperimentConfig) -> ExperimentData:
    """Synthesizes the mixture, splits classes and shards the pre-training side."""
    policy = RngPolicy(cfg.seed)
    ds = cfg.dataset
    source = synth_dataset(
        ds.n_classes, ds.n_per_class, ds.dim, ds.separation, policy.derive_seed(StreamTag.DATA, 0)
    )
    split = split_classes(
        source, ds.pretrain_classes, policy.derive_seed(StreamTag.DATA, 1), ds.overlap_classes
    )
    pretrain_pool, label_map = relabel(split.pretrain)
    federated = build_federated_dataset(
        pretrain_pool,
        cfg.pretrain.n_clients,
        ds.server_frac,
        cfg.pretrain.support_frac,
        cfg.pretrain.distribution,
        cfg.pretrain.alpha,
        policy.derive_seed(StreamTag.DATA, 2),
    )
    logger.info(
        "Pre-training classes %s, %d downstream samples over classes %s",
        sorted(label_map),
        len(split.downstream),
        sorted(split.downstream.class_ids),
    )
    return ExperimentData(
        spec=model_spec(cfg),
        federated=federated,
        downstream_pool=split.downstream,
        label_map=label_map,
    )


def initial_params(cfg: ExperimentConfig, spec: ModelSpec) -> ParameterVector:
    """The random initialization every pre-training method starts from."""
    return init_params(spec, RngPolicy(cfg.seed).derive_seed(StreamTag.INIT, 0))


def _merged_clients(cfg: ExperimentConfig, fed: FederatedDataset) -> tuple[list[LabeledDataset], list[ClientShard]]:
    policy = RngPolicy(cfg.seed)
    clients = merge_server_into_clients(fed, policy.derive_seed(StreamTag.DATA, 3))
    shards = [
        support_query_split(
            data, cfg.pretrain.support_frac, policy.derive_seed(StreamTag.DATA, 4, client), client
        )
        for client, data in enumerate(clients)
    ]
    return clients, shards


def pretrain_method(
    cfg: ExperimentConfig,
    method: str,
    data: ExperimentData,
    *,
    gamma: float | None = None,
    pool: ClientPool | None = None,
    on_round: RoundCallback | None = None,
) -> PretrainResult:
    """Runs one pre-training method from the shared initialization.

    Args:
        cfg: Validated experiment configuration.
        method: One of the configured pre-training method names.
        data: Output of `build_experiment_data(cfg)`.
        gamma: Balancer override for the meta-learning methods.
        pool: Executes per-client work.
        on_round: Receives round telemetry.

    Raises:
        InvalidInputError: If the method needs server data that the config does not provide.

    Returns:
        The pre-trained parameters and, for meta-learning methods, the per-round meta-loss history.
    """
    p = cfg.pretrain
    spec = data.spec
    fed = data.federated
    policy = RngPolicy(cfg.seed)
    init = initial_params(cfg, spec)
    round_cfg = RoundConfig(p.rounds, p.participants, p.local_iters, p.local_lr, p.batch_size)
    needs_server = method in ("coprefl_s2", "coprefl_sgd") or (
        method in HYBRID_METHODS and p.hybrid != "none"
    )
    if needs_server and len(fed.server_data) == 0:
        raise InvalidInputError(f"Method {method} needs server data; set dataset.server_frac > 0")

    clients = fed.client_datasets
    shards = fed.clients
    post_round = None
    if method in HYBRID_METHODS and p.hybrid == "refine":
        post_round = server_refiner(
            spec, fed.server_data, p.server_refine_iters, p.local_lr, p.batch_size, policy
        )
    elif method in HYBRID_METHODS and p.hybrid == "merge":
        clients, shards = _merged_clients(cfg, fed)

    logger.info("Pre-training with %s for %d rounds", method, p.rounds)
    if method == "random":
        return PretrainResult(final_params=init)
    if method == "centralized":
        parts = clients + ([fed.server_data] if len(fed.server_data) else [])
        return PretrainResult(
            final_params=pretrain_centralized(
                init, spec, concat(parts), p.rounds, p.local_lr, p.batch_size, cfg.seed
            )
        )
    if method == "fedavg":
        return PretrainResult(
            final_params=pretrain_fedavg(
                init, spec, clients, round_cfg, policy, post_round=post_round, pool=pool, on_round=on_round
            )
        )
    if method == "fedmeta":
        return PretrainResult(
            final_params=pretrain_fedmeta(
                init,
                spec,
                shards,
                round_cfg,
                p.local_lr,
                p.meta_lr,
                policy,
                post_round=post_round,
                pool=pool,
                on_round=on_round,
            )
        )
    if method == "qffl":
        return PretrainResult(
            final_params=pretrain_qffl(
                init,
                spec,
                clients,
                round_cfg,
                QfflConfig(p.q),
                policy,
                post_round=post_round,
                pool=pool,
                on_round=on_round,
            )
        )

    bal = BalancerConfig(p.gamma if gamma is None else gamma, p.meta_lr)
    if method == "coprefl_s1":
        return pretrain_scenario1(init, spec, shards, round_cfg, bal, policy, pool=pool, on_round=on_round)
    if method == "coprefl_s2":
        return pretrain_scenario2(
            init, spec, clients, fed.server_data, round_cfg, bal, policy, pool=pool, on_round=on_round
        )
    if method == "coprefl_sgd":
        return pretrain_coprefl_sgd(
            init,
            spec,
            shards,
            fed.server_data,
            round_cfg,
            bal,
            p.server_refine_iters,
            policy,
            pool=pool,
            on_round=on_round,
        )
    raise InvalidInputError(f"Unknown pre-training method: {method}")


def suite_seed(cfg: ExperimentConfig) -> int:
    return RngPolicy(cfg.seed).derive_seed(StreamTag.TASK)


def evaluate_initialization(
    cfg: ExperimentConfig,
    spec: ModelSpec,
    params: ParameterVector,
    downstream_pool: LabeledDataset,
    *,
    pool: ClientPool | None = None,
) -> SuiteReport:
    """Scores an initialization on the configured downstream task suite."""
    d = cfg.downstream
    return run_suite(
        params,
        spec,
        downstream_pool,
        d.n_tasks,
        TaskParams(d.n_way, d.n_clients, d.distribution, d.alpha, d.train_frac),
        DownstreamRunParams(
            DownstreamAlgorithm(d.algorithm, d.mu, d.q),
            d.rounds,
            d.local_iters,
            d.lr,
            d.batch_size,
            d.histogram_bins,
        ),
        suite_seed(cfg),
        pool=pool,
    )
