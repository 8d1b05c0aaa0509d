"""Synthetic data generation and every split used by the simulator.

All functions are deterministic in their seed and conserve samples: the
returned parts are disjoint and together cover the input exactly.
"""

import csv
import logging
import math
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from fedinit.domain.data.entities import (
    ClassSplit,
    ClientShard,
    FederatedDataset,
    LabeledDataset,
    concat,
)
from fedinit.domain.errors import InvalidInputError

logger = logging.getLogger(__name__)


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF))


def round_half_up(value: float) -> int:
    """Rounds x.5 upward, unlike Python's banker's rounding."""
    return int(math.floor(value + 0.5))


def class_directions(n_classes: int, dim: int) -> NDArray[np.float64]:
    """Fixed unit vectors, one per class, independent of any data seed."""
    directions = _rng(n_classes * 1_000_003 + dim).standard_normal((n_classes, dim))
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def synth_dataset(
    n_classes: int, n_per_class: int, dim: int, separation: float, seed: int
) -> LabeledDataset:
    """Gaussian mixture with unit-variance classes centered at separation * u_c.

    Raises:
        InvalidInputError: If the sizes are out of range.
    """
    if n_classes < 2 or n_per_class < 1 or dim < 1:
        raise InvalidInputError("Need n_classes >= 2, n_per_class >= 1 and dim >= 1")
    if separation < 0:
        raise InvalidInputError("separation must be non-negative")
    rng = _rng(seed)
    means = separation * class_directions(n_classes, dim)
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), n_per_class)
    features = means[labels] + rng.standard_normal((labels.size, dim))
    return LabeledDataset(features=features, labels=labels)


def select_classes(ds: LabeledDataset, classes: list[int] | frozenset[int]) -> LabeledDataset:
    """All samples whose label belongs to `classes`, in source order."""
    mask = np.isin(ds.labels, np.asarray(sorted(classes), dtype=np.int64))
    return ds.subset(np.flatnonzero(mask))


def relabel(ds: LabeledDataset) -> tuple[LabeledDataset, dict[int, int]]:
    """Maps the dataset's classes onto 0..k-1 in ascending class-id order."""
    mapping = {cls: index for index, cls in enumerate(sorted(ds.class_ids))}
    labels = np.array([mapping[int(label)] for label in ds.labels], dtype=np.int64)
    return LabeledDataset(features=ds.features, labels=labels, sample_ids=ds.sample_ids), mapping


def split_classes(
    ds: LabeledDataset, n_pretrain_classes: int, seed: int, overlap: int = 0
) -> ClassSplit:
    """Sends a uniformly random class subset to pre-training, the rest downstream.

    With `overlap > 0`, that many pre-training classes are also made available
    downstream; the samples of each shared class are split in half (first
    half to pre-training) so the sample counts are still conserved.

    Raises:
        InvalidInputError: If the class count or overlap is out of range.
    """
    classes = np.array(sorted(ds.class_ids), dtype=np.int64)
    if not 1 <= n_pretrain_classes < classes.size:
        raise InvalidInputError(
            f"n_pretrain_classes must lie in [1, {classes.size - 1}], got {n_pretrain_classes}"
        )
    if not 0 <= overlap <= n_pretrain_classes:
        raise InvalidInputError("overlap must lie in [0, n_pretrain_classes]")
    rng = _rng(seed)
    chosen = rng.permutation(classes)
    pretrain_classes = chosen[:n_pretrain_classes]
    shared = set(int(c) for c in pretrain_classes[:overlap])

    pretrain_rows: list[int] = []
    downstream_rows: list[int] = []
    pretrain_set = set(int(c) for c in pretrain_classes)
    for cls in classes:
        rows = np.flatnonzero(ds.labels == cls)
        if int(cls) in shared:
            half = rows.size // 2
            pretrain_rows.extend(rows[:half])
            downstream_rows.extend(rows[half:])
        elif int(cls) in pretrain_set:
            pretrain_rows.extend(rows)
        else:
            downstream_rows.extend(rows)
    return ClassSplit(
        pretrain=ds.subset(np.sort(np.asarray(pretrain_rows, dtype=np.int64))),
        downstream=ds.subset(np.sort(np.asarray(downstream_rows, dtype=np.int64))),
    )


def server_client_split(
    ds: LabeledDataset, server_frac: float, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Random sample-level split into (client pool, server data)."""
    if not 0 <= server_frac < 1:
        raise InvalidInputError("server_frac must lie in [0, 1)")
    n_server = round_half_up(server_frac * len(ds))
    perm = _rng(seed).permutation(len(ds))
    server_rows = np.sort(perm[:n_server])
    client_rows = np.sort(perm[n_server:])
    return ds.subset(client_rows), ds.subset(server_rows)


def _largest_remainder(proportions: NDArray[np.float64], total: int) -> NDArray[np.int64]:
    raw = proportions * total
    counts = np.floor(raw).astype(np.int64)
    remainder = total - int(counts.sum())
    if remainder > 0:
        # Stable sort keeps lower client indices first among equal fractions.
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:remainder]] += 1
    return counts


def dirichlet_partition(
    ds: LabeledDataset, n_clients: int, alpha: float, seed: int, min_size: int = 1
) -> list[LabeledDataset]:
    """Non-IID label partition: each class is spread by a Dirichlet(alpha) draw.

    Fractional allocations are turned into counts by largest-remainder
    rounding. Clients holding fewer than `min_size` samples are then repaired
    by moving one sample at a time from the currently largest client.

    Raises:
        InvalidInputError: If there are fewer samples than required.
    """
    if n_clients < 1:
        raise InvalidInputError("n_clients must be at least 1")
    if alpha <= 0:
        raise InvalidInputError("alpha must be positive")
    if n_clients * min_size > len(ds):
        raise InvalidInputError(
            f"Cannot give {n_clients} clients {min_size} samples each from {len(ds)} samples"
        )
    rng = _rng(seed)
    assignments: list[list[int]] = [[] for _ in range(n_clients)]
    for cls in sorted(ds.class_ids):
        rows = rng.permutation(np.flatnonzero(ds.labels == cls))
        proportions = rng.dirichlet(np.full(n_clients, alpha))
        counts = _largest_remainder(proportions, rows.size)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        for client in range(n_clients):
            assignments[client].extend(int(r) for r in rows[offsets[client] : offsets[client + 1]])

    while True:
        sizes = [len(rows) for rows in assignments]
        needy = [client for client, size in enumerate(sizes) if size < min_size]
        if not needy:
            break
        donor = int(np.argmax(sizes))
        assignments[needy[0]].append(assignments[donor].pop())
        logger.debug("Moved one sample from client %d to client %d", donor, needy[0])

    return [ds.subset(np.asarray(sorted(rows), dtype=np.int64)) for rows in assignments]


def iid_partition(ds: LabeledDataset, n_clients: int, seed: int) -> list[LabeledDataset]:
    """Uniform shuffle dealt round-robin; sizes differ by at most one."""
    return partition_equal(ds, n_clients, seed)


def support_query_split(shard_data: LabeledDataset, support_frac: float, seed: int, client_id: int = 0) -> ClientShard:
    """Random support/query split with |support| = round(support_frac * n).

    The support size is clamped to [1, n - 1] so both parts are non-empty.

    Raises:
        InvalidInputError: If the shard holds fewer than two samples.
    """
    n = len(shard_data)
    if n < 2:
        raise InvalidInputError(f"Client {client_id} needs at least 2 samples, has {n}")
    if not 0 < support_frac < 1:
        raise InvalidInputError("support_frac must lie in (0, 1)")
    n_support = min(max(round_half_up(support_frac * n), 1), n - 1)
    perm = _rng(seed).permutation(n)
    return ClientShard(
        client_id=client_id,
        data=shard_data,
        support=np.sort(perm[:n_support]),
        query=np.sort(perm[n_support:]),
    )


def partition_equal(server_data: LabeledDataset, m: int, seed: int) -> list[LabeledDataset]:
    """Shuffle then deal round-robin into m parts.

    Raises:
        InvalidInputError: If there are fewer samples than parts.
    """
    if m < 1:
        raise InvalidInputError("Number of parts must be at least 1")
    if len(server_data) < m:
        raise InvalidInputError(f"Cannot split {len(server_data)} samples into {m} non-empty parts")
    perm = _rng(seed).permutation(len(server_data))
    return [server_data.subset(perm[part::m]) for part in range(m)]


def build_federated_dataset(
    pool: LabeledDataset,
    n_clients: int,
    server_frac: float,
    support_frac: float,
    distribution: str,
    alpha: float,
    seed: int,
) -> FederatedDataset:
    """Server/client split, client partition and per-client support/query split."""
    seeds = np.random.SeedSequence(seed & 0xFFFFFFFFFFFFFFFF).generate_state(3, np.uint64)
    client_pool, server_data = server_client_split(pool, server_frac, int(seeds[0]))
    if distribution == "iid":
        parts = iid_partition(client_pool, n_clients, int(seeds[1]))
    else:
        parts = dirichlet_partition(client_pool, n_clients, alpha, int(seeds[1]), min_size=2)
    split_seeds = np.random.SeedSequence(int(seeds[2])).generate_state(n_clients, np.uint64)
    shards = [
        support_query_split(part, support_frac, int(split_seeds[client]), client_id=client)
        for client, part in enumerate(parts)
    ]
    logger.info(
        "Built %d client shards (%d samples) and %d server samples",
        len(shards),
        len(client_pool),
        len(server_data),
    )
    return FederatedDataset(clients=shards, server_data=server_data)


def merge_server_into_clients(fed: FederatedDataset, seed: int) -> list[LabeledDataset]:
    """Hands the server samples to the clients round-robin after a shuffle."""
    if len(fed.server_data) == 0:
        return fed.client_datasets
    extra = partition_equal(fed.server_data, min(len(fed.clients), len(fed.server_data)), seed)
    datasets = fed.client_datasets
    for client, part in enumerate(extra):
        datasets[client] = concat([datasets[client], part])
    return datasets


def write_dataset_csv(ds: LabeledDataset, path: Path) -> None:
    """Writes `f0..f{dim-1},label` rows."""
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([*(f"f{i}" for i in range(ds.dim)), "label"])
        for row, label in zip(ds.features, ds.labels, strict=True):
            writer.writerow([*(repr(float(v)) for v in row), int(label)])


def read_dataset_csv(path: Path) -> LabeledDataset:
    """Reads a file produced by `write_dataset_csv`."""
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        dim = len(header) - 1
        rows = list(reader)
    if not rows:
        return LabeledDataset.empty(dim)
    features = np.array([[float(v) for v in row[:dim]] for row in rows])
    labels = np.array([int(row[dim]) for row in rows], dtype=np.int64)
    return LabeledDataset(features=features, labels=labels)
