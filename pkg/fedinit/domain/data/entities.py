"""This module defines the labeled-data entities shared by every split.

Every dataset remembers the row ids of the source dataset it was cut from
(`sample_ids`), which makes disjointness and coverage of splits checkable.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from fedinit.domain.errors import InvalidInputError
from fedinit.domain.model.entities import Batch


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix, labels and source row ids; may be empty (e.g. no server data)."""

    features: NDArray[np.float64]
    labels: NDArray[np.int64]
    sample_ids: NDArray[np.int64] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise InvalidInputError("Dataset features must be a 2-D matrix")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise InvalidInputError("Dataset label count must match the feature rows")
        if self.sample_ids is None:
            sample_ids = np.arange(labels.shape[0], dtype=np.int64)
        else:
            sample_ids = np.asarray(self.sample_ids, dtype=np.int64)
        if sample_ids.shape != labels.shape:
            raise InvalidInputError("sample_ids must have one entry per sample")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "sample_ids", sample_ids)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def class_ids(self) -> frozenset[int]:
        return frozenset(int(c) for c in np.unique(self.labels))

    def subset(self, rows: NDArray[np.int64] | list[int]) -> "LabeledDataset":
        """Dataset made of the given local row positions, in that order."""
        rows = np.asarray(rows, dtype=np.int64)
        return LabeledDataset(
            features=self.features[rows],
            labels=self.labels[rows],
            sample_ids=self.sample_ids[rows],
        )

    def as_batch(self) -> Batch:
        return Batch(features=self.features, labels=self.labels)

    @classmethod
    def empty(cls, dim: int) -> "LabeledDataset":
        return cls(
            features=np.zeros((0, dim)),
            labels=np.zeros(0, dtype=np.int64),
            sample_ids=np.zeros(0, dtype=np.int64),
        )


def concat(datasets: list[LabeledDataset]) -> LabeledDataset:
    """Stacks datasets of equal dimension, keeping their sample ids."""
    if not datasets:
        raise InvalidInputError("Cannot concatenate an empty list of datasets")
    return LabeledDataset(
        features=np.concatenate([d.features for d in datasets], axis=0),
        labels=np.concatenate([d.labels for d in datasets]),
        sample_ids=np.concatenate([d.sample_ids for d in datasets]),
    )


@dataclass(frozen=True)
class ClassSplit:
    """Pre-training and downstream halves of a dataset."""

    pretrain: LabeledDataset
    downstream: LabeledDataset


@dataclass(frozen=True)
class ClientShard:
    """One client's data with a disjoint support/query split of its local rows."""

    client_id: int
    data: LabeledDataset
    support: NDArray[np.int64]
    query: NDArray[np.int64]

    def __post_init__(self) -> None:
        support = np.asarray(self.support, dtype=np.int64)
        query = np.asarray(self.query, dtype=np.int64)
        if np.intersect1d(support, query).size:
            raise InvalidInputError("Support and query sets must be disjoint")
        if support.size + query.size != len(self.data):
            raise InvalidInputError("Support and query sets must cover the shard")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "query", query)

    @property
    def support_data(self) -> LabeledDataset:
        return self.data.subset(self.support)

    @property
    def query_data(self) -> LabeledDataset:
        return self.data.subset(self.query)


@dataclass(frozen=True)
class FederatedDataset:
    """Client shards plus the (possibly empty) server dataset."""

    clients: list[ClientShard]
    server_data: LabeledDataset

    @property
    def client_datasets(self) -> list[LabeledDataset]:
        return [shard.data for shard in self.clients]
