"""Training-set construction and non-IID partitioning across users.

Two skews are combined: dataset sizes follow a Zipf law over user ids and the
class mix of each user follows a Dirichlet draw around the global class
frequencies.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .idx import LabeledDataset
from .streams import Purpose, substream

log = logging.getLogger(__name__)

NUM_CLASSES = 10


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionSpec:
    num_users: int
    zipf_eta: float = 0.0
    dirichlet_theta: float = math.inf  # 0.0 stands for the theta -> 0 limit
    seed: int = 0

    def __post_init__(self):
        if self.num_users < 1:
            raise PartitionError("num_users must be >= 1")
        if not self.zipf_eta >= 0.0:
            raise PartitionError("zipf_eta must be >= 0")
        if not self.dirichlet_theta >= 0.0:
            raise PartitionError("dirichlet_theta must be >= 0")


@dataclass
class UserShard:
    user_id: int
    indices: np.ndarray
    histogram: np.ndarray

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])


def largest_remainder(total: int, weights: Sequence[float], offset: int = 0) -> np.ndarray:
    """Integer apportionment of `total` proportional to `weights`.

    Remainder ties go to the lowest index after rotating by `offset`.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = w.shape[0]
    s = w.sum()
    if not s > 0.0:
        raise PartitionError("weights must have a positive sum")
    quotas = total * w / s
    counts = np.floor(quotas).astype(np.int64)
    left = int(total - counts.sum())
    if left > 0:
        rem = quotas - counts
        order = sorted(range(n), key=lambda i: (-rem[i], (i - offset) % n))
        for i in order[:left]:
            counts[i] += 1
    return counts


def zipf_sizes(total: int, num_users: int, eta: float) -> List[int]:
    if num_users < 1 or eta < 0.0:
        raise PartitionError("need num_users >= 1 and eta >= 0")
    if total < num_users:
        raise PartitionError(f"cannot give {num_users} users at least one of {total} samples")
    if math.isinf(eta):
        weights = [1.0] + [0.0] * (num_users - 1)
    else:
        weights = [u ** -eta for u in range(1, num_users + 1)]
    sizes = largest_remainder(total, weights)

    # every user keeps at least one sample
    for u in range(num_users):
        if sizes[u] == 0:
            sizes[int(np.argmax(sizes))] -= 1
            sizes[u] = 1
    return [int(s) for s in sizes]


def dirichlet_class_shares(theta: float, priors: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    q_bar = np.asarray(priors, dtype=np.float64)
    n = q_bar.shape[0]
    if math.isinf(theta):
        return q_bar.copy()
    if theta == 0.0:
        shares = np.zeros(n)
        shares[int(rng.integers(n))] = 1.0
        return shares

    v = rng.gamma(theta * q_bar, 1.0)
    total = v.sum()
    if total == 0.0:
        # every gamma variate underflowed; the draw degenerates to one class
        shares = np.zeros(n)
        shares[int(rng.choice(n, p=q_bar / q_bar.sum()))] = 1.0
        return shares
    return v / total


class Partitioner:
    """Splits a dataset into disjoint user shards under Zipf sizes and Dirichlet classes."""

    def __init__(self, dataset: LabeledDataset, spec: PartitionSpec) -> None:
        if dataset.count == 0:
            raise PartitionError("cannot partition an empty dataset")
        self._dataset = dataset
        self._spec = spec
        self.substitutions = 0
        self.shard_substitutions: List[int] = []

    def count_target(self) -> np.ndarray:
        return np.bincount(self._dataset.labels, minlength=NUM_CLASSES)

    def partition(self) -> List[UserShard]:
        spec = self._spec
        rng = substream(spec.seed, Purpose.PARTITION)
        labels = self._dataset.labels
        counts = self.count_target()
        priors = counts / counts.sum()

        pools = [rng.permutation(np.flatnonzero(labels == n)) for n in range(NUM_CLASSES)]
        cursor = np.zeros(NUM_CLASSES, dtype=np.int64)
        remaining = counts.astype(np.int64).copy()
        self.substitutions = 0
        self.shard_substitutions = []

        sizes = zipf_sizes(self._dataset.count, spec.num_users, spec.zipf_eta)
        shards = []
        for u, size in enumerate(sizes):
            shares = dirichlet_class_shares(spec.dirichlet_theta, priors, rng)
            quota = largest_remainder(size, shares, offset=u)

            taken = []
            deficit = 0
            for n in range(NUM_CLASSES):
                k = int(min(quota[n], remaining[n]))
                deficit += int(quota[n]) - k
                taken.append(self._take(pools, cursor, remaining, n, k))
            self.shard_substitutions.append(deficit)
            while deficit > 0:
                n = int(np.argmax(remaining))
                k = int(min(deficit, remaining[n]))
                if k == 0:
                    raise PartitionError("ran out of samples while filling shards")
                taken.append(self._take(pools, cursor, remaining, n, k))
                self.substitutions += k
                deficit -= k

            indices = np.concatenate(taken).astype(np.int64)
            shards.append(UserShard(u, indices, np.bincount(labels[indices], minlength=NUM_CLASSES)))

        if self.substitutions:
            log.warning("class pools exhausted; %d samples substituted from the most abundant class",
                        self.substitutions)
        return shards

    @staticmethod
    def _take(pools, cursor, remaining, n: int, k: int) -> np.ndarray:
        start = cursor[n]
        cursor[n] += k
        remaining[n] -= k
        return pools[n][start:start + k]


def partition(dataset: LabeledDataset, spec: PartitionSpec) -> List[UserShard]:
    return Partitioner(dataset, spec).partition()


def balanced_subset(dataset: LabeledDataset, per_class: int) -> LabeledDataset:
    """First `per_class` samples of every class, kept in canonical order."""
    picked = []
    for n in range(NUM_CLASSES):
        idx = np.flatnonzero(dataset.labels == n)[:per_class]
        if idx.shape[0] < per_class:
            log.warning("class %d has only %d samples (wanted %d)", n, idx.shape[0], per_class)
        picked.append(idx)
    return dataset.subset(np.sort(np.concatenate(picked)))


def synthetic_split(train_count: int, test_count: int, seed: int,
                    dim: int = 784, noise: float = 0.3):
    """Seeded Gaussian class clusters in [0, 1]^dim, sharing centres between train and test."""
    rng = substream(seed, Purpose.DATA)
    centres = rng.uniform(0.0, 1.0, size=(NUM_CLASSES, dim))

    def draw(count: int) -> LabeledDataset:
        labels = rng.permutation(np.arange(count) % NUM_CLASSES).astype(np.int64)
        images = np.clip(centres[labels] + rng.normal(0.0, noise, size=(count, dim)), 0.0, 1.0)
        return LabeledDataset(images, labels)

    return draw(train_count), draw(test_count)
