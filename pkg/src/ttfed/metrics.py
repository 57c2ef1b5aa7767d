import csv
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

CSV_COLUMNS = ("time_s", "round", "algorithm", "accuracy", "loss", "uplink_msgs",
               "downlink_broadcasts", "downlink_unicasts", "success_users", "failed_users")


@dataclass
class EvalRecord:
    time_s: float
    round: int
    accuracy: float
    loss: float
    uplink_msgs: int
    downlink_broadcasts: int
    downlink_unicasts: int
    success_users: int
    failed_users: int

    @property
    def comm_msgs(self) -> int:
        return self.uplink_msgs + self.downlink_broadcasts + self.downlink_unicasts


@dataclass
class RunMetrics:
    algorithm: str
    seed: int
    records: List[EvalRecord] = field(default_factory=list)
    uplink_msgs: int = 0
    downlink_broadcasts: int = 0
    downlink_unicasts: int = 0
    success_total: int = 0
    failed_total: int = 0
    zero_weight_uploads: int = 0
    aggregations: int = 0
    aggregation_times: List[float] = field(default_factory=list)
    round_log: List[dict] = field(default_factory=list)
    num_tiers: int = 1
    delta_t: float = 0.0
    substitutions: int = 0
    dropped_users: int = 0
    model_history: List[np.ndarray] = field(default_factory=list)
    final_params: Optional[np.ndarray] = None
    max_evaluations: int = 2000
    eval_stride: int = 1

    def count_round(self, success: int, failed: int) -> None:
        self.success_total += success
        self.failed_total += failed

    def record(self, time_s: float, round_index: int, accuracy: float, loss: float,
               success: int = 0, failed: int = 0) -> None:
        self.records.append(EvalRecord(time_s, round_index, accuracy, loss, self.uplink_msgs,
                                       self.downlink_broadcasts, self.downlink_unicasts, success, failed))
        if len(self.records) > self.max_evaluations:
            # keep the initial record and every other one after it
            self.records = self.records[::2]
            self.eval_stride *= 2
            log.info("evaluation record thinned to %d rows (stride %d)", len(self.records), self.eval_stride)

    def final_accuracy(self) -> float:
        return self.records[-1].accuracy if self.records else float("nan")


def count_comm(metrics: RunMetrics, targets: Sequence[float]) -> Dict[float, Optional[int]]:
    """Messages exchanged up to the first evaluation reaching each target accuracy."""
    out: Dict[float, Optional[int]] = {}
    for target in targets:
        hit = next((r for r in metrics.records if r.accuracy >= target), None)
        out[target] = hit.comm_msgs if hit is not None else None
    return out


def time_to_accuracy(metrics: RunMetrics, targets: Sequence[float]) -> Dict[float, Optional[float]]:
    out: Dict[float, Optional[float]] = {}
    for target in targets:
        hit = next((r for r in metrics.records if r.accuracy >= target), None)
        out[target] = hit.time_s if hit is not None else None
    return out


def summary(metrics: RunMetrics, targets: Sequence[float]) -> dict:
    return {
        "algorithm": metrics.algorithm,
        "seed": metrics.seed,
        "final_accuracy": metrics.final_accuracy(),
        "final_loss": metrics.records[-1].loss if metrics.records else None,
        "num_tiers": metrics.num_tiers,
        "delta_t_s": metrics.delta_t,
        "aggregations": metrics.aggregations,
        "uplink_msgs": metrics.uplink_msgs,
        "downlink_broadcasts": metrics.downlink_broadcasts,
        "downlink_unicasts": metrics.downlink_unicasts,
        "success_users": metrics.success_total,
        "failed_users": metrics.failed_total,
        "zero_weight_uploads": metrics.zero_weight_uploads,
        "partition_substitutions": metrics.substitutions,
        "allocator_dropped_users": metrics.dropped_users,
        "target_crossing_time_s": {str(t): v for t, v in time_to_accuracy(metrics, targets).items()},
        "target_comm_msgs": {str(t): v for t, v in count_comm(metrics, targets).items()},
    }


def _atomic_write(path: str, write) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            write(f)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_csv(path: str, metrics: RunMetrics) -> None:
    def write(f):
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in metrics.records:
            writer.writerow([repr(r.time_s), r.round, metrics.algorithm, repr(r.accuracy), repr(r.loss),
                             r.uplink_msgs, r.downlink_broadcasts, r.downlink_unicasts,
                             r.success_users, r.failed_users])
    _atomic_write(path, write)


def write_json(path: str, payload: dict) -> None:
    _atomic_write(path, lambda f: json.dump(payload, f, indent=4, sort_keys=True))


@dataclass
class RunManifest:
    config_hash: str
    seeds: List[int]
    outputs: List[Dict[str, str]]
    tool_version: str
    host: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)
