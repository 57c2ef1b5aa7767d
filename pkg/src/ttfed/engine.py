"""Simulated-time training runs for TT-Fed and the event-triggered baselines.

TT-Fed advances in fixed rounds of length delta_t. FedAvg advances in
synchronous rounds as long as the slowest user. FedAsync and FedAT are driven
by a heap of arrival events ordered by (time, user or tier id).
"""
import heapq
import logging
import math
from dataclasses import dataclass, fields
from typing import Dict, List, Optional

import numpy as np

from . import wireless
from .aggregation import (AggregationInput, TierSchedule, Upload, fedasync_aggregate, fedat_aggregate,
                          fedavg_aggregate, swap_weights, ttfed_global, ttfed_tier_weights, weighted_mean)
from .allocator import POLICIES, Allocator, QualifiedUser, RoundPlan
from .datagen import PartitionSpec, Partitioner, UserShard, balanced_subset, synthetic_split
from .idx import LabeledDataset, load_idx
from .learner import Architecture, FeedForward, ParamVector, TrainConfig
from .metrics import RunMetrics
from .streams import Purpose, substream
from .wireless import ChannelDraw, ChannelParams, ComputeProfile

log = logging.getLogger(__name__)

ALGORITHMS = ("ttfed", "fedavg", "fedasync", "fedat")


@dataclass
class ScenarioConfig:
    algorithm: str = "ttfed"
    seed: int = 1
    num_users: int = 20
    radius_m: float = 600.0
    delta_t_fraction: float = 0.6
    delta_t_s: float = 0.0
    rounds: int = 300
    time_budget_s: float = 0.0
    max_aggregations: int = 0
    eval_every: int = 1
    max_evaluations: int = 2000
    full_selection: bool = False
    fedasync_psi: float = 0.5
    keep_models: bool = False
    path_loss_exponent: float = 3.76
    noise_psd_db: float = -174.0
    snr_threshold_db: float = 0.0
    tx_power_w: float = 0.01
    bandwidth_hz: float = 2e7
    bits_per_param: float = 16.0
    schedule_on_realization: bool = False
    cpu_freq_min_hz: float = 1e9
    cpu_freq_max_hz: float = 1e9
    cycles_per_sample: float = 5e5
    data_source: str = "idx"
    train_images: str = "data/train-images-idx3-ubyte"
    train_labels: str = "data/train-labels-idx1-ubyte"
    test_images: str = "data/t10k-images-idx3-ubyte"
    test_labels: str = "data/t10k-labels-idx1-ubyte"
    per_class: int = 250
    synthetic_train: int = 2500
    synthetic_test: int = 1000
    zipf_eta: float = 0.0
    dirichlet_theta: float = math.inf
    learning_rate: float = 0.01
    local_epochs: int = 1
    batch_size: int = 32
    hidden_width: int = 50
    policy: str = "proposed"
    greedy_skip: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown scheduling policy {self.policy!r}")
        if self.num_users < 1 or self.radius_m <= 0.0:
            raise ValueError("need at least one user and a positive radius")
        if self.rounds < 0 or self.time_budget_s < 0.0:
            raise ValueError("budgets must be non-negative")
        if not (self.delta_t_s > 0.0 or self.delta_t_fraction > 0.0):
            raise ValueError("delta_t must be positive")
        if not 0.0 < self.cpu_freq_min_hz <= self.cpu_freq_max_hz:
            raise ValueError("cpu frequency range must be positive and ordered")

    @classmethod
    def from_settings(cls, settings: Dict[str, object]) -> "ScenarioConfig":
        """Build from flat dotted keys; the part after the section dot names the field."""
        names = {f.name for f in fields(cls)}
        values = {}
        for key, value in settings.items():
            _, _, name = key.partition(".")
            if key == "data.source":
                name = "data_source"
            if name in names:
                values[name] = value
        return cls(**values)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.local_epochs, self.batch_size, self.hidden_width)

    def partition_spec(self) -> PartitionSpec:
        return PartitionSpec(self.num_users, self.zipf_eta, self.dirichlet_theta, self.seed)


@dataclass
class UserProfile:
    user_id: int
    distance: float
    compute: ComputeProfile
    shard: UserShard
    tier: int = 1

    @property
    def data_size(self) -> int:
        return self.shard.size


def place_users(num_users: int, radius: float, seed: int) -> np.ndarray:
    """Distances of users dropped uniformly over a disk of the given radius."""
    if num_users < 1 or radius <= 0.0:
        raise ValueError("need num_users >= 1 and radius > 0")
    rng = substream(seed, Purpose.PLACEMENT)
    return radius * np.sqrt(rng.uniform(0.0, 1.0, size=num_users))


def _ceil_ratio(t: float, delta_t: float) -> int:
    # exact multiples of delta_t stay in the lower tier
    r = t / delta_t
    nearest = round(r)
    if abs(r - nearest) <= 1e-9 * max(1.0, abs(r)):
        r = float(nearest)
    return max(1, math.ceil(r))


def nominal_round_time(profile: UserProfile, params: ChannelParams, num_users: int) -> float:
    """Compute time plus upload time at an equal bandwidth share and mean fading."""
    gain = wireless.path_loss(profile.distance, params.path_loss_exponent)
    return wireless.compute_delay(profile.compute) + wireless.comm_delay(
        params.total_bandwidth / num_users, gain, params)


def build_tiers(profiles: List[UserProfile], delta_t: float, params: ChannelParams) -> TierSchedule:
    if not delta_t > 0.0:
        raise ValueError("delta_t must be positive")
    times = {p.user_id: nominal_round_time(p, params, len(profiles)) for p in profiles}
    slowest = max(times.values())
    membership = {u: _ceil_ratio(t, delta_t) for u, t in times.items()}
    num_tiers = _ceil_ratio(slowest, delta_t)
    tier_data = {m: 0 for m in range(1, num_tiers + 1)}
    for p in profiles:
        p.tier = membership[p.user_id]
        tier_data[p.tier] += p.data_size
    return TierSchedule(num_tiers, membership, tier_data, delta_t)


def load_datasets(cfg: ScenarioConfig):
    if cfg.data_source == "synthetic":
        return synthetic_split(cfg.synthetic_train, cfg.synthetic_test, cfg.seed)
    if cfg.data_source != "idx":
        raise ValueError(f"unknown data source {cfg.data_source!r}")
    train = balanced_subset(load_idx(cfg.train_images, cfg.train_labels), cfg.per_class)
    test = load_idx(cfg.test_images, cfg.test_labels)
    return train, test


class Simulation:
    def __init__(self, cfg: ScenarioConfig, train_set: Optional[LabeledDataset] = None,
                 test_set: Optional[LabeledDataset] = None):
        self.cfg = cfg
        if train_set is None or test_set is None:
            train_set, test_set = load_datasets(cfg)
        self.train_set = train_set
        self.test_set = test_set
        self.train_cfg = cfg.train_config()

        arch = Architecture(input_dim=train_set.images.shape[1], hidden=cfg.hidden_width)
        self.model = FeedForward(arch)
        self.params = ChannelParams.from_db(
            cfg.path_loss_exponent, cfg.noise_psd_db, cfg.tx_power_w, cfg.snr_threshold_db,
            cfg.bandwidth_hz, arch.size * cfg.bits_per_param)

        partitioner = Partitioner(train_set, cfg.partition_spec())
        shards = partitioner.partition()
        self.substitutions = partitioner.substitutions

        distances = place_users(cfg.num_users, cfg.radius_m, cfg.seed)
        cpu_rng = substream(cfg.seed, Purpose.CPU)
        if cfg.cpu_freq_min_hz == cfg.cpu_freq_max_hz:
            freqs = np.full(cfg.num_users, cfg.cpu_freq_min_hz)
        else:
            freqs = cpu_rng.uniform(cfg.cpu_freq_min_hz, cfg.cpu_freq_max_hz, size=cfg.num_users)

        self.profiles = [
            UserProfile(u, float(distances[u]),
                        ComputeProfile(float(freqs[u]), cfg.cycles_per_sample, cfg.local_epochs, shards[u].size),
                        shards[u])
            for u in range(cfg.num_users)
        ]
        self.local_data = [train_set.subset(p.shard.indices) for p in self.profiles]
        self.compute_time = [wireless.compute_delay(p.compute) for p in self.profiles]

        self.slowest_time = max(nominal_round_time(p, self.params, cfg.num_users) for p in self.profiles)
        self.delta_t = cfg.delta_t_s if cfg.delta_t_s > 0.0 else cfg.delta_t_fraction * self.slowest_time
        self.schedule = build_tiers(self.profiles, self.delta_t, self.params)
        self.time_budget = cfg.time_budget_s if cfg.time_budget_s > 0.0 else cfg.rounds * self.delta_t
        self.initial_params = self.model.init_params(substream(cfg.seed, Purpose.INIT))

        log.info("%d users, %d tiers, delta_t %.4g s (slowest user %.4g s), budget %.4g s",
                 cfg.num_users, self.schedule.num_tiers, self.delta_t, self.slowest_time, self.time_budget)

    # shared helpers

    def _train(self, u: int, w: ParamVector, key: int) -> ParamVector:
        rng = substream(self.cfg.seed, Purpose.TRAIN, u, key)
        return self.model.local_update(w, self.local_data[u], self.train_cfg, rng)

    def _fading(self, u: int, key: int) -> ChannelDraw:
        rng = substream(self.cfg.seed, Purpose.FADING, u, key)
        return wireless.draw_channel(u, key, self.profiles[u].distance, self.params.path_loss_exponent, rng)

    def _equal_share_upload(self, u: int, key: int, share: float):
        """Finish time (relative to dispatch) and outcome of an upload on a fixed share."""
        draw = self._fading(u, key)
        elapsed = self.compute_time[u] + wireless.comm_delay(share, draw.gain_power, self.params)
        ok = wireless.transmission_succeeds(draw, share, self.profiles[u].distance, self.params)
        return elapsed, ok

    def _new_metrics(self, algorithm: str):
        m = RunMetrics(algorithm=algorithm, seed=self.cfg.seed, max_evaluations=self.cfg.max_evaluations)
        m.num_tiers = self.schedule.num_tiers
        m.delta_t = self.delta_t
        m.substitutions = self.substitutions
        return m

    def _after_aggregation(self, metrics, w: ParamVector, time_s: float, round_index: int,
                           success: int, failed: int) -> None:
        metrics.aggregations += 1
        metrics.aggregation_times.append(time_s)
        metrics.count_round(success, failed)
        if self.cfg.keep_models:
            metrics.model_history.append(w.copy())
        stride = self.cfg.eval_every * metrics.eval_stride
        if metrics.aggregations % stride == 0:
            acc, loss = self.model.evaluate(w, self.test_set)
            metrics.record(time_s, round_index, acc, loss, success, failed)
            self._last_recorded = metrics.aggregations

    def _start(self, metrics) -> ParamVector:
        w = self.initial_params.copy()
        if self.cfg.keep_models:
            metrics.model_history.append(w.copy())
        acc, loss = self.model.evaluate(w, self.test_set)
        metrics.record(0.0, 0, acc, loss)
        self._last_recorded = 0
        self._last_time = 0.0
        self._last_round = 0
        return w

    def _finish(self, metrics, w: ParamVector) -> None:
        if metrics.aggregations and self._last_recorded != metrics.aggregations:
            acc, loss = self.model.evaluate(w, self.test_set)
            metrics.record(self._last_time, self._last_round, acc, loss)
        metrics.final_params = w

    def _aggregation_cap_reached(self, metrics) -> bool:
        return 0 < self.cfg.max_aggregations <= metrics.aggregations

    # TT-Fed

    def plan_round(self, k: int, due_users: List[int], alphas: np.ndarray,
                   allocator: Allocator, draws: Dict[int, ChannelDraw]) -> RoundPlan:
        if not due_users:
            return RoundPlan()
        if self.cfg.full_selection:
            share = self.params.total_bandwidth / len(due_users)
            return RoundPlan(flags={u: 1 for u in due_users}, bandwidth={u: share for u in due_users},
                             allocated=share * len(due_users))
        candidates = []
        for u in due_users:
            p = self.profiles[u]
            gain = (draws[u].gain_power if self.cfg.schedule_on_realization
                    else wireless.path_loss(p.distance, self.params.path_loss_exponent))
            candidates.append(QualifiedUser(
                user_id=u, tier=p.tier, data_size=p.data_size, alpha=float(alphas[p.tier - 1]),
                slack=p.tier * self.delta_t - self.compute_time[u], gain_power=gain, distance=p.distance))
        return allocator.plan(candidates, self.schedule.num_tiers)

    def run_ttfed(self):
        metrics = self._new_metrics("ttfed")
        schedule = self.schedule
        allocator = Allocator(self.params, self.cfg.policy, self.cfg.greedy_skip)
        w_global = self._start(metrics)
        rounds = min(self.cfg.rounds, math.floor(self.time_budget / self.delta_t + 1e-9))
        pending: Dict[int, ParamVector] = {}

        for k in range(1, rounds + 1):
            dispatched = [u for m in schedule.dispatched_tiers(k) for u in schedule.members(m)]
            if dispatched:
                metrics.downlink_broadcasts += 1
            for u in dispatched:
                pending[u] = self._train(u, w_global, k)

            due_tiers = schedule.due_tiers(k)
            due_users = sorted(u for m in due_tiers for u in schedule.members(m))
            alphas = ttfed_tier_weights(k, schedule.num_tiers)
            draws = {u: self._fading(u, k) for u in due_users}
            plan = self.plan_round(k, due_users, alphas, allocator, draws)

            tier_uploads: Dict[int, List[Upload]] = {m: [] for m in due_tiers}
            ok_users, failed_users = [], []
            for u in plan.selected():
                p = self.profiles[u]
                metrics.uplink_msgs += 1
                if wireless.transmission_succeeds(draws[u], plan.bandwidth[u], p.distance, self.params):
                    tier_uploads[p.tier].append(Upload(u, p.data_size, pending[u]))
                    ok_users.append(u)
                else:
                    failed_users.append(u)

            for m in due_tiers:
                if alphas[m - 1] == 0.0 and tier_uploads[m]:
                    metrics.zero_weight_uploads += len(tier_uploads[m])
                    log.debug("round %d: %d uploads of tier %d carry zero weight", k, len(tier_uploads[m]), m)

            w_global = ttfed_global(AggregationInput(k, w_global, tier_uploads), schedule)
            metrics.round_log.append({"round": k, "time_s": k * self.delta_t, "due_tiers": due_tiers,
                                      "bandwidth": dict(plan.bandwidth), "success": ok_users,
                                      "failed": failed_users})
            self._last_time, self._last_round = k * self.delta_t, k
            self._after_aggregation(metrics, w_global, k * self.delta_t, k, len(ok_users), len(failed_users))

        metrics.dropped_users = allocator.dropped
        if allocator.dropped:
            log.warning("allocator dropped %d infeasible users over %d rounds", allocator.dropped, rounds)
        if metrics.zero_weight_uploads:
            log.info("%d successful uploads received zero tier weight", metrics.zero_weight_uploads)
        self._finish(metrics, w_global)
        return metrics

    # FedAvg

    def run_fedavg(self):
        metrics = self._new_metrics("fedavg")
        w_global = self._start(metrics)
        share = self.params.total_bandwidth / self.cfg.num_users
        now = 0.0

        for r in range(1, self.cfg.rounds + 1):
            uploads, ok_users, failed_users = [], [], []
            round_len = 0.0
            for p in self.profiles:
                w_local = self._train(p.user_id, w_global, r)
                elapsed, ok = self._equal_share_upload(p.user_id, r, share)
                round_len = max(round_len, elapsed)
                if ok:
                    uploads.append(Upload(p.user_id, p.data_size, w_local))
                    ok_users.append(p.user_id)
                else:
                    failed_users.append(p.user_id)
            if now + round_len > self.time_budget:
                break
            now += round_len
            metrics.downlink_broadcasts += 1
            metrics.uplink_msgs += len(self.profiles)
            if uploads:
                w_global = fedavg_aggregate(uploads)
            metrics.round_log.append({"round": r, "time_s": now, "round_len_s": round_len,
                                      "success": ok_users, "failed": failed_users})
            self._last_time, self._last_round = now, r
            self._after_aggregation(metrics, w_global, now, r, len(ok_users), len(failed_users))

        self._finish(metrics, w_global)
        return metrics

    # FedAsync

    def run_fedasync(self):
        metrics = self._new_metrics("fedasync")
        w_global = self._start(metrics)
        share = self.params.total_bandwidth / self.cfg.num_users
        psi = self.cfg.fedasync_psi
        dispatches = [0] * self.cfg.num_users
        queue = []

        def dispatch(u: int, now: float, base: ParamVector) -> None:
            dispatches[u] += 1
            n = dispatches[u]
            w_local = self._train(u, base, n)
            elapsed, ok = self._equal_share_upload(u, n, share)
            heapq.heappush(queue, (now + elapsed, u, n, ok, w_local, base))

        metrics.downlink_broadcasts += 1
        for u in range(self.cfg.num_users):
            dispatch(u, 0.0, w_global)

        while queue and not self._aggregation_cap_reached(metrics):
            arrival, u, n, ok, w_local, base = heapq.heappop(queue)
            if arrival > self.time_budget:
                break
            metrics.uplink_msgs += 1
            if ok:
                w_global = fedasync_aggregate(w_global, w_local, psi)
                metrics.downlink_unicasts += 1
                metrics.round_log.append({"time_s": arrival, "user": u, "success": True})
                self._last_time, self._last_round = arrival, metrics.aggregations + 1
                self._after_aggregation(metrics, w_global, arrival, metrics.aggregations + 1, 1, 0)
                dispatch(u, arrival, w_global)
            else:
                metrics.count_round(0, 1)
                metrics.round_log.append({"time_s": arrival, "user": u, "success": False})
                dispatch(u, arrival, base)

        self._finish(metrics, w_global)
        return metrics

    # FedAT

    def run_fedat(self):
        metrics = self._new_metrics("fedat")
        w_global = self._start(metrics)
        share = self.params.total_bandwidth / self.cfg.num_users
        tiers = [self.schedule.members(m) for m in range(1, self.schedule.num_tiers + 1)]
        tiers = [members for members in tiers if members]
        metrics.num_tiers = len(tiers)
        tier_models = [w_global.copy() for _ in tiers]
        updates = [0] * len(tiers)
        tier_rounds = [0] * len(tiers)
        queue = []

        def dispatch(j: int, now: float, base: ParamVector) -> None:
            tier_rounds[j] += 1
            r = tier_rounds[j]
            metrics.downlink_unicasts += 1
            uploads, failed = [], 0
            round_len = 0.0
            for u in tiers[j]:
                w_local = self._train(u, base, r)
                elapsed, ok = self._equal_share_upload(u, r, share)
                round_len = max(round_len, elapsed)
                if ok:
                    uploads.append(Upload(u, self.profiles[u].data_size, w_local))
                else:
                    failed += 1
            heapq.heappush(queue, (now + round_len, j, r, uploads, failed))

        for j in range(len(tiers)):
            dispatch(j, 0.0, w_global)

        while queue and not self._aggregation_cap_reached(metrics):
            finish, j, r, uploads, failed = heapq.heappop(queue)
            if finish > self.time_budget:
                break
            metrics.uplink_msgs += len(tiers[j])
            if uploads:
                tier_models[j] = weighted_mean(uploads)
            updates[j] += 1
            alphas = [float(a) for a in swap_weights(updates)]
            w_global = fedat_aggregate(tier_models, alphas)
            metrics.round_log.append({"time_s": finish, "tier": j + 1, "tier_round": r,
                                      "success": [up.user_id for up in uploads], "failed": failed})
            self._last_time, self._last_round = finish, metrics.aggregations + 1
            self._after_aggregation(metrics, w_global, finish, metrics.aggregations + 1, len(uploads), failed)
            dispatch(j, finish, w_global)

        self._finish(metrics, w_global)
        return metrics

    def run(self):
        return getattr(self, f"run_{self.cfg.algorithm}")()


def run_ttfed(cfg: ScenarioConfig, **datasets):
    return Simulation(cfg, **datasets).run_ttfed()


def run_fedavg(cfg: ScenarioConfig, **datasets):
    return Simulation(cfg, **datasets).run_fedavg()


def run_fedasync(cfg: ScenarioConfig, **datasets):
    return Simulation(cfg, **datasets).run_fedasync()


def run_fedat(cfg: ScenarioConfig, **datasets):
    return Simulation(cfg, **datasets).run_fedat()


def run(cfg: ScenarioConfig, **datasets):
    return Simulation(cfg, **datasets).run()
