import hashlib
import json
import logging
import math
from typing import Dict, Iterable, List, Optional

from .allocator import POLICIES
from .engine import ALGORITHMS

log = logging.getLogger(__name__)

DATA_SOURCES = ("idx", "synthetic")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class Config():
    def __init__(self, file_path: Optional[str] = None, overrides: Optional[Dict[str, str]] = None):
        self.file_path = file_path
        self.settings = {}
        self.load_config(overrides or {})

    @staticmethod
    def default_config() -> Dict[str, object]:
        return {
            "sim.algorithm": "ttfed",
            "sim.seed": 1,
            "sim.num_users": 20,
            "sim.radius_m": 600.0,
            "sim.delta_t_fraction": 0.6,
            "sim.delta_t_s": 0.0,
            "sim.rounds": 300,
            "sim.time_budget_s": 0.0,
            "sim.max_aggregations": 0,
            "sim.eval_every": 1,
            "sim.max_evaluations": 2000,
            "sim.full_selection": False,
            "sim.fedasync_psi": 0.5,
            "sim.target_accuracies": [0.5, 0.6, 0.7, 0.8],
            "sim.save_model": False,
            "sim.keep_models": False,
            "channel.path_loss_exponent": 3.76,
            "channel.noise_psd_db": -174.0,
            "channel.snr_threshold_db": 0.0,
            "channel.tx_power_w": 0.01,
            "channel.bandwidth_hz": 2e7,
            "channel.bits_per_param": 16.0,
            "channel.schedule_on_realization": False,
            "compute.cpu_freq_min_hz": 1e9,
            "compute.cpu_freq_max_hz": 1e9,
            "compute.cycles_per_sample": 5e5,
            "data.source": "idx",
            "data.train_images": "data/train-images-idx3-ubyte",
            "data.train_labels": "data/train-labels-idx1-ubyte",
            "data.test_images": "data/t10k-images-idx3-ubyte",
            "data.test_labels": "data/t10k-labels-idx1-ubyte",
            "data.per_class": 250,
            "data.synthetic_train": 2500,
            "data.synthetic_test": 1000,
            "data.zipf_eta": 0.0,
            "data.dirichlet_theta": math.inf,
            "train.learning_rate": 0.01,
            "train.local_epochs": 1,
            "train.batch_size": 32,
            "train.hidden_width": 50,
            "sched.policy": "proposed",
            "sched.greedy_skip": False,
        }

    def load_config(self, overrides: Dict[str, str]) -> None:
        defaults = self.default_config()
        from_file = {}
        if self.file_path:
            try:
                with open(self.file_path, "r") as f:
                    from_file = json.load(f)
            except FileNotFoundError:
                raise ConfigError("--config", f"file not found: {self.file_path}")
            except json.JSONDecodeError as e:
                raise ConfigError("--config", f"invalid JSON in {self.file_path}: {e}")
            if not isinstance(from_file, dict):
                raise ConfigError("--config", "top level must be an object of dotted keys")

        merged = {**defaults, **from_file, **overrides}
        self.settings = {}
        for key, value in merged.items():
            if key not in defaults:
                raise ConfigError(key, "unknown key")
            self.settings[key] = coerce(key, value, defaults[key])
        self.validate()

    def validate(self) -> None:
        s = self.settings
        choices = {"sim.algorithm": ALGORITHMS, "sched.policy": POLICIES, "data.source": DATA_SOURCES}
        for key, allowed in choices.items():
            if s[key] not in allowed:
                raise ConfigError(key, f"must be one of {', '.join(allowed)}, got {s[key]!r}")
        positive = ("sim.num_users", "sim.radius_m", "sim.eval_every", "sim.max_evaluations",
                    "channel.path_loss_exponent", "channel.tx_power_w", "channel.bandwidth_hz",
                    "compute.cpu_freq_min_hz", "compute.cpu_freq_max_hz", "compute.cycles_per_sample",
                    "data.per_class", "data.synthetic_train", "data.synthetic_test",
                    "train.local_epochs", "train.batch_size", "train.hidden_width")
        for key in positive:
            if not s[key] > 0:
                raise ConfigError(key, f"must be positive, got {s[key]!r}")
        non_negative = ("sim.delta_t_s", "sim.rounds", "sim.time_budget_s", "sim.max_aggregations",
                        "channel.bits_per_param", "data.zipf_eta", "data.dirichlet_theta", "train.learning_rate")
        for key in non_negative:
            if s[key] < 0:
                raise ConfigError(key, f"must be non-negative, got {s[key]!r}")
        if s["channel.path_loss_exponent"] < 2.0:
            raise ConfigError("channel.path_loss_exponent", "must be at least 2")
        if s["sim.delta_t_s"] == 0.0 and not s["sim.delta_t_fraction"] > 0.0:
            raise ConfigError("sim.delta_t_fraction", "must be positive when sim.delta_t_s is 0")
        if not 0.0 < s["sim.fedasync_psi"] < 1.0:
            raise ConfigError("sim.fedasync_psi", "must lie in (0, 1)")
        if s["compute.cpu_freq_min_hz"] > s["compute.cpu_freq_max_hz"]:
            raise ConfigError("compute.cpu_freq_min_hz", "exceeds compute.cpu_freq_max_hz")
        if any(not 0.0 <= a <= 1.0 for a in s["sim.target_accuracies"]):
            raise ConfigError("sim.target_accuracies", "targets must lie in [0, 1]")

    def to_json(self) -> str:
        return json.dumps({k: _jsonable(v) for k, v in self.settings.items()}, indent=4, sort_keys=True)

    def save_config(self, path: str) -> None:
        from .metrics import _atomic_write
        _atomic_write(path, lambda f: f.write(self.to_json() + "\n"))

    def config_hash(self) -> str:
        canonical = {k: _jsonable(v) for k, v in self.settings.items() if k != "sim.seed"}
        text = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def with_overrides(self, overrides: Dict[str, object]) -> "Config":
        clone = Config.__new__(Config)
        clone.file_path = self.file_path
        clone.settings = dict(self.settings)
        defaults = self.default_config()
        for key, value in overrides.items():
            if key not in defaults:
                raise ConfigError(key, "unknown key")
            clone.settings[key] = coerce(key, value, defaults[key])
        clone.validate()
        return clone


def _jsonable(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def _parse_bool(key: str, value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "1", "yes", "on"):
        return True
    if text in ("false", "0", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {value!r}")


def _parse_float(key: str, value) -> float:
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a number, got {value!r}")
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if math.isnan(out):
        raise ConfigError(key, "NaN is not allowed")
    return out


def _parse_int(key: str, value) -> int:
    f = _parse_float(key, value)
    if not f.is_integer():
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return int(f)


def _parse_list(key: str, value) -> List[float]:
    if isinstance(value, str):
        text = value.strip()
        if text.startswith("["):
            try:
                value = json.loads(text)
            except json.JSONDecodeError:
                raise ConfigError(key, f"invalid list {value!r}")
        else:
            value = [v for v in text.split(",") if v.strip()]
    if not isinstance(value, (list, tuple)):
        raise ConfigError(key, f"expected a list, got {value!r}")
    return [_parse_float(key, v) for v in value]


def coerce(key: str, value, default):
    """Convert a raw file or command-line value to the type of the key's default."""
    if isinstance(default, bool):
        return _parse_bool(key, value)
    if isinstance(default, int):
        return _parse_int(key, value)
    if isinstance(default, float):
        return _parse_float(key, value)
    if isinstance(default, list):
        return _parse_list(key, value)
    if not isinstance(value, str):
        raise ConfigError(key, f"expected text, got {value!r}")
    return value


def parse_overrides(pairs: Iterable[str]) -> Dict[str, str]:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(pair, "override must look like key=value")
        out[key.strip()] = value.strip()
    return out
