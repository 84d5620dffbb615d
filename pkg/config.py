"""
EvoSeed – Config
Experiment configuration: a flat JSON object with documented defaults.
"""

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Union

from evolution import GrowthParams
from particle_filter import PriorRanges
from utils import get_app_dir

GENERATORS = ("sn", "nettide-ba", "static", "file")
ALGORITHMS = ("EIM", "IMM", "HD", "Earliest")
ORACLES = ("none", "exact", "proxy")
C_PRESETS = ("desk", "theory")

# Picked up when no --config is given
DEFAULT_CONFIG_FILE = get_app_dir() / "evoseed.json"


class ConfigError(ValueError):
    """Raised for unreadable, unknown or invalid configuration values."""


@dataclass
class ExperimentConfig:
    # world
    trials: int = 10
    budgets: list[int] = field(default_factory=lambda: [10])
    generator: str = "sn"
    initial_nodes: int = 2500
    sn_arrivals: int = 500
    sn_growth: float = 1.2
    edges_per_node: int = 1
    truth_beta: float = 1e-6
    truth_theta: float = 0.0
    truth_capacity: float = 1e5
    t0: float = 1.0
    dataset_path: Optional[str] = None
    bucket_span: float = 1.0
    bidirectional: bool = True
    # Evo-NE
    particles: int = 500
    beta_range: list[float] = field(default_factory=lambda: [1e-8, 1.0])
    theta_range: list[float] = field(default_factory=lambda: [1e-4, 10.0])
    capacity_range: list[float] = field(default_factory=lambda: [1e5, 1e8])
    particle_delta: float = 1.0
    particle_jitter: float = 0.0
    # Evo-IL
    w0: float = 0.05
    sigma0: float = 0.008
    k: Union[float, str] = 2.0
    c: float = 1.0
    c_preset: str = "desk"
    # Evo-IMM
    epsilon: float = 0.1
    l: float = 1.0
    # run
    seed: int = 0
    roster: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    oracle: str = "none"
    mc_samples: int = 1000
    record_timings: bool = False
    plots: bool = False
    workers: int = 1
    err_cache_dir: Optional[str] = None
    output_dir: str = "runs"

    @property
    def decay_exponent(self) -> float:
        """k as a number; "frozen" is an infinite exponent."""
        if isinstance(self.k, str):
            return math.inf
        return float(self.k)

    @property
    def truth_params(self) -> GrowthParams:
        return GrowthParams(self.truth_beta, self.truth_theta, self.truth_capacity, self.edges_per_node)

    @property
    def prior_ranges(self) -> PriorRanges:
        return PriorRanges(
            beta=tuple(self.beta_range), theta=tuple(self.theta_range), capacity=tuple(self.capacity_range)
        )

    def validate(self) -> None:
        """Report every violation at once."""
        problems = []

        def need(ok: bool, message: str):
            if not ok:
                problems.append(message)

        need(self.trials >= 1, "trials must be >= 1")
        need(bool(self.budgets) and all(int(b) >= 1 for b in self.budgets), "budgets must be a non-empty list of ints >= 1")
        need(self.generator in GENERATORS, f"generator must be one of {', '.join(GENERATORS)}")
        need(self.generator != "file" or bool(self.dataset_path), "generator 'file' needs dataset_path")
        need(self.initial_nodes >= 2, "initial_nodes must be >= 2")
        need(self.sn_arrivals >= 0, "sn_arrivals must be >= 0")
        need(self.sn_growth > 0, "sn_growth must be > 0")
        need(self.edges_per_node >= 1, "edges_per_node must be >= 1")
        need(self.truth_beta > 0, "truth_beta must be > 0")
        need(self.truth_theta >= 0, "truth_theta must be >= 0")
        need(self.truth_capacity > self.initial_nodes, "truth_capacity must exceed initial_nodes")
        need(self.t0 > 0, "t0 must be > 0")
        need(self.bucket_span > 0, "bucket_span must be > 0")
        need(self.particles >= 1, "particles must be >= 1")
        for name in ("beta_range", "theta_range", "capacity_range"):
            lo_hi = getattr(self, name)
            need(len(lo_hi) == 2 and 0 < lo_hi[0] < lo_hi[1], f"{name} must be [lo, hi] with 0 < lo < hi")
        need(self.particle_delta > 0, "particle_delta must be > 0")
        need(self.particle_jitter >= 0, "particle_jitter must be >= 0")
        need(0 <= self.w0 <= 1, "w0 must lie in [0, 1]")
        need(self.sigma0 > 0, "sigma0 must be > 0")
        need(self.k == "frozen" or (not isinstance(self.k, str) and self.k >= 0), "k must be >= 0 or \"frozen\"")
        need(self.c >= 0, "c must be >= 0")
        need(self.c_preset in C_PRESETS, f"c_preset must be one of {', '.join(C_PRESETS)}")
        need(0 < self.epsilon < 1, "epsilon must lie in (0, 1)")
        need(self.l >= 1, "l must be >= 1")
        need(bool(self.roster) and all(a in ALGORITHMS for a in self.roster),
             f"roster entries must be among {', '.join(ALGORITHMS)}")
        need(len(set(self.roster)) == len(self.roster), "roster entries must be unique")
        need(self.oracle in ORACLES, f"oracle must be one of {', '.join(ORACLES)}")
        need(self.mc_samples >= 1, "mc_samples must be >= 1")
        need(self.workers >= 1, "workers must be >= 1")
        if problems:
            raise ConfigError("invalid config: " + "; ".join(problems))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        try:
            config = cls(**data)
            config.budgets = [int(b) for b in config.budgets]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad config value: {e}") from e
        return config


DEFAULTS = ExperimentConfig().to_dict()


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object of key/value pairs")
    config = ExperimentConfig.from_dict(data)
    config.validate()
    return config


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, ensure_ascii=False, indent=2)


def load_default_config(path: Path = DEFAULT_CONFIG_FILE) -> ExperimentConfig:
    """evoseed.json next to the application if present, built-in defaults otherwise."""
    if Path(path).exists():
        return load_config(path)
    return ExperimentConfig()
