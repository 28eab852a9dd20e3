"""
Experiment configuration: topology, problem and engine settings loaded from
JSON, seed derivation per scenario and repetition, and output directories.
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic.alias_generators import to_camel

from .errors import ConfigError

SCENARIOS = ("traditional", "semi", "fully", "neighbor")

Scenario = Literal["traditional", "semi", "fully", "neighbor"]
Mode = Literal["deterministic", "concurrent"]

DEFAULT_OUTPUT_DIR = "runs"
SEED_MASK = (1 << 64) - 1


class _Model(BaseModel):
    # JSON keys are camelCase (deviceCount, populationSize, ...); unknown keys are rejected
    model_config = ConfigDict(
        alias_generator=to_camel,
        populate_by_name=True,
        extra="forbid",
        frozen=True,
    )


def _check_interval(name: str, interval: Tuple[float, float]):
    low, high = interval
    if low > high:
        raise ValueError(f"{name} lower bound {low} exceeds upper bound {high}")


class TopologyConfig(_Model):
    device_count: int = Field(100, gt=0, description="Number of fog devices |I|")
    attachments_per_node: int = Field(2, gt=0, description="Barabasi-Albert m")
    fog_latency_range: Tuple[int, int] = Field((2, 6), description="Fog link latency interval (ms)")
    cloud_latency: float = Field(100, ge=0, description="Latency of the cloud link (ms)")
    device_resource_range: Tuple[int, int] = Field((1, 4), description="Fog device resources (units)")
    gateway_fraction: float = Field(0.25, description="Share of fog devices acting as gateways")
    worker_count: int = Field(20, gt=0, description="Number of GA workers k")
    neighborhood_radius: int = Field(1, ge=0, description="Neighbor-aware radius (hops)")
    cloud_attachment: Optional[int] = Field(
        None, description="Fog device linked to the cloud; highest betweenness when unset"
    )

    @model_validator(mode="after")
    def _check(self):
        if self.device_count <= self.attachments_per_node:
            raise ValueError("deviceCount must exceed attachmentsPerNode")
        if not 0 < self.gateway_fraction <= 1:
            raise ValueError("gatewayFraction must lie in (0, 1]")
        if self.worker_count > self.device_count:
            raise ValueError("workerCount cannot exceed deviceCount")
        _check_interval("fogLatencyRange", self.fog_latency_range)
        _check_interval("deviceResourceRange", self.device_resource_range)
        if self.cloud_attachment is not None and not 0 <= self.cloud_attachment < self.device_count:
            raise ValueError("cloudAttachment must be a fog device id")
        return self


class ProblemConfig(_Model):
    app_count: int = Field(10, gt=0, description="Number of applications |A|")
    app_resource_range: Tuple[int, int] = Field((1, 2), description="Application consumption (units)")
    popularity_range: Tuple[float, float] = Field(
        (0.0, 0.75), description="Probability interval of an app being requested at a gateway"
    )
    # recorded for completeness, the objectives do not depend on it
    user_inter_request_time: Tuple[int, int] = Field((5, 10), description="User inter-request time (ms)")

    @model_validator(mode="after")
    def _check(self):
        _check_interval("appResourceRange", self.app_resource_range)
        _check_interval("popularityRange", self.popularity_range)
        _check_interval("userInterRequestTime", self.user_inter_request_time)
        low, high = self.popularity_range
        if low < 0 or high > 1:
            raise ValueError("popularityRange must lie within [0, 1]")
        return self


class EngineConfig(_Model):
    scenario: Scenario = "traditional"
    population_size: int = Field(200, gt=0)
    generation_count: int = Field(100, ge=0)
    mutation_probability: float = Field(0.3, ge=0, le=1)
    worker_count: int = Field(20, gt=0)
    sub_population_size: Optional[int] = Field(None, gt=0, description="populationSize / workerCount")
    neighborhood_radius: int = Field(1, ge=0)
    seed: int = Field(0, ge=0)
    mode: Mode = "deterministic"

    @model_validator(mode="after")
    def _check(self):
        if self.population_size % self.worker_count:
            raise ValueError("populationSize must be divisible by workerCount")
        if (
            self.sub_population_size is not None
            and self.sub_population_size * self.worker_count != self.population_size
        ):
            raise ValueError("subPopulationSize must equal populationSize / workerCount")
        if self.population_size % 2:
            raise ValueError("populationSize must be even, children are created in pairs")
        return self

    @property
    def sub_population(self) -> int:
        return self.population_size // self.worker_count

    @property
    def children_budget(self) -> int:
        """One generation-equivalent is populationSize newly created children."""
        return self.population_size * self.generation_count


class ExperimentConfig(_Model):
    topology: TopologyConfig = TopologyConfig()
    problem: ProblemConfig = ProblemConfig()
    engine: EngineConfig = EngineConfig()
    repetitions: int = Field(10, gt=0)
    seed_base: int = Field(1, ge=0)
    output_dir: Optional[str] = None
    mode: Mode = "deterministic"

    @model_validator(mode="after")
    def _check(self):
        if self.engine.worker_count != self.topology.worker_count:
            raise ValueError("engine.workerCount and topology.workerCount disagree")
        if self.engine.neighborhood_radius != self.topology.neighborhood_radius:
            raise ValueError("engine.neighborhoodRadius and topology.neighborhoodRadius disagree")
        return self

    @property
    def topology_seed(self) -> int:
        return self.seed_base & SEED_MASK

    @property
    def problem_seed(self) -> int:
        return (self.seed_base + 1) & SEED_MASK

    def engine_for(self, scenario: str, repetition: int) -> EngineConfig:
        if scenario not in SCENARIOS:
            raise ConfigError(f"Unknown scenario: {scenario}")
        return self.engine.model_copy(
            update={
                "scenario": scenario,
                "seed": ga_seed(self.seed_base, scenario, repetition),
                "mode": self.mode,
            }
        )

    def echo(self) -> dict:
        return self.model_dump(by_alias=True, mode="json")


def ga_seed(seed_base: int, scenario: str, repetition: int) -> int:
    """seedBase XOR hash(scenario, repetition): shared instance, distinct GA streams."""
    digest = hashlib.blake2b(f"{scenario}:{repetition}".encode("utf-8"), digest_size=8).digest()
    return (seed_base ^ int.from_bytes(digest, "big")) & SEED_MASK


def load_config(path=None) -> ExperimentConfig:
    """
    Reads an experiment config from a JSON file. Missing keys take the
    experiment-table defaults; no path means defaults only.
    """
    if path is None:
        return ExperimentConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    try:
        return ExperimentConfig.model_validate(json.loads(text))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}:\n{e}") from e


def resolve_output_dir(cli_out: Optional[str], cfg: ExperimentConfig) -> Path:
    """--out, then the config's outputDir, then FOGWEAVER_OUT, then ./runs."""
    load_dotenv()
    if cli_out:
        return Path(cli_out)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get("FOGWEAVER_OUT") or DEFAULT_OUTPUT_DIR)
