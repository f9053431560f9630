#!/usr/bin/env python3
"""
Experiment Configuration
YAML experiment documents merged over defaults, environment and --set overrides
"""

import copy
import logging
import os
from typing import Any, Dict, List, Optional, Sequence

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from core.errors import ConfigurationError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ENV_PREFIX = 'SPECLAB_'


class DomainSection(BaseModel):
    lower: List[float] = [0.0, 0.0]
    upper: List[float] = [1.0, 1.0]

    @model_validator(mode='after')
    def _check_box(self):
        if len(self.lower) != len(self.upper) or len(self.lower) not in (1, 2, 3):
            raise ValueError("domain.lower/upper must have equal length 1, 2 or 3")
        if any(a >= b for a, b in zip(self.lower, self.upper)):
            raise ValueError("domain intervals must satisfy lower < upper")
        return self

    @property
    def dimension(self) -> int:
        return len(self.lower)


class DensitySection(BaseModel):
    name: str = 'uniform'
    params: Dict[str, Any] = Field(default_factory=dict)


class KernelSection(BaseModel):
    name: str = 'indicator'


class GraphSection(BaseModel):
    include_diagonal: bool = True
    memory_budget_bytes: int = 2 * 1024 ** 3


class LaplacianSection(BaseModel):
    kind: str = 'unnormalized'

    @field_validator('kind')
    @classmethod
    def _known_kind(cls, value: str) -> str:
        if value not in ('unnormalized', 'sym', 'rw'):
            raise ValueError(f"laplacian.kind must be unnormalized, sym or rw, got {value}")
        return value


class ClusteringSection(BaseModel):
    k: int = Field(2, ge=1)
    restarts: int = Field(20, ge=1)
    max_iter: int = Field(300, ge=1)
    tol: float = 1e-12


class ScheduleEntry(BaseModel):
    prefactor: float = Field(1.0, gt=0)
    exponent: float = Field(0.9, gt=0)


class ScheduleSection(ScheduleEntry):
    # extra (prefactor, exponent) rows for the connectivity experiment
    connectivity: List[ScheduleEntry] = Field(default_factory=list)


class SweepSection(BaseModel):
    n_list: List[int] = [1000, 2000, 4000, 8000]
    seeds: List[int] = [0, 1, 2, 3, 4]
    eigen_count: int = Field(4, ge=1)
    compare_eigenvectors: bool = True
    compare_clusters: bool = False

    @field_validator('n_list')
    @classmethod
    def _ascending(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("sweep.n_list must not be empty")
        if any(n < 1 for n in value):
            raise ValueError("sweep.n_list entries must be >= 1")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ValueError("sweep.n_list must be strictly ascending")
        return value

    @field_validator('seeds')
    @classmethod
    def _has_seeds(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("sweep.seeds must not be empty")
        return value


class SolverSection(BaseModel):
    dense_threshold: int = 512
    rtol: float = 1e-8
    max_iter: int = 2000
    group_rtol: float = 1e-6
    adaptive_grouping: bool = True


class TransportSection(BaseModel):
    exact_budget: int = 3000
    tl2_exact_max_n: int = 2000


class ContinuumSection(BaseModel):
    resolution: Optional[int] = None
    cluster_resolution: int = 32

    def fd_resolution(self, d: int) -> int:
        if self.resolution is not None:
            return self.resolution
        return {1: 256, 2: 128, 3: 48}[d]


class ReportSection(BaseModel):
    out_dir: str = 'out'
    name: str = 'sweep'
    plots: bool = True
    timing_in_csv: bool = False


class LoggingSection(BaseModel):
    level: str = 'INFO'


class RuntimeSection(BaseModel):
    threads: int = Field(4, ge=1)
    budgets_ms: Dict[str, float] = Field(default_factory=dict)


class ExperimentConfig(BaseModel):
    """Validated experiment configuration"""
    schema_version: int = SCHEMA_VERSION
    domain: DomainSection = Field(default_factory=DomainSection)
    density: DensitySection = Field(default_factory=DensitySection)
    kernel: KernelSection = Field(default_factory=KernelSection)
    graph: GraphSection = Field(default_factory=GraphSection)
    laplacian: LaplacianSection = Field(default_factory=LaplacianSection)
    clustering: ClusteringSection = Field(default_factory=ClusteringSection)
    schedule: ScheduleSection = Field(default_factory=ScheduleSection)
    sweep: SweepSection = Field(default_factory=SweepSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    transport: TransportSection = Field(default_factory=TransportSection)
    continuum: ContinuumSection = Field(default_factory=ContinuumSection)
    report: ReportSection = Field(default_factory=ReportSection)
    logging: LoggingSection = Field(default_factory=LoggingSection)
    runtime: RuntimeSection = Field(default_factory=RuntimeSection)

    @field_validator('schema_version')
    @classmethod
    def _supported_version(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"schema_version {value} is not supported (expected {SCHEMA_VERSION})")
        return value

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    def echo(self) -> Dict:
        """Plain-dict copy for JSON summaries"""
        return self.model_dump(mode='json')


def deep_merge(base: Dict, override: Dict) -> Dict:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def set_dotted(document: Dict, dotted_key: str, value: Any) -> None:
    parts = [p for p in dotted_key.split('.') if p]
    if not parts:
        raise ConfigurationError(f"Empty configuration key in override '{dotted_key}'")
    node = document
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def parse_assignment(assignment: str) -> tuple:
    """'section.key=value' -> (dotted key, YAML-parsed value)"""
    if '=' not in assignment:
        raise ConfigurationError(f"Override '{assignment}' must look like section.key=value")
    key, raw = assignment.split('=', 1)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Cannot parse override value for {key}: {e}") from e
    return key.strip(), value


class ConfigLoader:
    def __init__(self, config_path: Optional[str] = None, use_env: bool = True):
        self.config_path = config_path
        self.use_env = use_env

    def _load_config(self, path: Optional[str]) -> Dict:
        """Load experiment configuration"""
        if path is None:
            return {}
        try:
            with open(path, 'r') as f:
                document = yaml.safe_load(f) or {}
        except (OSError, yaml.YAMLError) as e:
            raise ConfigurationError(f"Failed to load config {path}: {e}") from e
        if not isinstance(document, dict):
            raise ConfigurationError(f"Config {path} must be a mapping at top level")
        return document

    def _default_config(self) -> Dict:
        """Default experiment configuration"""
        return ExperimentConfig().model_dump()

    def _env_overrides(self) -> Dict:
        """SPECLAB_<SECTION>__<KEY> variables, plus SPECLAB_OUT and SPECLAB_THREADS"""
        load_dotenv(override=False)
        document: Dict = {}
        for name, raw in os.environ.items():
            if not name.startswith(ENV_PREFIX):
                continue
            suffix = name[len(ENV_PREFIX):]
            if suffix == 'OUT':
                set_dotted(document, 'report.out_dir', raw)
            elif suffix == 'THREADS':
                set_dotted(document, 'runtime.threads', yaml.safe_load(raw))
            elif '__' in suffix:
                dotted = '.'.join(part.lower() for part in suffix.split('__'))
                set_dotted(document, dotted, yaml.safe_load(raw))
        return document

    def load(self, overrides: Optional[Sequence[str]] = None, extra: Optional[Dict] = None) -> ExperimentConfig:
        document = deep_merge(self._default_config(), self._load_config(self.config_path))
        if self.use_env:
            document = deep_merge(document, self._env_overrides())
        if extra:
            document = deep_merge(document, extra)
        for assignment in overrides or []:
            key, value = parse_assignment(assignment)
            set_dotted(document, key, value)
        try:
            config = ExperimentConfig.model_validate(document)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid configuration: {e}") from e
        logger.debug("Loaded configuration from %s", self.config_path or 'defaults')
        return config


def load_config(path: Optional[str] = None, overrides: Optional[Sequence[str]] = None,
                extra: Optional[Dict] = None, use_env: bool = True) -> ExperimentConfig:
    return ConfigLoader(path, use_env=use_env).load(overrides, extra)
