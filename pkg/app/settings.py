from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
import math
from pathlib import Path
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from typing import Any, Mapping

from .core.errors import ConfigError
from .core.spin_algebra import MAX_SITES, mirror_site

APP_NAME = "krylov-lindblad"
MODELS = ("tfim", "xxz")
SEED_KINDS = ("site", "string", "pair")
SEED_AXES = ("X", "Y", "Z")
DEFECT_MODES = ("site", "mirrored")
_SCALAR_TYPES = ("bool", "int", "float", "str", "int | None", "float | None", "bool | None")


@dataclass(slots=True)
class ModelSettings:
    name: str = "tfim"
    n_sites: int = 6
    g: float = 1.0
    h: float = 0.0
    J: float = 1.0
    J_zz: float = 1.0
    epsilon: float = 0.0
    defect_site: int | None = None
    defect_mode: str = "site"


@dataclass(slots=True)
class DissipationSettings:
    alpha: float = 0.0
    gamma: float = 0.0
    # None: reflection-even jumps exactly when a sector is selected
    reflection_symmetric: bool | None = None

    @property
    def is_closed(self) -> bool:
        return self.alpha == 0.0 and self.gamma == 0.0


@dataclass(slots=True)
class SectorSettings:
    total_spin: float = 0.0
    parity: int = 1


@dataclass(slots=True)
class InitialOperatorSettings:
    kind: str = "site"
    site: int | None = None
    axis: str = "Z"
    sites: list[int] = field(default_factory=list)


@dataclass(slots=True)
class IterationSettings:
    max_steps: int | None = None
    breakdown_tol: float = 1e-8
    reorth: bool = True
    store_bases: bool = False
    memory_cap_gb: float = 8.0
    log_every: int = 500

    @property
    def memory_cap_bytes(self) -> float:
        return self.memory_cap_gb * 1024**3


@dataclass(slots=True)
class IntegrationSettings:
    t_max: float = 500.0
    points: int = 2000
    t_linear: float = 1.0
    rtol: float = 1e-9
    atol: float = 1e-12
    method: str = "DOP853"
    probability_floor: float = 1e-250


@dataclass(slots=True)
class AnalysisSettings:
    window_fraction: float = 0.2
    smoothing_window: int = 51
    outlier_multiplier: float = 3.0
    fit_start: int | None = None
    fit_stop: int | None = None
    onset_threshold: float = 1e-8
    wall_threshold: float = 1e-10
    wall_profiles: int = 0


@dataclass(slots=True)
class OutputSettings:
    directory: str = "runs"
    amplitudes: bool = False
    triplets: bool = False
    pauli_seed: bool = False


_GROUPS: dict[str, type] = {
    "model": ModelSettings,
    "dissipation": DissipationSettings,
    "sector": SectorSettings,
    "initial_operator": InitialOperatorSettings,
    "iteration": IterationSettings,
    "integration": IntegrationSettings,
    "analysis": AnalysisSettings,
    "outputs": OutputSettings,
}


def _coerce(value: Any, type_name: str, key: str) -> Any:
    optional = type_name.endswith(" | None")
    base = type_name.removesuffix(" | None")
    if value is None and optional:
        return None
    if base == "bool" and isinstance(value, bool):
        return value
    if base == "int" and isinstance(value, int) and not isinstance(value, bool):
        return value
    if base == "float" and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if base == "str" and isinstance(value, str):
        return value
    if base == "list[int]" and isinstance(value, list):
        if all(isinstance(item, int) and not isinstance(item, bool) for item in value):
            return list(value)
    raise ConfigError(f"{key}: expected {type_name}, got {value!r}")


def _load_group(group_cls: type, table: Any, group: str) -> Any:
    if not isinstance(table, Mapping):
        raise ConfigError(f"[{group}] must be a table")
    known = {item.name: item for item in fields(group_cls)}
    for key in table:
        if key not in known:
            raise ConfigError(f"unknown configuration key {group}.{key}")
    settings = group_cls()
    for key, value in table.items():
        setattr(settings, key, _coerce(value, str(known[key].type), f"{group}.{key}"))
    return settings


def parse_override(raw: str) -> Any:
    """TOML value syntax, falling back to a bare string (``model.name=xxz``)."""
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


@dataclass(slots=True)
class ExperimentConfig:
    model: ModelSettings = field(default_factory=ModelSettings)
    dissipation: DissipationSettings = field(default_factory=DissipationSettings)
    sector: SectorSettings | None = None
    initial_operator: InitialOperatorSettings = field(default_factory=InitialOperatorSettings)
    iteration: IterationSettings = field(default_factory=IterationSettings)
    integration: IntegrationSettings = field(default_factory=IntegrationSettings)
    analysis: AnalysisSettings = field(default_factory=AnalysisSettings)
    outputs: OutputSettings = field(default_factory=OutputSettings)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        config = cls()
        for group, table in data.items():
            if group not in _GROUPS:
                raise ConfigError(f"unknown configuration table [{group}]")
            setattr(config, group, _load_group(_GROUPS[group], table, group))
        config.validate()
        return config

    @classmethod
    def load(cls, path: Path) -> "ExperimentConfig":
        try:
            with path.open("rb") as file:
                data = tomllib.load(file)
        except OSError as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed configuration {path}: {exc}") from exc
        return cls.from_mapping(data)

    @property
    def seed_site(self) -> int:
        if self.initial_operator.site is not None:
            return self.initial_operator.site
        return math.ceil(self.model.n_sites / 2)

    @property
    def seed_sites(self) -> list[int]:
        return list(self.initial_operator.sites) or [self.seed_site]

    @property
    def reflection_symmetric_jumps(self) -> bool:
        flag = self.dissipation.reflection_symmetric
        return self.sector is not None if flag is None else flag

    @property
    def fit_range(self) -> tuple[int, int] | str:
        start, stop = self.analysis.fit_start, self.analysis.fit_stop
        if start is None and stop is None:
            return "auto"
        return (start or 0, stop if stop is not None else 2**62)

    def validate(self) -> None:
        model = self.model
        if model.name not in MODELS:
            raise ConfigError(f"model.name must be one of {MODELS}, got {model.name!r}")
        if not 1 <= model.n_sites <= MAX_SITES:
            raise ConfigError(f"model.n_sites must lie in 1..{MAX_SITES}, got {model.n_sites}")
        if model.defect_mode not in DEFECT_MODES:
            raise ConfigError(f"model.defect_mode must be one of {DEFECT_MODES}, got {model.defect_mode!r}")
        if model.defect_site is not None and not 1 <= model.defect_site <= model.n_sites:
            raise ConfigError(f"model.defect_site {model.defect_site} is outside 1..{model.n_sites}")

        rates = self.dissipation
        if rates.alpha < 0 or rates.gamma < 0:
            raise ConfigError(f"dissipation rates must be non-negative, got alpha={rates.alpha}, gamma={rates.gamma}")

        if model.name == "tfim" and self.sector is not None:
            raise ConfigError("the [sector] table is only valid for model xxz")
        if model.name == "xxz":
            if model.n_sites < 2:
                raise ConfigError("model xxz needs at least two sites")
            if not rates.is_closed and model.n_sites < 3:
                raise ConfigError("dissipative xxz runs need at least three sites")
        if self.sector is not None:
            self._validate_sector()

        self._validate_seed()

        iteration = self.iteration
        if iteration.max_steps is not None and iteration.max_steps < 1:
            raise ConfigError(f"iteration.max_steps must be positive, got {iteration.max_steps}")
        if iteration.breakdown_tol <= 0 or iteration.memory_cap_gb <= 0 or iteration.log_every < 0:
            raise ConfigError("iteration tolerances, memory cap and log interval must be positive")

        integration = self.integration
        if integration.t_max <= 0 or integration.points < 2:
            raise ConfigError("integration needs t_max > 0 and at least two grid points")
        if integration.rtol <= 0 or integration.atol <= 0:
            raise ConfigError("integration tolerances must be positive")

        analysis = self.analysis
        if not 0 < analysis.window_fraction <= 1:
            raise ConfigError(f"analysis.window_fraction must lie in (0, 1], got {analysis.window_fraction}")
        if analysis.smoothing_window < 1 or analysis.smoothing_window % 2 == 0:
            raise ConfigError(f"analysis.smoothing_window must be a positive odd integer, got {analysis.smoothing_window}")
        if analysis.outlier_multiplier <= 1:
            raise ConfigError(f"analysis.outlier_multiplier must exceed 1, got {analysis.outlier_multiplier}")
        if analysis.wall_profiles < 0:
            raise ConfigError("analysis.wall_profiles must be non-negative")
        if not self.outputs.directory.strip():
            raise ConfigError("outputs.directory must not be empty")

    def _validate_sector(self) -> None:
        sector = self.sector
        model = self.model
        if sector.parity not in (1, -1):
            raise ConfigError(f"sector.parity must be +1 or -1, got {sector.parity}")
        up_count = model.n_sites / 2 + sector.total_spin
        if abs(up_count - round(up_count)) > 1e-9 or not 0 <= up_count <= model.n_sites:
            raise ConfigError(f"sector.total_spin {sector.total_spin} is incompatible with {model.n_sites} sites")
        if self.dissipation.reflection_symmetric is False and not self.dissipation.is_closed:
            raise ConfigError("xxz with a sector requires sector-preserving (reflection-symmetric) jumps")
        if model.epsilon and model.defect_mode == "site":
            site = model.defect_site or math.ceil((model.n_sites + 1) / 2)
            if mirror_site(model.n_sites, site) != site:
                raise ConfigError("a sector run needs a parity-even defect: use defect_mode = \"mirrored\"")

    def _validate_seed(self) -> None:
        seed = self.initial_operator
        n_sites = self.model.n_sites
        if seed.kind not in SEED_KINDS:
            raise ConfigError(f"initial_operator.kind must be one of {SEED_KINDS}, got {seed.kind!r}")
        if seed.axis not in SEED_AXES:
            raise ConfigError(f"initial_operator.axis must be one of {SEED_AXES}, got {seed.axis!r}")
        for site in self.seed_sites:
            if not 1 <= site <= n_sites:
                raise ConfigError(f"initial operator site {site} is outside 1..{n_sites}")
        if len(set(self.seed_sites)) != len(self.seed_sites):
            raise ConfigError("initial_operator.sites must not repeat a site")

    def to_payload(self) -> dict[str, Any]:
        payload: dict[str, Any] = {}
        for group in _GROUPS:
            settings = getattr(self, group)
            if settings is None:
                continue
            payload[group] = {item.name: copy.copy(getattr(settings, item.name)) for item in fields(settings)}
        return payload

    @staticmethod
    def scalar_field_type(dotted: str) -> str:
        group, _, key = dotted.partition(".")
        if group not in _GROUPS or not key:
            raise ConfigError(f"unknown configuration field {dotted!r}")
        known = {item.name: item for item in fields(_GROUPS[group])}
        if key not in known:
            raise ConfigError(f"unknown configuration field {dotted!r}")
        type_name = str(known[key].type)
        if type_name not in _SCALAR_TYPES:
            raise ConfigError(f"{dotted} is not a scalar field")
        return type_name

    def with_value(self, dotted: str, value: Any) -> "ExperimentConfig":
        """Copy with one scalar field replaced; ``sector.*`` creates the table when absent."""
        type_name = self.scalar_field_type(dotted)
        group, _, key = dotted.partition(".")

        updated = copy.deepcopy(self)
        settings = getattr(updated, group)
        if settings is None:
            settings = _GROUPS[group]()
            setattr(updated, group, settings)
        setattr(settings, key, _coerce(value, type_name, dotted))
        updated.validate()
        return updated
