from functools import lru_cache
from pathlib import Path
from typing import Any, Optional, Union, cast

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    model_validator,
)
from pydantic_settings import (
    BaseSettings,
    PydanticBaseSettingsSource,
    SettingsConfigDict,
)

from .exceptions import ScenarioParseError


# --- File Loading Logic ---
def _yaml_config_settings_source() -> dict[str, Any]:
    """
    A Pydantic settings source that loads values from a YAML file.
    It searches up to 5 parent directories for 'cfg/cfg.yml'.
    """
    config_path = _locate_config_file("cfg/cfg.yml", max_depth=5)
    if not config_path:
        # Settings will rely purely on env vars or defaults.
        return {}

    try:
        with open(config_path) as f:
            config = yaml.safe_load(f)
            return config or {}
    except yaml.YAMLError as e:
        print(f"ERROR: Could not parse config YAML: {e}")
        return {}
    except Exception as e:
        print(f"ERROR: Could not read config file {config_path}: {e}")
        return {}


def _locate_config_file(cfg_file: str, max_depth: int = 5) -> Optional[str]:
    """
    Searches parent directories for a configuration file.
    Starts from the current working directory.
    """
    current_dir = Path.cwd()
    for _ in range(max_depth):
        config_path = current_dir / cfg_file
        if config_path.is_file():
            return str(config_path)

        # Move up one directory
        if current_dir.parent == current_dir:
            break
        current_dir = current_dir.parent

    return None


# --- Pydantic Schemas (Application Settings) ---
class LoggingSettings(BaseModel):
    """Schema for log output."""

    LOG_DIR: str = "logs/"
    FILE_LOGGING: bool = True
    NOISY_LOGGERS: list[str] = ["asyncio", "urllib3", "concurrent.futures"]


class RuntimeSettings(BaseModel):
    """Schema for run orchestration defaults."""

    DEFAULT_JOBS: int = Field(1, ge=1)
    PROGRESS_BAR: bool = True
    MONITOR_INTERVAL_SEC: float = Field(0.5, gt=0)


# --- Main Settings Class ---
class AppSettings(BaseSettings):
    """
    The application settings.

    It validates and loads settings from:
    1. Environment variables (highest priority)
    2. 'cfg/cfg.yml' file
    3. Pydantic model defaults (lowest priority)
    """

    # Environment name (e.g., 'Development', 'Test', 'Production')
    CLIMADAPT_ENVIRONMENT: str = "Development"

    LOGGING: LoggingSettings = LoggingSettings()
    RUNTIME: RuntimeSettings = RuntimeSettings()

    model_config = SettingsConfigDict(
        env_nested_delimiter="__",  # Allows LOGGING__LOG_DIR env var
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> tuple[PydanticBaseSettingsSource, ...]:
        """
        Customizes the load order.
        We want:
        1. Env vars (env_settings, then the .env file)
        2. YAML file (_yaml_config_settings_source)
        3. Pydantic defaults (init_settings)
        """
        return (
            env_settings,
            dotenv_settings,
            cast(PydanticBaseSettingsSource, _yaml_config_settings_source),
            init_settings,
        )


# --- Global Settings Singleton ---
@lru_cache
def get_settings() -> AppSettings:
    """
    Returns a cached instance of the AppSettings.

    Raises:
        ValidationError: If any setting is invalid.
    """
    try:
        return AppSettings()
    except ValidationError as e:
        print("--- CRITICAL: CONFIGURATION ERROR ---")
        print(f"Failed to load or validate settings: {e}")
        print("Please check your environment variables and/or cfg/cfg.yml file.")
        raise


# Singleton instance to be imported by other modules
settings: AppSettings = get_settings()


# --- Pydantic Schemas (Scenario / Run Config) ---
class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)


class ScenarioMeta(_Section):
    name: str
    master_seed: int = Field(0, ge=0)
    description: str = ""


class DataPaths(_Section):
    """Data files, relative to the config file's directory."""

    dem: str
    nodes: str
    edges: str
    pois: str
    zones: str
    survey: Optional[str] = None


class QuantileTableConfig(_Section):
    anchor_year: int
    points: list[tuple[float, float]]


class RainfallConfig(_Section):
    scenario_name: str
    tables: list[QuantileTableConfig] = Field(min_length=1)


class FloodConfig(_Section):
    open_border: bool = True


class TransportConfig(_Section):
    d_slow: float = Field(0.10, ge=0)
    d_block: float = Field(0.30, ge=0)
    slow_multiplier: float = Field(4.0, ge=1)
    access_threshold_s: float = Field(900.0, gt=0)

    @model_validator(mode="after")
    def _thresholds_ordered(self) -> "TransportConfig":
        if not self.d_slow < self.d_block:
            raise ValueError("d_slow must be strictly below d_block")
        return self


class FitSection(_Section):
    l2_lambda: float = Field(1.0, ge=0)
    max_iterations: int = Field(100, gt=0)
    tolerance: float = Field(1e-8, gt=0)
    include_intercept: bool = True


class QolConfig(_Section):
    # Explicit weights bypass fitting; otherwise the survey in `data` is fitted.
    weights: Optional[dict[str, float]] = None
    fit: FitSection = FitSection()


class MeasureConfig(_Section):
    capital_cost: float = Field(0.0, ge=0)
    annual_maintenance: float = Field(0.0, ge=0)
    drainage_bonus: float = Field(0.0, ge=0)
    retention_factor: float = Field(1.0, gt=0, le=1)
    storage_volume: float = Field(0.0, ge=0)
    pump_volume: float = Field(0.0, ge=0)
    elevation_delta: float = Field(0.0, ge=0)


class RewardConfig(_Section):
    beta_q: float = 1.0
    beta_a: float = -0.001
    beta_m: float = -0.001


class EnvSection(_Section):
    start_year: int = Field(2023, ge=2023, le=2100)
    end_year: int = Field(2100, ge=2023, le=2100)
    discount: float = Field(1.0, ge=0, le=1)
    reward: RewardConfig = RewardConfig()
    available_measures: Optional[list[str]] = None

    @model_validator(mode="after")
    def _horizon_non_empty(self) -> "EnvSection":
        if self.end_year < self.start_year:
            raise ValueError("end_year must not precede start_year")
        return self


class AgentSection(_Section):
    learning_rate: float = Field(0.1, gt=0, le=1)
    discount: Optional[float] = Field(None, ge=0, le=1)
    epsilon_start: float = Field(1.0, ge=0, le=1)
    epsilon_end: float = Field(0.05, ge=0, le=1)
    epsilon_decay_fraction: float = Field(0.8, gt=0, le=1)
    episodes: int = Field(500, gt=0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _epsilon_ordered(self) -> "AgentSection":
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon_end must not exceed epsilon_start")
        return self


class ScenarioConfig(_Section):
    """The run config file: one scenario plus every run parameter."""

    scenario: ScenarioMeta
    data: DataPaths
    rainfall: RainfallConfig
    flood: FloodConfig = FloodConfig()
    transport: TransportConfig = TransportConfig()
    qol: QolConfig = QolConfig()
    actions: dict[str, MeasureConfig]
    env: EnvSection = EnvSection()
    agent: AgentSection = AgentSection()


# --- Scenario Config Loading ---
def _node_line(node: Optional[yaml.Node], loc: tuple[Union[int, str], ...]) -> int:
    """1-based YAML line of the deepest node reachable along `loc`."""
    if node is None:
        return 1
    line = node.start_mark.line + 1
    for key in loc:
        child: Optional[yaml.Node] = None
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                if key_node.value == key:
                    child = value_node
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int):
            if 0 <= key < len(node.value):
                child = node.value[key]
        if child is None:
            break
        node = child
        line = node.start_mark.line + 1
    return line


def read_yaml(path: Union[str, Path]) -> tuple[Any, Optional[yaml.Node]]:
    """Reads a YAML file, returning the data and its node tree (for line info)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioParseError(f"cannot read file: {e}", path=str(path)) from e
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ScenarioParseError(f"invalid YAML: {e}", path=str(path), line=line) from e
    return data, root


def parse_scenario_config(
    data: Any, path: str = "<config>", root: Optional[yaml.Node] = None
) -> ScenarioConfig:
    """Validates already-parsed config data, reporting the first error's line."""
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = tuple(first["loc"])
        field = ".".join(str(part) for part in loc) or "<root>"
        raise ScenarioParseError(
            f"{field}: {first['msg']}", path=path, line=_node_line(root, loc)
        ) from e


def load_scenario_config(path: Union[str, Path]) -> ScenarioConfig:
    """Loads and validates a run config file."""
    data, root = read_yaml(path)
    return parse_scenario_config(data, path=str(path), root=root)
