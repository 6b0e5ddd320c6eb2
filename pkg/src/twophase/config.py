"""Run configuration: profiles, flat key = value files and validation."""
import configparser
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from .bart import BartOptions
from .errors import InvalidConfig
from .popgen import PopulationConfig
from .propensity.adjustment import AdjustmentOptions
from .sampling import ScenarioConfig
from .streams import stream

logger = logging.getLogger(__name__)

METHOD_NAMES = ("benchmark", "wt-lgm", "wt-chaid", "wt-bart", "wt-rbart", "mi-bart", "mi-rbart")
MI_METHODS = ("mi-bart", "mi-rbart")
FORMATS = ("csv", "json")


@dataclass(kw_only=True, frozen=True)
class Profile:
    replicates: int
    n_trees: int
    n_keep: int
    n_burn: int
    thin: int
    imputations: int


PROFILES = {
    "desk": Profile(replicates=100, n_trees=50, n_keep=200, n_burn=500, thin=5, imputations=10),
    "paper": Profile(replicates=500, n_trees=100, n_keep=1000, n_burn=1000, thin=10, imputations=10),
}


@dataclass(kw_only=True, frozen=True)
class RunConfig:
    scenario: ScenarioConfig = ScenarioConfig()
    methods: tuple[str, ...] = METHOD_NAMES
    replicates: int = 100
    imputations: int = 10
    seed: int = 0
    bart: BartOptions = BartOptions(n_trees=50, n_keep=200, n_burn=500, thin=5)
    adjustment: AdjustmentOptions = field(default=None)
    level: float = 0.95
    collapse_singletons: bool = False
    jobs: int = 1
    profile: str = "desk"
    out: Optional[Path] = None
    format: str = "csv"
    replicate_out: Optional[Path] = None

    def __post_init__(self):
        if self.adjustment is None:
            object.__setattr__(self, "adjustment", AdjustmentOptions(bart=self.bart))
        unknown = [m for m in self.methods if m not in METHOD_NAMES]
        if unknown or not self.methods:
            raise InvalidConfig(f"unknown or empty method list {list(self.methods)}; choose from {list(METHOD_NAMES)}")
        if len(set(self.methods)) != len(self.methods):
            raise InvalidConfig(f"duplicate methods in {list(self.methods)}")
        if self.replicates < 1:
            raise InvalidConfig(f"replicates must be >= 1, got {self.replicates}")
        if any(m in MI_METHODS for m in self.methods):
            if self.imputations < 2:
                raise InvalidConfig(f"MI methods need at least 2 imputations, got {self.imputations}")
            if self.imputations > self.bart.n_keep:
                raise InvalidConfig(f"{self.imputations} imputations but only {self.bart.n_keep} retained draws")
        if not 0.0 < self.level < 1.0:
            raise InvalidConfig(f"confidence level must lie in (0, 1), got {self.level}")
        if self.jobs == 0:
            raise InvalidConfig("jobs must be non-zero (negative counts back from the CPU count)")
        if self.format not in FORMATS:
            raise InvalidConfig(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.profile not in PROFILES:
            raise InvalidConfig(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)}")

    def population_for(self, replicate: int) -> PopulationConfig:
        """Population settings of one replicate; the seed is a pure function of (seed, replicate)."""
        population_seed = int(stream(self.seed, replicate, "population").integers(2**63 - 1))
        return PopulationConfig(n_continuous=self.scenario.n_continuous, n_binary=self.scenario.n_binary,
                                seed=population_seed)


def load_config_file(path: Union[str, Path]) -> dict[str, str]:
    """Flat ``key = value`` lines; blank lines and ``#`` comments are ignored."""
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",), inline_comment_prefixes=("#",))
    try:
        text = path.read_text(encoding="utf-8")
        parser.read_string("[run]\n" + text, source=str(path))
    except OSError as exc:
        raise InvalidConfig(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise InvalidConfig(f"malformed config file {path}: {exc}") from exc
    return {key.replace("-", "_"): value for key, value in parser["run"].items()}


def _as_bool(key: str, value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise InvalidConfig(f"{key} must be a boolean, got {value!r}")


def _as_int(key: str, value: Any) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"{key} must be an integer, got {value!r}") from None


def _as_float(key: str, value: Any) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise InvalidConfig(f"{key} must be a number, got {value!r}") from None


def _as_methods(value: Any) -> tuple[str, ...]:
    if isinstance(value, str):
        value = value.split(",")
    return tuple(str(v).strip().lower() for v in value if str(v).strip())


CONVERTERS = {
    "scenario": lambda k, v: str(v).upper(),
    "methods": lambda k, v: _as_methods(v),
    "replicates": _as_int,
    "imputations": _as_int,
    "seed": _as_int,
    "profile": lambda k, v: str(v).lower(),
    "out": lambda k, v: Path(v),
    "replicate_out": lambda k, v: Path(v),
    "format": lambda k, v: str(v).lower(),
    "jobs": _as_int,
    "level": _as_float,
    "phase2_selection_prob": _as_float,
    "phase1_weights_adjust_nonresponse": _as_bool,
    "collapse_singletons": _as_bool,
    "n_trees": _as_int,
    "n_keep": _as_int,
    "n_burn": _as_int,
    "thin": _as_int,
    "min_propensity": _as_float,
}


def build_run_config(*sources: Mapping[str, Any]) -> RunConfig:
    """Merge settings from the profile, then each source in order (later wins).

    ``None`` values in a source are skipped, so unset command-line flags do
    not override the config file.
    """
    values: dict[str, Any] = {}
    for source in sources:
        for key, value in source.items():
            key = key.replace("-", "_")
            if value is None:
                continue
            if key not in CONVERTERS:
                raise InvalidConfig(f"unknown setting {key!r}")
            values[key] = CONVERTERS[key](key, value)

    profile_name = values.get("profile", "desk")
    if profile_name not in PROFILES:
        raise InvalidConfig(f"unknown profile {profile_name!r}; choose from {sorted(PROFILES)}")
    profile = PROFILES[profile_name]

    bart = BartOptions(
        n_trees=values.get("n_trees", profile.n_trees),
        n_keep=values.get("n_keep", profile.n_keep),
        n_burn=values.get("n_burn", profile.n_burn),
        thin=values.get("thin", profile.thin),
    )
    scenario = ScenarioConfig(
        scenario=values.get("scenario", "S1"),
        phase2_selection_prob=values.get("phase2_selection_prob", 0.5),
        phase1_weights_adjust_nonresponse=values.get("phase1_weights_adjust_nonresponse", True),
    )
    adjustment = AdjustmentOptions(bart=bart, min_propensity=values.get("min_propensity", 0.01))
    config = RunConfig(
        scenario=scenario,
        methods=values.get("methods", METHOD_NAMES),
        replicates=values.get("replicates", profile.replicates),
        imputations=values.get("imputations", profile.imputations),
        seed=values.get("seed", 0),
        bart=bart,
        adjustment=adjustment,
        level=values.get("level", 0.95),
        collapse_singletons=values.get("collapse_singletons", False),
        jobs=values.get("jobs", 1),
        profile=profile_name,
        out=values.get("out"),
        format=values.get("format", "csv"),
        replicate_out=values.get("replicate_out"),
    )
    logger.debug("run config: %s", config)
    return config

