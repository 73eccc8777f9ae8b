"""Configuration dataclasses and the JSON run-config loader."""

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import jsonschema

from activations import ActivationKind
from network import NetworkSpec, ShapeMismatchError


class ConfigurationError(Exception):
    """Raised when configuration parameters are invalid."""
    pass


class Check(Enum):
    """Certification checks a campaign can run."""
    LAYERS = "layers"
    JACOBIAN = "jacobian"
    HESSIAN = "hessian"
    REMAINDER = "remainder"


# Fixed evaluation order of the checks inside a campaign.
CHECK_ORDER: Tuple[Check, ...] = (Check.LAYERS, Check.JACOBIAN, Check.HESSIAN, Check.REMAINDER)


def parse_checks(names) -> Tuple[Check, ...]:
    """Convert check names to a de-duplicated tuple in campaign order."""
    try:
        requested = {Check(name) if not isinstance(name, Check) else name for name in names}
    except ValueError as e:
        raise ConfigurationError(f"Unknown check: {e}") from None
    return tuple(check for check in CHECK_ORDER if check in requested)


@dataclass(frozen=True)
class CampaignConfig:
    """Configuration of a randomized certification campaign.

    Attributes:
        spec: Network architecture
        theta_bar: Admissible per-layer spectral-norm radius
        input_norms: Target ||sigma|| values, cycled over the samples
        samples: Samples per check
        seed: 64-bit campaign seed
        checks: Checks to run, in campaign order
        workers: Number of worker processes (1 = serial)
        bound_scale: Multiplier applied to every bound; 1.0 except in harness self-tests
    """
    spec: NetworkSpec
    theta_bar: float
    input_norms: Tuple[float, ...] = (0.0, 1.0, 10.0)
    samples: int = 100
    seed: int = 0
    checks: Tuple[Check, ...] = CHECK_ORDER
    workers: int = 1
    bound_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "input_norms", tuple(float(x) for x in self.input_norms))
        object.__setattr__(self, "checks", parse_checks(self.checks))
        if not self.theta_bar > 0:
            raise ConfigurationError(f"theta_bar must be positive, got {self.theta_bar}")
        if self.samples < 1:
            raise ConfigurationError(f"samples must be at least 1, got {self.samples}")
        if not self.input_norms:
            raise ConfigurationError("input_norms must not be empty")
        if any(x < 0 for x in self.input_norms):
            raise ConfigurationError(f"input_norms must be nonnegative, got {self.input_norms}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be at least 1, got {self.workers}")
        if not self.bound_scale > 0:
            raise ConfigurationError(f"bound_scale must be positive, got {self.bound_scale}")


RUN_CONFIG_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "DNN bound certification run",
    "type": "object",
    "additionalProperties": False,
    "required": ["widths", "activation", "theta_bar", "input_norms", "samples", "seed", "checks"],
    "properties": {
        "widths": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 3,
        },
        "activation": {"type": "string", "enum": [kind.value for kind in ActivationKind]},
        "theta_bar": {"type": "number", "exclusiveMinimum": 0},
        "input_norms": {
            "type": "array",
            "items": {"type": "number", "minimum": 0},
            "minItems": 1,
        },
        "samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "checks": {
            "type": "array",
            "items": {"type": "string", "enum": [check.value for check in Check]},
            "uniqueItems": True,
        },
        "output": {"type": "string", "minLength": 1},
        "workers": {"type": "integer", "minimum": 1},
    },
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed run-config file.

    Attributes:
        widths: L_0..L_{k+1}, L_0 including the bias slot
        activation: Hidden-layer activation name
        theta_bar: Admissible radius
        input_norms: Target input norms
        samples: Samples per check
        seed: Campaign seed
        checks: Check names
        output: Report directory
        workers: Worker processes
    """
    widths: Tuple[int, ...]
    activation: str
    theta_bar: float
    input_norms: Tuple[float, ...]
    samples: int
    seed: int
    checks: Tuple[str, ...]
    output: str = "reports"
    workers: int = 1

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """Validate ``data`` against the schema and cross-field constraints."""
        try:
            jsonschema.validate(instance=data, schema=RUN_CONFIG_SCHEMA)
        except jsonschema.ValidationError as e:
            where = "/".join(str(part) for part in e.absolute_path) or "<root>"
            raise ConfigurationError(f"Invalid config field '{where}': {e.message}") from None

        config = cls(
            widths=tuple(data["widths"]),
            activation=data["activation"],
            theta_bar=float(data["theta_bar"]),
            input_norms=tuple(float(x) for x in data["input_norms"]),
            samples=int(data["samples"]),
            seed=int(data["seed"]),
            checks=tuple(data["checks"]),
            output=data.get("output", "reports"),
            workers=int(data.get("workers", 1)),
        )
        # surfaces NetworkSpec constraints (e.g. L_0 >= 2) at parse time
        config.network_spec()
        return config

    def to_dict(self) -> Dict[str, Any]:
        """Plain-JSON echo of the effective config."""
        return {
            "widths": list(self.widths),
            "activation": self.activation,
            "theta_bar": self.theta_bar,
            "input_norms": list(self.input_norms),
            "samples": self.samples,
            "seed": self.seed,
            "checks": list(self.checks),
            "output": self.output,
            "workers": self.workers,
        }

    def network_spec(self) -> NetworkSpec:
        try:
            return NetworkSpec(self.widths, ActivationKind.from_name(self.activation))
        except (ShapeMismatchError, ValueError) as e:
            raise ConfigurationError(f"Invalid config field 'widths': {e}") from None

    def campaign_config(self, bound_scale: float = 1.0) -> CampaignConfig:
        return CampaignConfig(
            spec=self.network_spec(),
            theta_bar=self.theta_bar,
            input_norms=self.input_norms,
            samples=self.samples,
            seed=self.seed,
            checks=parse_checks(self.checks),
            workers=self.workers,
            bound_scale=bound_scale,
        )


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a UTF-8 JSON run config.

    Raises:
        ConfigurationError: On unreadable files, JSON syntax errors (with line
            and column) or schema violations (with the field path)
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"{path}: JSON syntax error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    return RunConfig.from_dict(data)
