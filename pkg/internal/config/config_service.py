import copy
import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pydantic import ValidationError

from internal.dependencies.errors import ConfigInvalid

from .config_model import LabDefaults, ScenarioModel

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)

# Get the directory of the current script
current_dir = Path(__file__).parent
# Navigate up to the root project directory and find lab_defaults.toml
defaults_path = current_dir.parent.parent / "lab_defaults.toml"
assert defaults_path.exists(), f"Defaults file not found at {defaults_path}"

SECTIONS = (
    "symbols",
    "flow",
    "phase",
    "fbi",
    "modevol",
    "contours",
    "schrodinger",
    "detector",
)


@lru_cache(maxsize=1)
def _raw_defaults() -> Dict[str, Any]:
    with open(defaults_path, "rb") as f:
        return tomllib.load(f)


def get_lab_defaults(overrides: Optional[Dict[str, Any]] = None) -> LabDefaults:
    """Validated defaults, optionally with per-section overrides merged in."""
    raw = _merge(copy.deepcopy(_raw_defaults()), overrides or {})
    try:
        return LabDefaults.model_validate(raw)
    except ValidationError as e:
        raise _config_error(e, raw)


def json_pointer(loc: Sequence[Any], raw: Any) -> str:
    """RFC 6901 pointer for a pydantic error location.

    Location parts that do not exist in the raw document (union tags) are
    skipped; a trailing missing key is kept.
    """
    parts = []
    node = raw
    for i, part in enumerate(loc):
        last = i == len(loc) - 1
        if isinstance(node, dict) and part in node:
            parts.append(str(part))
            node = node[part]
        elif isinstance(node, list) and isinstance(part, int) and part < len(node):
            parts.append(str(part))
            node = node[part]
        elif last and isinstance(node, dict):
            parts.append(str(part))
    escaped = [p.replace("~", "~0").replace("/", "~1") for p in parts]
    return "/" + "/".join(escaped) if escaped else ""


def _config_error(error: ValidationError, raw: Any) -> ConfigInvalid:
    first = error.errors()[0]
    pointer = json_pointer(first["loc"], raw)
    logger.error(f"Config validation failed at {pointer}: {first['msg']}")
    return ConfigInvalid(
        f"invalid configuration at {pointer or '/'}: {first['msg']}",
        pointer,
        {"errors": len(error.errors())},
    )


def _merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            base[key] = _merge(base[key], value)
        else:
            base[key] = value
    return base


def parse_scenario(document: Dict[str, Any]) -> ScenarioModel:
    """Validate a scenario document, filling absent sections from the defaults."""
    if not isinstance(document, dict):
        raise ConfigInvalid("scenario must be a JSON object", "")
    merged = copy.deepcopy(document)
    defaults = _raw_defaults()
    for section in SECTIONS:
        supplied = merged.get(section, {})
        if not isinstance(supplied, dict):
            raise ConfigInvalid(f"section {section} must be an object", f"/{section}")
        merged[section] = _merge(copy.deepcopy(defaults[section]), supplied)
    try:
        scenario = ScenarioModel.model_validate(merged)
    except ValidationError as e:
        raise _config_error(e, merged)
    logger.info(f"Successfully validated scenario {scenario.name}")
    return scenario


def load_scenario(path: Path) -> ScenarioModel:
    """Read and validate a scenario JSON file."""
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid(f"scenario file not found: {path}", "")
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"scenario is not valid JSON: {e}", "")
    return parse_scenario(document)
