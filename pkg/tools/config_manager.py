import json
import logging
import os
from typing import Any, Dict, List, Tuple

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
                                     "data", "default_settings.json")
TRUE_WORDS = {"true", "1", "yes", "on"}
FALSE_WORDS = {"false", "0", "no", "off"}


class ConfigError(ValueError):
    pass


def parse_bool(text: str) -> bool:
    word = str(text).strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ConfigError(f"expected a boolean (true/false/1/0/yes/no), got {text!r}")


def load_settings() -> Dict[str, Any]:
    """Bundled defaults, overridden by S2ML_* variables from the environment or .env."""
    load_dotenv()
    path = os.getenv("S2ML_SETTINGS", DEFAULT_SETTINGS_PATH)
    try:
        with open(path, "r") as f:
            settings = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read settings file {path}: {e}") from e

    # Get environment overrides
    if os.getenv("S2ML_THREADS"):
        try:
            settings["threads"] = int(os.environ["S2ML_THREADS"])
        except ValueError:
            raise ConfigError(f"S2ML_THREADS must be an integer, got {os.environ['S2ML_THREADS']!r}")
    if os.getenv("S2ML_DETERMINISTIC"):
        settings["deterministic"] = parse_bool(os.environ["S2ML_DETERMINISTIC"])
    if os.getenv("S2ML_LOG_LEVEL"):
        settings["log_level"] = os.environ["S2ML_LOG_LEVEL"].upper()
    return settings


def read_config_file(path: str) -> List[Tuple[str, str]]:
    """`key = value` pairs in file order; `#` starts a comment."""
    pairs = []
    with open(path, "r") as f:
        for number, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{number}: expected 'key = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{number}: missing key")
            pairs.append((key.replace("_", "-"), value))
    return pairs


def config_to_argv(pairs: List[Tuple[str, str]], option_kinds: Dict[str, str], source: str = "config") -> List[str]:
    """
    Turn config pairs into command-line tokens.

    option_kinds maps an option name to "flag" (boolean switch), "multi"
    (repeatable, comma-separated values allowed) or "value".
    """
    argv = []
    for key, value in pairs:
        kind = option_kinds.get(key)
        if kind is None:
            raise ConfigError(f"{source}: unknown key {key!r}")
        if kind == "flag":
            if parse_bool(value):
                argv.append(f"--{key}")
        elif kind == "multi":
            for item in value.split(","):
                argv.extend([f"--{key}", item.strip()])
        else:
            argv.extend([f"--{key}", value])
    return argv
