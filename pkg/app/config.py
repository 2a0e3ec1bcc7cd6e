import logging
import os
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from .errors import ConfigError
from .schemas import RunConfig

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "TINYKV_CONFIG"

# 1. Load .env from the working directory (optional; nothing is required)
load_dotenv()


def parse_overrides(pairs: Iterable[str]) -> Dict[str, str]:
    """`key=value` strings from repeated `--set` flags."""
    out: Dict[str, str] = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override '{pair}' is not key=value")
        out[key.strip()] = value.strip()
    return out


def read_config_file(path: Optional[str]) -> Dict[str, str]:
    if path is None:
        return {}
    file = Path(path)
    if not file.is_file():
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(file)
    missing = [k for k, v in values.items() if v is None]
    if missing:
        raise ConfigError(f"config keys without a value in {path}: {', '.join(missing)}")
    return dict(values)


def build_run_config(
    path: Optional[str] = None,
    overrides: Iterable[str] = (),
    flags: Optional[Mapping[str, object]] = None,
) -> RunConfig:
    """Merge file, `--set` overrides and dedicated flags (last wins) into a RunConfig."""
    # 2. Resolve the file
    path = path or os.getenv(CONFIG_ENV_VAR) or None
    raw: Dict[str, object] = {}
    raw.update(read_config_file(path))

    # 3. Layer overrides
    raw.update(parse_overrides(overrides))
    raw.update({k: v for k, v in (flags or {}).items() if v is not None})

    try:
        cfg = RunConfig(**raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "config"
        raise ConfigError(f"{where}: {first['msg']}") from exc
    logger.debug("run config from %s: %s", path or "defaults", cfg.model_dump())
    return cfg
