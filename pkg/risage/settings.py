"""
Runtime settings: .env file first, then environment variables, then CLI flags
"""

import logging
import os
from typing import Optional

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from risage.errors import ConfigError

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240601
ENV_PREFIX = "RISAGE_"


class RuntimeSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = Field(default=DEFAULT_SEED, ge=0, lt=2**64)
    workers: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    mlflow_uri: Optional[str] = None
    mlflow_experiment: str = "risage_link"


def load_settings(dotenv_path: Optional[str] = None, **overrides) -> RuntimeSettings:
    """Resolve settings; explicit overrides (CLI flags) win over the environment"""
    load_dotenv(dotenv_path=dotenv_path, override=False)

    values = {}
    for name in RuntimeSettings.model_fields:
        raw = os.getenv(f"{ENV_PREFIX}{name.upper()}")
        if raw not in (None, ""):
            values[name] = raw

    values.update({k: v for k, v in overrides.items() if v is not None})

    try:
        settings = RuntimeSettings(**values)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"invalid runtime setting: {first['msg']}", field=f"{ENV_PREFIX}{field.upper()}") from e

    logger.debug(f"Runtime settings: {settings.model_dump()}")
    return settings
