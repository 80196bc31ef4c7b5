"""
Run tracking: append-only JSON-lines run log plus optional MLflow runs
"""

import json
import logging
import math
import subprocess
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import mlflow
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from risage import __version__
from risage.settings import RuntimeSettings

logger = logging.getLogger(__name__)

RUN_LOG = "runs.jsonl"


def describe_version() -> str:
    """git describe of the working tree, or the package version outside a checkout"""
    try:
        out = subprocess.run(
            ["git", "describe", "--tags", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


class RunManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    run_id: str = Field(default_factory=lambda: uuid.uuid4().hex)
    command: str
    config_hash: str
    version: str = Field(default_factory=describe_version)
    seed: Optional[int] = None
    samples: Optional[int] = None
    workers: int = 1
    timestamp: str = Field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    outputs: List[str] = []
    params: Dict[str, Any] = {}
    metrics: Dict[str, float] = {}


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def manifest_record(manifest: RunManifest) -> Dict[str, Any]:
    return _json_safe(manifest.model_dump())


def write_manifest(manifest: RunManifest, out_dir: Union[str, Path]) -> Path:
    """manifest_<command>.json next to the outputs"""
    path = Path(out_dir) / f"manifest_{manifest.command}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest_record(manifest), f, indent=2, ensure_ascii=False)
    return path


def log_run(manifest: RunManifest, out_dir: Union[str, Path]) -> None:
    """Append the manifest to runs.jsonl"""
    try:
        path = Path(out_dir) / RUN_LOG
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a", encoding="utf-8") as f:
            f.write(json.dumps(manifest_record(manifest), ensure_ascii=False) + "\n")
        logger.info(f"✅ Logged run {manifest.run_id} to {path}")
    except Exception as e:
        logger.error(f"❌ Error logging run: {e}")


def track_run_with_mlflow(manifest: RunManifest, settings: RuntimeSettings, artifacts: Optional[List[Path]] = None) -> bool:
    """Mirror the manifest into an MLflow run; disabled unless a tracking URI is set"""
    if not settings.mlflow_uri:
        return False
    try:
        mlflow.set_tracking_uri(settings.mlflow_uri)
        mlflow.set_experiment(settings.mlflow_experiment)
        with mlflow.start_run(run_name=f"{manifest.command}_{manifest.run_id[:8]}"):
            mlflow.log_param("command", manifest.command)
            mlflow.log_param("config_hash", manifest.config_hash)
            mlflow.log_param("seed", manifest.seed)
            mlflow.log_param("samples", manifest.samples)
            for key, value in manifest.params.items():
                mlflow.log_param(key, value)

            for key, value in manifest.metrics.items():
                if math.isfinite(value):
                    mlflow.log_metric(key, value)

            mlflow.log_dict(manifest_record(manifest), f"manifest_{manifest.run_id}.json")
            for path in artifacts or []:
                mlflow.log_artifact(str(path))

        logger.info(f"✅ Tracked run with MLflow: {manifest.run_id}")
        return True
    except Exception as e:
        logger.error(f"❌ Error tracking with MLflow: {e}")
        return False


def csv_header(schema: str, config_hash: str, seed: Optional[int]) -> str:
    seed_text = "none" if seed is None else str(seed)
    return f"# schema={schema} config_hash={config_hash[:16]} seed={seed_text}\n"


def write_csv(frame: pd.DataFrame, path: Union[str, Path], schema: str, config_hash: str, seed: Optional[int]) -> Path:
    """Metadata line, then the frame with a fixed float format and no index"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(csv_header(schema, config_hash, seed))
        frame.to_csv(f, index=False, float_format="%.12g", lineterminator="\n")
    return path
