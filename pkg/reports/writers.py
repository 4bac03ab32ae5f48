import json
import logging
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict

import pandas as pd

from config.settings import APP_CONFIG, OUTPUT_FILES
from utils.helpers import canonical_json

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"


def write_text_atomic(path: Path, text: str):
    """
    Write text through a temp file in the target directory and rename it into place.

    Args:
        path: Destination file
        text: Content, written with LF line endings
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.debug("wrote %s", path)


def csv_text(frame: pd.DataFrame) -> str:
    """Header plus rows, comma separated, 17 significant digits, LF endings"""
    return frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def write_json(path: Path, data: Any):
    write_text_atomic(path, canonical_json(data))


def write_csv(path: Path, frame: pd.DataFrame):
    write_text_atomic(path, csv_text(frame))


def read_json_report(path: Path) -> Dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def read_csv_report(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def write_run_metadata(out_dir: Path, command: str, config_sha: str):
    """Sidecar with wall-clock timestamps; report files themselves stay timestamp-free"""
    write_json(
        Path(out_dir) / OUTPUT_FILES["metadata"],
        {
            "command": command,
            "config_sha256": config_sha,
            "finished_at": datetime.now(timezone.utc).isoformat(),
            "version": APP_CONFIG["version"],
        },
    )
