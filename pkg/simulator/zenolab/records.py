"""Writers for records.csv and summary.json."""
import json
import logging
from pathlib import Path

import pandas as pd

from .schemas import RunSummary

logger = logging.getLogger(__name__)

RECORDS_FILE = "records.csv"
SUMMARY_FILE = "summary.json"


def records_to_csv(records: pd.DataFrame) -> str:
    """CSV text with a header row and 17 significant digits per float."""
    return records.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def summary_to_json(summary: RunSummary) -> str:
    return json.dumps(summary.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def write_outputs(summary: RunSummary, records: pd.DataFrame, out_dir: Path) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    records_path = out_dir / RECORDS_FILE
    summary_path = out_dir / SUMMARY_FILE
    # newline="" keeps the "\n" terminator on every platform
    with open(records_path, "w", encoding="utf-8", newline="") as f:
        f.write(records_to_csv(records))
    summary_path.write_text(summary_to_json(summary), encoding="utf-8")
    logger.info("wrote %s and %s", records_path, summary_path)
    return records_path, summary_path
