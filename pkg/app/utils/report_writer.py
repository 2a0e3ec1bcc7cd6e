import json
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from ..models import OutputFormat

SCHEMA_VERSION = 1

SCHEMAS = {
    "tinykv-steps": ["step", "policy", "pages_total", "pages_selected", "hit_rate", "sim_cycles", "out_err"],
    "tinykv-sweep": ["S", "k_ratio", "mean_out_err", "sim_cycles", "mean_cycles", "hit_rate", "mem_fraction"],
    "tinykv-serving": ["policy", "sessions", "p50_ms", "p99_ms", "throughput", "hit_rate", "rho_hat",
                       "mem_fraction", "mean_service_ms"],
    "tinykv-cost": None,
    "tinykv-bench": ["op", "tokens", "pages", "mean_us", "min_us"],
}


def schema_line(name: str) -> str:
    return f"# schema: {name} v{SCHEMA_VERSION}"


def to_csv_text(frame: pd.DataFrame, schema: str) -> str:
    columns: Optional[List[str]] = SCHEMAS[schema]
    if columns is not None:
        frame = frame[columns]
    body = frame.to_csv(index=False, float_format="%.10g", lineterminator="\n")
    return schema_line(schema) + "\n" + body


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return None if np.isnan(value) else float(value)
    if isinstance(value, float) and value != value:
        return None
    return value


def to_json_text(frame: pd.DataFrame, schema: str, extra: Optional[dict] = None) -> str:
    rows = [{k: _plain(v) for k, v in row.items()} for row in frame.to_dict(orient="records")]
    doc = {"schema": schema, "version": SCHEMA_VERSION, "rows": rows}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def render(frame: pd.DataFrame, schema: str, fmt: Union[OutputFormat, str], extra: Optional[dict] = None) -> str:
    if OutputFormat(fmt) == OutputFormat.JSON:
        return to_json_text(frame, schema, extra)
    return to_csv_text(frame, schema)


def write_report(frame: pd.DataFrame, schema: str, fmt: Union[OutputFormat, str], out: Optional[str],
                 extra: Optional[dict] = None) -> Optional[Path]:
    """Write the report to `out`; returns the path, or None when there is nowhere to write."""
    if out is None:
        return None
    path = Path(out)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(render(frame, schema, fmt, extra), encoding="utf-8")
    return path
