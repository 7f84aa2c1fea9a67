# utils/reports.py
"""Deterministic JSON reports, CSV tables and the consolidated summary."""
import hashlib
import json
import math
from fractions import Fraction
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from config import REPORT_SCHEMA_VERSION, logger
from utils.errors import SchemaMismatchError, UsageError

SUMMARY_COLUMNS = ["report", "task", "group", "measure", "k", "status", "dimension", "kleiner_bound", "pass_rate",
                   "failed_checks"]


def to_jsonable(obj):
    """Plain JSON types only; non-finite floats become strings so reports stay valid JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, complex):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, Path):
        return str(obj)
    raise UsageError(f"cannot serialize {type(obj).__name__} into a report")


def dumps(report: Dict) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2) + "\n"


def config_digest(config: Dict) -> str:
    canonical = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def write_report(report: Dict, out_dir: Union[str, Path], stem: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{stem}.json"
    path.write_text(dumps(report), encoding="utf-8")
    logger.info(f"Report written to {path}")
    return path


def write_tables(tables: Dict[str, pd.DataFrame], out_dir: Union[str, Path], stem: str) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(tables):
        path = out / f"{stem}_{name}.csv"
        tables[name].to_csv(path, index=False, lineterminator="\n")
        paths.append(path)
    return paths


def load_report(path: Union[str, Path]) -> Dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Cannot read report {path}: {e}")
        raise UsageError(f"cannot read report {path}: {e}") from e


def _summary_row(path: Path, report: Dict) -> Dict:
    config = report.get("config", {})
    measure = config.get("measure", {})
    label = measure.get("family", "") if isinstance(measure, dict) else str(measure)
    if isinstance(measure, dict) and measure.get("power", 1) != 1:
        label = f"{label}^*{measure['power']}"
    return {
        "report": path.name,
        "task": report.get("task"),
        "group": config.get("group"),
        "measure": label,
        "k": config.get("k"),
        "status": report.get("status"),
        "dimension": report.get("dimension"),
        "kleiner_bound": report.get("kleiner_bound"),
        "pass_rate": report.get("pass_rate"),
        "failed_checks": ",".join(report.get("failed_checks") or []),
    }


def emit_summary(paths: Iterable[Union[str, Path]], out: Optional[Union[str, Path]] = None) -> pd.DataFrame:
    """One row per report; every report must carry the current schema version."""
    paths = [Path(p) for p in paths]
    if not paths:
        raise UsageError("emit_summary needs at least one report")
    reports = [(p, load_report(p)) for p in paths]
    offending = [str(p) for p, r in reports if r.get("schema_version") != REPORT_SCHEMA_VERSION]
    if offending:
        logger.error(f"Schema mismatch in {offending}")
        raise SchemaMismatchError(
            f"reports not on schema {REPORT_SCHEMA_VERSION}: {', '.join(offending)}", offending
        )
    frame = pd.DataFrame([_summary_row(p, r) for p, r in reports], columns=SUMMARY_COLUMNS)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(out, index=False, lineterminator="\n")
        logger.info(f"Summary of {len(frame)} reports written to {out}")
    return frame
