import csv
import json
import logging
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from pydantic import BaseModel

from .report_model import CertificateSummary, RunManifest

logging.basicConfig(level=logging.DEBUG)
logger = logging.getLogger(__name__)


def _cell(value: Any) -> Any:
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return int(value)
    return value


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Long-format CSV; floats are written with repr so reruns are bit-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(list(header))
        count = 0
        for row in rows:
            w.writerow([_cell(v) for v in row])
            count += 1
    logger.info(f"Successfully wrote {count} rows to {path}")
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    """Header and float matrix of a CSV written by write_csv."""
    with Path(path).open(newline="", encoding="utf-8") as f:
        r = csv.reader(f)
        header = next(r)
        data = np.array([[float(v) for v in row] for row in r], dtype=float)
    return header, data


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, default=_json_default)
    return path


def _json_default(value: Any) -> Any:
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    raise TypeError(f"not serializable: {type(value).__name__}")


def write_manifest(out_dir: Path, manifest: RunManifest) -> Path:
    path = write_json(Path(out_dir) / "manifest.json", manifest.model_dump(mode="json"))
    logger.info(f"Successfully wrote manifest for {manifest.subcommand}")
    return path


def certificate(name: str, passed: bool, values: Any) -> CertificateSummary:
    """Gate summary; pydantic reports are dumped, dicts are kept as they are."""
    if isinstance(values, BaseModel):
        values = values.model_dump(mode="json")
    plain = json.loads(json.dumps(values, default=_json_default))
    return CertificateSummary(name=name, passed=bool(passed), values=plain)
