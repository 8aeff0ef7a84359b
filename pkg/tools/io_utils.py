"""
IO Utilities - CSV/JSON codecs for clouds, profiles and reports

Every writer goes through a temp file in the target directory followed by
os.replace, so a reader never sees a half-written artifact.
"""

import hashlib
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from dynamics.measures import ParticleCloud, SpaceTag
from dynamics.metrics import ProfilePoint
from dynamics.unipotent import ConvergenceRow
from utils.logger import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]

COORDINATE_FORMAT = "%.17g"
WEIGHT_FORMAT = "%.16e"


def atomic_write(path: PathLike, data: Union[str, bytes]) -> Path:
    """Write data to path via a temp file and os.replace."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug(f"Wrote {len(payload)} bytes to {path}")
    return path


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return COORDINATE_FORMAT % float(value)
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def json_text(payload: Any, indent: Optional[int] = 2) -> str:
    """Stable JSON: sorted keys, numpy scalars and arrays converted."""
    return json.dumps(payload, indent=indent, sort_keys=True, default=_json_default)


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    return atomic_write(path, json_text(payload) + "\n")


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


# --- clouds ---------------------------------------------------------------


def cloud_header(space: SpaceTag) -> List[str]:
    return ["w"] + space.coordinate_names


def save_cloud_csv(cloud: ParticleCloud, path: PathLike) -> Path:
    """Cloud CSV: header ``w,x1..xd`` (``w,x,y,z`` on the nilmanifold), one row per particle."""
    buffer = io.StringIO()
    buffer.write(",".join(cloud_header(cloud.space)) + "\n")
    table = np.column_stack([cloud.weights, cloud.points])
    fmt = [WEIGHT_FORMAT] + [COORDINATE_FORMAT] * cloud.dim
    np.savetxt(buffer, table, fmt=fmt, delimiter=",")
    return atomic_write(path, buffer.getvalue())


def load_cloud_csv(path: PathLike, space: Optional[SpaceTag] = None) -> ParticleCloud:
    """Inverse of save_cloud_csv; the space is inferred from the header when not given."""
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip().split(",")
    if not header or header[0] != "w":
        raise ValueError(f"{path}: cloud CSV must start with a 'w' column, got {header}")
    if space is None:
        names = header[1:]
        space = SpaceTag.heisenberg() if names == ["x", "y", "z"] else SpaceTag.torus(len(names))
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ParticleCloud(table[:, 1:], table[:, 0], space, label=Path(path).stem)


# --- profiles and reports -------------------------------------------------


def profile_csv(points: Sequence[ProfilePoint]) -> str:
    return csv_text(
        ["n", "fourier_value", "lipschitz_lower"],
        ((p.n, p.fourier_value, p.lipschitz_lower) for p in points),
    )


def save_profile_csv(points: Sequence[ProfilePoint], path: PathLike) -> Path:
    return atomic_write(path, profile_csv(points))


def convergence_csv(rows: Sequence[ConvergenceRow]) -> str:
    """One line per (n, entry); entries are written 1-based as (i, j)."""
    out = []
    for row in rows:
        for (i, j), deviation in sorted(row.deviations.items()):
            out.append((row.n, row.max_deviation, i + 1, j + 1, deviation))
    return csv_text(["n", "max_deviation", "entry_i", "entry_j", "deviation_ij"], out)


def save_convergence_csv(rows: Sequence[ConvergenceRow], path: PathLike) -> Path:
    return atomic_write(path, convergence_csv(rows))
