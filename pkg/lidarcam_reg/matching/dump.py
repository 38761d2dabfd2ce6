"""
Plain-text match dumps

    # theta_c=0.2 window=5 sim_temperature=0.1 fine_temperature=1
    u0 v0 u1 v1 confidence tau2
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np

from ..errors import FormatError
from ..geometry.formats import PathLike, write_text_atomic
from .refine import FineMatchSet

logger = logging.getLogger(__name__)

COLUMNS = ("u0", "v0", "u1", "v1", "confidence", "tau2")


@dataclass(frozen=True)
class MatchRecords:
    """Tabular view of a match file; header values are kept as text"""

    lidar_px: np.ndarray
    cam_px: np.ndarray
    confidence: np.ndarray
    tau2: np.ndarray
    header: Dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.confidence)

    @classmethod
    def from_fine(cls, fine: FineMatchSet, **header) -> "MatchRecords":
        return cls(fine.lidar_px, fine.cam_px, fine.confidence, fine.tau2,
                   {k: str(v) for k, v in header.items()})


def format_matches(records: MatchRecords) -> str:
    head = " ".join(f"{k}={v}" for k, v in records.header.items())
    lines = [f"# {head}".rstrip()]
    table = np.column_stack([records.lidar_px, records.cam_px,
                             records.confidence, records.tau2]).reshape(-1, len(COLUMNS))
    for row in table:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def write_matches(path: PathLike, matches: Union[FineMatchSet, MatchRecords], **header) -> None:
    """
    Write matches atomically

    Args:
        path: destination file
        matches: refined matches or records read back from another dump
        header: parameters recorded in the first line (theta_c, window, temperatures)
    """
    records = matches if isinstance(matches, MatchRecords) else MatchRecords.from_fine(matches)
    if header:
        records = MatchRecords(records.lidar_px, records.cam_px, records.confidence, records.tau2,
                               {**records.header, **{k: str(v) for k, v in header.items()}})
    write_text_atomic(path, format_matches(records))
    logger.debug("✓ wrote %d matches to %s", len(records), path)


def read_matches(path: PathLike) -> MatchRecords:
    header: Dict[str, str] = {}
    rows = []
    for number, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for token in line[1:].split():
                if "=" in token:
                    key, value = token.split("=", 1)
                    header[key] = value
            continue
        parts = line.split()
        if len(parts) != len(COLUMNS):
            raise FormatError(f"{path}:{number}: expected {len(COLUMNS)} columns, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as e:
            raise FormatError(f"{path}:{number}: {e}") from e
    table = np.asarray(rows, dtype=np.float64).reshape(-1, len(COLUMNS))
    return MatchRecords(table[:, 0:2], table[:, 2:4], table[:, 4], table[:, 5], header)
