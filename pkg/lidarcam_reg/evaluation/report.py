"""
Metrics tables: aligned plain text and comma-separated
"""

import csv
import io
import math
from pathlib import Path
from typing import List

from ..geometry.formats import PathLike, write_text_atomic
from .metrics import AXES, MetricsReport, MetricsRow

CSV_COLUMNS = (
    ["group", "samples", "failures", "e_t_mean", "e_t_std", "e_r_mean", "e_r_std"]
    + [f"{axis}_mean" for axis in AXES]
    + ["acc", "precision", "failure_rate"]
)
SAMPLE_COLUMNS = ("sample_id", "group", "failure", "e_t", "e_r") + AXES + ("precision", "matches", "inliers")


def _f(value) -> str:
    return repr(float(value))


def _num(value: float, digits: int = 4) -> str:
    return "nan" if value is None or math.isnan(value) else f"{value:.{digits}f}"


def _text_row(row: MetricsRow) -> List[str]:
    return [
        row.label,
        str(row.count),
        f"{_num(row.e_t_mean)} ± {_num(row.e_t_std)}",
        f"{_num(row.e_r_mean)} ± {_num(row.e_r_std)}",
        *(_num(row.axes[a]) for a in AXES),
        f"{100.0 * row.acc:.2f}%",
        _num(row.precision),
        str(row.failures),
    ]


def format_text(report: MetricsReport) -> str:
    """Table with e_t (m) and e_r (deg) mean ± std, per-axis means, Acc and precision"""
    header = ["group", "n", "e_t [m]", "e_r [deg]", "yaw", "pitch", "roll", "x", "y", "z",
              "Acc", "precision", "failed"]
    rows = [_text_row(report.overall)] + [_text_row(r) for r in report.groups]
    widths = [max(len(str(cell)) for cell in column) for column in zip(header, *rows)]

    def line(cells):
        return "  ".join(str(c).rjust(w) if i else str(c).ljust(w)
                         for i, (c, w) in enumerate(zip(cells, widths))).rstrip()

    out = [
        f"# Acc thresholds: e_r < {report.rot_thresh:g} deg, e_t < {report.trans_thresh:g} m; "
        f"epipolar threshold {report.epi_thresh:g}",
        line(header),
        line(["-" * w for w in widths]),
    ]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"


def format_csv(report: MetricsReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in [report.overall] + report.groups:
        writer.writerow([
            row.label, row.count, row.failures,
            _f(row.e_t_mean), _f(row.e_t_std), _f(row.e_r_mean), _f(row.e_r_std),
            *(_f(row.axes[a]) for a in AXES),
            _f(row.acc), _f(row.precision), _f(row.failure_rate),
        ])
    return buf.getvalue()


def format_samples_csv(report: MetricsReport) -> str:
    """One row per sample; error cells are empty for failures"""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SAMPLE_COLUMNS)
    for r in report.results:
        err = r.errors
        values = [""] * (2 + len(AXES)) if err is None else \
            [_f(err.e_t), _f(err.e_r)] + [_f(err.axis(a)) for a in AXES]
        writer.writerow([r.sample_id, r.group, r.failure or "", *values,
                         "" if r.precision is None else _f(r.precision), r.matches, r.inliers])
    return buf.getvalue()


def write_report(report: MetricsReport, out_dir: PathLike) -> None:
    """metrics.txt, metrics.csv and samples.csv"""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    write_text_atomic(root / "metrics.txt", format_text(report))
    write_text_atomic(root / "metrics.csv", format_csv(report))
    write_text_atomic(root / "samples.csv", format_samples_csv(report))
