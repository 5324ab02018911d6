"""Experiment report writing: report.csv, report.md and optional json / xlsx."""
from __future__ import annotations
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd

from cloudseg.core.errors import UsageError
from cloudseg.core.experiment import ExperimentReport
from cloudseg.core.metrics import LabelErrors
from cloudseg.utils.constants import PUBLISHED_REFERENCE_ROWS, SUPPORTED_REPORT_FORMATS

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ['run', 'seed', 'sky_pct', 'thin_pct', 'thick_pct']
PER_IMAGE_COLUMNS = ['sky_pct_per_image', 'thin_pct_per_image', 'thick_pct_per_image']


def _row(run: object, seed: Optional[int], errors: LabelErrors,
         per_image: Optional[LabelErrors] = None) -> Dict[str, object]:
    row: Dict[str, object] = dict(zip(REPORT_COLUMNS, (run, seed, *errors.as_tuple())))
    if per_image is not None:
        row.update(zip(PER_IMAGE_COLUMNS, per_image.as_tuple()))
    return row


def report_frame(report: ExperimentReport, verbose: bool = False) -> pd.DataFrame:
    """One row per run in run order, then the mean row (run="mean", no seed).

    Object dtype keeps seeds as integers and absent percentages as None.
    """
    rows = [_row(r.index, r.seed, r.errors, r.per_image if verbose else None) for r in report.runs]
    rows.append(_row("mean", None, report.mean, report.mean_per_image if verbose else None))
    columns = REPORT_COLUMNS + (PER_IMAGE_COLUMNS if verbose else [])
    return pd.DataFrame(rows, columns=columns, dtype=object)


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.1f}"


def _md_row(cells: Sequence[str]) -> str:
    return "| " + " | ".join(cells) + " |"


def render_markdown(report: ExperimentReport, verbose: bool = False) -> str:
    """Method-by-label error table, measured mean first, published rows after it."""
    n = len(report.runs)
    lines = [
        "# Cloud segmentation: average error percentage per label",
        "",
        _md_row(["Method", "Sky", "Thin clouds", "Thick clouds"]),
        _md_row(["---", "---:", "---:", "---:"]),
        _md_row([f"U-Net, this run (mean of {n} run{'s' if n != 1 else ''})",
                 *map(_fmt, report.mean.as_tuple())]),
    ]
    if verbose:
        lines.append(_md_row(["U-Net, this run (per-image average)", *map(_fmt, report.mean_per_image.as_tuple())]))
    for label, values in PUBLISHED_REFERENCE_ROWS:
        lines.append(_md_row([f"{label} (reference, not computed)", *map(_fmt, values)]))
    lines += ["", "## Runs", "", _md_row(["Run", "Seed", "Sky", "Thin clouds", "Thick clouds"]),
              _md_row(["---:", "---:", "---:", "---:", "---:"])]
    for r in report.runs:
        lines.append(_md_row([str(r.index), str(r.seed), *map(_fmt, r.errors.as_tuple())]))
    lines.append("")
    return "\n".join(lines)


def write_output(df: pd.DataFrame, output_path: str, output_format: str) -> None:
    """Write a report frame as csv, json (records) or excel."""
    if not isinstance(df, pd.DataFrame):
        raise TypeError("write_output expects a pandas DataFrame")
    fmt = output_format.lower()
    if fmt not in SUPPORTED_REPORT_FORMATS:
        raise UsageError(f"Unsupported output format: {fmt}")
    path = Path(output_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == 'csv':
        df.to_csv(path, index=False, na_rep="", lineterminator="\n")
    elif fmt == 'json':
        df.to_json(path, orient='records', indent=2)
    else:
        try:
            df.to_excel(path, index=False)
        except ImportError:  # pragma: no cover
            raise RuntimeError("openpyxl required for Excel output. Install with: pip install openpyxl")
    logger.info("Wrote %d rows to %s (%s)", len(df), path, fmt)


_EXTENSIONS = {'csv': 'csv', 'json': 'json', 'excel': 'xlsx'}


def write_report(report: ExperimentReport, out_dir: str, extra_formats: Sequence[str] = (),
                 verbose: bool = False) -> List[Path]:
    """report.csv and report.md, plus report.json / report.xlsx on request; returns written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    df = report_frame(report, verbose)
    written = []
    for fmt in ['csv', *[f for f in extra_formats if f != 'csv']]:
        path = out / f"report.{_EXTENSIONS[fmt]}"
        write_output(df, str(path), fmt)
        written.append(path)
    md = out / "report.md"
    md.write_text(render_markdown(report, verbose), encoding="utf-8")
    written.append(md)
    logger.info("Wrote %s", md)
    return written


__all__ = ['REPORT_COLUMNS', 'report_frame', 'render_markdown', 'write_output', 'write_report']
