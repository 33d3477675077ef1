"""Report writers: aligned text tables, JSON, CSV and matplotlib figures.

The text table rows are None, change_case, ..., split_words, AVERAGE, with
the whitespace row abbreviated to ``whitespace_chars`` for column width.
JSON and CSV carry the canonical transform names. Figures are rendered to
PNG next to the delimited output so a report directory is self-contained.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import CONDITION_ROWS, ROW_ORDER, EvaluationReport, FlipReport

# presentation-only abbreviation, keeps the text table narrow
_TABLE_LABELS = {"insert_whitespace_chars": "whitespace_chars"}


def _table_label(row: str) -> str:
    return _TABLE_LABELS.get(row, row)


def render_report_table(reports: Sequence[tuple[str, EvaluationReport]]) -> str:
    """Aligned plain-text AUPRC table; one column per labeled report."""
    label_width = max(len(_table_label(r)) for r in ROW_ORDER)
    col_widths = [max(len(name), 7) for name, _ in reports]
    lines = []
    header = "Obfuscations".ljust(label_width)
    for (name, _), w in zip(reports, col_widths):
        header += "  " + name.rjust(w)
    lines.append(header)
    lines.append("-" * len(header))
    for row in ROW_ORDER:
        line = _table_label(row).ljust(label_width)
        for (_, report), w in zip(reports, col_widths):
            line += "  " + f"{report.rows[row]:.3f}".rjust(w)
        lines.append(line)
    return "\n".join(lines) + "\n"


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_report_json(reports: Sequence[tuple[str, EvaluationReport]], path: str | Path) -> None:
    payload = [{"label": name, **report.to_json()} for name, report in reports]
    _atomic_write_text(Path(path), json.dumps(payload, indent=1) + "\n")


def write_report_csv(reports: Sequence[tuple[str, EvaluationReport]], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["condition"] + [name for name, _ in reports])
        for row in ROW_ORDER:
            writer.writerow([row] + [f"{report.rows[row]:.6f}" for _, report in reports])
    os.replace(tmp, path)


def plot_grid_bars(report: EvaluationReport, path: str | Path, title: str = "AUPRC by obfuscation") -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    values = [report.rows[r] for r in CONDITION_ROWS]
    ax.bar(range(len(CONDITION_ROWS)), values, color="#50a2d5")
    ax.axhline(report.average, color="#eb3920", linestyle="--", linewidth=1,
               label=f"AVERAGE = {report.average:.3f}")
    ax.set_xticks(range(len(CONDITION_ROWS)))
    ax.set_xticklabels([_table_label(r) for r in CONDITION_ROWS], rotation=35, ha="right", fontsize=8)
    ax.set_ylabel("AUPRC")
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    ax.legend(loc="lower left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(
    reports: Sequence[tuple[str, EvaluationReport]],
    path: str | Path,
    x_values: Sequence[float] | None = None,
    x_label: str = "configuration",
    title: str = "Average AUPRC",
) -> None:
    """Line chart of the AVERAGE (and unobfuscated) rows across a sweep."""
    xs = list(x_values) if x_values is not None else list(range(len(reports)))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, [r.average for _, r in reports], marker="o", color="#50a2d5", label="AVERAGE")
    ax.plot(xs, [r.rows["None"] for _, r in reports], marker="s", color="#76bb4b",
            linestyle="--", label="None (unobfuscated)")
    if x_values is None:
        ax.set_xticks(xs)
        ax.set_xticklabels([name for name, _ in reports], rotation=20, ha="right", fontsize=8)
    ax.set_xlabel(x_label)
    ax.set_ylabel("AUPRC")
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_flip_table(report: FlipReport) -> str:
    lines = [
        "Ground-truth  Initial  Flipped  Count  Flip ratio",
        "-" * 50,
    ]
    for gt in ("safe", "unsafe"):
        group = report.groups.get(gt)
        if group is None:
            continue
        first = True
        for (initial, after), count in sorted(group.transitions.items()):
            gt_cell = gt if first else ""
            ratio_cell = f"{group.flip_ratio * 100:.2f}%" if first else ""
            lines.append(
                f"{gt_cell:<12}  {initial:<7}  {after:<7}  {count:>5}  {ratio_cell}"
            )
            first = False
    return "\n".join(lines) + "\n"


def write_flip_report(report: FlipReport, out_dir: str | Path, stem: str = "flip_report") -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"{stem}.json"
    text_path = out_dir / f"{stem}.txt"
    _atomic_write_text(json_path, json.dumps(report.to_json(), indent=1) + "\n")
    _atomic_write_text(text_path, render_flip_table(report))
    return [json_path, text_path]


def write_report_bundle(
    reports: Sequence[tuple[str, EvaluationReport]],
    out_dir: str | Path,
    stem: str = "report",
    x_values: Sequence[float] | None = None,
    x_label: str = "configuration",
    title: str = "AUPRC",
) -> list[Path]:
    """Write the full bundle: .txt table, .json, .csv and a figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [out_dir / f"{stem}.txt", out_dir / f"{stem}.json", out_dir / f"{stem}.csv",
             out_dir / f"{stem}.png"]
    _atomic_write_text(paths[0], render_report_table(reports))
    write_report_json(reports, paths[1])
    write_report_csv(reports, paths[2])
    if len(reports) == 1:
        plot_grid_bars(reports[0][1], paths[3], title=title)
    else:
        plot_sweep(reports, paths[3], x_values=x_values, x_label=x_label, title=title)
    return paths
