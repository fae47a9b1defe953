"""CSV table and SVG bar chart of per-setting results."""

from __future__ import annotations

import csv
import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

CSV_FIELDS = ("setting", "top1", "top5", "mean_class_acc", "mpjpe", "n_mpjpe", "mpjve")

# fixed ids and no timestamp so identical inputs give identical bytes
_SVG_RC = {"svg.hashsalt": "finetec", "svg.fonttype": "none", "svg.id": "results"}


def result_rows(reports) -> list[dict]:
    """Normalize ``(setting, report_dict)`` pairs into CSV rows.

    Missing metrics become empty cells.
    """
    rows = []
    for setting, report in reports:
        row = {"setting": str(setting)}
        for key in CSV_FIELDS[1:]:
            value = report.get(key)
            row[key] = "" if value is None else repr(float(value))
        rows.append(row)
    if not rows:
        raise ValueError("plot export needs at least one report")
    return rows


def render_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def render_svg(rows) -> str:
    names = [r["setting"] for r in rows]
    heights = [float(r["top1"]) if r["top1"] != "" else 0.0 for r in rows]
    with matplotlib.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(1.2 + 1.0 * len(rows), 3.0))
        bars = ax.bar(range(len(rows)), heights, color="#4c72b0", width=0.6)
        for i, bar in enumerate(bars):
            bar.set_gid(f"bar_{i}")
        ax.set_xticks(range(len(rows)), names)
        ax.set_ylim(0.0, 1.0)
        ax.set_ylabel("top-1 accuracy")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()


def plot_export(reports, out_dir) -> tuple:
    """Write results.csv and top1.svg into ``out_dir``; return both paths."""
    from pathlib import Path

    rows = result_rows(reports)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, svg_path = out / "results.csv", out / "top1.svg"
    csv_path.write_text(render_csv(rows), encoding="utf-8")
    svg_path.write_text(render_svg(rows), encoding="utf-8")
    return csv_path, svg_path
