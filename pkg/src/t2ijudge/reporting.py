"""Figure and table emission for the reporting subcommands.

Renders score histograms and sample-volume charts to image files and
writes correlation reports as aligned text tables plus tab-delimited
and structured files.  Uses a non-interactive backend so it works in
headless runs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .dataset import DatasetStats, SubTaskKind
from .metaeval import CorrelationReport


def _save_bars(
    path: Path, labels: list[str], values: list[int], title: str, xlabel: str
) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(range(len(values)), values, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_stats_figures(stats: DatasetStats, out_dir: Path) -> list[Path]:
    """One histogram per scored population, plus sample volumes."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    score_labels = [str(i) for i in range(11)]
    written: list[Path] = []
    if any(stats.overall_histogram):
        written.append(
            _save_bars(
                out_dir / "overall_scores.png",
                score_labels,
                stats.overall_histogram,
                "Overall score distribution",
                "score",
            )
        )
    for kind, histogram in sorted(stats.bin_histograms.items()):
        written.append(
            _save_bars(
                out_dir / f"bins_{kind}.png",
                score_labels,
                histogram,
                f"Score bins: {kind}",
                "score",
            )
        )
    if stats.samples_by_kind:
        kinds = [k.value for k in SubTaskKind if k.value in stats.samples_by_kind]
        written.append(
            _save_bars(
                out_dir / "sample_volumes.png",
                kinds,
                [stats.samples_by_kind[k] for k in kinds],
                "Samples per sub-task kind",
                "kind",
            )
        )
    return written


def format_correlation_table(report: CorrelationReport) -> list[str]:
    """Aligned three-column table: source, spearman, kendall."""
    rows = [(e.name, e.spearman, e.kendall) for e in report.per_annotator]
    rows.append((f"average ({report.average_mode})", report.average.spearman, report.average.kendall))
    for entry in report.upper_bound or []:
        rows.append((f"bound:{entry.name}", entry.spearman, entry.kendall))
    name_width = max(len("source"), max(len(r[0]) for r in rows))
    lines = [
        f"{'source':<{name_width}}  {'spearman':>10}  {'kendall':>10}",
        f"{'-' * name_width}  {'-' * 10}  {'-' * 10}",
    ]
    for name, rho, tau in rows:
        lines.append(f"{name:<{name_width}}  {rho:>10.4f}  {tau:>10.4f}")
    lines.append(f"items: {report.n_items}, dropped: {report.dropped}")
    return lines


def write_correlation_outputs(
    report: CorrelationReport, out_dir: Path, figure: bool = True
) -> dict[str, Path]:
    """Tab-delimited table, structured dump, and an optional bar chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: dict[str, Path] = {}

    tsv_path = out_dir / "correlations.tsv"
    with tsv_path.open("w", encoding="utf-8") as fh:
        fh.write("source\tspearman\tkendall\n")
        for entry in report.per_annotator:
            fh.write(f"{entry.name}\t{entry.spearman:.12g}\t{entry.kendall:.12g}\n")
        fh.write(
            f"average:{report.average_mode}\t{report.average.spearman:.12g}"
            f"\t{report.average.kendall:.12g}\n"
        )
        for entry in report.upper_bound or []:
            fh.write(f"bound:{entry.name}\t{entry.spearman:.12g}\t{entry.kendall:.12g}\n")
    written["tsv"] = tsv_path

    json_path = out_dir / "correlations.json"
    json_path.write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written["json"] = json_path

    if figure:
        names = [e.name for e in report.per_annotator] + ["average"]
        rhos = [e.spearman for e in report.per_annotator] + [report.average.spearman]
        taus = [e.kendall for e in report.per_annotator] + [report.average.kendall]
        for entry in report.upper_bound or []:
            names.append(f"bound:{entry.name}")
            rhos.append(entry.spearman)
            taus.append(entry.kendall)
        fig, ax = plt.subplots(figsize=(7, 4))
        xs = range(len(names))
        width = 0.38
        ax.bar([x - width / 2 for x in xs], rhos, width, label="spearman", color="#4878a8")
        ax.bar([x + width / 2 for x in xs], taus, width, label="kendall", color="#a85454")
        ax.set_xticks(list(xs))
        ax.set_xticklabels(names, rotation=30, ha="right")
        ax.set_ylabel("correlation")
        ax.set_ylim(-1.05, 1.05)
        ax.axhline(0.0, color="black", linewidth=0.6)
        ax.legend()
        fig.tight_layout()
        figure_path = out_dir / "correlations.png"
        fig.savefig(figure_path, dpi=120)
        plt.close(fig)
        written["figure"] = figure_path
    return written


def write_stats_outputs(
    stats: DatasetStats, json_path: Optional[Path] = None, plot_dir: Optional[Path] = None
) -> dict[str, object]:
    """Optional structured dump plus figures; returns what was written."""
    written: dict[str, object] = {}
    if json_path is not None:
        json_path = Path(json_path)
        json_path.write_text(
            json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        written["json"] = json_path
    if plot_dir is not None:
        written["figures"] = save_stats_figures(stats, Path(plot_dir))
    return written
