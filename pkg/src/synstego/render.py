"""Report files: JSON, CSV tables and standalone SVG figures."""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

from .channel import CAPACITY_COLUMNS, PAIRED_COLUMNS
from .errors import IoError, ValidationError
from .payload import COLOR_NAMES

log = logging.getLogger(__name__)

FORMATS = ("json", "csv", "svg")
CHANCE = 1.0 / len(COLOR_NAMES)

_SVG_RC = {
    "svg.hashsalt": "synstego",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "figure.dpi": 100,
}


def _csv_text(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    return buf.getvalue()


def write_csv(path: Path, rows: Iterable[dict], columns: Sequence[str]) -> Path:
    try:
        path.write_text(_csv_text(rows, columns), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


def _csv_files(report: dict, out: Path) -> list[Path]:
    files = []
    acc = report.get("accuracy", {})
    if acc:
        rows = [
            {"color": c, "direct": acc["direct"]["per_color"].get(c), "attack": acc["attack"]["per_color"].get(c)}
            for c in COLOR_NAMES
        ]
        files.append(write_csv(out / "color_accuracy.csv", rows, ("color", "direct", "attack")))
        for cond in ("direct", "attack"):
            counts = acc[cond]["confusion"]["counts"]
            rows = [{"assigned": COLOR_NAMES[i], **dict(zip(COLOR_NAMES, r))} for i, r in enumerate(counts)]
            files.append(write_csv(out / f"confusion_{cond}.csv", rows, ("assigned", *COLOR_NAMES)))
    cap = report.get("capacity", {})
    if cap:
        files.append(write_csv(out / "capacity.csv", cap.values(), CAPACITY_COLUMNS))
    det = report.get("detection", {})
    if det.get("pairs"):
        rows = [{**p, "diff": p["paraphrased"] - p["encoded"]} for p in det["pairs"]]
        files.append(write_csv(out / "scores.csv", rows, ("entry_id", "encoded", "paraphrased", "diff")))
    if det.get("paired"):
        files.append(write_csv(out / "paired_stats.csv", [det["paired"]], PAIRED_COLUMNS + ("mean_shift",)))
        files.append(write_csv(out / "table1.csv", det["table1"]["rows"], ("condition", "mean", "std", "min", "max")))
    return files


def _save(fig, path: Path) -> Path:
    import matplotlib.pyplot as plt

    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def _svg_files(report: dict, out: Path) -> tuple[list[Path], list[str]]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    files: list[Path] = []
    warnings: list[str] = []
    with plt.style.context("default"), matplotlib.rc_context(_SVG_RC):
        acc = report.get("accuracy", {})
        if acc:
            x = np.arange(len(COLOR_NAMES))
            direct = [acc["direct"]["per_color"].get(c) or 0.0 for c in COLOR_NAMES]
            attack = [acc["attack"]["per_color"].get(c) or 0.0 for c in COLOR_NAMES]
            fig, ax = plt.subplots(figsize=(7, 3.5))
            ax.bar(x - 0.2, direct, 0.4, label=f"encoded ({acc['direct']['overall']:.1%})", color="0.35")
            ax.bar(x + 0.2, attack, 0.4, label=f"paraphrased ({acc['attack']['overall']:.1%})",
                   color="white", edgecolor="0.35", hatch="//")
            ax.axhline(CHANCE, ls="--", color="k", lw=1, label="chance (12.5%)")
            ax.set_xticks(x, COLOR_NAMES)
            ax.set_ylim(0, 1.05)
            ax.set_ylabel("per-sentence decoding accuracy")
            ax.legend(fontsize=8, loc="lower right")
            fig.tight_layout()
            files.append(_save(fig, out / "fig1_color_accuracy.svg"))

            for cond, title in (("direct", "direct decoding"), ("attack", "after paraphrase")):
                counts = np.array(acc[cond]["confusion"]["counts"], dtype=float)
                rows = counts.sum(axis=1, keepdims=True)
                frac = np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)
                fig, ax = plt.subplots(figsize=(4.6, 4))
                im = ax.imshow(frac, vmin=0, vmax=1, cmap="Greys")
                for i in range(len(COLOR_NAMES)):
                    for j in range(len(COLOR_NAMES)):
                        if counts[i, j]:
                            ax.text(j, i, int(counts[i, j]), ha="center", va="center", fontsize=7,
                                    color="white" if frac[i, j] > 0.5 else "black")
                ax.set_xticks(range(len(COLOR_NAMES)), COLOR_NAMES, rotation=45, ha="right")
                ax.set_yticks(range(len(COLOR_NAMES)), COLOR_NAMES)
                ax.set_xlabel("decoded")
                ax.set_ylabel("assigned")
                ax.set_title(f"{title} ({acc[cond]['overall']:.1%})", fontsize=10)
                fig.colorbar(im, ax=ax, fraction=0.046)
                fig.tight_layout()
                files.append(_save(fig, out / f"fig2_confusion_{cond}.svg"))

        pairs = report.get("detection", {}).get("pairs") or []
        if not pairs:
            warnings.append("detection section empty: score histograms omitted")
        else:
            enc = np.array([p["encoded"] for p in pairs])
            par = np.array([p["paraphrased"] for p in pairs])
            bins = np.histogram_bin_edges(np.concatenate([enc, par]), bins=30)
            fig, ax = plt.subplots(figsize=(6, 3.5))
            ax.hist(enc, bins=bins, alpha=0.6, label="encoded", color="0.3")
            ax.hist(par, bins=bins, alpha=0.6, label="paraphrased", color="0.7", hatch="//")
            ax.set_xlabel("Binoculars score")
            ax.set_ylabel("entries")
            ax.legend(fontsize=8)
            fig.tight_layout()
            files.append(_save(fig, out / "fig3_score_distributions.svg"))

            diff = par - enc
            fig, ax = plt.subplots(figsize=(6, 3.5))
            ax.hist(diff, bins=30, color="0.5")
            ax.axvline(float(diff.mean()), color="k", ls="--", lw=1.2, label=f"mean {diff.mean():+.3f}")
            ax.axvline(0.0, color="k", lw=0.6)
            ax.set_xlabel("paraphrased - encoded")
            ax.set_ylabel("entries")
            ax.legend(fontsize=8)
            fig.tight_layout()
            files.append(_save(fig, out / "fig4_paired_differences.svg"))
    return files, warnings


def render_report(report: dict, out_dir: str | Path, formats: Iterable[str] = FORMATS) -> tuple[list[Path], list[str]]:
    """Write the requested formats; returns ``(files, warnings)``."""
    formats = tuple(formats)
    unknown = set(formats) - set(FORMATS)
    if unknown:
        raise ValidationError(f"unknown report formats {sorted(unknown)}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out}: {exc}") from exc
    files: list[Path] = []
    warnings: list[str] = []
    if "json" in formats:
        path = out / "report.json"
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        files.append(path)
    if "csv" in formats:
        files += _csv_files(report, out)
    if "svg" in formats:
        svgs, warnings = _svg_files(report, out)
        files += svgs
    for w in warnings:
        log.warning(w)
    return files, warnings
