"""Benchmark report figures, rendered next to the delimited output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def render_figures(records, outdir: Path):
    """Solve-time bars, proof-length histogram, and refinement rates."""
    outdir = Path(outdir)
    written = []

    solved = [r for r in records if r["outcome"] == "solved"]
    names = [r["problem"] for r in records]
    walls = [r["wall"] for r in records]
    colors = ["#2a7f62" if r["outcome"] == "solved" else "#b04a3a"
              for r in records]

    fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(records)), 3.6))
    ax.bar(range(len(records)), walls, color=colors)
    ax.set_xticks(range(len(records)))
    ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("wall time (s)")
    ax.set_yscale("log")
    ax.set_title("solve time per problem")
    fig.tight_layout()
    path = outdir / "solve_times.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    lens = [r["proof_len"] for r in solved if r["proof_len"] != ""]
    if lens:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.hist(lens, bins=min(12, max(3, len(set(lens)))), color="#4668a8")
        ax.set_xlabel("proof length (symbol references)")
        ax.set_ylabel("problems")
        ax.set_title("solution sizes")
        fig.tight_layout()
        path = outdir / "proof_lengths.png"
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)

    rates = [(r["problem"], r["stats"].refinements_total / max(r["stats"].wall, 1e-9))
             for r in records if r["stats"] is not None and r["stats"].wall > 0]
    if rates:
        fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(rates)), 3.2))
        ax.bar(range(len(rates)), [v for _, v in rates], color="#8a5fa8")
        ax.set_xticks(range(len(rates)))
        ax.set_xticklabels([n for n, _ in rates], rotation=60, ha="right",
                           fontsize=7)
        ax.set_ylabel("refinements / s")
        ax.set_title("attempt throughput")
        fig.tight_layout()
        path = outdir / "refinement_rates.png"
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)

    return written
