"""Report figures rendered next to the summary tables.

Two PNGs cover what the trial CSV supports: the spread of the failure
probability estimates per estimator against the reference value, and the
agreement between the replication CoV and the estimators' own predicted
CoV. Rendering uses the Agg backend only; nothing here opens a window.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np

from .experiment import StatsSummary, TrialRow


def group_rows(rows: Iterable[TrialRow]) -> dict[str, list[TrialRow]]:
    """Rows keyed by estimator, preserving first-appearance order."""
    out: dict[str, list[TrialRow]] = {}
    for r in rows:
        out.setdefault(r.estimator, []).append(r)
    return out


def render_pf_distribution(
    rows_by_estimator: Mapping[str, Sequence[TrialRow]], truth: float, path: str | Path
) -> Path:
    """Strip plot of per-trial pf estimates with the reference line."""
    path = Path(path)
    names = list(rows_by_estimator)
    fig, ax = plt.subplots(figsize=(1.8 + 1.3 * len(names), 4.0))
    rng = np.random.default_rng(0)  # presentation jitter only
    for i, name in enumerate(names):
        pf = np.array(
            [r.pf_hat for r in rows_by_estimator[name] if math.isfinite(r.pf_hat)]
        )
        jitter = rng.uniform(-0.18, 0.18, len(pf))
        ax.plot(i + jitter, pf, ".", alpha=0.45, markersize=5)
        if len(pf):
            ax.plot([i - 0.3, i + 0.3], [pf.mean()] * 2, "k-", linewidth=1.6)
    ax.axhline(truth, color="tab:red", linestyle="--", linewidth=1.2,
               label=f"reference {truth:.3g}")
    ax.set_xticks(range(len(names)), names)
    ax.set_ylabel("estimated failure probability")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_error_summary(
    stats_by_estimator: Mapping[str, StatsSummary], path: str | Path
) -> Path:
    """Grouped bars: replication CoV, mean predicted CoV, and nRMSE."""
    path = Path(path)
    names = list(stats_by_estimator)
    x = np.arange(len(names))
    width = 0.27
    fig, ax = plt.subplots(figsize=(2.2 + 1.5 * len(names), 4.0))
    for k, (label, attr) in enumerate(
        (("sample CoV", "sample_cov"),
         ("mean predicted CoV", "mean_cov_hat"),
         ("nRMSE", "rmse_vs_truth"))
    ):
        vals = [getattr(stats_by_estimator[n], attr) for n in names]
        ax.bar(x + (k - 1) * width, vals, width, label=label)
    ax.set_xticks(x, names)
    ax.set_ylabel("relative error measure")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report_figures(
    rows: Iterable[TrialRow],
    stats_by_estimator: Mapping[str, StatsSummary],
    truth: float,
    out_dir: str | Path,
) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [
        render_pf_distribution(group_rows(rows), truth, out_dir / "pf_distribution.png"),
        render_error_summary(stats_by_estimator, out_dir / "error_summary.png"),
    ]
