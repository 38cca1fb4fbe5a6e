"""
Episode-length distributions: CSV samples and one SVG histogram per setting.
"""
import logging
import re
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from .evaluator import EvalReport  # noqa: E402
from .match import MatchResult  # noqa: E402

logger = logging.getLogger(__name__)

COLUMNS = ["setting", "outcome", "steps"]


def histogram_counts(samples: Sequence[float], bins: int, value_range: Optional[Tuple[float, float]] = None) -> Tuple[np.ndarray, np.ndarray]:
    counts, edges = np.histogram(np.asarray(samples, dtype=float), bins=bins, range=value_range)
    return counts, edges


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", text).strip("_") or "setting"


def episode_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    rows = []
    for report in reports:
        rows += [(report.setting, "win", s) for s in report.win_lengths]
        rows += [(report.setting, "loss", s) for s in report.loss_lengths]
    return pd.DataFrame(rows, columns=COLUMNS)


def export_histograms(reports: Sequence[EvalReport], path: Path, bins: int = 20) -> List[Path]:
    """Write `episode_lengths.csv` plus `<setting>.svg` per report into directory `path`."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    frame = episode_frame(reports)
    csv_path = out / "episode_lengths.csv"
    frame.to_csv(csv_path, index=False)
    written = [csv_path]

    for report in reports:
        samples = report.win_lengths + report.loss_lengths
        if not samples:
            continue
        value_range = (0.0, float(max(samples)))
        fig, ax = plt.subplots(figsize=(6, 4))
        for outcome, values in (("win", report.win_lengths), ("loss", report.loss_lengths)):
            if values:
                ax.hist(values, bins=bins, range=value_range, alpha=0.6, label=outcome)
        ax.set_xlabel("episode length (steps)")
        ax.set_ylabel("episodes")
        ax.set_title(report.setting)
        ax.legend()
        svg_path = out / f"{_slug(report.setting)}.svg"
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(svg_path)
    logger.info("exported %d files to %s", len(written), out)
    return written


def load_episode_lengths(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)


RESULT_COLUMNS = ["setting", "agent", "opponent", "seed", "winner", "steps", "damage_a", "damage_b", "restarted"]


def write_results_csv(reports: Sequence[EvalReport], path: Path) -> Path:
    """Per-episode outcomes, the input `load_reports` reads back."""
    rows = []
    for report in reports:
        for r in report.results:
            winner = -1 if r.winner is None else r.winner
            rows.append(
                (report.setting, report.agent, report.opponent, r.seed, winner, r.steps, *r.damage_dealt, r.restarted)
            )
    pd.DataFrame(rows, columns=RESULT_COLUMNS).to_csv(path, index=False)
    return Path(path)


def load_reports(path: Path) -> List[EvalReport]:
    frame = pd.read_csv(path)
    reports = []
    for setting, group in frame.groupby("setting", sort=False):
        first = group.iloc[0]
        report = EvalReport(str(setting), str(first["agent"]), str(first["opponent"]))
        for row in group.itertuples(index=False):
            report.results.append(
                MatchResult(
                    None if int(row.winner) < 0 else int(row.winner),
                    int(row.steps),
                    (float(row.damage_a), float(row.damage_b)),
                    bool(row.restarted),
                    int(row.seed),
                )
            )
        reports.append(report)
    return reports
