import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from ..config.settings import ArenaConfig, Settings
from ..errors import EmptyReportError
from .controllers import AgentSpec, build_controller
from .match import MatchResult, run_match

logger = logging.getLogger(__name__)


@dataclass
class EvalReport:
    """Aggregates over completed (non-restarted) episodes; restarts are reported separately."""

    setting: str
    agent: str
    opponent: str
    results: List[MatchResult] = field(default_factory=list)
    restarts: int = 0
    unresolved: int = 0

    @property
    def completed(self) -> List[MatchResult]:
        return [r for r in self.results if not r.restarted]

    @property
    def episodes(self) -> int:
        return len(self.results)

    @property
    def win_rate(self) -> float:
        done = self.completed
        return float(np.mean([r.winner == 0 for r in done])) if done else 0.0

    @property
    def mean_steps(self) -> float:
        done = self.completed
        return float(np.mean([r.steps for r in done])) if done else 0.0

    @property
    def mean_damage(self) -> float:
        done = self.completed
        return float(np.mean([r.damage_dealt[0] for r in done])) if done else 0.0

    @property
    def restart_fraction(self) -> float:
        attempts = len(self.completed) + self.restarts + self.unresolved
        return (self.restarts + self.unresolved) / attempts if attempts else 0.0

    @property
    def win_lengths(self) -> List[int]:
        return [r.steps for r in self.completed if r.winner == 0]

    @property
    def loss_lengths(self) -> List[int]:
        return [r.steps for r in self.completed if r.winner != 0]

    def summary(self) -> Dict[str, object]:
        return {
            "setting": self.setting,
            "agent": self.agent,
            "opponent": self.opponent,
            "episodes": self.episodes,
            "win_rate": self.win_rate,
            "mean_steps": self.mean_steps,
            "mean_damage": self.mean_damage,
            "restart_fraction": self.restart_fraction,
        }


def episode_seed(base_seed: int, episode: int, attempt: int) -> int:
    """Seed for one episode attempt; restarts draw a fresh one."""
    return int(np.random.SeedSequence([base_seed, episode, attempt]).generate_state(1)[0])


def _play_episode(args) -> List[MatchResult]:
    spec, opponent, arena, settings, base_seed, episode = args
    controllers = [build_controller(spec, settings), build_controller(opponent, settings)]
    attempts = []
    for attempt in range(settings.harness.max_restarts + 1):
        seed = episode_seed(base_seed, episode, attempt)
        result = run_match(spec, opponent, arena, seed, settings, controllers=controllers)
        attempts.append(result)
        if not result.restarted:
            break
    return attempts


def evaluate(
    spec: AgentSpec,
    opponent: AgentSpec,
    n_episodes: int,
    base_seed: int,
    arena: Optional[ArenaConfig] = None,
    settings: Optional[Settings] = None,
    workers: Optional[int] = None,
    setting: Optional[str] = None,
) -> EvalReport:
    if n_episodes <= 0:
        raise EmptyReportError("n_episodes must be positive to build a report")
    settings = settings or Settings()
    arena = arena or settings.arena
    workers = workers if workers is not None else settings.harness.workers
    jobs = [(spec, opponent, arena, settings, base_seed, i) for i in range(n_episodes)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_play_episode, jobs))
    else:
        outcomes = [_play_episode(job) for job in jobs]

    report = EvalReport(setting or f"{spec.describe()} vs {opponent.describe()}", spec.describe(), opponent.describe())
    for attempts in outcomes:
        report.restarts += len(attempts) - 1
        final = attempts[-1]
        if final.restarted:
            report.unresolved += 1
        report.results.append(final)
    logger.info(
        "%s: win rate %.3f over %d episodes, restart fraction %.3f",
        report.setting,
        report.win_rate,
        report.episodes,
        report.restart_fraction,
    )
    return report


def reports_frame(reports: List[EvalReport]) -> pd.DataFrame:
    columns = ["setting", "agent", "opponent", "episodes", "win_rate", "mean_steps", "mean_damage", "restart_fraction"]
    return pd.DataFrame([r.summary() for r in reports], columns=columns)


def write_report_csv(reports: List[EvalReport], path) -> None:
    reports_frame(reports).to_csv(path, index=False)
