"""Per-step episode logs, summary statistics and their CSV forms."""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STEP_HEADER = ["step", "total_queue", "queue_N", "queue_E", "queue_S", "queue_W", "cum_wait", "phase"]
SUMMARY_HEADER = ["controller", "scenario", "peak_queue", "fraction_above_half", "total_wait"]


@dataclass
class EpisodeLog:
    queues: np.ndarray  # (steps, 4) queued vehicles per arm, N E S W
    cum_wait: np.ndarray  # (steps,)
    phases: list[str]
    controller: str = ""
    scenario: int = 0
    seed: int = 0

    def __post_init__(self):
        self.queues = np.asarray(self.queues, dtype=np.int64).reshape(-1, 4)
        self.cum_wait = np.asarray(self.cum_wait, dtype=np.int64)
        if len(self.cum_wait) != len(self.queues) or len(self.phases) != len(self.queues):
            raise ValueError("episode log columns have different lengths")

    @classmethod
    def from_totals(cls, totals: Sequence[int], **meta) -> "EpisodeLog":
        """Log whose whole queue sits on arm N; handy when only totals matter."""
        totals = np.asarray(totals, dtype=np.int64)
        queues = np.zeros((len(totals), 4), dtype=np.int64)
        queues[:, 0] = totals
        return cls(queues, np.cumsum(totals), ["GN"] * len(totals), **meta)

    def __len__(self) -> int:
        return len(self.cum_wait)

    @property
    def total_queue(self) -> np.ndarray:
        return self.queues.sum(axis=1)


def peak_queue(log: EpisodeLog) -> int:
    if len(log) == 0:
        raise ValueError("empty episode log")
    return int(log.total_queue.max())


def fraction_above_half(log: EpisodeLog) -> float:
    """Share of steps whose total queue is strictly above half the run's own peak."""
    peak = peak_queue(log)
    if peak == 0:
        return 0.0
    total = log.total_queue
    return float(np.count_nonzero(2 * total > peak)) / len(total)


def total_wait(log: EpisodeLog) -> int:
    if len(log) == 0:
        raise ValueError("empty episode log")
    return int(log.cum_wait[-1])


@dataclass
class SummaryRow:
    controller: str
    scenario: int
    peak_queue: float
    fraction_above_half: float
    total_wait: float
    n_runs: int = field(default=1, compare=False)


def summarize(logs: Iterable[EpisodeLog]) -> list[SummaryRow]:
    """One row per (controller, scenario), metrics averaged over seeds."""
    groups: dict[tuple[str, int], list[EpisodeLog]] = defaultdict(list)
    for log in logs:
        groups[(log.controller, log.scenario)].append(log)
    rows = []
    for (ctrl, scen), group in groups.items():
        rows.append(SummaryRow(
            ctrl, scen,
            float(np.mean([peak_queue(g) for g in group])),
            float(np.mean([fraction_above_half(g) for g in group])),
            float(np.mean([total_wait(g) for g in group])),
            len(group),
        ))
    return rows


def _num(x) -> str:
    """Integers verbatim, reals in shortest round-trip form."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def _open_for_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_step_csv(log: EpisodeLog, path) -> None:
    with _open_for_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(STEP_HEADER)
        total = log.total_queue
        for t in range(len(log)):
            q = log.queues[t]
            w.writerow([t, int(total[t]), int(q[0]), int(q[1]), int(q[2]), int(q[3]),
                        int(log.cum_wait[t]), log.phases[t]])


def read_step_csv(path, **meta) -> EpisodeLog:
    with Path(path).open(newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        if header != STEP_HEADER:
            raise ValueError(f"{path}: unexpected step-log header {header}")
        rows = list(reader)
    for i, r in enumerate(rows):
        if int(r[0]) != i:
            raise ValueError(f"{path}: step column not consecutive at row {i + 1}")
    queues = np.array([[int(v) for v in r[2:6]] for r in rows], dtype=np.int64).reshape(-1, 4)
    log = EpisodeLog(queues, [int(r[6]) for r in rows], [r[7] for r in rows], **meta)
    if any(int(r[1]) != t for r, t in zip(rows, log.total_queue)):
        raise ValueError(f"{path}: total_queue column disagrees with per-arm queues")
    return log


def write_summary_csv(rows: Sequence[SummaryRow], path) -> None:
    with _open_for_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for r in rows:
            w.writerow([r.controller, r.scenario, _num(r.peak_queue),
                        _num(r.fraction_above_half), _num(r.total_wait)])


def read_summary_csv(path) -> list[SummaryRow]:
    with Path(path).open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != SUMMARY_HEADER:
            raise ValueError(f"{path}: unexpected summary header {reader.fieldnames}")
        return [SummaryRow(r["controller"], int(r["scenario"]), float(r["peak_queue"]),
                           float(r["fraction_above_half"]), float(r["total_wait"]))
                for r in reader]


def write_csv(obj, path) -> None:
    """Write an :class:`EpisodeLog` or a summary table to ``path``."""
    if isinstance(obj, EpisodeLog):
        write_step_csv(obj, path)
    else:
        write_summary_csv(list(obj), path)


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Generic CSV table with the same number formatting as the summaries."""
    with _open_for_write(path) as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _num(v) for v in row])
