"""Mood-episode labels from HAMD and YMRS scores."""

from __future__ import annotations

from enum import Enum

__all__ = ["EpisodeLabel", "label_episode", "TASKS", "task_classes", "SCORE_RANGE"]

SCORE_RANGE = (0, 35)


class EpisodeLabel(str, Enum):
    EUTHYMIC = "Euthymic"
    DEPRESSED = "Depressed"
    MANIC = "Manic"
    EXCLUDED = "Excluded"


def label_episode(hamd: float, ymrs: float) -> EpisodeLabel:
    """Euthymic: both <= 6; depressed: YMRS <= 6 and HAMD >= 10;
    manic: YMRS >= 10 and HAMD <= 6; anything else is excluded."""
    lo, hi = SCORE_RANGE
    for name, v in (("hamd", hamd), ("ymrs", ymrs)):
        if not lo <= v <= hi:
            raise ValueError(f"{name} score {v} outside [{lo}, {hi}]")
    if ymrs <= 6 and hamd <= 6:
        return EpisodeLabel.EUTHYMIC
    if ymrs <= 6 and hamd >= 10:
        return EpisodeLabel.DEPRESSED
    if ymrs >= 10 and hamd <= 6:
        return EpisodeLabel.MANIC
    return EpisodeLabel.EXCLUDED


#: task name -> episode contrasted with euthymia
TASKS = {
    "euthymic-vs-depressed": EpisodeLabel.DEPRESSED,
    "euthymic-vs-manic": EpisodeLabel.MANIC,
}


def task_classes(task: str) -> tuple[EpisodeLabel, EpisodeLabel]:
    try:
        return EpisodeLabel.EUTHYMIC, TASKS[task]
    except KeyError:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(TASKS)}") from None
