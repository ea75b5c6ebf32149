"""Mode-balanced sampling over a mixed reasoning/action corpus.

Action samples vastly outnumber reasoning samples in execution data; this
scheme gives the two modes equal expected mass regardless of their sizes:
P(d) = 1/(2|D_R|) for reasoning records and 1/(2|D_A|) for action records
(all mass moves to the nonempty side when one set is empty).
"""

from __future__ import annotations

import random
from dataclasses import dataclass


@dataclass(frozen=True)
class CorpusIndex:
    """Record ids of the two corpus modes. Ids must be disjoint."""

    reasoning_ids: tuple[str, ...]
    action_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "reasoning_ids", tuple(self.reasoning_ids))
        object.__setattr__(self, "action_ids", tuple(self.action_ids))
        overlap = set(self.reasoning_ids) & set(self.action_ids)
        if overlap:
            raise ValueError(f"ids present in both modes: {sorted(overlap)[:5]}")
        if not self.reasoning_ids and not self.action_ids:
            raise ValueError("at least one mode must be nonempty")


def sample_probability(index: CorpusIndex, record_id: str) -> float:
    """Exact per-record selection probability under mode balancing."""
    n_r = len(index.reasoning_ids)
    n_a = len(index.action_ids)
    if record_id in set(index.reasoning_ids):
        return 1.0 / n_r if n_a == 0 else 1.0 / (2 * n_r)
    if record_id in set(index.action_ids):
        return 1.0 / n_a if n_r == 0 else 1.0 / (2 * n_a)
    raise KeyError(f"unknown record id {record_id!r}")


def draw(index: CorpusIndex, n: int, rng: random.Random) -> list[str]:
    """n i.i.d. draws with replacement: fair mode coin, then uniform within mode."""
    if n < 0:
        raise ValueError("n must be >= 0")
    reasoning = index.reasoning_ids
    action = index.action_ids
    out = []
    for _ in range(n):
        if reasoning and action:
            pool = reasoning if rng.random() < 0.5 else action
        else:
            pool = reasoning or action
        out.append(pool[rng.randrange(len(pool))])
    return out


def write_manifest(ids: list[str], path) -> None:
    """One record id per line, for reproducible training runs."""
    with open(path, "w", encoding="utf-8") as f:
        for record_id in ids:
            f.write(record_id + "\n")


def read_manifest(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as f:
        return [line.rstrip("\n") for line in f if line.strip()]
