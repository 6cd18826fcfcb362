"""Summary statistics over seeds and relative change between model groups."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class SummaryStats:
    count: int
    median: float
    mean: float
    std: float
    values: tuple[float, ...]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["values"] = list(self.values)
        return d


def summarize_values(values) -> SummaryStats:
    """Median, mean and population standard deviation of final fidelities."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise ValueError("cannot summarize an empty set of runs")
    return SummaryStats(
        count=int(arr.size),
        median=float(np.median(arr)),
        mean=float(arr.mean()),
        std=float(arr.std()),
        values=tuple(float(v) for v in arr),
    )


def relative_change(values, baseline) -> float:
    """``(a - b) / b`` where ``a`` and ``b`` are the group means."""
    a = np.asarray(list(values), dtype=float)
    b = np.asarray(list(baseline), dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both groups need at least one value")
    b_mean = b.mean()
    if b_mean == 0:
        raise ValueError("baseline mean is zero")
    return float((a.mean() - b_mean) / b_mean)
