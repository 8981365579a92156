"""False-discovery and power metrics over rejection histories.

SupFDR over an infinite stream is estimated by the running-max FDP at the
simulated horizon, which lower-bounds the theoretical supremum.  Power is the
expected proportion of non-nulls rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import InputError, RejectionSet


@dataclass(frozen=True)
class GroundTruth:
    """Per-index null labels: labels[i-1] is True iff hypothesis i is null."""

    labels: tuple

    @classmethod
    def from_nulls(cls, nulls, n: int) -> "GroundTruth":
        nulls = set(nulls)
        return cls(tuple(i in nulls for i in range(1, n + 1)))

    def is_null(self, i: int) -> bool:
        if not (1 <= i <= len(self.labels)):
            raise InputError(f"index {i} not covered by ground truth")
        return bool(self.labels[i - 1])

    @property
    def n_nulls(self) -> int:
        return sum(self.labels)

    @property
    def n_nonnulls(self) -> int:
        return len(self.labels) - self.n_nulls


def fdp(rejections, truth: GroundTruth) -> float:
    """False discovery proportion |R cap I_0| / (|R| v 1)."""
    indices = rejections.indices if isinstance(rejections, RejectionSet) else tuple(rejections)
    if not indices:
        return 0.0
    false = sum(1 for i in indices if truth.is_null(i))
    return false / len(indices)


def power(rejections, truth: GroundTruth) -> float:
    """Proportion of non-null hypotheses rejected."""
    indices = rejections.indices if isinstance(rejections, RejectionSet) else tuple(rejections)
    denom = max(1, truth.n_nonnulls)
    true_pos = sum(1 for i in indices if not truth.is_null(i))
    return true_pos / denom


@dataclass
class FdpPath:
    """FDP_t for t = 1..n, with its running maximum."""

    values: np.ndarray
    sup_fdp: float = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise InputError("FDP values outside [0, 1]")
        self.sup_fdp = float(self.values.max()) if self.values.size else 0.0

    def sup_upto(self, K: int) -> float:
        if K < 1:
            raise InputError(f"K={K} must be >= 1")
        return float(self.values[: K].max()) if self.values.size else 0.0

    def at(self, t: int) -> float:
        return float(self.values[t - 1])


def fdp_path_from_rejection_times(rejection_times: dict, truth: GroundTruth,
                                  n: int) -> FdpPath:
    """FDP path of an ARC run from its first-rejection times.

    Nestedness makes the rejection history equivalent to the map
    index -> first rejection time, so per-step counts reduce to cumulative
    sums of two indicator arrays.
    """
    rej_all = np.zeros(n + 1, dtype=np.int64)
    rej_null = np.zeros(n + 1, dtype=np.int64)
    for i, t in rejection_times.items():
        if not (1 <= t <= n):
            raise InputError(f"rejection time {t} outside 1..{n}")
        rej_all[t] += 1
        if truth.is_null(i):
            rej_null[t] += 1
    totals = np.cumsum(rej_all[1:])
    falses = np.cumsum(rej_null[1:])
    return FdpPath(falses / np.maximum(totals, 1))


class StoppingRule:
    """A stopping time as a function of the observable history only.

    Rules see per-step rejection counts (and optionally scores), never the
    ground truth; they return a 1-based time in 1..n.
    """

    def __init__(self, fn, name: str):
        self._fn = fn
        self.name = name

    @classmethod
    def fixed_time(cls, T: int) -> "StoppingRule":
        if T < 1:
            raise InputError(f"T={T} must be >= 1")
        return cls(lambda counts: min(T, len(counts)), f"fixed_time({T})")

    @classmethod
    def time_of_jth_rejection(cls, j: int) -> "StoppingRule":
        """First t with |R_t| >= j; the horizon if never reached."""
        if j < 1:
            raise InputError(f"j={j} must be >= 1")

        def fn(counts):
            hit = np.nonzero(np.asarray(counts) >= j)[0]
            return int(hit[0]) + 1 if hit.size else len(counts)

        return cls(fn, f"time_of_jth_rejection({j})")

    def stop_time(self, rejection_counts) -> int:
        return self._fn(rejection_counts)


def estimate_metrics(fdp_paths, power_values=None, K: int | None = None,
                     stopping_rule: StoppingRule | None = None,
                     rejection_counts=None) -> dict:
    """Monte-Carlo estimates across trials, each with a standard error.

    Returns fdr_at_T (final-time FDP mean), sup_fdr (running-max FDP mean),
    optionally sup_fdr_K, stop_fdr for a supplied rule, and power.  Values are
    (mean, se) pairs with se = sample sd / sqrt(m).
    """
    paths = list(fdp_paths)
    m = len(paths)
    if m < 2:
        raise InputError("need at least 2 trials for standard errors")

    def mean_se(xs):
        xs = np.asarray(xs, dtype=float)
        return float(xs.mean()), float(xs.std(ddof=1) / math.sqrt(m))

    out = {
        "fdr_at_T": mean_se([p.values[-1] if p.values.size else 0.0 for p in paths]),
        "sup_fdr": mean_se([p.sup_fdp for p in paths]),
    }
    if K is not None:
        out["sup_fdr_K"] = mean_se([p.sup_upto(K) for p in paths])
    if stopping_rule is not None:
        if rejection_counts is None:
            raise InputError("stop_fdr needs per-trial rejection counts")
        stops = [stopping_rule.stop_time(c) for c in rejection_counts]
        out["stop_fdr"] = mean_se([p.at(t) for p, t in zip(paths, stops)])
    if power_values is not None:
        out["power"] = mean_se(list(power_values))
    return out
