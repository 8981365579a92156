"""Streaming state machines for the e-value procedures: online e-BH, e-LOND,
and e-TOAD with decision deadlines.

All procedures accept one score per step and maintain nested rejection sets.
Rejections are recorded as first-rejection times so that full streams can be
processed without materializing a set per step; ``step`` additionally returns
the explicit current :class:`~arcfdr.core.RejectionSet`.
"""

from __future__ import annotations

import math
from bisect import bisect_right, insort

from .core import (
    ConfigError,
    InputError,
    RejectionSet,
    ScoreKind,
    WeightSequence,
    _SortedPending,
    minimal_k_evalue,
    minimal_k_pvalue,
    score_value,
)


class DeadlineSchedule:
    """Per-hypothesis decision deadlines d_t >= t (possibly +inf)."""

    def __init__(self, deadline_fn):
        self._fn = deadline_fn

    @classmethod
    def unbounded(cls) -> "DeadlineSchedule":
        return cls(lambda t: math.inf)

    @classmethod
    def immediate(cls) -> "DeadlineSchedule":
        return cls(lambda t: t)

    @classmethod
    def explicit(cls, deadlines) -> "DeadlineSchedule":
        ds = list(deadlines)
        return cls(lambda t: ds[t - 1] if t <= len(ds) else math.inf)

    def deadline(self, t: int) -> float:
        d = self._fn(t)
        if d < t:
            raise ConfigError(f"deadline d_{t}={d} is before arrival time {t}")
        return d


class StreamProcedure:
    """Common stream state: scores seen, k* path, and first-rejection times."""

    kind: ScoreKind

    def __init__(self, weights: WeightSequence, alpha: float):
        if not (0.0 < alpha <= 1.0):
            raise ConfigError(f"alpha={alpha} outside (0, 1]")
        self.weights = weights
        self.alpha = alpha
        self.t = 0
        self.scores: list[float] = []
        self.k_star = 0
        self.kstar_path: list[int] = []  # kstar_path[t-1] = k*_t
        self.rejection_times: dict[int, int] = {}
        self._rejected_sorted: list[int] = []
        self._last_new: tuple = ()

    def _advance(self, value: float) -> list:
        """Process one raw score; returns the list of newly rejected indices."""
        raise NotImplementedError

    def step(self, score) -> RejectionSet:
        """Feed one score, returning the current rejection set."""
        value = score_value(score, self.kind)
        new = self._advance(value)
        for i in new:
            insort(self._rejected_sorted, i)
        self._last_new = tuple(sorted(new))
        return self.rejection_set()

    def run(self, scores) -> "StreamProcedure":
        """Feed a whole stream without materializing per-step sets."""
        for s in scores:
            value = score_value(s, self.kind)
            new = self._advance(value)
            for i in new:
                insort(self._rejected_sorted, i)
        return self

    def rejection_set(self) -> RejectionSet:
        return RejectionSet(tuple(self._rejected_sorted), self.t)

    @property
    def newly_rejected(self) -> tuple:
        """Indices first rejected by the most recent step."""
        return self._last_new

    def _record(self, indices, time: int) -> list:
        for i in indices:
            self.rejection_times[i] = time
        return list(indices)


class _KStarStepUp(StreamProcedure):
    """Shared machinery for the online (e-)BH step-up recursion.

    Each hypothesis j has an integer "need": the smallest candidate set size k
    at which its score clears the threshold, so count(k) = #{j : need_j <= k}
    and k*_t = max{k <= t : count(k) >= k}.  The satisfying set can have gaps,
    so the max is found by iterating k <- count(k) downward from the largest
    possible k: any valid k' <= k also satisfies k' <= count(k'), hence
    k' <= count(k), and the iteration cannot skip past the max fixpoint.
    k* is nondecreasing in t, which bounds the descent from below.
    """

    def __init__(self, weights, alpha):
        super().__init__(weights, alpha)
        self._needs_sorted: list[float] = []  # finite needs of all scores
        self._pending = _SortedPending()

    def _need(self, value: float, t: int) -> float:
        raise NotImplementedError

    def _advance(self, value: float) -> list:
        self.t += 1
        self.scores.append(value)
        need = self._need(value, self.t)
        newly = []
        if not math.isinf(need):
            insort(self._needs_sorted, need)
            if need <= self.k_star:
                newly = self._record([self.t], self.t)
            else:
                self._pending.add(need, self.t)
        k = len(self._needs_sorted)
        while k > self.k_star:
            c = bisect_right(self._needs_sorted, k)
            if c >= k:
                self.k_star = k
                newly += self._record(self._pending.pop_upto(k), self.t)
                break
            k = c
        self.kstar_path.append(self.k_star)
        return newly


class OnlineEBH(_KStarStepUp):
    """Online e-BH: the step-up extension of e-BH to weighted streams.

    Rejects R_t = {i <= t : E_i >= 1/(k*_t * alpha * gamma_i)} where k*_t is
    the largest k in {1..t} such that at least k e-values clear 1/(k alpha
    gamma_j).  Controls SupFDR at level alpha under arbitrary dependence.
    """

    kind = ScoreKind.E_VALUE

    def _need(self, value, t):
        return minimal_k_evalue(value, self.alpha, self.weights.gamma(t))


class ELond(StreamProcedure):
    """e-LOND: fully online, rejects H_t iff E_t >= 1/(alpha gamma_t (|R_{t-1}| + 1))."""

    kind = ScoreKind.E_VALUE

    def _advance(self, value):
        self.t += 1
        self.scores.append(value)
        g = self.weights.gamma(self.t)
        r_prev = len(self.rejection_times)
        level = self.alpha * g * (r_prev + 1)
        newly = []
        if g > 0.0 and (math.isinf(value) or value >= 1.0 / level):
            newly = self._record([self.t], self.t)
        self.k_star = len(self.rejection_times)
        self.kstar_path.append(self.k_star)
        return newly


class EToad(StreamProcedure):
    """e-TOAD: online e-BH with decision deadlines.

    At step t the active set is C_t = {i <= t : d_i >= t}.  Decisions for
    hypotheses past their deadline are frozen; the step-up search runs over
    the active set on top of the frozen rejection count.  Recovers online
    e-BH for d_t = inf and e-LOND for d_t = t.
    """

    kind = ScoreKind.E_VALUE

    def __init__(self, weights, alpha, deadlines: DeadlineSchedule):
        super().__init__(weights, alpha)
        self.deadlines = deadlines
        self._needs: list[float] = []
        self._deadline_of: list[float] = []

    def _need(self, value, t):
        return minimal_k_evalue(value, self.alpha, self.weights.gamma(t))

    def _advance(self, value):
        self.t += 1
        t = self.t
        self.scores.append(value)
        self._needs.append(self._need(value, t))
        self._deadline_of.append(self.deadlines.deadline(t))

        # |R_{t-1} \ C_t|: rejections whose deadline has passed (frozen)
        base = sum(1 for i in self.rejection_times if self._deadline_of[i - 1] < t)
        active = [i for i in range(1, t + 1) if self._deadline_of[i - 1] >= t]
        adj = sorted(self._needs[i - 1] - base for i in active)
        k_active = 0
        for k in range(1, len(adj) + 1):
            if adj[k - 1] <= k:
                k_active = k
        self.k_star = base + k_active
        self.kstar_path.append(self.k_star)

        # active hypotheses use the current k*; frozen decisions persist as-is
        newly = []
        for i in active:
            if i not in self.rejection_times and self._needs[i - 1] <= self.k_star:
                newly.append(i)
        self._record(newly, t)
        return newly


class _KStarStepUpP(_KStarStepUp):
    kind = ScoreKind.P_VALUE

    def _need(self, value, t):
        return minimal_k_pvalue(value, self.alpha, self.weights.gamma(t))
