"""Shared domain types: scores, weight sequences, rejection sets, self-consistency."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

WEIGHT_SUM_SLACK = 1e-12


class InputError(ValueError):
    """Invalid scores, weights, or candidate sets."""


class ConfigError(ValueError):
    """Invalid procedure or experiment configuration."""


class ScoreKind(Enum):
    P_VALUE = "p"
    E_VALUE = "e"


@dataclass(frozen=True)
class Score:
    """A single test statistic: a p-value in [0, 1] or an e-value in [0, +inf]."""

    value: float
    kind: ScoreKind

    def __post_init__(self):
        validate_score_value(self.value, self.kind)


def validate_score_value(value: float, kind: ScoreKind) -> float:
    """Range-check a raw score; raises InputError instead of clamping."""
    value = float(value)
    if math.isnan(value):
        raise InputError(f"score is NaN ({kind.value}-value)")
    if kind is ScoreKind.P_VALUE:
        if not (0.0 <= value <= 1.0):
            raise InputError(f"p-value {value!r} outside [0, 1]")
    else:
        if value < 0.0:
            raise InputError(f"e-value {value!r} is negative")
    return value


def score_value(score, kind: ScoreKind) -> float:
    """Accept a raw float or a Score; enforce the stream's kind."""
    if isinstance(score, Score):
        if score.kind is not kind:
            raise InputError(
                f"{score.kind.value}-value fed to a {kind.value}-value procedure"
            )
        return score.value
    return validate_score_value(score, kind)


class WeightSequence:
    """Nonnegative per-hypothesis weights gamma_1, gamma_2, ... with sum <= 1.

    Three constructions: an explicit finite list (zero beyond its end), the
    geometric sequence gamma_t = q^(t-1) * (1 - q), and uniform weights 1/K on
    the first K hypotheses.
    """

    def __init__(self, description: str, **params):
        self.description = description
        self._params = params
        if description == "explicit":
            weights = [float(w) for w in params["weights"]]
            if any(w < 0 or math.isnan(w) for w in weights):
                raise InputError("explicit weights must be nonnegative")
            total = math.fsum(weights)
            if total > 1.0 + WEIGHT_SUM_SLACK:
                raise InputError(f"explicit weights sum to {total} > 1")
            self._weights = weights
            # suffix[t] = sum of weights strictly after position t (1-based)
            suffix = [0.0] * (len(weights) + 1)
            for i in range(len(weights) - 1, -1, -1):
                suffix[i] = suffix[i + 1] + weights[i]
            self._suffix = suffix
            self._gamma_max = max(weights) if weights else 0.0
        elif description == "geometric":
            q = float(params["q"])
            if not (0.0 < q < 1.0):
                raise InputError(f"geometric parameter q={q} outside (0, 1)")
            self._q = q
            self._gamma_max = 1.0 - q
        elif description == "uniform_finite":
            K = int(params["K"])
            if K < 1:
                raise InputError(f"uniform horizon K={K} must be >= 1")
            self._K = K
            self._gamma_max = 1.0 / K
        else:
            raise ConfigError(f"unknown weight description {description!r}")

    @classmethod
    def explicit(cls, weights: Sequence[float]) -> "WeightSequence":
        return cls("explicit", weights=list(weights))

    @classmethod
    def geometric(cls, q: float) -> "WeightSequence":
        return cls("geometric", q=q)

    @classmethod
    def uniform_finite(cls, K: int) -> "WeightSequence":
        return cls("uniform_finite", K=K)

    def gamma(self, t: int) -> float:
        """Weight of hypothesis t (1-based)."""
        if t < 1:
            raise InputError(f"index t={t} must be >= 1")
        if self.description == "explicit":
            return self._weights[t - 1] if t <= len(self._weights) else 0.0
        if self.description == "geometric":
            return self._q ** (t - 1) * (1.0 - self._q)
        return 1.0 / self._K if t <= self._K else 0.0

    def tail_mass(self, t: int) -> float:
        """Sum of gamma_i over i > t, in closed form."""
        if t < 0:
            raise InputError(f"t={t} must be >= 0")
        if self.description == "explicit":
            return self._suffix[min(t, len(self._weights))]
        if self.description == "geometric":
            return self._q ** t
        return max(0, self._K - t) / self._K

    @property
    def gamma_max(self) -> float:
        """Supremum of gamma_i over the whole (possibly infinite) sequence."""
        return self._gamma_max

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self._params.items())
        return f"WeightSequence.{self.description}({args})"


@dataclass(frozen=True)
class RejectionSet:
    """The set of rejected hypothesis indices at a given step."""

    indices: tuple
    time: int

    def __post_init__(self):
        if any(i > self.time or i < 1 for i in self.indices):
            raise InputError("rejection set contains an index beyond its time")

    def __contains__(self, i: int) -> bool:
        return i in set(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


def harmonic_number(K: int) -> float:
    """The K-th harmonic number, sum of 1/i for i = 1..K."""
    if K < 1:
        raise InputError(f"K={K} must be a positive integer")
    return math.fsum(1.0 / i for i in range(1, K + 1))


def minimal_k_evalue(e: float, alpha: float, gamma: float) -> float:
    """Smallest integer k >= 1 with e >= 1/(k * alpha * gamma), or inf if none.

    Exact at grid boundaries: the candidate from the float division is
    corrected with direct threshold comparisons.
    """
    if gamma <= 0.0 or e <= 0.0:
        return math.inf
    if math.isinf(e):
        return 1
    ag = alpha * gamma
    denom = ag * e
    if denom <= 0.0:  # product underflow for subnormal e
        return math.inf
    kf = 1.0 / denom
    if kf > 1e15:
        return math.inf
    k = max(1, math.ceil(kf))
    while k > 1 and e >= 1.0 / ((k - 1) * ag):
        k -= 1
    while e < 1.0 / (k * ag):
        k += 1
    return k


def minimal_k_pvalue(p: float, alpha: float, gamma: float) -> float:
    """Smallest integer k >= 1 with p <= k * alpha * gamma, or inf if none."""
    if gamma <= 0.0:
        # weight zero carries no error budget: never rejected, even at p = 0
        return math.inf
    ag = alpha * gamma
    kf = p / ag
    if kf > 1e15:
        return math.inf
    k = max(1, math.ceil(kf))
    while k > 1 and p <= (k - 1) * ag:
        k -= 1
    while p > k * ag:
        k += 1
    return k


def is_self_consistent(candidate, scores, weights: WeightSequence, alpha: float,
                       kind: ScoreKind | None = None) -> bool:
    """Whether every index in the candidate set clears the threshold implied
    by the set's own size: E_t >= 1/(alpha * gamma_t * |R|) for e-values,
    P_t <= alpha * gamma_t * |R| for p-values.  The empty set passes.

    Scores may be Score instances (kind inferred) or raw floats with an
    explicit kind.
    """
    if not (0.0 < alpha <= 1.0):
        raise ConfigError(f"alpha={alpha} outside (0, 1]")
    candidate = sorted(set(candidate))
    if not candidate:
        return True
    kinds = {s.kind for s in scores if isinstance(s, Score)}
    if kind is not None:
        kinds.add(kind)
    if len(kinds) > 1:
        raise InputError("mixed score kinds in one stream")
    if not kinds:
        raise InputError("pass Score instances or an explicit kind")
    kind = kinds.pop()
    values = [score_value(s, kind) for s in scores]
    n = len(values)
    if candidate[0] < 1 or candidate[-1] > n:
        raise InputError(f"candidate index out of range 1..{n}")
    r = len(candidate)
    for t in candidate:
        g = weights.gamma(t)
        if kind is ScoreKind.E_VALUE:
            if g <= 0.0:
                return False
            if not values[t - 1] >= 1.0 / (alpha * g * r):
                return False
        else:
            if g <= 0.0:
                return False
            if not values[t - 1] <= alpha * g * r:
                return False
    return True


class _SortedPending:
    """Indices awaiting rejection, ordered by the k at which they qualify."""

    __slots__ = ("_needs", "_indices")

    def __init__(self):
        self._needs = []
        self._indices = []

    def add(self, need: float, index: int):
        pos = bisect_right(self._needs, need)
        self._needs.insert(pos, need)
        self._indices.insert(pos, index)

    def pop_upto(self, k: float) -> list:
        """Remove and return all indices whose need is <= k."""
        pos = bisect_right(self._needs, k)
        out = self._indices[:pos]
        del self._needs[:pos]
        del self._indices[:pos]
        return out
