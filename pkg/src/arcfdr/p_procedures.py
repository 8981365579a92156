"""Streaming state machines for the p-value procedures: online BH, LOND,
r-LOND, online BR, TOAD, online Storey-BH, and the LORD / SAFFRON baselines.
"""

from __future__ import annotations

import math
from bisect import bisect_right, insort

from .core import (
    ConfigError,
    InputError,
    ScoreKind,
    WeightSequence,
    _SortedPending,
    harmonic_number,
    minimal_k_pvalue,
)
from .e_procedures import DeadlineSchedule, StreamProcedure, _KStarStepUpP


class ShapeFunction:
    """Reshaping beta(k) of rejection thresholds for arbitrary dependence.

    beta(k) = integral of x over (0, k] under a probability measure nu;
    nondecreasing with beta(0) = 0.  Identity recovers the unreshaped
    procedure; BY(K) uses beta(k) = min(k, K) / ell_K.
    """

    def __init__(self, variant: str, **params):
        self.variant = variant
        if variant == "identity":
            pass
        elif variant == "by":
            K = int(params["K"])
            if K < 1:
                raise ConfigError(f"BY horizon K={K} must be >= 1")
            self._K = K
            self._ell = harmonic_number(K)
        elif variant == "custom":
            # discrete measure: {support point x > 0: mass}
            measure = {float(x): float(m) for x, m in params["measure"].items()}
            if any(x <= 0 or m < 0 for x, m in measure.items()):
                raise ConfigError("measure needs positive support and nonnegative mass")
            total = math.fsum(measure.values())
            if total > 1.0 + 1e-12:
                raise ConfigError(f"measure mass {total} exceeds 1")
            self._points = sorted(measure.items())
        else:
            raise ConfigError(f"unknown shape variant {variant!r}")

    @classmethod
    def identity(cls) -> "ShapeFunction":
        return cls("identity")

    @classmethod
    def by(cls, K: int) -> "ShapeFunction":
        return cls("by", K=K)

    @classmethod
    def custom(cls, measure: dict) -> "ShapeFunction":
        return cls("custom", measure=measure)

    def beta(self, k: float) -> float:
        if k <= 0:
            return 0.0
        if self.variant == "identity":
            return float(k)
        if self.variant == "by":
            return min(k, self._K) / self._ell
        return math.fsum(x * m for x, m in self._points if x <= k)

    @property
    def beta_sup(self) -> float:
        """Limit of beta(k) as k -> inf."""
        if self.variant == "identity":
            return math.inf
        if self.variant == "by":
            return self._K / self._ell
        return math.fsum(x * m for x, m in self._points)

    def minimal_k(self, p: float, alpha: float, gamma: float) -> float:
        """Smallest k >= 1 with p <= alpha * gamma * beta(k), or inf."""
        if gamma <= 0.0:
            return math.inf
        if self.variant == "identity":
            return minimal_k_pvalue(p, alpha, gamma)
        ag = alpha * gamma
        if p > ag * self.beta_sup:
            return math.inf
        lo, hi = 1, 1
        while p > ag * self.beta(hi):
            lo = hi + 1
            hi *= 2
        while lo < hi:
            mid = (lo + hi) // 2
            if p <= ag * self.beta(mid):
                hi = mid
            else:
                lo = mid + 1
        return lo


class OnlineBH(_KStarStepUpP):
    """Online BH: rejects R_t = {i <= t : P_i <= k*_t * alpha * gamma_i} with
    the step-up k*_t.  With uniform weights over K it equals offline BH at
    time K.  Controls OnlineFDR under PRDS.
    """


class Lond(StreamProcedure):
    """LOND: fully online, rejects H_t iff P_t <= alpha gamma_t (|R_{t-1}| + 1)."""

    kind = ScoreKind.P_VALUE

    def _threshold(self, t: int, r_prev: int) -> float:
        return self.alpha * self.weights.gamma(t) * (r_prev + 1)

    def _advance(self, value):
        self.t += 1
        self.scores.append(value)
        g = self.weights.gamma(self.t)
        level = self._threshold(self.t, len(self.rejection_times))
        newly = []
        if g > 0.0 and value <= level:
            newly = self._record([self.t], self.t)
        self.k_star = len(self.rejection_times)
        self.kstar_path.append(self.k_star)
        return newly


class RLond(Lond):
    """Reshaped LOND: threshold alpha gamma_t beta(|R_{t-1}| + 1)."""

    def __init__(self, weights, alpha, beta: ShapeFunction):
        super().__init__(weights, alpha)
        self.beta = beta

    def _threshold(self, t, r_prev):
        return self.alpha * self.weights.gamma(t) * self.beta.beta(r_prev + 1)


class OnlineBR(_KStarStepUpP):
    """Online BR: online-BH-style step-up with reshaped thresholds
    alpha gamma_j beta(k).  beta = identity recovers online BH.
    """

    def __init__(self, weights, alpha, beta: ShapeFunction):
        super().__init__(weights, alpha)
        self.beta = beta

    def _need(self, value, t):
        return self.beta.minimal_k(value, self.alpha, self.weights.gamma(t))


class Toad(StreamProcedure):
    """TOAD: online BR with decision deadlines and per-hypothesis shape
    functions.  d_t = inf with identity beta recovers online BH; d_t = t
    recovers r-LOND.
    """

    kind = ScoreKind.P_VALUE

    def __init__(self, weights, alpha, deadlines: DeadlineSchedule, beta):
        super().__init__(weights, alpha)
        self.deadlines = deadlines
        # beta: a single ShapeFunction or a callable index -> ShapeFunction
        self._beta_of = beta if callable(beta) else (lambda t: beta)
        self._betas: list[ShapeFunction] = []
        self._pvalues_ok: list[bool] = []
        self._deadline_of: list[float] = []

    def _advance(self, value):
        self.t += 1
        t = self.t
        self.scores.append(value)
        self._betas.append(self._beta_of(t))
        self._deadline_of.append(self.deadlines.deadline(t))

        base = sum(1 for i in self.rejection_times if self._deadline_of[i - 1] < t)
        active = [i for i in range(1, t + 1) if self._deadline_of[i - 1] >= t]

        def countable(i: int, k: int) -> bool:
            g = self.weights.gamma(i)
            return g > 0.0 and self.scores[i - 1] <= self.alpha * g * self._betas[i - 1].beta(base + k)

        k_active = 0
        for k in range(1, len(active) + 1):
            if sum(1 for i in active if countable(i, k)) >= k:
                k_active = k
        self.k_star = base + k_active
        self.kstar_path.append(self.k_star)

        newly = []
        for i in active:
            g = self.weights.gamma(i)
            if (i not in self.rejection_times and g > 0.0
                    and self.scores[i - 1] <= self.alpha * g * self._betas[i - 1].beta(self.k_star)):
                newly.append(i)
        self._record(newly, t)
        return newly


class OnlineStoreyBH(StreamProcedure):
    """Online Storey-BH: online BH with the adaptive null-mass estimate

        pi0_hat_t = (gamma_max + sum_{i<=t} gamma_i 1{P_i > lambda}
                     + sum_{i>t} gamma_i) / (1 - lambda)

    and thresholds min(k alpha gamma_i / pi0_hat_t, lambda).  pi0_hat is
    nonincreasing in t, so thresholds only grow and the rejection sets are
    nested.  With uniform weights over K it recovers offline Storey-BH at
    time K.
    """

    kind = ScoreKind.P_VALUE

    def __init__(self, weights, alpha, lam: float = 0.5):
        super().__init__(weights, alpha)
        if not (alpha <= lam < 1.0):
            raise ConfigError(f"lambda={lam} outside [alpha, 1)")
        self.lam = lam
        self._over_lambda_mass = 0.0
        self.pi0_hat = math.inf
        # candidates (P <= lambda, gamma > 0) sorted by P / (alpha * gamma)
        self._ratios: list[float] = []
        self._pending = _SortedPending()

    def _advance(self, value):
        self.t += 1
        t = self.t
        self.scores.append(value)
        g = self.weights.gamma(t)
        if value > self.lam:
            self._over_lambda_mass += g
        self.pi0_hat = (
            self.weights.gamma_max + self._over_lambda_mass + self.weights.tail_mass(t)
        ) / (1.0 - self.lam)

        newly = []
        if value <= self.lam and g > 0.0:
            ratio = value / (self.alpha * g)
            insort(self._ratios, ratio)
            if ratio <= self.k_star / self.pi0_hat and self.k_star >= 1:
                newly = self._record([t], t)
            else:
                self._pending.add(ratio, t)

        # count(k) = #{candidates with P_j <= k alpha gamma_j / pi0_hat};
        # k* = max{k : count(k) >= k}, found by the downward iteration
        # k <- count(k) (see _KStarStepUp); nondecreasing in t since both
        # pi0_hat shrinks and candidates accumulate
        k = len(self._ratios)
        while k > self.k_star:
            c = bisect_right(self._ratios, k / self.pi0_hat)
            if c >= k:
                self.k_star = k
                break
            k = c
        newly += self._record(self._pending.pop_upto(self.k_star / self.pi0_hat), t)
        self.kstar_path.append(self.k_star)
        return newly


class Lord(StreamProcedure):
    """LORD (the generalized ++ variant) with gamma-sequence spending.

    alpha_t = gamma_t * w0 + (alpha - w0) * gamma_{t - tau_1} * 1{tau_1 < t}
              + alpha * sum_{j >= 2, tau_j < t} gamma_{t - tau_j},

    where tau_j is the time of the j-th rejection and w0 <= alpha is the
    initial wealth (default alpha / 2, the usual even split between initial
    wealth and the first-rejection bonus).  These levels satisfy
    sum_{i<=t} alpha_i <= alpha * (|R_t| v 1) at every t.
    """

    kind = ScoreKind.P_VALUE

    def __init__(self, weights, alpha, w0: float | None = None):
        super().__init__(weights, alpha)
        self.w0 = alpha / 2.0 if w0 is None else float(w0)
        if not (0.0 < self.w0 <= alpha):
            raise ConfigError(f"w0={self.w0} outside (0, alpha]")
        self._tau: list[int] = []
        self.levels: list[float] = []
        self.spent = 0.0
        # geometric weights admit an O(1) recursion for the spending sums
        self._geom_q = weights._q if weights.description == "geometric" else None
        self._sum_first = 0.0   # gamma_{t - tau_1}
        self._sum_rest = 0.0    # sum_{j>=2} gamma_{t - tau_j}

    def _level(self, t: int) -> float:
        if self._geom_q is not None:
            first, rest = self._sum_first, self._sum_rest
        else:
            first = self.weights.gamma(t - self._tau[0]) if self._tau else 0.0
            rest = math.fsum(self.weights.gamma(t - tau) for tau in self._tau[1:])
        return self.weights.gamma(t) * self.w0 + (self.alpha - self.w0) * first + self.alpha * rest

    def _advance(self, value):
        self.t += 1
        t = self.t
        self.scores.append(value)
        if self._geom_q is not None:
            q = self._geom_q
            self._sum_first *= q
            self._sum_rest *= q
            if self._tau and self._tau[-1] == t - 1:
                g1 = self.weights.gamma(1)
                if len(self._tau) == 1:
                    self._sum_first += g1
                else:
                    self._sum_rest += g1
        level = self._level(t)
        self.levels.append(level)
        self.spent += level
        newly = []
        if value <= level:
            self._tau.append(t)
            newly = self._record([t], t)
        self.k_star = len(self.rejection_times)
        self.kstar_path.append(self.k_star)
        return newly

    def condition_slack(self) -> float:
        """alpha * (|R_t| v 1) - sum_{i<=t} alpha_i; nonnegative when valid."""
        return self.alpha * max(1, len(self.rejection_times)) - self.spent


class Saffron(StreamProcedure):
    """SAFFRON with candidate threshold lambda and gamma-sequence spending.

    alpha_t = min(lambda, w0 gamma_{t - C_{0,t}}
                  + ((1-lambda) alpha - w0) gamma_{t - tau_1 - C_{1,t}} 1{tau_1 < t}
                  + (1-lambda) alpha sum_{j>=2, tau_j < t} gamma_{t - tau_j - C_{j,t}}),

    where C_{j,t} counts candidates (P_i <= lambda) strictly between tau_j and
    t.  With w0 <= (1-lambda) alpha the levels satisfy
    sum_{i<=t} alpha_i 1{P_i > lambda} / (1-lambda) <= alpha * (|R_t| v 1).
    """

    kind = ScoreKind.P_VALUE

    def __init__(self, weights, alpha, lam: float = 0.5, w0: float | None = None):
        super().__init__(weights, alpha)
        if not (0.0 < lam < 1.0):
            raise ConfigError(f"lambda={lam} outside (0, 1)")
        self.lam = lam
        cap = (1.0 - lam) * alpha
        self.w0 = cap / 2.0 if w0 is None else float(w0)
        if not (0.0 < self.w0 <= cap):
            raise ConfigError(f"w0={self.w0} outside (0, (1-lambda)*alpha]")
        self._tau: list[int] = []
        self._cand_after: list[int] = []  # candidates strictly after each tau_j
        self._cand_total = 0
        self.levels: list[float] = []
        self.discounted_spend = 0.0  # sum alpha_i 1{P_i > lambda} / (1 - lambda)
        self._geom_q = weights._q if weights.description == "geometric" else None
        self._sum_w0 = weights.gamma(1)  # gamma_{t - C_{0,t}} for geometric
        self._sum_first = 0.0
        self._sum_rest = 0.0

    def _level(self, t: int) -> float:
        if self._geom_q is not None:
            base, first, rest = self._sum_w0, self._sum_first, self._sum_rest
        else:
            base = self.weights.gamma(t - self._cand_total)
            first = rest = 0.0
            for j, tau in enumerate(self._tau):
                g = self.weights.gamma(t - tau - self._cand_after[j])
                if j == 0:
                    first = g
                else:
                    rest += g
        raw = (self.w0 * base
               + ((1.0 - self.lam) * self.alpha - self.w0) * first
               + (1.0 - self.lam) * self.alpha * rest)
        return min(self.lam, raw)

    def _advance(self, value):
        self.t += 1
        t = self.t
        self.scores.append(value)
        level = self._level(t)
        self.levels.append(level)
        if value > self.lam:
            self.discounted_spend += level / (1.0 - self.lam)
        newly = []
        if value <= level:
            self._tau.append(t)
            self._cand_after.append(0)
            newly = self._record([t], t)
        is_candidate = value <= self.lam
        if is_candidate:
            self._cand_total += 1
            for j in range(len(self._cand_after)):
                if self._tau[j] < t:
                    self._cand_after[j] += 1
        if self._geom_q is not None:
            # indices t - tau_j - C_{j,t} advance only on non-candidate steps
            q = self._geom_q
            if not is_candidate:
                self._sum_w0 *= q
                self._sum_first *= q
                self._sum_rest *= q
            if self._tau and self._tau[-1] == t:
                g1 = self.weights.gamma(1)
                if len(self._tau) == 1:
                    self._sum_first += g1
                else:
                    self._sum_rest += g1
        self.k_star = len(self.rejection_times)
        self.kstar_path.append(self.k_star)
        return newly

    def condition_slack(self) -> float:
        """alpha * (|R_t| v 1) - sum alpha_i 1{P_i > lambda}/(1-lambda)."""
        return self.alpha * max(1, len(self.rejection_times)) - self.discounted_spend
