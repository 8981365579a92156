"""Truncation functions, boosting-factor solver for Gaussian likelihood-ratio
e-values, p-to-e transforms, and SupFDR/OnlineFDR condition checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import ndtr

from .core import ConfigError, InputError


class SolverError(RuntimeError):
    """No boosting factor exists in the search bracket."""


class TruncationVariant(Enum):
    FULL = "full"                # T_t
    PLUS = "plus"                # ^+T_t^s: passes x through below the cutoff
    MINUS = "minus"              # ^-T_t^s: zero below the cutoff
    LOCAL = "local"              # min(T_t(x), 1/((k0+1) alpha gamma))
    LOCAL_PLUS = "local_plus"
    LOCAL_MINUS = "local_minus"
    TOAD = "toad"                # minus-style cutoff at the deadline d
    PRDS = "prds"                # T_t pointwise; sup-probability criterion


@dataclass(frozen=True)
class TruncationSpec:
    """Parameters of a truncation function on the grid {1/(k alpha gamma)}."""

    variant: TruncationVariant
    alpha: float
    gamma: float
    s: int | None = None          # series cutoff for Plus/Minus/LocalX/PRDS
    lag_kstar: int | None = None  # k*_{t - L_t - 1} for the Local variants
    d: float | None = None        # decision deadline for Toad

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError(f"alpha={self.alpha} outside (0, 1]")
        if self.gamma < 0.0:
            raise ConfigError(f"gamma={self.gamma} is negative")
        v = self.variant
        if v in (TruncationVariant.PLUS, TruncationVariant.MINUS,
                 TruncationVariant.LOCAL_PLUS, TruncationVariant.LOCAL_MINUS):
            if self.s is None or self.s < 1:
                raise ConfigError(f"{v.value} needs a cutoff s >= 1")
        if v in (TruncationVariant.LOCAL, TruncationVariant.LOCAL_PLUS,
                 TruncationVariant.LOCAL_MINUS):
            if self.lag_kstar is None or self.lag_kstar < 0:
                raise ConfigError(f"{v.value} needs lag_kstar >= 0")
        if v is TruncationVariant.TOAD:
            if self.d is None or self.d < 1:
                raise ConfigError("toad needs a deadline d >= 1")

    @property
    def cutoff_s(self) -> float:
        """Effective series cutoff (the deadline for Toad, +inf for Full)."""
        if self.variant is TruncationVariant.TOAD:
            return self.d
        if self.s is not None:
            return self.s
        return math.inf


def _grid_index(x, ag):
    """Vectorized smallest k >= 1 with 1/(k*ag) <= x; 0 where x == 0.

    Exact at grid boundaries: the ceil candidate is corrected by direct
    comparison in two passes.
    """
    x = np.asarray(x, dtype=float)
    k = np.zeros(x.shape, dtype=float)
    pos = x > 0.0
    inf = np.isinf(x)
    k[inf] = 1.0
    fin = pos & ~inf
    with np.errstate(divide="ignore", over="ignore"):
        k[fin] = np.maximum(1.0, np.ceil(1.0 / (ag * x[fin])))
    with np.errstate(divide="ignore", over="ignore"):
        for _ in range(2):
            over = fin & (1.0 / (k * ag) > x)     # grid value still above x
            k[over] += 1.0
            down = fin & (k > 1) & (1.0 / (np.maximum(k - 1.0, 1.0) * ag) <= x)
            k[down] -= 1.0
    return k


def truncate(spec: TruncationSpec, x):
    """Evaluate the truncation function at x (scalar or array, +inf allowed)."""
    scalar = np.isscalar(x) or (isinstance(x, np.ndarray) and x.ndim == 0)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0.0) or np.any(np.isnan(x)):
        raise InputError("truncation input must be nonnegative")
    if spec.gamma == 0.0:
        out = np.zeros_like(x)  # convention 0 * inf = 0
        return float(out[0]) if scalar else out

    ag = spec.alpha * spec.gamma
    k = _grid_index(x, ag)
    out = np.zeros_like(x)
    hit = k >= 1.0
    out[hit] = 1.0 / (k[hit] * ag)

    s = spec.cutoff_s
    if math.isfinite(s):
        below = k > s  # x below the smallest retained grid value 1/(s*ag)
        if spec.variant in (TruncationVariant.PLUS, TruncationVariant.LOCAL_PLUS):
            out[below] = x[below]
        else:
            out[below] = 0.0
    if spec.lag_kstar is not None:
        out = np.minimum(out, 1.0 / ((spec.lag_kstar + 1) * ag))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class GaussianLRModel:
    """Likelihood-ratio e-value E = exp(delta * Z - delta^2 / 2) for a mean
    shift delta; under the null (Z standard normal) E has mean 1.
    """

    delta: float

    def __post_init__(self):
        if not self.delta > 0.0:
            raise ConfigError(f"delta={self.delta} must be positive")

    def evalue(self, z):
        return np.exp(self.delta * np.asarray(z, dtype=float) - self.delta ** 2 / 2.0)


def phi(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _tail_probs(model, ag, b, ks):
    """P(b*E >= 1/(k*ag)) for each k in ks, vectorized."""
    d = model.delta
    return 1.0 - ndtr(d / 2.0 - np.log(ks * ag * b) / d)


def expected_truncated_value(model: GaussianLRModel, spec: TruncationSpec, b: float) -> float:
    """Closed-form E_null[T(b * E)] for the cutoff variants.

    Built from normal CDF terms: the bracket probabilities
    P(1/(k ag) <= bE < 1/((k-1) ag)) weighted by grid values 1/(k ag), a
    pass-through term E[bE 1{bE < 1/(s ag)}] for the Plus variants, and a cap
    at 1/((k0+1) ag) for the Local variants.  The PRDS variant instead
    evaluates the criterion sup_k P(bE >= 1/(k ag)) / (k ag).
    """
    if b < 0.0:
        raise InputError(f"b={b} is negative")
    if spec.gamma == 0.0:
        return 0.0
    if b == 0.0:
        return 0.0
    v = spec.variant
    s = spec.cutoff_s
    if not math.isfinite(s):
        raise ConfigError(f"no closed form for variant {v.value} without a cutoff")
    s = int(s)
    ag = spec.alpha * spec.gamma
    d = model.delta

    ks = np.arange(1, s + 1, dtype=float)
    tails = _tail_probs(model, ag, b, ks)  # P(bE >= 1/(k ag)), nondecreasing in k

    if v is TruncationVariant.PRDS:
        return float(np.max(tails / (ks * ag)))

    # E[bE 1{bE < 1/(s ag)}] = b * Phi(-d/2 - log(s ag b)/d)
    pass_through = b * float(ndtr(-d / 2.0 - math.log(s * ag * b) / d))

    if v in (TruncationVariant.LOCAL_PLUS, TruncationVariant.LOCAL_MINUS):
        k0 = spec.lag_kstar
        cap = 1.0 / ((k0 + 1) * ag)
        m = min(k0 + 1, s)
        # brackets k <= k0+1 are capped; k in (k0+1, s] keep their grid value
        total = float(tails[m - 1]) * cap
        if k0 + 2 <= s:
            brackets = np.diff(np.concatenate(([0.0], tails)))
            idx = np.arange(k0 + 1, s)  # zero-based positions of k = k0+2 .. s
            total += float(np.sum(brackets[idx] / (ks[idx] * ag)))
        if v is TruncationVariant.LOCAL_PLUS:
            if k0 + 1 > s:
                raise ConfigError("local_plus needs s >= lag_kstar + 1")
            total += pass_through
        return total

    brackets = np.diff(np.concatenate(([0.0], tails)))
    total = float(np.sum(brackets / (ks * ag)))
    if v is TruncationVariant.PLUS:
        total += pass_through
    elif v not in (TruncationVariant.MINUS, TruncationVariant.TOAD):
        raise ConfigError(f"no closed form for variant {v.value}")
    return total


def solve_boost_factor(model: GaussianLRModel, spec: TruncationSpec,
                       b_max: float = 1e6) -> float:
    """Largest valid boosting factor: the b >= 1 with E_null[T(b*E)] = 1.

    The expectation is nondecreasing in b, so bisection applies; the upper
    bracket is expanded geometrically up to b_max.
    """
    if spec.gamma == 0.0:
        raise SolverError("gamma = 0: truncation is identically 0, no root")
    f = lambda b: expected_truncated_value(model, spec, b) - 1.0
    if f(1.0) >= 0.0:
        return 1.0
    lo, hi = 1.0, 2.0
    while f(hi) < 0.0:
        lo = hi
        hi *= 2.0
        if hi > b_max:
            raise SolverError(f"no root in [1, {b_max}]")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-9 * max(1.0, lo):
            break
    b = 0.5 * (lo + hi)
    if abs(f(b)) > 1e-6:
        raise SolverError(f"residual {f(b):.3e} exceeds 1e-6 at b={b}")
    return b


class NonincreasingTransform:
    """A nonincreasing left-continuous psi: [0,1] -> [0,inf] with psi(0) = inf,
    used to turn p-values into e-value-like statistics, together with its
    generalized inverse psi_inverse(x) = max{u in [0,1] : psi(u) >= x}.
    """

    def __init__(self, psi=None, psi_inverse=None, name: str = "custom"):
        if psi is None and psi_inverse is None:
            raise ConfigError("provide psi, psi_inverse, or both")
        self._psi = psi
        self._psi_inverse = psi_inverse
        self.name = name

    @classmethod
    def reciprocal(cls) -> "NonincreasingTransform":
        """psi(u) = 1/u, the calibrator-free p-to-e map."""
        return cls(
            psi=lambda u: math.inf if u == 0.0 else 1.0 / u,
            psi_inverse=lambda x: 1.0 if x <= 1.0 else 1.0 / x,
            name="reciprocal",
        )

    @classmethod
    def zero(cls) -> "NonincreasingTransform":
        """psi = 0 on (0, 1] with psi(0) = inf; the degenerate transform."""
        return cls(
            psi=lambda u: math.inf if u == 0.0 else 0.0,
            psi_inverse=lambda x: 1.0 if x <= 0.0 else 0.0,
            name="zero",
        )

    @classmethod
    def from_shape_function(cls, beta, alpha: float, gamma: float) -> "NonincreasingTransform":
        """Transform with psi_inverse(1/(k alpha gamma)) = alpha gamma beta(k),
        which makes online e-BH on psi(P) behave like a reshaped step-up.
        """
        ag = alpha * gamma
        if ag <= 0.0:
            raise ConfigError("needs alpha * gamma > 0")

        def psi_inverse(x):
            if x <= 0.0:
                return 1.0
            return min(1.0, ag * beta.beta(1.0 / (ag * x)))

        return cls(psi_inverse=psi_inverse, name=f"shape[{beta.variant}]")

    def psi(self, u: float) -> float:
        if not (0.0 <= u <= 1.0):
            raise InputError(f"u={u} outside [0, 1]")
        if self._psi is not None:
            return self._psi(u)
        if u == 0.0:
            return math.inf
        # generalized inverse of the inverse: sup{x : psi_inverse(x) >= u}
        lo, hi = 0.0, 1.0
        while self._psi_inverse(hi) >= u:
            lo = hi
            hi *= 2.0
            if hi > 1e300:
                return math.inf
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self._psi_inverse(mid) >= u:
                lo = mid
            else:
                hi = mid
        return lo

    def psi_inverse(self, x: float) -> float:
        if x < 0.0:
            raise InputError(f"x={x} is negative")
        if self._psi_inverse is not None:
            return self._psi_inverse(x)
        # max{u in [0,1] : psi(u) >= x}; psi left-continuous nonincreasing
        if self._psi(1.0) >= x:
            return 1.0
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self._psi(mid) >= x:
                lo = mid
            else:
                hi = mid
        return lo


@dataclass(frozen=True)
class TransformConditionResult:
    passed: bool | None  # None = indeterminate within k_max
    value: float
    tail_bound: float
    mode: str

    def __bool__(self):
        return self.passed is True


def check_transform_condition(psi: NonincreasingTransform, alpha: float, gamma: float,
                              mode: str = "arbitrary", d: float | None = None,
                              k_max: int = 10000) -> TransformConditionResult:
    """Check the validity condition for online e-BH applied to psi(P_t).

    arbitrary: sum_k (1/(k a g)) * (psi_inv(1/(k a g)) - psi_inv(1/((k-1) a g))) <= 1
    prds:      sup_k (1/(k a g)) * psi_inv(1/(k a g)) <= 1
    toad:      the arbitrary-mode series truncated exactly at k = d.

    The infinite series/sup is evaluated up to k_max with a tail bound from
    psi_inverse being nonincreasing; if the tail bound cannot settle pass or
    fail the result is indeterminate (passed = None).
    """
    if not (0.0 < alpha <= 1.0):
        raise ConfigError(f"alpha={alpha} outside (0, 1]")
    if gamma <= 0.0:
        raise ConfigError(f"gamma={gamma} must be positive")
    ag = alpha * gamma
    x = lambda k: 1.0 / (k * ag)

    if mode == "prds":
        sup = 0.0
        for k in range(1, k_max + 1):
            sup = max(sup, x(k) * psi.psi_inverse(x(k)))
        tail = x(k_max + 1)  # each remaining term is at most x_k <= x_{k_max+1}
        if sup > 1.0:
            return TransformConditionResult(False, sup, tail, mode)
        if max(sup, tail) <= 1.0:
            return TransformConditionResult(True, sup, tail, mode)
        return TransformConditionResult(None, sup, tail, mode)

    if mode == "toad":
        if d is None or d < 1:
            raise ConfigError("toad mode needs a deadline d >= 1")
        k_top = int(d)
        exact = True  # the series terminates at the deadline
    elif mode == "arbitrary":
        k_top = k_max
        exact = False
    else:
        raise ConfigError(f"unknown mode {mode!r}")

    total = 0.0
    prev = psi.psi_inverse(math.inf)  # psi_inv at x_0 = 1/(0 * a g) = inf
    for k in range(1, k_top + 1):
        cur = psi.psi_inverse(x(k))
        total += x(k) * (cur - prev)
        prev = cur
    if exact:
        tail = 0.0
    else:
        tail = x(k_top + 1) * (1.0 - prev)  # remaining increments sum to <= 1 - prev
    if total > 1.0:
        return TransformConditionResult(False, total, tail, mode)
    if total + tail <= 1.0:
        return TransformConditionResult(True, total, tail, mode)
    return TransformConditionResult(None, total, tail, mode)
