"""Brute-force reference implementations, independent of the streaming code.

All oracles follow the sort-based textbook definitions so that agreement with
the incremental step-up machinery is a genuine cross-check.
"""

from __future__ import annotations

import math

from .core import ConfigError, InputError
from .metrics import GroundTruth

ENUMERATION_CAP = 20  # exhaustive 2^K search refuses above this


def offline_bh(p, alpha: float) -> set:
    """Classical BH: k* = max{k : P_(k) <= k alpha / K}, reject the k* smallest."""
    p = list(p)
    K = len(p)
    order = sorted(range(K), key=lambda i: p[i])
    k_star = 0
    for k in range(1, K + 1):
        if p[order[k - 1]] <= k * alpha / K:
            k_star = k
    return {order[j] + 1 for j in range(k_star)}


def offline_ebh(e, alpha: float) -> set:
    """e-BH: k* = max{k : #{j : E_j >= K/(k alpha)} >= k}, rejects the
    hypotheses with the k* largest e-values (ties included by threshold).
    """
    e = list(e)
    K = len(e)
    desc = sorted(e, reverse=True)
    k_star = 0
    for k in range(1, K + 1):
        if desc[k - 1] >= K / (k * alpha):
            k_star = k
    if k_star == 0:
        return set()
    thresh = K / (k_star * alpha)
    return {i + 1 for i in range(K) if e[i] >= thresh}


def offline_storey_bh(p, alpha: float, lam: float) -> set:
    """Storey-BH with pi0_hat = (1 + #{P_i > lambda}) / ((1-lambda) K) and
    thresholds min(k alpha / (K pi0_hat), lambda).
    """
    if not (alpha <= lam < 1.0):
        raise ConfigError(f"lambda={lam} outside [alpha, 1)")
    p = list(p)
    K = len(p)
    pi0 = (1 + sum(1 for x in p if x > lam)) / ((1.0 - lam) * K)
    order = sorted(range(K), key=lambda i: p[i])
    k_star = 0
    for k in range(1, K + 1):
        if p[order[k - 1]] <= min(k * alpha / (K * pi0), lam):
            k_star = k
    return {order[j] + 1 for j in range(k_star)}


def weighted_bh(p, weights, alpha: float) -> set:
    """Weighted BH: step-up on ratios P_i / (gamma_i / pi0) against k alpha,
    with the weights normalized by their total mass pi0 (so they sum to 1).
    """
    p = list(p)
    pi0 = math.fsum(float(x) for x in weights)
    if pi0 <= 0.0:
        raise InputError("weights are all zero")
    w = [float(x) / pi0 for x in weights]
    if len(p) != len(w):
        raise InputError("scores and weights lengths differ")
    ratios = [p[i] / w[i] if w[i] > 0 else math.inf for i in range(len(p))]
    order = sorted(range(len(p)), key=lambda i: ratios[i])
    k_star = 0
    for k in range(1, len(p) + 1):
        if ratios[order[k - 1]] <= k * alpha:
            k_star = k
    return {order[j] + 1 for j in range(k_star)}


def weighted_simes(p, weights) -> float:
    """Weighted Simes p-value min_j P_(j) / (j gamma_(j) / pi0), sorting
    jointly by P/gamma and normalizing the weights by their total mass pi0.
    """
    p = list(p)
    w = [float(x) for x in weights]
    if len(p) != len(w):
        raise InputError("scores and weights lengths differ")
    pi0 = math.fsum(w)
    if pi0 <= 0.0:
        raise InputError("weights are all zero")
    ratios = sorted(p[i] / w[i] if w[i] > 0 else math.inf for i in range(len(p)))
    best = math.inf
    for j, r in enumerate(ratios, start=1):
        best = min(best, pi0 * r / j)
    return min(best, 1.0) if best < math.inf else 1.0


def max_self_consistent_fdp(scores, weights, alpha: float, truth: GroundTruth,
                            kind) -> float:
    """Max FDP over all self-consistent subsets, by exhaustive enumeration.

    A subset S is self-consistent iff every i in S clears the threshold
    implied by |S|; with the per-index integer need (smallest qualifying set
    size) this is all need_i <= |S|.
    """
    from .core import ScoreKind, minimal_k_evalue, minimal_k_pvalue

    values = [float(x) for x in scores]
    K = len(values)
    if K > ENUMERATION_CAP:
        raise InputError(f"K={K} exceeds enumeration cap {ENUMERATION_CAP}")
    if len(weights) != K:
        raise InputError("scores and weights lengths differ")
    need_fn = minimal_k_evalue if kind is ScoreKind.E_VALUE else minimal_k_pvalue
    needs = [need_fn(values[i], alpha, weights[i]) for i in range(K)]

    # allowed_mask[r] = bitmask of indices usable in a set of size r
    allowed = [0] * (K + 1)
    for r in range(1, K + 1):
        allowed[r] = sum(1 << i for i in range(K) if needs[i] <= r)

    null_mask = sum(1 << i for i in range(K) if truth.is_null(i + 1))
    best = 0.0
    for mask in range(1, 1 << K):
        r = mask.bit_count()
        if mask & ~allowed[r]:
            continue
        best = max(best, (mask & null_mask).bit_count() / r)
        if best == 1.0:
            break
    return best
