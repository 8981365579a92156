"""Monte-Carlo harness: Gaussian batch-correlated data generator, adversarial
sharpness construction, the procedure roster, and the experiment runner.

Reproducibility: each trial draws from its own counter-based Philox substream
derived from (seed, trial index), so results are bit-identical regardless of
how trials are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .boosting import (
    GaussianLRModel,
    TruncationSpec,
    TruncationVariant,
    _grid_index,
    solve_boost_factor,
)
from .core import ConfigError, WeightSequence
from .e_procedures import ELond, OnlineEBH
from .metrics import GroundTruth, fdp_path_from_rejection_times, power
from .p_procedures import (
    Lond,
    Lord,
    OnlineBH,
    OnlineBR,
    OnlineStoreyBH,
    RLond,
    Saffron,
    ShapeFunction,
)

E_PROCEDURES = ("oe-bh", "e-lond", "oe-bh-boost", "oe-bh-boost-minus",
                "oe-bh-boost-local")
P_PROCEDURES = ("obh", "lond", "r-lond", "obr", "osbh", "lord", "saffron")
ALL_PROCEDURES = E_PROCEDURES + P_PROCEDURES


@dataclass(frozen=True)
class GaussianSetupConfig:
    """Batch-correlated Gaussian testing setup.

    Each trial draws n standard normals Z in batches of size batch_size with
    within-batch correlation rho (independent across batches), signals
    Pi ~ Bernoulli(pi_a), test statistics X = Z + mu_a * Pi, likelihood-ratio
    e-values exp(mu_a * X - mu_a^2 / 2), and p-values Phi(-X).  Setting
    p_from_z uses Phi(-Z) instead (no signal reaches the p-values then).
    """

    n: int = 1000
    m: int = 100
    mu_a: float = 3.5
    pi_a: float = 0.1
    batch_size: int = 20
    rho: float = 0.5
    q: float = 0.99
    alpha: float = 0.05
    lam: float = 0.5
    seed: int = 0
    p_from_z: bool = False

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ConfigError("n and m must be positive")
        if not (0.0 < self.pi_a < 1.0):
            raise ConfigError(f"pi_a={self.pi_a} outside (0, 1)")
        if self.batch_size < 1 or self.n % self.batch_size != 0:
            raise ConfigError(
                f"n={self.n} not divisible by batch_size={self.batch_size}")
        if not (0.0 <= self.rho < 1.0):
            raise ConfigError(f"rho={self.rho} outside [0, 1)")
        if not self.mu_a > 0.0:
            raise ConfigError(f"mu_a={self.mu_a} must be positive")


@dataclass(frozen=True)
class GaussianTrial:
    z: np.ndarray
    x: np.ndarray
    evalues: np.ndarray
    pvalues: np.ndarray
    truth: GroundTruth


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based substream for one trial; independent of scheduling."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(trial,))
    return np.random.Generator(np.random.Philox(ss))


def generate_gaussian_trial(cfg: GaussianSetupConfig, rng: np.random.Generator) -> GaussianTrial:
    n, b = cfg.n, cfg.batch_size
    n_batches = n // b
    # equicorrelated batches by a shared factor: same law as a Cholesky draw
    w = rng.standard_normal(n_batches)
    xi = rng.standard_normal(n)
    z = math.sqrt(cfg.rho) * np.repeat(w, b) + math.sqrt(1.0 - cfg.rho) * xi
    pi = rng.random(n) < cfg.pi_a
    x = z + cfg.mu_a * pi
    evalues = np.exp(cfg.mu_a * x - cfg.mu_a ** 2 / 2.0)
    pvalues = ndtr(-(z if cfg.p_from_z else x))
    truth = GroundTruth(tuple(bool(v) for v in ~pi))
    return GaussianTrial(z, x, evalues, pvalues, truth)


def _truncate_minus_stream(x, alpha, gammas, s, cap_k=None):
    """Minus-cutoff truncation with per-index gamma_t (vectorized over t).

    cap_k, if given, is a per-index array of lag k* values; the output is
    additionally capped at 1/((cap_k + 1) alpha gamma_t).
    """
    x = np.asarray(x, dtype=float)
    ag = alpha * np.asarray(gammas, dtype=float)
    out = np.zeros_like(x)
    pos = ag > 0.0
    k = _grid_index(np.where(pos, x, 0.0), np.where(pos, ag, 1.0))
    hit = pos & (k >= 1.0) & (k <= s)
    out[hit] = 1.0 / (k[hit] * ag[hit])
    if cap_k is not None:
        cap = np.full_like(x, np.inf)
        cap[pos] = 1.0 / ((np.asarray(cap_k, dtype=float)[pos] + 1.0) * ag[pos])
        out = np.minimum(out, cap)
    return out


def _boost_factors(cfg, variant, ts, lag_kstars=None, cache=None):
    """Solve b_t for each index in ts, memoized on everything that matters."""
    model = GaussianLRModel(cfg.mu_a)
    out = np.empty(len(ts))
    for j, t in enumerate(ts):
        k0 = None if lag_kstars is None else int(lag_kstars[j])
        key = (variant, cfg.mu_a, cfg.alpha, cfg.q, cfg.n, t, k0)
        if cache is not None and key in cache:
            out[j] = cache[key]
            continue
        gamma = cfg.q ** (t - 1) * (1.0 - cfg.q)
        if variant is TruncationVariant.LOCAL_MINUS:
            b = _fast_local_minus_boost(cfg.alpha * gamma, k0, cfg.mu_a, cfg.n)
        else:
            spec = TruncationSpec(variant, cfg.alpha, gamma, s=cfg.n, lag_kstar=k0)
            b = solve_boost_factor(model, spec)
        if cache is not None:
            cache[key] = b
        out[j] = b
    return out


_LOCAL_TERMS: dict = {}  # (k0, s) -> (log k array, Abel weights)


def _fast_local_minus_boost(ag: float, k0: int, delta: float, s: int,
                            b_max: float = 1e6) -> float:
    """b solving E[local-minus T(b E)] = 1, via the substitution u = ag * b.

    Abel summation turns the bracket sum into
    H(u) = sum_{k=m}^{s-1} T_k(u) / (k (k+1)) + T_s(u) / s, with m = k0 + 1
    and T_k(u) = P(bE >= 1/(k ag)) = 1 - Phi(delta/2 - log(k u) / delta),
    so the root condition E[T(bE)] = 1 becomes H(u) = ag.  H is nondecreasing
    with limit 1/m, matching solve_boost_factor to solver tolerance at a
    fraction of the cost (one CDF array evaluation per iteration).
    """
    from scipy.optimize import brentq

    m = min(k0 + 1, s)
    key = (m, s)
    if key not in _LOCAL_TERMS:
        ks = np.arange(m, s + 1, dtype=float)
        w = 1.0 / (ks[:-1] * (ks[:-1] + 1.0)) if s > m else np.empty(0)
        w = np.concatenate([w, [1.0 / s]])
        _LOCAL_TERMS[key] = (np.log(ks), w)
    logk, w = _LOCAL_TERMS[key]
    half = delta / 2.0

    def H(u):
        tails = 1.0 - ndtr(half - (logk + math.log(u)) / delta)
        return float(tails @ w)

    if k0 + 1 >= 1.0 / ag:
        raise ConfigError("cap below the expectation target: no boosting root")
    if H(ag) >= ag:
        return 1.0
    hi = 2.0 * ag
    while H(hi) < ag:
        hi *= 2.0
        if hi > ag * b_max:
            raise ConfigError(f"no boosting root in [1, {b_max}]")
    u = brentq(lambda v: H(v) - ag, hi / 2.0, hi, xtol=1e-14, rtol=1e-13)
    return u / ag


@dataclass
class ProcedureRun:
    """One procedure's full history on one trial."""

    name: str
    n: int
    rejection_times: dict
    kstar_path: list

    def rejection_counts(self) -> np.ndarray:
        counts = np.zeros(self.n + 1, dtype=np.int64)
        for t in self.rejection_times.values():
            counts[t] += 1
        return np.cumsum(counts[1:])

    @property
    def final_rejections(self) -> tuple:
        return tuple(sorted(self.rejection_times))


def _run_procedure(name: str, cfg: GaussianSetupConfig, trial: GaussianTrial,
                   cache: dict | None) -> ProcedureRun:
    weights = WeightSequence.geometric(cfg.q)
    alpha, n = cfg.alpha, cfg.n
    ts = np.arange(1, n + 1)
    gammas = cfg.q ** (ts - 1) * (1.0 - cfg.q)

    if name == "oe-bh":
        proc = OnlineEBH(weights, alpha).run(trial.evalues)
    elif name == "e-lond":
        proc = ELond(weights, alpha).run(trial.evalues)
    elif name == "oe-bh-boost":
        # plus-cutoff boosting: feeding b_t * E_t is equivalent because the
        # pass-through region sits below every rejection threshold at s = n
        b = _boost_factors(cfg, TruncationVariant.PLUS, ts, cache=cache)
        proc = OnlineEBH(weights, alpha).run(b * trial.evalues)
    elif name == "oe-bh-boost-minus":
        b = _boost_factors(cfg, TruncationVariant.MINUS, ts, cache=cache)
        boosted = _truncate_minus_stream(b * trial.evalues, alpha, gammas, n)
        proc = OnlineEBH(weights, alpha).run(boosted)
    elif name == "oe-bh-boost-local":
        # lag L_t = (t-1) mod batch_size, so k*_{t-L_t-1} is this run's own
        # k* at the end of the previous batch; process batch by batch
        proc = OnlineEBH(weights, alpha)
        bsz = cfg.batch_size
        for start in range(0, n, bsz):
            k0 = proc.k_star
            idx = ts[start:start + bsz]
            lags = np.full(len(idx), k0)
            b = _boost_factors(cfg, TruncationVariant.LOCAL_MINUS, idx,
                               lag_kstars=lags, cache=cache)
            vals = _truncate_minus_stream(
                b * trial.evalues[start:start + bsz], alpha,
                gammas[start:start + bsz], n, cap_k=lags)
            for v in vals:
                proc.step(float(v))
    elif name == "obh":
        proc = OnlineBH(weights, alpha).run(trial.pvalues)
    elif name == "lond":
        proc = Lond(weights, alpha).run(trial.pvalues)
    elif name == "r-lond":
        proc = RLond(weights, alpha, ShapeFunction.by(n)).run(trial.pvalues)
    elif name == "obr":
        proc = OnlineBR(weights, alpha, ShapeFunction.by(n)).run(trial.pvalues)
    elif name == "osbh":
        proc = OnlineStoreyBH(weights, alpha, cfg.lam).run(trial.pvalues)
    elif name == "lord":
        proc = Lord(weights, alpha).run(trial.pvalues)
    elif name == "saffron":
        proc = Saffron(weights, alpha, cfg.lam).run(trial.pvalues)
    else:
        raise ConfigError(f"unknown procedure {name!r}")
    return ProcedureRun(name, n, dict(proc.rejection_times), list(proc.kstar_path))


def run_trials(cfg: GaussianSetupConfig, procedures, cache: dict | None = None):
    """Run each procedure on m freshly generated trials.

    Returns (runs, truths): runs[name][i] is the ProcedureRun of trial i,
    truths[i] its ground truth.
    """
    procedures = list(procedures)
    unknown = [p for p in procedures if p not in ALL_PROCEDURES]
    if unknown:
        raise ConfigError(f"unknown procedures: {unknown}")
    runs = {name: [] for name in procedures}
    truths = []
    for i in range(cfg.m):
        trial = generate_gaussian_trial(cfg, trial_rng(cfg.seed, i))
        truths.append(trial.truth)
        for name in procedures:
            runs[name].append(_run_procedure(name, cfg, trial, cache))
    return runs, truths


def run_experiment(cfg: GaussianSetupConfig, procedures, pi_as=None,
                   cache: dict | None = None):
    """Tidy result rows (power, FDR, SupFDR with SEs) per procedure and pi_A."""
    from .metrics import estimate_metrics

    pi_as = [cfg.pi_a] if pi_as is None else list(pi_as)
    if not list(procedures):
        raise ConfigError("empty procedure roster")
    rows = []
    for pi_a in pi_as:
        sub = replace(cfg, pi_a=pi_a)
        runs, truths = run_trials(sub, procedures, cache=cache)
        for name in procedures:
            paths = [fdp_path_from_rejection_times(r.rejection_times, tr, sub.n)
                     for r, tr in zip(runs[name], truths)]
            powers = [power(r.final_rejections, tr)
                      for r, tr in zip(runs[name], truths)]
            est = estimate_metrics(paths, power_values=powers)
            for metric, key in (("power", "power"), ("fdr", "fdr_at_T"),
                                ("sup_fdr", "sup_fdr")):
                value, se = est[key]
                rows.append({
                    "procedure": name, "pi_a": pi_a, "mu_a": sub.mu_a,
                    "q": sub.q, "alpha": sub.alpha, "metric": metric,
                    "value": value, "stderr": se, "n": sub.n, "m": sub.m,
                    "seed": sub.seed,
                })
    return rows


@dataclass(frozen=True)
class AdversarialConfig:
    """Sharpness construction: K0 i.i.d. uniform nulls followed by K_1^*
    perfectly significant non-nulls, stopped at a time chosen from the null
    p-values alone.
    """

    K0: int
    alpha: float
    m: int = 500
    seed: int = 0
    K: int | None = None  # total hypotheses; defaults to 2 * K0

    def __post_init__(self):
        if self.K0 < 1:
            raise ConfigError("K0 must be positive")
        if not (0.0 < self.alpha < 1.0):
            raise ConfigError(f"alpha={self.alpha} outside (0, 1)")
        if self.K is not None and self.K < self.K0:
            raise ConfigError("K must be at least K0")

    @property
    def total(self) -> int:
        return 2 * self.K0 if self.K is None else self.K


@dataclass(frozen=True)
class AdversarialTrial:
    pvalues: np.ndarray   # the observed stream, length stop_time
    truth: GroundTruth
    stop_time: int
    feasible: bool
    k1_star: int


def generate_adversarial_trial(cfg: AdversarialConfig, rng: np.random.Generator) -> AdversarialTrial:
    K, K0 = cfg.total, cfg.K0
    nulls = rng.random(K0)
    p_sorted = np.sort(nulls)
    js = np.arange(1, K0 + 1)
    denom = np.ceil(K * p_sorted / cfg.alpha)
    ratios = js / np.maximum(denom, 1.0)
    j_star = int(np.argmax(ratios)) + 1
    k1_star = max(int(denom[j_star - 1]) - j_star, 0)
    feasible = k1_star <= K - K0
    stop_time = K0 + k1_star
    pvalues = np.concatenate([nulls, np.zeros(k1_star)])
    truth = GroundTruth(tuple(i <= K0 for i in range(1, stop_time + 1)))
    return AdversarialTrial(pvalues, truth, stop_time, feasible, k1_star)


def run_adversarial(cfg: AdversarialConfig) -> dict:
    """Mean FDP of online BH (uniform weights over K) at the constructed
    stopping time, over m trials; infeasible trials are excluded and counted.
    """
    from .metrics import fdp

    weights = WeightSequence.uniform_finite(cfg.total)
    fdps = []
    infeasible = 0
    for i in range(cfg.m):
        trial = generate_adversarial_trial(cfg, trial_rng(cfg.seed, i))
        if not trial.feasible:
            infeasible += 1
            continue
        proc = OnlineBH(weights, cfg.alpha).run(trial.pvalues)
        fdps.append(fdp(proc.rejection_set(), trial.truth))
    fdps = np.asarray(fdps)
    if fdps.size == 0:
        raise ConfigError("all trials infeasible")
    return {
        "mean_fdp": float(fdps.mean()),
        "se": float(fdps.std(ddof=1) / math.sqrt(fdps.size)) if fdps.size > 1 else 0.0,
        "n_trials": int(fdps.size),
        "n_infeasible": infeasible,
        "fdps": fdps,
    }
