"""Hierarchical size-biased model of eventual bug sizes.

Latent quantities, per testing phase j with bugs i = 1..n_j:

* ``S_ij`` -- eventual size of a bug (inputs that would ever traverse it),
  with prior ``Binomial(n_ij, t_ij)`` reweighted proportionally to size.
* ``p_j`` -- per-run detection-side probability, ``Beta(alpha_j, beta_j)``
  with the Beta moments themselves drawn from uniform hyperpriors.
* ``N_j`` -- cumulative run counts, tied to the cumulative size totals via
  a chain of negative binomials.

Everything probabilistic is evaluated in log space; totals in real data
reach tens of thousands and direct products underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from math import lgamma, log, log1p

import numpy as np

from .ingest import PhaseSummary

__all__ = [
    "InfeasiblePhaseError",
    "DiscretePmf",
    "binomial_pmf",
    "size_biased_pmf",
    "solve_beta_hyper",
    "sample_hyper",
    "sample_n_trials",
    "Hyperparams",
    "HyperConfig",
    "flat_hyperparams",
    "resolve_for_data",
    "ChainState",
    "cumulative_totals",
    "nb_sizes",
    "log_likelihood",
    "log_posterior_S_kernel",
]

# Trial-count candidates default to these multiples of the observed size,
# keeping the support of S_ij a non-empty superset of the observed floor.
TRIAL_CANDIDATE_MULTIPLIERS = (1, 2, 3, 4)


class InfeasiblePhaseError(ValueError):
    """A phase's negative-binomial size parameter came out non-positive."""

    def __init__(self, phase: int, value: float):
        self.phase = phase
        self.value = value
        super().__init__(
            f"phase {phase}: negative-binomial size {value} is not positive; "
            "the configuration has zero likelihood"
        )


@dataclass(frozen=True)
class DiscretePmf:
    """A finite discrete distribution over non-negative integer support."""

    support: np.ndarray
    mass: np.ndarray

    def __post_init__(self) -> None:
        support = np.asarray(self.support, dtype=np.int64)
        mass = np.asarray(self.mass, dtype=float)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "mass", mass)
        if support.shape != mass.shape or support.ndim != 1 or support.size == 0:
            raise ValueError("support and mass must be equal-length 1-d arrays")
        if np.any(np.diff(support) <= 0):
            raise ValueError("support must be strictly increasing")
        if np.any(mass < 0):
            raise ValueError("probability mass must be non-negative")
        if abs(float(mass.sum()) - 1.0) > 1e-12:
            raise ValueError(f"mass sums to {mass.sum()!r}, not 1")

    def mean(self) -> float:
        return float(np.dot(self.support, self.mass))

    def sample(self, rng: np.random.Generator, size: int | None = None):
        mass = self.mass / self.mass.sum()
        return rng.choice(self.support, size=size, p=mass)


def binomial_pmf(n: int, t: float) -> DiscretePmf:
    """Binomial(n, t) as an explicit pmf over 0..n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    support = np.arange(n + 1)
    mass = np.array([math.comb(n, k) * t**k * (1.0 - t) ** (n - k) for k in support])
    return DiscretePmf(support, mass / mass.sum())


def size_biased_pmf(f: DiscretePmf) -> DiscretePmf:
    """Reweight a size distribution proportionally to size: h(s) = s f(s) / E[S].

    The mass at s = 0 becomes 0; a point mass at 0 has no size-biased
    counterpart and is rejected.
    """
    mean = f.mean()
    if mean <= 0.0:
        raise ValueError("size-biased transform undefined: distribution has zero mean")
    return DiscretePmf(f.support, f.support * f.mass / mean)


def solve_beta_hyper(mu: float, sigma2: float) -> tuple[float, float]:
    """Beta parameters matching a given mean and variance.

    alpha = mu (mu(1-mu)/sigma2 - 1), beta = alpha (1-mu)/mu.  Requires
    0 < sigma2 < mu(1-mu); the variance of a Beta with mean mu cannot
    reach mu(1-mu).
    """
    if not 0.0 < mu < 1.0:
        raise ValueError(f"mean must lie strictly inside (0, 1), got {mu}")
    bound = mu * (1.0 - mu)
    if not 0.0 < sigma2 < bound:
        raise ValueError(
            f"variance {sigma2} is infeasible for mean {mu}: needs 0 < sigma2 < {bound}"
        )
    alpha = mu * (bound / sigma2 - 1.0)
    beta = alpha * (1.0 - mu) / mu
    return alpha, beta


@dataclass
class Hyperparams:
    """Phase-level Beta parameters plus bug-level prior settings.

    ``a``, ``b`` and ``proposal_rate`` may be scalars (broadcast over
    bugs) or per-phase lists of arrays; ``resolve_for_data`` produces the
    fully expanded form.  ``m_weights[j][i]`` lists the candidate trial
    counts for bug i of phase j; a candidate is drawn with probability
    proportional to its own value.
    """

    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    mu: np.ndarray | None = None
    sigma2: np.ndarray | None = None
    a: float | list[np.ndarray] = 1.0
    b: float | list[np.ndarray] = 1.0
    proposal_rate: float | list[np.ndarray] | None = None
    m_weights: list[list[np.ndarray]] | None = None
    du_bound: int | None = None

    def __post_init__(self) -> None:
        self.alpha_hat = np.asarray(self.alpha_hat, dtype=float)
        self.beta_hat = np.asarray(self.beta_hat, dtype=float)
        if np.any(self.alpha_hat <= 0) or np.any(self.beta_hat <= 0):
            raise ValueError("alpha_hat and beta_hat must be positive")

    @property
    def n_phases(self) -> int:
        return len(self.alpha_hat)


def sample_hyper(num_phases: int, seed) -> Hyperparams:
    """Draw phase-level hyperparameters from their uniform hyperpriors.

    mu_j ~ U(0,1), sigma2_j | mu_j ~ U(0, mu_j(1-mu_j)); alpha_hat and
    beta_hat follow by moment matching.  Deterministic given the seed.
    """
    if num_phases < 1:
        raise ValueError("num_phases must be >= 1")
    rng = np.random.default_rng(seed)
    mu = rng.uniform(0.0, 1.0, size=num_phases)
    sigma2 = rng.uniform(0.0, mu * (1.0 - mu))
    pairs = [solve_beta_hyper(m, s) for m, s in zip(mu, sigma2)]
    alpha_hat = np.array([p[0] for p in pairs])
    beta_hat = np.array([p[1] for p in pairs])
    return Hyperparams(alpha_hat=alpha_hat, beta_hat=beta_hat, mu=mu, sigma2=sigma2)


def flat_hyperparams(num_phases: int) -> Hyperparams:
    """Uniform Beta(1, 1) phase priors; handy for tests and calibration."""
    ones = np.ones(num_phases)
    return Hyperparams(alpha_hat=ones.copy(), beta_hat=ones.copy())


def sample_n_trials(weights, rng: np.random.Generator) -> int:
    """Draw a trial count: candidate value w is chosen with probability
    proportional to w itself."""
    weights = np.asarray(weights, dtype=float)
    if weights.size == 0 or np.any(weights < 0):
        raise ValueError("candidate trial counts must be non-negative and non-empty")
    total = weights.sum()
    if total <= 0:
        raise ValueError("candidate trial counts are all zero")
    return int(rng.choice(weights, p=weights / total))


@dataclass(frozen=True)
class HyperConfig:
    """Raw hyperparameter configuration as read from a config document."""

    a: float | list = 1.0
    b: float | list = 1.0
    du_bound: int | None = None
    proposal_rate: float | list | None = None
    hyper_seed: int | None = None
    mu: float | list | None = None
    sigma2: float | list | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "HyperConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter config keys: {sorted(unknown)}")
        return cls(**raw)


def build_hyperparams(data: list[PhaseSummary], config: HyperConfig, seed) -> Hyperparams:
    """Assemble hyperparameters for a dataset from a config document.

    When ``mu``/``sigma2`` are pinned in the config the Beta parameters
    are solved from them; otherwise they are drawn from the hyperpriors
    using ``hyper_seed`` (falling back to ``seed``).
    """
    m = len(data)
    if config.mu is not None and config.sigma2 is not None:
        mu = np.broadcast_to(np.asarray(config.mu, dtype=float), (m,)).copy()
        sigma2 = np.broadcast_to(np.asarray(config.sigma2, dtype=float), (m,)).copy()
        pairs = [solve_beta_hyper(u, s) for u, s in zip(mu, sigma2)]
        hyper = Hyperparams(
            alpha_hat=np.array([p[0] for p in pairs]),
            beta_hat=np.array([p[1] for p in pairs]),
            mu=mu,
            sigma2=sigma2,
        )
    elif (config.mu is None) != (config.sigma2 is None):
        raise ValueError("mu and sigma2 must be configured together")
    else:
        hyper = sample_hyper(m, config.hyper_seed if config.hyper_seed is not None else seed)
    hyper.a = config.a if not isinstance(config.a, list) else _as_ragged(config.a, data)
    hyper.b = config.b if not isinstance(config.b, list) else _as_ragged(config.b, data)
    if isinstance(config.proposal_rate, list):
        hyper.proposal_rate = _as_ragged(config.proposal_rate, data)
    else:
        hyper.proposal_rate = config.proposal_rate
    hyper.du_bound = config.du_bound
    return hyper


def _as_ragged(values: list, data: list[PhaseSummary]) -> list[np.ndarray]:
    if len(values) != len(data):
        raise ValueError("per-bug configuration must list one entry per phase")
    out = []
    for row, summary in zip(values, data):
        arr = np.asarray(row, dtype=float)
        if arr.shape != (summary.distinct_bugs,):
            raise ValueError(
                f"phase {summary.phase}: expected {summary.distinct_bugs} per-bug values"
            )
        out.append(arr)
    return out


def resolve_for_data(hyper: Hyperparams, data: list[PhaseSummary]) -> Hyperparams:
    """Expand scalar/bug-level defaults against a concrete dataset.

    Defaults: a = b = 1 broadcast; proposal rate max(s_ij, 1); trial
    candidates s_ij times TRIAL_CANDIDATE_MULTIPLIERS; du_bound twice the
    number of distinct defect ids observed overall.
    """
    if hyper.n_phases != len(data):
        raise ValueError(
            f"hyperparameters cover {hyper.n_phases} phases but data has {len(data)}"
        )
    sizes = [np.asarray(s.observed_sizes, dtype=np.int64) for s in data]

    def broadcast(value, name):
        if isinstance(value, list):
            if len(value) != len(data):
                raise ValueError(f"{name} must list one array per phase")
            return [np.asarray(v, dtype=float) for v in value]
        return [np.full(s.shape, float(value)) for s in sizes]

    a = broadcast(hyper.a, "a")
    b = broadcast(hyper.b, "b")
    if any(np.any(row <= 0) for row in a + b):
        raise ValueError("a and b must be positive")
    if hyper.proposal_rate is None:
        rate = [np.maximum(s, 1).astype(float) for s in sizes]
    else:
        rate = broadcast(hyper.proposal_rate, "proposal_rate")
    if any(np.any(row <= 0) for row in rate):
        raise ValueError("proposal rates must be positive")
    if hyper.m_weights is None:
        multipliers = np.asarray(TRIAL_CANDIDATE_MULTIPLIERS, dtype=np.int64)
        m_weights = [
            [np.maximum(s, 1) * multipliers for s in phase_sizes] for phase_sizes in sizes
        ]
    else:
        m_weights = [[np.asarray(w) for w in row] for row in hyper.m_weights]
    if hyper.du_bound is None:
        distinct = len({d for s in data for d in s.sizes_by_defect})
        du_bound = max(2 * distinct, 1)
    else:
        du_bound = hyper.du_bound
    return replace(
        hyper, a=a, b=b, proposal_rate=rate, m_weights=m_weights, du_bound=du_bound
    )


@dataclass
class ChainState:
    """Current draw of one MCMC chain.

    ``S[j][i]`` must stay within [observed size, n_trials]; per-phase
    totals are always derived, never stored.
    """

    S: list[np.ndarray]
    p: np.ndarray
    t: list[np.ndarray]
    n_trials: list[np.ndarray]

    @property
    def F(self) -> np.ndarray:
        return np.array([float(s.sum()) for s in self.S])


def cumulative_totals(per_phase_totals) -> np.ndarray:
    return np.cumsum(np.asarray(per_phase_totals, dtype=float))


def nb_sizes(totals_cumulative) -> np.ndarray:
    """Negative-binomial size parameters r_k = F_k - sum_{i<k} F_i from
    cumulative totals F."""
    F = np.asarray(totals_cumulative, dtype=float)
    prior = np.concatenate(([0.0], np.cumsum(F)[:-1]))
    return F - prior


def log_likelihood(totals_cumulative, runs_cumulative, p) -> float:
    """Log of the chained negative-binomial run-count likelihood.

    Phase k contributes log C(N_k + r_k - 1, N_k) + N_k log p_k
    + r_k log(1 - p_k) with r_k = F_k - sum_{i<k} F_i.  All r_k must be
    positive; every p_k must lie strictly inside (0, 1).
    """
    F = np.asarray(totals_cumulative, dtype=float)
    N = np.asarray(runs_cumulative, dtype=float)
    p = np.asarray(p, dtype=float)
    if not (F.shape == N.shape == p.shape) or F.ndim != 1:
        raise ValueError("totals, runs and p must be equal-length vectors")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("p must lie strictly inside (0, 1)")
    r = nb_sizes(F)
    for k, r_k in enumerate(r):
        if r_k <= 0.0:
            raise InfeasiblePhaseError(k + 1, float(r_k))
    out = 0.0
    for N_k, r_k, p_k in zip(N, r, p):
        out += lgamma(N_k + r_k) - lgamma(N_k + 1.0) - lgamma(r_k)
        out += N_k * log(p_k) + r_k * log1p(-p_k)
    return out


def log_posterior_S_kernel(state: ChainState, data: list[PhaseSummary], hyper=None) -> float:
    """Unnormalized log posterior of the eventual-size matrix S.

    The run-count factors enter through the combinatorial and (1-p)
    terms only (the p^N factor does not involve S), and each bug adds
    its size-biased binomial term
    log S + log C(n, S) + S log t + (n - S) log(1-t).  States with any
    S = 0 or with a non-positive phase size parameter have zero mass and
    return -inf; S above its trial count is a structural violation.
    """
    for j, (S_row, n_row) in enumerate(zip(state.S, state.n_trials)):
        if np.any(S_row > n_row):
            raise ValueError(f"phase {j + 1}: eventual size exceeds its trial count")
        if np.any(S_row < 0):
            raise ValueError(f"phase {j + 1}: negative eventual size")
    for S_row in state.S:
        if np.any(S_row == 0):
            return -math.inf

    r = nb_sizes(cumulative_totals(state.F))
    if np.any(r <= 0.0):
        return -math.inf

    out = 0.0
    for summary, r_k, p_k in zip(data, r, state.p):
        N_k = float(summary.runs_cumulative)
        out += lgamma(N_k + r_k) - lgamma(N_k + 1.0) - lgamma(r_k)
        out += r_k * log1p(-p_k)
    for S_row, n_row, t_row in zip(state.S, state.n_trials, state.t):
        for S, n, t in zip(S_row, n_row, t_row):
            S = float(S)
            n = float(n)
            out += log(S) + lgamma(n + 1.0) - lgamma(S + 1.0) - lgamma(n - S + 1.0)
            out += S * log(t) + (n - S) * log1p(-t)
    return out
