"""Multi-fault-class Bayesian detection model and the model-comparison
harness.

The reference model tracks, for a known total fault count, the binomial
posterior over how many faults remain undetected after each review
phase.  Detection counts per phase follow a multinomial over fault
classes with configured detection probabilities; the posterior stays
binomial with parameters updated by a closed-form recursion.

The comparison harness pits the size-biased estimator against this
model on simulated scenarios with known truth, scoring both by squared
error of the predicted remaining total size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from math import lgamma, log

import numpy as np
from scipy.special import logsumexp

from .ingest import summarize_phases
from .model import flat_hyperparams
from .sampler import InitializationError, SamplerConfig, run_chain
from .simulator import ScenarioConfig, ScenarioInfeasibleError, generate, matched_t_prior

__all__ = [
    "DegenerateUpdateError",
    "BaselineState",
    "PhaseDetection",
    "initial_state",
    "baseline_update",
    "posterior_remaining",
    "baseline_stopping_phase",
    "phase_log_evidence",
    "ComparisonConfig",
    "ComparisonReport",
    "compare_models",
]


class DegenerateUpdateError(RuntimeError):
    """The posterior recursion's denominator became non-positive."""


@dataclass(frozen=True)
class PhaseDetection:
    """Detected fault counts per class in one phase, with the class
    detection probabilities and the no-detection probability."""

    counts: tuple[int, ...]
    q_detect: tuple[float, ...]
    q_none: float

    def __post_init__(self) -> None:
        if len(self.counts) != len(self.q_detect):
            raise ValueError("one detection probability per fault class is required")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be non-negative")
        if any(not 0.0 <= q <= 1.0 for q in self.q_detect) or not 0.0 <= self.q_none <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if abs(self.q_none + sum(self.q_detect) - 1.0) > 1e-9:
            raise ValueError("q_none plus class detection probabilities must sum to 1")

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class BaselineState:
    n_total: int
    p: float
    q: float
    detected_cum: int
    phase: int

    def __post_init__(self) -> None:
        if self.n_total < 1:
            raise ValueError("n_total must be >= 1")
        if abs(self.p + self.q - 1.0) > 1e-9:
            raise ValueError(f"p + q must equal 1, got {self.p + self.q}")
        if not 0 <= self.detected_cum <= self.n_total:
            raise ValueError("detected_cum must lie in [0, n_total]")

    @property
    def remaining_pool(self) -> int:
        return self.n_total - self.detected_cum


def initial_state(n_total: int, p0: float) -> BaselineState:
    if not 0.0 < p0 < 1.0:
        raise ValueError("p0 must lie strictly inside (0, 1)")
    return BaselineState(n_total=n_total, p=p0, q=1.0 - p0, detected_cum=0, phase=0)


def baseline_update(state: BaselineState, detection: PhaseDetection) -> BaselineState:
    """Advance the binomial posterior by one phase.

    p_j = p_{j-1} q_0j / (1 - p_{j-1} sum_i q_ij), and q_j divides the
    previous q by the same denominator, which preserves p + q = 1
    exactly whenever the detection probabilities are a proper simplex.
    """
    sum_q = sum(detection.q_detect)
    denominator = 1.0 - state.p * sum_q
    if denominator <= 0.0:
        raise DegenerateUpdateError(
            f"phase {state.phase + 1}: denominator {denominator} is not positive"
        )
    detected = state.detected_cum + detection.total
    if detected > state.n_total:
        raise ValueError(
            f"phase {state.phase + 1}: cumulative detections {detected} exceed n_total"
        )
    return BaselineState(
        n_total=state.n_total,
        p=state.p * detection.q_none / denominator,
        q=state.q / denominator,
        detected_cum=detected,
        phase=state.phase + 1,
    )


def posterior_remaining(state: BaselineState, v: int) -> float:
    """Probability that exactly v faults remain undetected.

    Binomial(n_total - detected_cum, p) evaluated in log space; values
    outside the support return 0.
    """
    pool = state.remaining_pool
    if v < 0 or v > pool:
        return 0.0
    if state.p <= 0.0:
        return 1.0 if v == 0 else 0.0
    if state.q <= 0.0:
        return 1.0 if v == pool else 0.0
    log_pmf = (
        lgamma(pool + 1)
        - lgamma(v + 1)
        - lgamma(pool - v + 1)
        + v * log(state.p)
        + (pool - v) * log(state.q)
    )
    return math.exp(log_pmf)


def baseline_stopping_phase(
    detections: list[PhaseDetection],
    n_total: int,
    p0: float,
    delta: float,
) -> int | None:
    """Smallest phase j with P(no faults remain) >= 1 - delta, else None."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie strictly inside (0, 1)")
    state = initial_state(n_total, p0)
    for detection in detections:
        state = baseline_update(state, detection)
        if posterior_remaining(state, 0) >= 1.0 - delta:
            return state.phase
    return None


def phase_log_evidence(state: BaselineState, detection: PhaseDetection) -> float:
    """Log predictive probability of one phase's detection counts.

    Marginalizes the multinomial detection likelihood over the binomial
    prior on the number of faults present entering the phase; this is
    exactly the normalizer of the posterior recursion.
    """
    pool = state.remaining_pool
    total = detection.total
    if total > pool:
        return -math.inf
    counts_norm = sum(lgamma(c + 1) for c in detection.counts)
    log_q = [log(q) if q > 0 else -math.inf for q in detection.q_detect]
    fixed = sum(
        c * lq if c else 0.0 for c, lq in zip(detection.counts, log_q)
    )
    terms = []
    for v in range(pool - total + 1):
        prior = posterior_remaining(state, total + v)
        if prior <= 0.0:
            continue
        log_mn = lgamma(total + v + 1) - counts_norm - lgamma(v + 1) + fixed
        log_mn += v * log(detection.q_none) if v else 0.0
        terms.append(math.log(prior) + log_mn)
    if not terms:
        return -math.inf
    return float(logsumexp(terms))


@dataclass(frozen=True)
class ComparisonConfig:
    """Knobs of the comparison protocol."""

    q_detect: float = 0.5
    p0: float = 0.5
    chains: int = 1
    iterations: int = 600
    burn_in: int = 200
    thin: int = 2


@dataclass(frozen=True)
class ComparisonReport:
    trials: int
    scored_trials: int
    skipped_trials: int
    win_fraction: float
    relative_mse_size_biased: float
    relative_mse_baseline: float
    log_bayes_factor_mean: float
    log_bayes_factor_median: float
    seed: int

    def as_doc(self) -> dict:
        return {
            "trials": self.trials,
            "scored_trials": self.scored_trials,
            "skipped_trials": self.skipped_trials,
            "win_fraction": self.win_fraction,
            "relative_mse_size_biased": self.relative_mse_size_biased,
            "relative_mse_baseline": self.relative_mse_baseline,
            "bayes_factor_summary": {
                "log_bf_mean": self.log_bayes_factor_mean,
                "log_bf_median": self.log_bayes_factor_median,
                "estimator": "harmonic-mean over retained draws (approximate)",
            },
            "seed": self.seed,
        }


def _wins(errors_a: list[float], errors_b: list[float]) -> float:
    """Fraction of trials the first model scored strictly better; exact
    ties count one half."""
    score = 0.0
    for a, b in zip(errors_a, errors_b):
        if a < b:
            score += 1.0
        elif a == b:
            score += 0.5
    return score / len(errors_a)


def _harmonic_mean_log_ml(loglik: np.ndarray) -> float:
    flat = loglik.reshape(-1)
    return float(math.log(flat.size) - logsumexp(-flat))


def compare_models(
    scenario: ScenarioConfig,
    trials: int,
    seed: int,
    comparison: ComparisonConfig | None = None,
) -> ComparisonReport:
    """Score both models on simulated scenarios with known truth.

    Each trial simulates a log, fits the size-biased sampler, rolls the
    detection-count recursion forward, and scores each model's squared
    error in predicting the remaining total size (eventual minus
    observed).  Both models receive their structural knowns: the
    detection-count model gets the true fault count, the size-biased fit
    gets the true trial counts and a detection-rate prior matched to the
    scenario.  Bayes factors are reported separately and are
    approximate: the size-biased evidence uses the harmonic-mean
    estimator and the two models describe different views of the data.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    comparison = comparison or ComparisonConfig()
    trial_seeds = np.random.SeedSequence(seed).spawn(trials)

    errors_sized, errors_base, log_bfs, truths = [], [], [], []
    skipped = 0
    for child in trial_seeds:
        trial_seed = int(child.generate_state(1, dtype=np.uint64)[0])
        trial_scenario = replace(scenario, seed=trial_seed)
        try:
            log, truth = generate(trial_scenario)
            summaries = summarize_phases(log.records, log.runs_per_phase)
            observed_total = sum(s.observed_total for s in summaries)
            truth_remaining = float(truth.per_phase_totals.sum()) - observed_total

            config = SamplerConfig(
                chains=comparison.chains,
                iterations=comparison.iterations,
                burn_in=comparison.burn_in,
                thin=comparison.thin,
                seed=trial_seed,
            )
            hyper = flat_hyperparams(len(summaries))
            hyper.a, hyper.b = matched_t_prior(trial_scenario.t_range)
            hyper.m_weights = [
                [
                    np.array([int(n)])
                    for n, s in zip(truth.trials[j], truth.observed[j])
                    if s >= 1
                ]
                for j in range(len(summaries))
            ]
            posterior = run_chain(summaries, hyper, config)
            predicted_sized = float(posterior.F_mean.sum()) - observed_total

            n_total = int(sum(trial_scenario.bugs_per_phase))
            state = initial_state(n_total, comparison.p0)
            log_evidence_base = 0.0
            detected = 0
            for summary in summaries:
                detection = PhaseDetection(
                    counts=(summary.distinct_bugs,),
                    q_detect=(comparison.q_detect,),
                    q_none=1.0 - comparison.q_detect,
                )
                log_evidence_base += phase_log_evidence(state, detection)
                state = baseline_update(state, detection)
                detected += summary.distinct_bugs
            mean_size = observed_total / detected if detected else 0.0
            predicted_base = state.remaining_pool * state.p * mean_size
        except (DegenerateUpdateError, InitializationError, ScenarioInfeasibleError):
            skipped += 1
            continue

        errors_sized.append((predicted_sized - truth_remaining) ** 2)
        errors_base.append((predicted_base - truth_remaining) ** 2)
        truths.append(truth_remaining)
        log_bfs.append(_harmonic_mean_log_ml(posterior.loglik) - log_evidence_base)

    if not errors_sized:
        raise RuntimeError("every comparison trial was skipped")

    # Relative MSE: mean squared error over the mean squared truth.
    truth_scale = float(np.mean(np.square(truths)))
    if truth_scale == 0.0:
        truth_scale = 1.0
    return ComparisonReport(
        trials=trials,
        scored_trials=len(errors_sized),
        skipped_trials=skipped,
        win_fraction=_wins(errors_sized, errors_base),
        relative_mse_size_biased=float(np.mean(errors_sized)) / truth_scale,
        relative_mse_baseline=float(np.mean(errors_base)) / truth_scale,
        log_bayes_factor_mean=float(np.mean(log_bfs)),
        log_bayes_factor_median=float(np.median(log_bfs)),
        seed=seed,
    )
