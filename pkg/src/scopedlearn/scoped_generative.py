"""Per-locale inference for the generative model.

Two procedures over one locale at a time, holding the global model fixed:

* :func:`map_em_infer` point-estimates the latent per-class distributions
  over local feature values by EM and labels instances with the result.
* :func:`variational_infer` integrates over those distributions with a
  factorized variational family (per-class Dirichlets ``gamma`` and
  per-instance class multinomials ``mu``), maximizing the evidence lower
  bound by coordinate ascent.

Locales are independent given the global model: inference over distinct
locales can run concurrently; a single locale's updates are sequential.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Locale, feature_counts
from .global_model import GenerativeGlobalModel, log_joint_matrix
from .numerics import digamma, log_gamma, normalize_log

__all__ = [
    "InferenceConfig",
    "LocalParams",
    "VariationalState",
    "ScopedResult",
    "em_e_step",
    "em_m_step",
    "expected_log_likelihood",
    "map_em_infer",
    "vb_update_gamma",
    "vb_update_mu",
    "elbo",
    "variational_infer",
]


@dataclass(frozen=True)
class InferenceConfig:
    max_iters: int = 100
    rel_tolerance: float = 1e-6
    m_step_smoothing: float = 1e-6  # delta added to every M-step count cell
    alpha: float = 1.0  # symmetric Dirichlet hyperparameter on local rows

    def __post_init__(self):
        if min(self.max_iters, self.rel_tolerance, self.m_step_smoothing, self.alpha) <= 0:
            raise ValueError("all InferenceConfig fields must be positive")


@dataclass(frozen=True)
class LocalParams:
    phi: np.ndarray  # (K, F), each row a distribution over local values

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim != 2 or not np.all(np.isfinite(phi)) or np.any(phi < 0):
            raise ValueError("phi must be a finite non-negative (K, F) matrix")
        if np.max(np.abs(phi.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("every phi row must sum to 1")
        phi.flags.writeable = False
        object.__setattr__(self, "phi", phi)


@dataclass(frozen=True)
class VariationalState:
    gamma: np.ndarray  # (K, F) Dirichlet parameters, entrywise >= alpha
    mu: np.ndarray  # (N, K) class multinomials per instance


@dataclass(frozen=True)
class ScopedResult:
    posteriors: np.ndarray  # (N, K)
    labels: np.ndarray  # (N,) argmax class ids, ties to the lowest id
    objective_trace: tuple[float, ...]
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "posteriors": self.posteriors.tolist(),
            "labels": self.labels.tolist(),
            "objective_trace": list(self.objective_trace),
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _local_counts(locale: Locale, num_local_values: int) -> np.ndarray:
    return feature_counts([inst.local_feats for inst in locale.instances], num_local_values)


def _log_phi(phi: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(phi)


def _bag_log_likelihood(counts: np.ndarray, log_phi: np.ndarray) -> np.ndarray:
    """(N, K) local-bag log likelihoods with the convention 0 * -inf = 0:
    a zero entry of phi only matters for instances that actually hit it."""
    finite = np.where(np.isneginf(log_phi), 0.0, log_phi)
    term = counts @ finite.T
    hit = (counts > 0).astype(float) @ np.isneginf(log_phi).astype(float).T > 0
    return np.where(hit, -np.inf, term)


def _e_step(logpi: np.ndarray, counts: np.ndarray, log_phi: np.ndarray) -> np.ndarray:
    return normalize_log(logpi + _bag_log_likelihood(counts, log_phi), axis=1)


def _m_step(resp: np.ndarray, counts: np.ndarray, delta: float) -> np.ndarray:
    numer = resp.T @ counts + delta  # (K, F)
    return numer / numer.sum(axis=1, keepdims=True)


def _expected_ll(logpi: np.ndarray, counts: np.ndarray, phi: np.ndarray) -> float:
    lp = _log_phi(phi)
    term = _bag_log_likelihood(counts, lp)
    resp = _e_step(logpi, counts, lp)
    if np.any((resp > 0) & np.isneginf(term)):
        return float("-inf")
    return float(np.sum(np.where(resp > 0, resp * np.where(np.isneginf(term), 0.0, term), 0.0)))


def _relative_change(cur: float, prev: float) -> float:
    return abs(cur - prev) / max(abs(prev), 1e-12)


def _capped_m_step(
    phi: np.ndarray, resp: np.ndarray, logpi: np.ndarray, counts: np.ndarray,
    delta: float, floor: float,
) -> tuple[np.ndarray, float]:
    """M-step with a step cap keeping the objective at or above ``floor``.

    The plain alternation can trade away a little of the responsibility-
    weighted local likelihood while re-weighting classes (and the smoothing
    delta perturbs the maximization), so the raw update occasionally dips
    the objective; shrinking the update toward the current point restores
    the guaranteed non-decreasing trace. Rows of any convex combination
    stay on the simplex. Returns the new point and its objective value.
    """
    cand = _m_step(resp, counts, delta)
    value = _expected_ll(logpi, counts, cand)
    if value >= floor:
        return cand, value
    lo, hi = 0.0, 1.0
    value = floor
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        mid_value = _expected_ll(logpi, counts, phi + mid * (cand - phi))
        if mid_value >= floor:
            lo, value = mid, mid_value
        else:
            hi = mid
    return phi + lo * (cand - phi), value


def em_e_step(
    phi: LocalParams, model: GenerativeGlobalModel, locale: Locale
) -> np.ndarray:
    """(N, K) responsibilities: class prior times global and local factors,
    normalized per instance in log space."""
    logpi = log_joint_matrix(model, locale)
    counts = _local_counts(locale, phi.phi.shape[1])
    return _e_step(logpi, counts, _log_phi(phi.phi))


def em_m_step(
    responsibilities: np.ndarray,
    locale: Locale,
    num_local_values: int,
    smoothing: float = 1e-6,
) -> LocalParams:
    """Re-estimate the local rows from responsibility-weighted occurrence
    counts; ``smoothing`` keeps rows defined for classes with no mass."""
    counts = _local_counts(locale, num_local_values)
    return LocalParams(_m_step(np.asarray(responsibilities, dtype=float), counts, smoothing))


def expected_log_likelihood(
    phi: LocalParams, model: GenerativeGlobalModel, locale: Locale
) -> float:
    """Responsibility-weighted log likelihood of the locale's local features
    under ``phi`` (the EM objective; -inf when a zero entry is hit with
    matching nonzero responsibility, never NaN)."""
    logpi = log_joint_matrix(model, locale)
    counts = _local_counts(locale, phi.phi.shape[1])
    return _expected_ll(logpi, counts, phi.phi)


def map_em_infer(
    model: GenerativeGlobalModel,
    locale: Locale,
    num_local_values: int,
    config: InferenceConfig = InferenceConfig(),
) -> tuple[LocalParams, ScopedResult]:
    """EM point estimation of the local rows from uniform initialization.

    Iterates E and M steps until the relative objective change drops below
    ``config.rel_tolerance`` or ``config.max_iters`` is hit; the trace of
    objective values is non-decreasing within numerical tolerance.
    """
    if not locale.instances:
        raise ValueError("locale has no instances")
    logpi = log_joint_matrix(model, locale)
    counts = _local_counts(locale, num_local_values)
    phi = np.full((model.num_classes, num_local_values), 1.0 / num_local_values)
    prev = _expected_ll(logpi, counts, phi)
    trace = [prev]
    converged = False
    iterations = 0
    for _ in range(config.max_iters):
        resp = _e_step(logpi, counts, _log_phi(phi))
        phi, cur = _capped_m_step(phi, resp, logpi, counts, config.m_step_smoothing, prev)
        trace.append(cur)
        iterations += 1
        if _relative_change(cur, prev) < config.rel_tolerance:
            converged = True
            break
        prev = cur
    posteriors = _e_step(logpi, counts, _log_phi(phi))
    result = ScopedResult(
        posteriors=posteriors,
        labels=np.argmax(posteriors, axis=1),
        objective_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
    )
    return LocalParams(phi), result


def vb_update_gamma(
    mu: np.ndarray, locale: Locale, num_local_values: int, alpha: float = 1.0
) -> np.ndarray:
    """Posterior Dirichlet parameters: the prior plus expected occurrence
    counts of each local value under the class multinomials ``mu``."""
    counts = _local_counts(locale, num_local_values)
    return alpha + np.asarray(mu, dtype=float).T @ counts


def _expected_log_rows(gamma: np.ndarray) -> np.ndarray:
    return digamma(gamma) - digamma(gamma.sum(axis=1, keepdims=True))


def vb_update_mu(
    gamma: np.ndarray, model: GenerativeGlobalModel, locale: Locale
) -> np.ndarray:
    """Class multinomials proportional to the global factor times the
    exponentiated expected log local likelihood under ``gamma``."""
    logpi = log_joint_matrix(model, locale)
    counts = _local_counts(locale, np.asarray(gamma).shape[1])
    return normalize_log(logpi + counts @ _expected_log_rows(np.asarray(gamma, dtype=float)).T, axis=1)


def elbo(
    gamma: np.ndarray,
    mu: np.ndarray,
    model: GenerativeGlobalModel,
    locale: Locale,
    alpha: float = 1.0,
) -> float:
    """Evidence lower bound of the factorized variational state.

    Increases after every gamma and every mu update and never exceeds the
    locale's exact log evidence.
    """
    gamma = np.asarray(gamma, dtype=float)
    mu = np.asarray(mu, dtype=float)
    logpi = log_joint_matrix(model, locale)
    counts = _local_counts(locale, gamma.shape[1])
    return _elbo(gamma, mu, logpi, counts, alpha)


def _elbo(gamma, mu, logpi, counts, alpha) -> float:
    K, F = gamma.shape
    erows = _expected_log_rows(gamma)
    # KL-style block between the Dirichlet posterior and its prior.
    value = K * float(log_gamma(F * alpha)) - K * F * float(log_gamma(alpha))
    value += float(log_gamma(gamma).sum() - log_gamma(gamma.sum(axis=1)).sum())
    value += float(((alpha - gamma) * erows).sum())
    # Expected complete-data likelihood of labels, global and local bags;
    # classes with zero mass contribute nothing even at -inf log factors.
    with np.errstate(invalid="ignore"):
        value += float(np.where(mu > 0, mu * logpi, 0.0).sum())
    value += float((mu * (counts @ erows.T)).sum())
    # Entropy of the class multinomials; 0 log 0 = 0.
    with np.errstate(divide="ignore", invalid="ignore"):
        value -= float(np.where(mu > 0, mu * np.log(mu), 0.0).sum())
    return value


def variational_infer(
    model: GenerativeGlobalModel,
    locale: Locale,
    num_local_values: int,
    config: InferenceConfig = InferenceConfig(),
) -> tuple[VariationalState, ScopedResult]:
    """Coordinate-ascent variational inference over one locale.

    ``mu`` starts at the per-instance global posteriors; each sweep updates
    ``gamma`` then ``mu`` and records the bound, stopping when its relative
    change drops below ``config.rel_tolerance``.
    """
    if not locale.instances:
        raise ValueError("locale has no instances")
    logpi = log_joint_matrix(model, locale)
    counts = _local_counts(locale, num_local_values)
    mu = normalize_log(logpi, axis=1)
    gamma = np.full((model.num_classes, num_local_values), config.alpha)
    trace = []
    prev = None
    converged = False
    iterations = 0
    for _ in range(config.max_iters):
        gamma = config.alpha + mu.T @ counts
        mu = normalize_log(logpi + counts @ _expected_log_rows(gamma).T, axis=1)
        cur = _elbo(gamma, mu, logpi, counts, config.alpha)
        trace.append(cur)
        iterations += 1
        if prev is not None and _relative_change(cur, prev) < config.rel_tolerance:
            converged = True
            break
        prev = cur
    result = ScopedResult(
        posteriors=mu,
        labels=np.argmax(mu, axis=1),
        objective_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
    )
    return VariationalState(gamma=gamma, mu=mu), result
