"""Brute-force exact class posteriors for small locales.

Enumerates every joint class assignment of a locale and integrates the
latent per-locale feature distributions analytically through the
Dirichlet-multinomial (Polya) marginal, giving the exact per-instance
marginals and log evidence the approximate procedures are tested against.
The assignment count is K**N, so this is strictly a verification tool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Locale, feature_counts
from .global_model import GenerativeGlobalModel, log_joint_matrix
from .numerics import log_gamma

__all__ = ["OracleCapExceeded", "OracleResult", "polya_log_marginal", "exact_label_posterior"]

DEFAULT_CAP = 2**20
_CHUNK = 1 << 14


class OracleCapExceeded(Exception):
    """The locale's assignment space K**N is larger than the enumeration cap."""


@dataclass(frozen=True)
class OracleResult:
    marginals: np.ndarray  # (N, K) exact per-instance class posteriors
    log_evidence: float
    assignment_count: int

    def to_dict(self) -> dict:
        return {
            "marginals": self.marginals.tolist(),
            "log_evidence": self.log_evidence,
            "assignment_count": self.assignment_count,
        }


def polya_log_marginal(counts, alpha: float = 1.0) -> float:
    """Log of the local-feature likelihood with the per-class feature
    distributions integrated out against symmetric Dirichlet(alpha) priors.

    ``counts`` is a (K, F) table of occurrence counts per class row; each
    row contributes ``logGamma(F a) - logGamma(F a + N_k)
    + sum_j [logGamma(a + N_kj) - logGamma(a)]``.
    """
    table = np.asarray(counts, dtype=float)
    if table.ndim != 2:
        raise ValueError("counts must be a (K, F) table")
    if np.any(table < 0):
        raise ValueError("counts must be non-negative")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    K, F = table.shape
    totals = table.sum(axis=1)
    out = K * log_gamma(F * alpha) - log_gamma(F * alpha + totals).sum()
    out += log_gamma(alpha + table).sum() - K * F * log_gamma(alpha)
    return float(out)


def exact_label_posterior(
    model: GenerativeGlobalModel,
    locale: Locale,
    num_local_values: int,
    alpha: float = 1.0,
    cap: int = DEFAULT_CAP,
) -> OracleResult:
    """Exact per-instance class marginals by full assignment enumeration.

    Every assignment's weight is the product of the global factors (class
    prior and class-conditional feature likelihoods) times the Polya
    marginal of the local counts it induces. All reduction happens in log
    space in a fixed chunk order, so results are deterministic.
    """
    N = len(locale.instances)
    K = model.num_classes
    total = K**N
    if total > cap:
        raise OracleCapExceeded(f"locale {locale.id!r} needs K^N = {total} > cap {cap}")
    logpi = log_joint_matrix(model, locale)  # (N, K)
    counts = feature_counts([inst.local_feats for inst in locale.instances], num_local_values)
    F = num_local_values

    # log Polya weight decomposed per class row so each assignment only
    # needs its induced (K, F) count table.
    lg_alpha = log_gamma(alpha)
    lg_prior = log_gamma(F * alpha)

    log_weights = np.empty(total)
    powers = K ** np.arange(N, dtype=np.int64)
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        digits = (idx[:, None] // powers) % K  # (B, N) class assignment codes
        chunk = logpi[np.arange(N), digits].sum(axis=1)
        for k in range(K):
            member = (digits == k).astype(float)  # (B, N)
            table = member @ counts  # (B, F) local counts landing in class k
            chunk += lg_prior - log_gamma(F * alpha + table.sum(axis=1))
            chunk += log_gamma(alpha + table).sum(axis=1) - F * lg_alpha
        log_weights[idx] = chunk

    hi = float(log_weights.max())
    scaled = np.exp(log_weights - hi)
    evidence = float(scaled.sum())
    marginals = np.zeros((N, K))
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        digits = (idx[:, None] // powers) % K
        w = scaled[idx]
        for k in range(K):
            marginals[:, k] += (digits == k).astype(float).T @ w
    marginals /= evidence
    return OracleResult(
        marginals=marginals,
        log_evidence=hi + float(np.log(evidence)),
        assignment_count=total,
    )
