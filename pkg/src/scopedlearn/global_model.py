"""Global classifiers over the iid features.

Two families: a generative naive Bayes model (class prior ``eta`` and
class-conditional global-feature rows ``beta``) and a discriminative
maximum-entropy model (per-class weights over feature counts plus bias,
fit with a Gaussian prior). Both ignore local features and locale
boundaries entirely; shuffling instances across locales changes nothing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .corpus import Corpus, DimensionMismatch, Instance, Locale, feature_counts
from .numerics import log_sum_exp, normalize_log

__all__ = [
    "GenerativeGlobalModel",
    "DiscriminativeGlobalModel",
    "ModelBundle",
    "OptimizerError",
    "train_naive_bayes",
    "train_maxent",
    "class_prior",
    "global_posterior_generative",
    "global_posterior_discriminative",
    "log_joint_matrix",
    "log_posterior_matrix",
    "fit_multinomial_logistic",
    "save_model",
    "load_model",
]


class OptimizerError(Exception):
    """The weight optimizer hit its iteration cap above tolerance."""


def _readonly(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


def _safe_log(arr: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(arr)


@dataclass(frozen=True)
class GenerativeGlobalModel:
    eta: np.ndarray  # (K,) class prior
    beta: np.ndarray  # (K, V) class-conditional global-feature rows
    smoothing: float = 1.0

    def __post_init__(self):
        eta = _readonly(self.eta)
        beta = _readonly(self.beta)
        if beta.ndim != 2 or eta.shape != (beta.shape[0],):
            raise ValueError("eta must be (K,) and beta (K, V)")
        if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(beta))):
            raise ValueError("eta and beta must be finite")
        if abs(eta.sum() - 1.0) > 1e-9 or np.max(np.abs(beta.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("eta and every beta row must sum to 1")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "beta", beta)

    @property
    def num_classes(self) -> int:
        return self.beta.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.beta.shape[1]


@dataclass(frozen=True)
class DiscriminativeGlobalModel:
    weights: np.ndarray  # (K, V + 1), last column is the bias
    prior_variance: float = 1.0

    def __post_init__(self):
        weights = _readonly(self.weights)
        if weights.ndim != 2 or weights.shape[1] < 2:
            raise ValueError("weights must be (K, V + 1)")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        object.__setattr__(self, "weights", weights)

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.weights.shape[1] - 1


def _all_labeled_instances(corpus: Corpus) -> list[Instance]:
    instances = []
    for loc in corpus.locales:
        for idx, inst in enumerate(loc.instances):
            if inst.label is None:
                raise ValueError(
                    f"training requires labels: locale {loc.id!r} instance {idx} is unlabeled"
                )
            instances.append(inst)
    return instances


def train_naive_bayes(corpus: Corpus, smoothing: float = 1.0) -> GenerativeGlobalModel:
    """Fit the class prior and class-conditional feature rows by counting.

    ``beta[c][w] = (count(w, c) + smoothing) / (count(c) + V * smoothing)``
    over feature occurrences, and ``eta`` likewise over instance counts.
    """
    if smoothing <= 0:
        raise ValueError("smoothing must be positive")
    K, V, _ = corpus.dims
    occ = np.zeros((K, V))
    labels = np.zeros(K)
    for inst in _all_labeled_instances(corpus):
        labels[inst.label] += 1.0
        for w in inst.global_feats:
            occ[inst.label, w] += 1.0
    beta = (occ + smoothing) / (occ.sum(axis=1, keepdims=True) + V * smoothing)
    eta = (labels + smoothing) / (labels.sum() + K * smoothing)
    return GenerativeGlobalModel(eta=eta, beta=beta, smoothing=smoothing)


def class_prior(corpus: Corpus, smoothing: float = 1.0) -> np.ndarray:
    """Empirical label frequency with add-one style smoothing."""
    K = corpus.dims.K
    labels = np.zeros(K)
    for inst in _all_labeled_instances(corpus):
        labels[inst.label] += 1.0
    return (labels + smoothing) / (labels.sum() + K * smoothing)


def log_joint_matrix(model: GenerativeGlobalModel, locale: Locale) -> np.ndarray:
    """(N, K) matrix of log eta[c] + sum over the global bag of log beta[c][w]."""
    log_eta = _safe_log(model.eta)
    log_beta = _safe_log(model.beta)
    out = np.empty((len(locale.instances), model.num_classes))
    for n, inst in enumerate(locale.instances):
        if not inst.global_feats:
            raise ValueError(f"instance {n} of locale {locale.id!r} has an empty global bag")
        out[n] = log_eta + log_beta[:, list(inst.global_feats)].sum(axis=1)
    return out


def global_posterior_generative(model: GenerativeGlobalModel, instance: Instance) -> np.ndarray:
    """Class posterior proportional to eta[c] * prod over the bag of beta[c][w]."""
    if not instance.global_feats:
        raise ValueError("instance has an empty global bag")
    scores = _safe_log(model.eta) + _safe_log(model.beta)[:, list(instance.global_feats)].sum(axis=1)
    return normalize_log(scores)


def fit_multinomial_logistic(
    features: np.ndarray,
    targets: np.ndarray,
    prior_variance: float,
    init: Optional[np.ndarray] = None,
    *,
    max_iter: int = 50000,
    grad_tol: float = 1e-5,
) -> np.ndarray:
    """Maximize the weighted conditional log likelihood minus the Gaussian
    penalty by batch gradient ascent with a backtracking step size.

    ``features`` is (N, D) raw counts (a bias column is appended here),
    ``targets`` is (N, K) with rows on the simplex (one-hot or soft).
    Returns (K, D + 1) weights; raises :class:`OptimizerError` if the
    gradient norm is still above ``grad_tol`` at the iteration cap.
    """
    if prior_variance <= 0:
        raise ValueError("prior_variance must be positive")
    X = np.hstack([np.asarray(features, dtype=float), np.ones((len(features), 1))])
    K = np.asarray(targets).shape[1]
    W = np.zeros((K, X.shape[1])) if init is None else np.array(init, dtype=float)

    def evaluate(w):
        logits = X @ w.T
        logp = logits - log_sum_exp(logits, axis=1, keepdims=True)
        obj = float(np.sum(targets * logp)) - float(np.sum(w * w)) / (2.0 * prior_variance)
        grad = (targets - np.exp(logp)).T @ X - w / prior_variance
        return obj, grad

    obj, grad = evaluate(W)
    # Safe first step from a curvature bound (softmax data term plus the
    # Gaussian penalty); the accepted step then adapts upward.
    step = 1.0 / (0.25 * float(np.sum(X * X)) + 1.0 / prior_variance)
    gnorm = float(np.sqrt(np.sum(grad * grad)))
    for _ in range(max_iter):
        if gnorm <= grad_tol:
            return W
        while True:
            cand = W + step * grad
            cand_obj, cand_grad = evaluate(cand)
            cand_gnorm = float(np.sqrt(np.sum(cand_grad * cand_grad)))
            armijo = cand_obj >= obj + 1e-4 * step * gnorm * gnorm
            # Near the optimum the true gain can fall below float resolution
            # of the objective; a strict gradient-norm drop still certifies
            # progress without giving up monotonicity.
            if armijo or (cand_obj >= obj and cand_gnorm < gnorm):
                W, obj, grad, gnorm = cand, cand_obj, cand_grad, cand_gnorm
                step *= 2.0
                break
            step *= 0.5
            if step < 1e-20:
                raise OptimizerError(
                    f"step size underflow at gradient norm {gnorm:.3e}"
                )
    raise OptimizerError(
        f"no convergence within {max_iter} iterations; final gradient norm {gnorm:.3e}"
    )


def train_maxent(
    corpus: Corpus,
    prior_variance: float = 1.0,
    *,
    max_iter: int = 50000,
    grad_tol: float = 1e-5,
) -> DiscriminativeGlobalModel:
    """Fit the maximum-entropy global classifier on bag counts plus bias."""
    K, V, _ = corpus.dims
    instances = _all_labeled_instances(corpus)
    X = feature_counts([inst.global_feats for inst in instances], V)
    Y = np.zeros((len(instances), K))
    for n, inst in enumerate(instances):
        Y[n, inst.label] = 1.0
    weights = fit_multinomial_logistic(
        X, Y, prior_variance, max_iter=max_iter, grad_tol=grad_tol
    )
    return DiscriminativeGlobalModel(weights=weights, prior_variance=prior_variance)


def log_posterior_matrix(model: DiscriminativeGlobalModel, locale: Locale) -> np.ndarray:
    """(N, K) matrix of log p(c | global bag) under the maxent model."""
    counts = feature_counts([inst.global_feats for inst in locale.instances], model.vocab_size)
    logits = counts @ model.weights[:, :-1].T + model.weights[:, -1]
    return logits - log_sum_exp(logits, axis=1, keepdims=True)


def global_posterior_discriminative(
    model: DiscriminativeGlobalModel, instance: Instance
) -> np.ndarray:
    """Softmax class posterior from bag counts under the maxent weights."""
    counts = feature_counts([instance.global_feats], model.vocab_size)[0]
    logits = model.weights[:, :-1] @ counts + model.weights[:, -1]
    return normalize_log(logits)


@dataclass(frozen=True)
class ModelBundle:
    """What `train` persists: either or both global models plus the fixed
    class prior the discriminative pipeline divides by."""

    generative: Optional[GenerativeGlobalModel] = None
    discriminative: Optional[DiscriminativeGlobalModel] = None
    prior: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.generative is None and self.discriminative is None:
            raise ValueError("a model bundle must hold at least one model")
        if self.prior is not None:
            object.__setattr__(self, "prior", _readonly(self.prior))

    @property
    def num_classes(self) -> int:
        model = self.generative or self.discriminative
        return model.num_classes

    @property
    def vocab_size(self) -> int:
        model = self.generative or self.discriminative
        return model.vocab_size

    def check_dims(self, dims) -> None:
        if dims.K != self.num_classes or dims.V != self.vocab_size:
            raise DimensionMismatch(
                f"model is K={self.num_classes} V={self.vocab_size} but corpus has "
                f"K={dims.K} V={dims.V}"
            )


def save_model(bundle: ModelBundle, path) -> None:
    doc = {
        "K": bundle.num_classes,
        "V": bundle.vocab_size,
        "generative": None,
        "discriminative": None,
        "class_prior": bundle.prior.tolist() if bundle.prior is not None else None,
    }
    if bundle.generative is not None:
        doc["generative"] = {
            "eta": bundle.generative.eta.tolist(),
            "beta": bundle.generative.beta.tolist(),
            "smoothing": bundle.generative.smoothing,
        }
    if bundle.discriminative is not None:
        doc["discriminative"] = {
            "weights": bundle.discriminative.weights.tolist(),
            "prior_variance": bundle.discriminative.prior_variance,
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> ModelBundle:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    generative = None
    if doc.get("generative") is not None:
        g = doc["generative"]
        generative = GenerativeGlobalModel(
            eta=np.asarray(g["eta"], dtype=float),
            beta=np.asarray(g["beta"], dtype=float),
            smoothing=float(g["smoothing"]),
        )
    discriminative = None
    if doc.get("discriminative") is not None:
        d = doc["discriminative"]
        discriminative = DiscriminativeGlobalModel(
            weights=np.asarray(d["weights"], dtype=float),
            prior_variance=float(d["prior_variance"]),
        )
    prior = np.asarray(doc["class_prior"], dtype=float) if doc.get("class_prior") is not None else None
    return ModelBundle(generative=generative, discriminative=discriminative, prior=prior)
