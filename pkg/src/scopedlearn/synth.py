"""Sampler for the scoped generative process, with ground truth attached.

Each locale draws its own per-class distributions over local feature
values from a symmetric Dirichlet; low ``phi_concentration`` yields peaked
rows, i.e. highly informative local features, and high values approach
uninformative uniform rows. Everything is driven by one 64-bit seed with a
derived sub-seed per locale, so per-locale sampling parallelizes without
changing a single draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .corpus import Corpus, Dims, Instance, Locale

__all__ = ["SynthSpec", "SynthTruth", "sample_corpus"]


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int
    global_vocab: int
    local_vocab: int
    num_locales: int
    instances_per_locale: Union[int, tuple[int, int]]  # fixed N or inclusive range
    eta_truth: Union[str, tuple[float, ...]] = "sample"
    beta_concentration: float = 1.0
    phi_concentration: float = 1.0
    global_bag_size: int = 1
    local_bag_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.num_classes, self.global_vocab, self.local_vocab, self.num_locales) < 1:
            raise ValueError("all dims must be >= 1")
        if min(self.beta_concentration, self.phi_concentration) <= 0:
            raise ValueError("concentrations must be positive")
        if min(self.global_bag_size, self.local_bag_size) < 1:
            raise ValueError("bag sizes must be >= 1")
        n = self.instances_per_locale
        if isinstance(n, int):
            ok = n >= 1
        else:
            object.__setattr__(self, "instances_per_locale", (int(n[0]), int(n[1])))
            ok = 1 <= n[0] <= n[1]
        if not ok:
            raise ValueError("instances_per_locale must be >= 1 (or a valid range)")
        if not isinstance(self.eta_truth, str):
            eta = tuple(float(p) for p in self.eta_truth)
            if len(eta) != self.num_classes or abs(sum(eta) - 1.0) > 1e-9 or min(eta) < 0:
                raise ValueError("eta_truth must be a distribution over the classes")
            object.__setattr__(self, "eta_truth", eta)


@dataclass(frozen=True)
class SynthTruth:
    eta: np.ndarray  # (K,)
    beta: np.ndarray  # (K, V)
    phi: tuple[np.ndarray, ...]  # per locale, each (K, F)


def _locale_rng(seed: int, index: int) -> np.random.Generator:
    # Sub-seed derived from (seed, locale index): parallel and serial
    # sampling of locales agree bit-exactly.
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))


def sample_corpus(spec: SynthSpec) -> tuple[Corpus, SynthTruth]:
    """Draw a labeled corpus plus its generating parameters.

    Shared parameters (class prior, global rows) come from the base seed;
    each locale then draws its local rows, labels, and feature bags from
    its own generator.
    """
    K, V, F = spec.num_classes, spec.global_vocab, spec.local_vocab
    root = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed))
    if isinstance(spec.eta_truth, str):
        if spec.eta_truth != "sample":
            raise ValueError(f"unknown eta_truth mode {spec.eta_truth!r}")
        eta = root.dirichlet(np.ones(K))
    else:
        eta = np.asarray(spec.eta_truth, dtype=float)
    beta = np.vstack([root.dirichlet(np.full(V, spec.beta_concentration)) for _ in range(K)])

    locales = []
    phis = []
    for i in range(spec.num_locales):
        rng = _locale_rng(spec.seed, i)
        n = spec.instances_per_locale
        if not isinstance(n, int):
            n = int(rng.integers(n[0], n[1] + 1))
        phi = np.vstack([rng.dirichlet(np.full(F, spec.phi_concentration)) for _ in range(K)])
        instances = []
        for _ in range(n):
            label = int(rng.choice(K, p=eta))
            g = tuple(int(w) for w in rng.choice(V, size=spec.global_bag_size, p=beta[label]))
            l = tuple(int(f) for f in rng.choice(F, size=spec.local_bag_size, p=phi[label]))
            instances.append(Instance(g, l, label))
        locales.append(Locale(f"locale_{i:05d}", tuple(instances)))
        phis.append(phi)
    corpus = Corpus(locales=tuple(locales), dims=Dims(K, V, F))
    return corpus, SynthTruth(eta=eta, beta=beta, phi=tuple(phis))
