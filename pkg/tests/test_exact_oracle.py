import itertools
import math

import numpy as np
import pytest

from scopedlearn.corpus import Instance, Locale
from scopedlearn.global_model import GenerativeGlobalModel
from scopedlearn.exact_oracle import (
    OracleCapExceeded,
    exact_label_posterior,
    polya_log_marginal,
)
from scopedlearn.global_model import global_posterior_generative
from scopedlearn.synth import SynthSpec, sample_corpus


def test_polya_zero_counts_is_zero():
    assert polya_log_marginal(np.zeros((3, 4))) == pytest.approx(0.0, abs=1e-12)


def test_polya_hand_integrated_cases():
    # With a uniform prior on the 1-simplex: integral of theta^2 is 1/3,
    # integral of theta is 1/2.
    assert polya_log_marginal([[2, 0]], alpha=1.0) == pytest.approx(math.log(1 / 3), abs=1e-12)
    assert polya_log_marginal([[1, 0]], alpha=1.0) == pytest.approx(math.log(1 / 2), abs=1e-12)


def test_polya_rejects_bad_inputs():
    with pytest.raises(ValueError):
        polya_log_marginal([[1, -1]])
    with pytest.raises(ValueError):
        polya_log_marginal([[1, 0]], alpha=0.0)


def two_instance_model():
    # Uniform class prior; w0 gives global posterior (0.8, 0.2).
    return GenerativeGlobalModel(eta=(0.5, 0.5), beta=[[0.8, 0.2], [0.2, 0.8]])


def test_exact_posterior_two_instance_hand_enumeration():
    # Both instances share local value 0; weights over the 4 assignments are
    # proportional to {(0,0): 0.64/3, (0,1): 0.16/4, (1,0): 0.16/4,
    # (1,1): 0.04/3}, so p(c_1 = 0) = 19/23.
    model = two_instance_model()
    locale = Locale("x", (Instance((0,), (0,)), Instance((0,), (0,))))
    result = exact_label_posterior(model, locale, num_local_values=2)
    assert result.assignment_count == 4
    assert result.marginals[0, 0] == pytest.approx(19.0 / 23.0, abs=1e-12)
    assert result.marginals[1, 0] == pytest.approx(19.0 / 23.0, abs=1e-12)
    weight_sum = 0.64 / 3 + 0.16 / 4 + 0.16 / 4 + 0.04 / 3
    assert result.log_evidence == pytest.approx(math.log(weight_sum * 0.25), abs=1e-12)


def test_exact_posterior_single_instance_equals_global():
    model = two_instance_model()
    for bag, local in (((0,), (0,)), ((1, 0), (1, 1)), ((0, 0), ())):
        locale = Locale("x", (Instance(bag, local),))
        result = exact_label_posterior(model, locale, num_local_values=2)
        expect = global_posterior_generative(model, Instance(bag, ()))
        assert np.max(np.abs(result.marginals[0] - expect)) <= 1e-12


def test_exact_posterior_permutation_equivariant():
    spec = SynthSpec(num_classes=2, global_vocab=4, local_vocab=3, num_locales=1,
                     instances_per_locale=5, phi_concentration=0.4, seed=11)
    corpus, truth = sample_corpus(spec)
    model = GenerativeGlobalModel(eta=truth.eta, beta=truth.beta)
    loc = corpus.locales[0]
    perm = [3, 0, 4, 1, 2]
    shuffled = Locale("y", tuple(loc.instances[i] for i in perm))
    a = exact_label_posterior(model, loc, 3)
    b = exact_label_posterior(model, shuffled, 3)
    assert np.allclose(a.marginals[perm], b.marginals, atol=1e-12)
    assert a.log_evidence == pytest.approx(b.log_evidence, abs=1e-10)


def test_marginal_rows_sum_to_one():
    spec = SynthSpec(num_classes=3, global_vocab=5, local_vocab=3, num_locales=1,
                     instances_per_locale=6, seed=3)
    corpus, truth = sample_corpus(spec)
    model = GenerativeGlobalModel(eta=truth.eta, beta=truth.beta)
    result = exact_label_posterior(model, corpus.locales[0], 3)
    assert np.allclose(result.marginals.sum(axis=1), 1.0, atol=1e-9)


def test_cap_exceeded_reports_assignment_count():
    model = two_instance_model()
    locale = Locale("x", tuple(Instance((0,), (0,)) for _ in range(6)))
    with pytest.raises(OracleCapExceeded, match="64"):
        exact_label_posterior(model, locale, 2, cap=63)


def brute_force_marginals(model, locale, F, alpha=1.0, grid=None):
    """Fully independent route: plain-python enumeration with the integral
    expressed through math.gamma directly."""
    K = model.num_classes
    N = len(locale.instances)
    weights = {}
    for assign in itertools.product(range(K), repeat=N):
        w = 1.0
        for n, inst in enumerate(locale.instances):
            w *= model.eta[assign[n]]
            for word in inst.global_feats:
                w *= model.beta[assign[n], word]
        # Dirichlet-multinomial for each class row.
        for k in range(K):
            counts = [0] * F
            for n, inst in enumerate(locale.instances):
                if assign[n] == k:
                    for f in inst.local_feats:
                        counts[f] += 1
            num = math.gamma(F * alpha)
            den = math.gamma(F * alpha + sum(counts))
            w *= num / den
            for c in counts:
                w *= math.gamma(alpha + c) / math.gamma(alpha)
        weights[assign] = w
    total = sum(weights.values())
    marg = np.zeros((N, K))
    for assign, w in weights.items():
        for n in range(N):
            marg[n, assign[n]] += w
    return marg / total, math.log(total)


def test_oracle_matches_independent_enumerator():
    spec = SynthSpec(num_classes=3, global_vocab=4, local_vocab=3, num_locales=1,
                     instances_per_locale=4, phi_concentration=0.5, global_bag_size=2,
                     local_bag_size=2, seed=21)
    corpus, truth = sample_corpus(spec)
    model = GenerativeGlobalModel(eta=truth.eta, beta=truth.beta)
    loc = corpus.locales[0]
    result = exact_label_posterior(model, loc, 3, alpha=1.5)
    marg, log_ev = brute_force_marginals(model, loc, 3, alpha=1.5)
    assert np.max(np.abs(result.marginals - marg)) <= 1e-10
    assert result.log_evidence == pytest.approx(log_ev, abs=1e-10)
