import math

import numpy as np
import pytest

from scopedlearn.corpus import Instance, Locale
from scopedlearn.exact_oracle import exact_label_posterior
from scopedlearn.global_model import GenerativeGlobalModel, global_posterior_generative, log_joint_matrix
from scopedlearn.numerics import normalize_log
from scopedlearn.scoped_generative import (
    InferenceConfig,
    LocalParams,
    em_e_step,
    em_m_step,
    elbo,
    expected_log_likelihood,
    map_em_infer,
    variational_infer,
    vb_update_gamma,
    vb_update_mu,
)
from scopedlearn.synth import SynthSpec, sample_corpus

TIGHT = InferenceConfig(m_step_smoothing=1e-12)


def two_word_model(p0=0.8, p1=0.4):
    # Uniform prior; posterior for a singleton bag of w0 is (p0, 1-p0),
    # for w1 it is (p1, 1-p1). Requires p1 < 0.5 < p0 for valid rows.
    a = (1.0 - 2.0 * p1) / (p0 - p1)
    b = (2.0 * p0 - 1.0) / (p0 - p1)
    beta = np.array([[p0 * a, p1 * b], [(1 - p0) * a, (1 - p1) * b]])
    return GenerativeGlobalModel(eta=(0.5, 0.5), beta=beta)


def random_suite_locale(seed, **overrides):
    params = dict(num_classes=2, global_vocab=5, local_vocab=3, num_locales=1,
                  instances_per_locale=(2, 6), phi_concentration=0.3,
                  beta_concentration=0.5, global_bag_size=2, seed=seed)
    params.update(overrides)
    corpus, truth = sample_corpus(SynthSpec(**params))
    model = GenerativeGlobalModel(eta=truth.eta, beta=truth.beta)
    return model, corpus.locales[0], corpus.dims.F


def test_em_e_step_uniform_phi_recovers_global_posterior():
    model, loc, F = random_suite_locale(5)
    phi = LocalParams(np.full((2, F), 1.0 / F))
    resp = em_e_step(phi, model, loc)
    expect = normalize_log(log_joint_matrix(model, loc), axis=1)
    assert np.allclose(resp, expect, atol=1e-12)


def test_em_e_step_constant_local_factor_cancels():
    model = two_word_model()
    loc = Locale("x", (Instance((0,), (0,)),))
    phi = LocalParams([[0.5, 0.5], [0.5, 0.5]])
    assert np.allclose(em_e_step(phi, model, loc)[0], [0.8, 0.2], atol=1e-12)


def test_em_e_step_uniform_global_takes_local_ratio():
    model = GenerativeGlobalModel(eta=(0.5, 0.5), beta=[[0.5, 0.5], [0.5, 0.5]])
    loc = Locale("x", (Instance((0,), (0,)),))
    phi = LocalParams([[0.9, 0.1], [0.1, 0.9]])
    assert np.allclose(em_e_step(phi, model, loc)[0], [0.9, 0.1], atol=1e-12)


def test_em_m_step_all_mass_on_observed_value():
    loc = Locale("x", (Instance((0,), (0,)), Instance((0,), (0,))))
    resp = np.array([[0.5, 0.5], [1.0, 0.0]])
    phi = em_m_step(resp, loc, num_local_values=2, smoothing=0.0)
    assert np.allclose(phi.phi[0], [1.0, 0.0], atol=1e-12)


def test_em_m_step_no_occurrences_gives_uniform_row():
    loc = Locale("x", (Instance((0,), ()),))  # empty local bag
    resp = np.array([[0.3, 0.7]])
    phi = em_m_step(resp, loc, num_local_values=4, smoothing=1e-6)
    assert np.allclose(phi.phi, 0.25, atol=1e-12)


def test_em_m_step_count_normalization():
    loc = Locale("x", (
        Instance((0,), (0,)), Instance((0,), (0,)), Instance((0,), (0,)), Instance((0,), (1,)),
    ))
    resp = np.full((4, 2), 0.5)
    phi = em_m_step(resp, loc, num_local_values=2, smoothing=0.0)
    assert np.allclose(phi.phi, [[0.75, 0.25], [0.75, 0.25]], atol=1e-12)


def test_expected_log_likelihood_uniform_phi():
    model, loc, F = random_suite_locale(9, local_bag_size=2)
    phi = LocalParams(np.full((2, F), 1.0 / F))
    occurrences = sum(len(inst.local_feats) for inst in loc.instances)
    assert expected_log_likelihood(phi, model, loc) == pytest.approx(
        occurrences * math.log(1.0 / F), abs=1e-9
    )


def test_expected_log_likelihood_degenerate_responsibility():
    # eta (1, 0) pins the responsibility to class 0 exactly.
    model = GenerativeGlobalModel(eta=(1.0, 0.0), beta=[[0.5, 0.5], [0.5, 0.5]])
    loc = Locale("x", (Instance((0,), (0,)),))
    phi = LocalParams([[0.9, 0.1], [0.5, 0.5]])
    assert expected_log_likelihood(phi, model, loc) == pytest.approx(math.log(0.9), abs=1e-12)


def test_expected_log_likelihood_zero_phi_never_nan():
    # A zero phi entry zeroes the matching responsibility at that same phi,
    # so its log contributes nothing: the value is finite, never NaN.
    model = two_word_model()
    loc = Locale("x", (Instance((0,), (0,)),))
    phi = LocalParams([[0.0, 1.0], [0.5, 0.5]])
    value = expected_log_likelihood(phi, model, loc)
    assert value == pytest.approx(math.log(0.5), abs=1e-12)
    assert not math.isnan(value)


def test_em_e_step_handles_degenerate_phi_rows():
    # Rows with exact zeros (a smoothing-free M-step output) must not
    # produce NaN for instances that never touch the zero entries.
    model = two_word_model()
    loc = Locale("x", (Instance((0,), (0,)), Instance((1,), (0,))))
    phi = LocalParams([[1.0, 0.0], [1.0, 0.0]])
    resp = em_e_step(phi, model, loc)
    assert np.allclose(resp, [[0.8, 0.2], [0.4, 0.6]], atol=1e-12)


def test_em_objective_monotone_on_random_locales():
    for seed in range(30):
        model, loc, F = random_suite_locale(seed)
        _, result = map_em_infer(model, loc, F)
        diffs = np.diff(result.objective_trace)
        assert diffs.size == 0 or diffs.min() >= -1e-9


def test_map_em_single_instance_reduces_to_global():
    for seed in range(10):
        model, loc, F = random_suite_locale(seed, instances_per_locale=1)
        _, result = map_em_infer(model, loc, F, TIGHT)
        expect = normalize_log(log_joint_matrix(model, loc), axis=1)
        assert np.max(np.abs(result.posteriors - expect)) <= 1e-9
        assert result.labels[0] == np.argmax(expect[0])


def test_map_em_identical_local_bags_reduce_to_global():
    for seed in range(10):
        model, loc, F = random_suite_locale(seed, instances_per_locale=5)
        shared = loc.instances[0].local_feats
        merged = Locale("same", tuple(Instance(i.global_feats, shared) for i in loc.instances))
        _, result = map_em_infer(model, merged, F, TIGHT)
        expect = normalize_log(log_joint_matrix(model, merged), axis=1)
        assert np.max(np.abs(result.posteriors - expect)) <= 1e-9


def flip_scenario():
    # Three instances lean strongly to class 0 and share local value 0; two
    # lean strongly to class 1 with local value 1; the last leans mildly to
    # class 1 (0.4, 0.6) but is formatted like the class-0 crowd.
    model = two_word_model()
    locale = Locale("flip", (
        Instance((0,), (0,)), Instance((0,), (0,)), Instance((0,), (0,)),
        Instance((1,), (1,)), Instance((1,), (1,)),
        Instance((1,), (0,)),
    ))
    return model, locale


def test_map_em_flips_formatted_dissenter():
    model, locale = flip_scenario()
    _, result = map_em_infer(model, locale, 2)
    oracle = exact_label_posterior(model, locale, 2)
    assert result.labels.tolist() == [0, 0, 0, 1, 1, 0]
    assert np.argmax(oracle.marginals, axis=1).tolist() == [0, 0, 0, 1, 1, 0]
    # the globally-preferred label of the dissenter alone is class 1
    assert np.argmax(global_posterior_generative(model, Instance((1,), ()))) == 1


def test_vb_update_gamma_cases():
    empty = Locale("e", ())
    gamma = vb_update_gamma(np.zeros((0, 2)), empty, num_local_values=3, alpha=1.0)
    assert np.allclose(gamma, 1.0)

    one = Locale("o", (Instance((0,), (1,)),))
    gamma = vb_update_gamma(np.array([[1.0, 0.0]]), one, num_local_values=3, alpha=1.0)
    assert np.allclose(gamma[0], [1.0, 2.0, 1.0])
    assert np.allclose(gamma[1], [1.0, 1.0, 1.0])

    two = Locale("t", (Instance((0,), (0,)), Instance((0,), (0,))))
    mu = np.array([[0.5, 0.5], [1.0, 0.0]])
    gamma = vb_update_gamma(mu, two, num_local_values=2, alpha=1.0)
    assert gamma[0, 0] == pytest.approx(2.5)


def test_vb_update_mu_identical_rows_give_global_posterior():
    model, loc, F = random_suite_locale(4)
    gamma = np.tile([[2.0, 1.5, 3.0]], (2, 1))
    mu = vb_update_mu(gamma, model, loc)
    expect = normalize_log(log_joint_matrix(model, loc), axis=1)
    assert np.allclose(mu, expect, atol=1e-12)


def test_vb_update_mu_digamma_case():
    # gamma rows (2,1) and (1,2); with psi(n+1) = psi(n) + 1/n the local
    # factors are exp(-1/2) and exp(-3/2), so mu = (1, e^-1)/(1 + e^-1).
    model = GenerativeGlobalModel(eta=(0.5, 0.5), beta=[[0.5, 0.5], [0.5, 0.5]])
    loc = Locale("x", (Instance((0,), (0,)),))
    mu = vb_update_mu(np.array([[2.0, 1.0], [1.0, 2.0]]), model, loc)
    expect = 1.0 / (1.0 + math.exp(-1.0))
    assert mu[0, 0] == pytest.approx(expect, abs=1e-9)
    assert mu[0, 1] == pytest.approx(1.0 - expect, abs=1e-9)


def test_vb_update_mu_empty_local_bag_gives_global_posterior():
    model = two_word_model()
    loc = Locale("x", (Instance((0,), ()),))
    mu = vb_update_mu(np.array([[3.0, 1.0], [1.0, 4.0]]), model, loc)
    assert np.allclose(mu[0], [0.8, 0.2], atol=1e-12)


def test_elbo_increases_after_each_update():
    for seed in range(30):
        model, loc, F = random_suite_locale(seed)
        mu = normalize_log(log_joint_matrix(model, loc), axis=1)
        gamma = np.ones((2, F))
        prev = elbo(gamma, mu, model, loc)
        for _ in range(8):
            gamma = vb_update_gamma(mu, loc, F)
            after_gamma = elbo(gamma, mu, model, loc)
            assert after_gamma >= prev - 1e-9
            mu = vb_update_mu(gamma, model, loc)
            prev = elbo(gamma, mu, model, loc)
            assert prev >= after_gamma - 1e-9


def test_elbo_lower_bounds_exact_log_evidence():
    for seed in range(30):
        model, loc, F = random_suite_locale(seed)
        state, result = variational_infer(model, loc, F)
        oracle = exact_label_posterior(model, loc, F)
        assert result.objective_trace[-1] <= oracle.log_evidence + 1e-9


def test_variational_single_instance_keeps_global_argmax():
    for seed in range(20):
        model, loc, F = random_suite_locale(seed, instances_per_locale=1)
        _, result = variational_infer(model, loc, F)
        expect = normalize_log(log_joint_matrix(model, loc), axis=1)
        assert result.labels[0] == np.argmax(expect[0])


def test_variational_deterministic():
    model, loc, F = random_suite_locale(17)
    _, a = variational_infer(model, loc, F)
    _, b = variational_infer(model, loc, F)
    assert np.array_equal(a.posteriors, b.posteriors)
    assert a.objective_trace == b.objective_trace


def test_gamma_stays_at_least_alpha_and_rows_on_simplex():
    for seed in range(10):
        model, loc, F = random_suite_locale(seed)
        cfg = InferenceConfig(alpha=1.5)
        state, result = variational_infer(model, loc, F, cfg)
        assert np.all(state.gamma >= cfg.alpha - 1e-12)
        assert np.allclose(state.mu.sum(axis=1), 1.0, atol=1e-9)
        params, em = map_em_infer(model, loc, F)
        assert np.allclose(params.phi.sum(axis=1), 1.0, atol=1e-9)
        assert np.allclose(em.posteriors.sum(axis=1), 1.0, atol=1e-9)


def test_permutation_equivariance_both_algorithms():
    model, loc, F = random_suite_locale(23, instances_per_locale=6)
    perm = [5, 2, 0, 4, 1, 3]
    shuffled = Locale("p", tuple(loc.instances[i] for i in perm))
    _, em_a = map_em_infer(model, loc, F)
    _, em_b = map_em_infer(model, shuffled, F)
    assert np.allclose(em_a.posteriors[perm], em_b.posteriors, atol=1e-12)
    _, vb_a = variational_infer(model, loc, F)
    _, vb_b = variational_infer(model, shuffled, F)
    assert np.allclose(vb_a.posteriors[perm], vb_b.posteriors, atol=1e-12)


def test_labels_match_posterior_argmax_with_low_tie():
    model, loc, F = random_suite_locale(31)
    _, result = variational_infer(model, loc, F)
    assert np.array_equal(result.labels, np.argmax(result.posteriors, axis=1))


def test_inference_config_rejects_nonpositive_fields():
    with pytest.raises(ValueError):
        InferenceConfig(max_iters=0)
    with pytest.raises(ValueError):
        InferenceConfig(alpha=-1.0)
