import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nadd.adversarial import (AttackConfig, SmoothClassifier, block_rng, evaluate_robustness, pgd_attack,
                              perturbation_norm, project)
from nadd.denoiser import ExactDenoiser
from nadd.distributions import GaussianMixture, LabeledMixture, bimodal
from nadd.purify import NaddConfig, Purifier
from nadd.schedule import build_grid
from nadd.solver import UpdateFn


def _clf2():
    mix = GaussianMixture([0.3, 0.3, 0.4], [[-1, 0], [1, 0.5], [0, -1]], [[0.2, 0.1], [0.3, 0.3], [0.5, 0.2]])
    return SmoothClassifier(LabeledMixture(mix, [0, 1, 1]), temperature=2.0)


@pytest.fixture
def clf2():
    return _clf2()


def test_loss_gradient_matches_differences(clf2):
    x = np.array([0.2, -0.3])
    h = 1e-6
    fd = [(clf2.loss(x + h * e, 1) - clf2.loss(x - h * e, 1)) / (2 * h) for e in np.eye(2)]
    np.testing.assert_allclose(clf2.loss_grad(x, 1), fd, rtol=1e-6)


def test_boundary_crossing_example():
    # start at -0.3 (class 0); four sign steps of 0.25 inside a 0.5 box end at +0.2
    clf = SmoothClassifier(bimodal(1.0, 0.05))
    cfg = AttackConfig(norm="l_inf", budget=0.5, step_size=0.25, iterations=4,
                       attack_target="classifier_only")
    out = pgd_attack(np.array([-0.3]), 0, clf, cfg)
    assert abs(out[0] - 0.2) <= 1e-9
    assert clf.predict(out) == 1


@settings(max_examples=30, deadline=None)
@given(norm=st.sampled_from(["l_inf", "l2"]), budget=st.floats(0.01, 2.0), step=st.floats(0.01, 3.0),
       seed=st.integers(0, 1000))
def test_every_iterate_is_inside_the_ball(norm, budget, step, seed):
    x = np.random.default_rng(seed).normal(size=(8, 2))
    hist = []
    cfg = AttackConfig(norm=norm, budget=budget, step_size=step, iterations=6, attack_target="classifier_only")
    pgd_attack(x, np.zeros(8, dtype=int), _clf2(), cfg, history=hist)
    assert len(hist) == 6
    for delta in hist:
        assert np.all(perturbation_norm(delta, norm) <= budget)


@settings(max_examples=60, deadline=None)
@given(v=st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), budget=st.floats(1e-3, 10.0))
def test_l2_projection(v, budget):
    d = np.array(v)
    p = project(d, "l2", budget)
    assert perturbation_norm(p, "l2") <= budget
    if perturbation_norm(d, "l2") <= budget:
        np.testing.assert_array_equal(p, d)
    else:
        np.testing.assert_allclose(p, d * budget / np.linalg.norm(d), rtol=1e-12)


def test_linf_projection_clips():
    np.testing.assert_array_equal(project(np.array([0.5, -2.0, 0.1]), "l_inf", 0.3), [0.3, -0.3, 0.1])


def test_clamp_keeps_inputs_in_range(clf2):
    cfg = AttackConfig(budget=1.0, step_size=0.5, iterations=3, clamp=(-0.5, 0.5),
                       attack_target="classifier_only")
    out = pgd_attack(np.array([[0.4, -0.4]]), [0], clf2, cfg)
    assert np.all(np.abs(out) <= 0.5)


@pytest.mark.parametrize("kw", [dict(norm="l1"), dict(budget=0.0), dict(iterations=0), dict(eot_samples=0),
                                dict(attack_target="x"), dict(attack_gradient="x"), dict(clamp=(1.0, 0.0))])
def test_attack_config_validation(kw):
    with pytest.raises(ValueError):
        AttackConfig(**kw).validate()


def test_full_gradient_equals_bpda_for_identity_pipeline(clf2):
    x = np.array([[0.1, 0.2]])
    common = dict(budget=0.2, step_size=0.05, iterations=3, eot_samples=2)
    ident = lambda z, rng: z  # noqa: E731
    a = pgd_attack(x, [0], clf2, AttackConfig(attack_gradient="bpda", **common), ident, 0)
    b = pgd_attack(x, [0], clf2, AttackConfig(attack_gradient="full", fd_step=1e-6, **common), ident, 0)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_full_gradient_through_purifier_runs():
    lmix = bimodal(1.0, 0.05)
    grid = build_grid(10, 0.01, 4.0)
    pur = Purifier(NaddConfig(t_prime=1.0, t_stop=0.1, kappa_min=0.1, kappa_max=0.2), grid,
                   UpdateFn("euler", ExactDenoiser(lmix.mixture)))
    cfg = AttackConfig(budget=0.3, step_size=0.1, iterations=2, attack_gradient="full", fd_step=1e-3)
    out = pgd_attack(np.array([[-0.5]]), [0], SmoothClassifier(lmix), cfg, pur, 1)
    assert np.all(np.abs(out + 0.5) <= 0.3)


def test_block_rng_is_stable():
    a = block_rng(3, 1, 2).standard_normal(4)
    np.testing.assert_array_equal(a, np.random.default_rng([3, 1, 2]).standard_normal(4))
    assert not np.array_equal(a, block_rng(3, 2, 2).standard_normal(4))


def test_robustness_evaluation_is_reproducible():
    lmix = bimodal(1.0, 0.05)
    clf = SmoothClassifier(lmix)
    grid = build_grid(10, 0.01, 4.0)
    pur = Purifier(NaddConfig(t_prime=1.0, t_stop=0.1, kappa_min=0.1, kappa_max=0.2), grid,
                   UpdateFn("euler", ExactDenoiser(lmix.mixture)))
    atk = AttackConfig(budget=0.5, step_size=0.2, iterations=3)
    r1 = evaluate_robustness(lmix, clf, pur, atk, 60, 11, block_size=25)
    r2 = evaluate_robustness(lmix, clf, pur, atk, 60, 11, block_size=25)
    np.testing.assert_array_equal(r1.records["purified"], r2.records["purified"])
    assert r1.robust_accuracy == r1.robust_correct / 60
    assert r1.records["input"].shape == (60, 1)
    # the first block does not depend on how many trials follow it
    r3 = evaluate_robustness(lmix, clf, pur, atk, 25, 11, block_size=25)
    np.testing.assert_array_equal(r3.records["purified"], r1.records["purified"][:25])


def test_undefended_classifier_is_broken_by_large_budget():
    lmix = bimodal(1.0, 0.05)
    rep = evaluate_robustness(lmix, SmoothClassifier(lmix), None,
                              AttackConfig(budget=1.5, step_size=0.5, iterations=5), 100, 0)
    assert rep.standard_accuracy > 0.99
    assert rep.robust_accuracy < 0.05
