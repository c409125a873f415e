import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nadd.denoiser import ExactDenoiser
from nadd.distributions import bimodal
from nadd.purify import (MAX_GAMMA, NaddConfig, Purifier, correction_slope, correction_weight,
                         forward_noise, gamma_schedule, make_ring_target, purify, ring_radii,
                         stochastic_inflate)
from nadd.schedule import build_grid
from nadd.solver import UpdateFn, integrate


@pytest.fixture
def setup():
    lmix = bimodal(1.0, 0.05, 1)
    grid = build_grid(29, 0.002, 16.0)
    return lmix, grid, UpdateFn("heun", ExactDenoiser(lmix.mixture))


def test_gamma_values():
    assert gamma_schedule(1.0, 29, 2.0, 0.0, math.inf) == pytest.approx(2 / 29, abs=1e-16)
    assert gamma_schedule(1.0, 10, 40.0, 0.0, math.inf) == pytest.approx(math.sqrt(2) - 1, rel=1e-15)
    assert MAX_GAMMA == pytest.approx(0.41421356237309504880, rel=1e-15)
    assert gamma_schedule(1.0, 29, 2.0, 2.0, 5.0) == 0.0
    assert gamma_schedule(1.0, 29, 0.0, 0.0, 5.0) == 0.0


def test_correction_weight_power_law():
    g = build_grid(10, 0.1, 1.0, 1.0)
    assert correction_weight(0.05, g, 0.05, 0.5) == 0.0
    assert correction_weight(0.55, g, 0.05, 0.5) == pytest.approx(math.sqrt(0.45))
    assert correction_weight(1.0, g, 0.05, 0.0) == 1.0


def test_stochastic_inflate_variance(rng):
    x = np.zeros(400_000)
    out, t_hat = stochastic_inflate(x, 2.0, 0.5, 1.0, rng)
    assert t_hat == 3.0
    assert np.var(out) == pytest.approx(9.0 - 4.0, rel=0.01)
    same, _ = stochastic_inflate(x, 2.0, 0.0, 1.0, rng)
    assert same is x
    with pytest.raises(ValueError):
        stochastic_inflate(x, 1.0, -0.1, 1.0, rng)


def test_forward_noise_variance(rng):
    g = build_grid(29, 0.002, 16.0)
    t = float(g.times[20])
    x = np.zeros((200_000, 1))
    noisy, path = forward_noise(x, g, t, rng)
    assert path.shape == (21, 200_000, 1)
    assert np.var(noisy) == pytest.approx(t**2 - g.t_min**2, rel=0.01)
    one, _ = forward_noise(x, g, t, rng, closed_form=True)
    assert np.var(one) == pytest.approx(t**2 - g.t_min**2, rel=0.01)
    with pytest.raises(ValueError):
        forward_noise(x, g, 1.2345, rng)


# below ~1e-154 the squared norm itself underflows in numpy
@settings(max_examples=50, deadline=None)
@given(lo=st.one_of(st.just(0.0), st.floats(1e-150, 2.0)), rel=st.floats(1e-12, 2.0), d=st.integers(1, 5),
       seed=st.integers(0, 2**32 - 1))
def test_ring_offsets_lie_on_ring(lo, rel, d, seed):
    hi = lo * (1 + rel) if lo > 0 else rel
    ring = make_ring_target(np.zeros((64, d)), lo, hi, np.random.default_rng(seed))
    n = np.linalg.norm(ring.offset, axis=-1)
    assert np.all((lo <= n) & (n <= hi))
    np.testing.assert_array_equal(ring.target, ring.base + ring.offset)


def test_degenerate_ring():
    rng = np.random.default_rng(0)
    assert np.all(make_ring_target(np.ones((100, 2)), 0.0, 0.0, rng).offset == 0)
    # a float norm cannot always equal an arbitrary radius exactly; one ulp is the best possible
    n = np.linalg.norm(make_ring_target(np.zeros((1000, 2)), 0.375, 0.375, rng).offset, axis=-1)
    np.testing.assert_allclose(n, 0.375, rtol=2.3e-16)


def test_ring_rejects_inverted_radii(rng):
    with pytest.raises(ValueError):
        make_ring_target(np.zeros(2), 1.0, 0.5, rng)


def test_ring_radii_scale_with_dimension():
    cfg = NaddConfig(kappa_min=0.5, kappa_max=1.0, kappa_sqrt_d=True)
    assert ring_radii(cfg, 4) == (1.0, 2.0)
    assert ring_radii(cfg.replace(kappa_sqrt_d=False), 4) == (0.5, 1.0)


def test_full_weight_step_lands_on_target(rng):
    ring = make_ring_target(np.array([0.3, -0.2]), 0.5, 0.5, rng)
    x = np.array([4.0, 1.0])
    c = correction_slope(ring, x, 1.0, 2.0)
    np.testing.assert_allclose(x + (1.0 - 2.0) * c, ring.target, rtol=1e-13)
    with pytest.raises(ZeroDivisionError):
        correction_slope(ring, x, 1.0, 1.0)


def test_zero_weight_and_churn_match_plain_chain(setup):
    lmix, grid, u = setup
    cfg = NaddConfig(t_prime=4.0, s_churn=0.0, weight_override=0.0, kappa_min=0.1, kappa_max=0.2)
    x = np.array([[0.9], [-1.1], [0.2]])
    traj = purify(x, cfg, grid, u, np.random.default_rng(5))
    k = grid.snap_index(4.0)
    noisy, _ = forward_noise(x, grid, float(grid.times[k]), np.random.default_rng(5))
    np.testing.assert_array_equal(traj.reverse[0], noisy)
    chain = [noisy]
    for i in range(k, 0, -1):
        chain.append(integrate(u, chain[-1], grid.times[[i, i - 1]]))
    np.testing.assert_array_equal(traj.reverse, np.stack(chain))
    assert all(w == 0 for w in traj.weights_used) and all(g == 0 for g in traj.gammas_used)


def test_t_prime_snaps_down(setup):
    lmix, grid, u = setup
    traj = purify(np.zeros(1), NaddConfig(t_prime=15.0), grid, u, np.random.default_rng(0))
    assert traj.reverse_times[0] == grid.times[27]
    assert traj.reverse_times[-1] == grid.t_min
    assert len(traj.weights_used) == 27


def test_cutoff_state_is_last_corrected_step(setup):
    lmix, grid, u = setup
    cfg = NaddConfig(t_prime=16.0, t_stop=0.585)
    traj = purify(np.ones(1), cfg, grid, u, np.random.default_rng(1))
    last = max(i for i, t in enumerate(traj.reverse_times[1:], 1) if t > 0.585)
    assert traj.cutoff_time == traj.reverse_times[last]
    np.testing.assert_array_equal(traj.cutoff_state, traj.reverse[last])
    assert all((w > 0) == (t > 0.585) for w, t in zip(traj.weights_used, traj.reverse_times[1:]))


def test_gamma_is_taken_at_destination(setup):
    lmix, grid, u = setup
    cfg = NaddConfig(s_churn=2.0, s_min=1.0, s_max=4.0)
    traj = purify(np.ones(1), cfg, grid, u, np.random.default_rng(1))
    for g, t in zip(traj.gammas_used, traj.reverse_times[1:]):
        assert g == (2 / 29 if 1.0 <= t <= 4.0 else 0.0)


def test_same_seed_same_result(setup):
    lmix, grid, u = setup
    p = Purifier(NaddConfig(), grid, u)
    x = np.linspace(-1, 1, 7)[:, None]
    np.testing.assert_array_equal(p(x, np.random.default_rng(3)), p(x, np.random.default_rng(3)))
    assert not np.array_equal(p(x, np.random.default_rng(3)), p(x, np.random.default_rng(4)))


@pytest.mark.parametrize("changes,field", [
    (dict(t_stop=-0.1), "t_stop"),
    (dict(t_stop=20.0), "t_stop"),
    (dict(beta=1.5), "beta"),
    (dict(kappa_min=2.0), "kappa_min"),
    (dict(s_churn=-1.0), "s_churn"),
    (dict(s_noise=0.0), "s_noise"),
    (dict(weight_override=1.5), "weight_override"),
    (dict(t_prime=32.0, t_stop=0.5), "t_prime"),
])
def test_config_invariants(changes, field):
    grid = build_grid(29, 0.002, 16.0)
    fields = [k for k, _ in NaddConfig(**changes).problems(grid)]
    assert field in fields
    with pytest.raises(ValueError):
        NaddConfig(**changes).validate(grid)


def test_zero_t_stop_is_allowed():
    assert NaddConfig(t_stop=0.0).problems() == []


def test_reversed_t_stop_message():
    msgs = [m for _, m in NaddConfig(t_prime=1.0, t_stop=2.0).problems()]
    assert any("t_stop < t_prime" in m for m in msgs)
