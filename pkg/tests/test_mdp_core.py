import numpy as np
import pytest

from lobsdice.mdp_core import (
    Policy,
    TabularMdp,
    flow_residual,
    softmax_policy,
    stationary_distribution,
    tv_distance,
    uniform_policy,
    value_iteration,
)


def single_state_mdp(reward=1.0, gamma=0.95):
    return TabularMdp(
        n_states=1,
        n_actions=1,
        transition=np.ones((1, 1, 1)),
        reward=np.full((1, 1), reward),
        initial_dist=np.ones(1),
        discount=gamma,
    )


def random_mdp(rng, n_states=5, n_actions=3, gamma=0.95):
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    return TabularMdp(
        n_states=n_states,
        n_actions=n_actions,
        transition=transition,
        reward=rng.uniform(0.0, 1.0, (n_states, n_actions)),
        initial_dist=rng.dirichlet(np.ones(n_states)),
        discount=gamma,
    )


def random_policy(rng, mdp):
    return Policy(rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states))


class TestValueIteration:
    def test_single_state_geometric_sum(self):
        # Q = 1 + 0.95 Q  =>  Q = 1 / (1 - 0.95) = 20
        q = value_iteration(single_state_mdp())
        assert np.allclose(q, 20.0, atol=1e-8)

    def test_zero_reward_gives_zero_values(self):
        q = value_iteration(single_state_mdp(reward=0.0))
        assert np.allclose(q, 0.0)

    def test_two_state_chain(self):
        # s0 -> s1 deterministically, s1 absorbs; reward 1 at s1, gamma 0.5:
        # Q[s1] = 1/(1-0.5) = 2, Q[s0] = 0 + 0.5 * 2 = 1
        transition = np.zeros((2, 1, 2))
        transition[0, 0, 1] = 1.0
        transition[1, 0, 1] = 1.0
        reward = np.array([[0.0], [1.0]])
        mdp = TabularMdp(2, 1, transition, reward, np.array([1.0, 0.0]), 0.5)
        q = value_iteration(mdp)
        assert np.allclose(q[:, 0], [1.0, 2.0], atol=1e-9)


class TestSoftmaxPolicy:
    def test_log_two_gap_gives_one_to_two_odds(self):
        q = np.array([[0.0, np.log(2.0)]])
        pol = softmax_policy(q, 1.0)
        assert np.allclose(pol.probs, [[1.0 / 3.0, 2.0 / 3.0]], atol=1e-12)

    def test_constant_row_is_uniform(self):
        pol = softmax_policy(np.full((3, 4), 2.5), 1.0)
        assert np.allclose(pol.probs, 0.25)

    def test_small_temperature_approaches_argmax(self):
        q = np.array([[0.1, 0.9, 0.3]])
        pol = softmax_policy(q, 1e-8)
        assert np.allclose(pol.probs, [[0.0, 1.0, 0.0]], atol=1e-6)

    def test_invariant_to_constant_shift(self):
        rng = np.random.default_rng(0)
        q = rng.normal(size=(4, 3))
        a = softmax_policy(q, 0.7).probs
        b = softmax_policy(q + 11.0, 0.7).probs
        assert np.abs(a - b).max() <= 1e-12

    def test_rejects_non_positive_temperature(self):
        q = np.zeros((2, 2))
        with pytest.raises(ValueError):
            softmax_policy(q, 0.0)
        with pytest.raises(ValueError):
            softmax_policy(q, -1.0)

    def test_uniform_policy_rows(self):
        rng = np.random.default_rng(1)
        mdp = random_mdp(rng, n_actions=4)
        assert np.allclose(uniform_policy(mdp).probs, 0.25)


class TestStationaryDistribution:
    def test_single_state_occupancy_is_action_distribution(self):
        mdp = single_state_mdp()
        pol = Policy(np.ones((1, 1)))
        d = stationary_distribution(mdp, pol)
        assert np.allclose(d.d_sa, 1.0)
        assert np.allclose(d.d_ss, 1.0)

    def test_tiny_discount_recovers_initial_distribution(self):
        # at gamma ~ 0 the occupancy is just p0(s) pi(a|s)
        rng = np.random.default_rng(2)
        mdp = random_mdp(rng, gamma=1e-9)
        pol = random_policy(rng, mdp)
        d = stationary_distribution(mdp, pol)
        expect = mdp.initial_dist[:, None] * pol.probs
        assert np.abs(d.d_sa - expect).max() <= 1e-6

    def test_matches_power_series(self):
        # (1-g) sum_t g^t rho_t, rho_{t+1} = P_pi^T rho_t; 2000 terms leave
        # a tail below g^2000 / (1-g) ~ 1e-43
        rng = np.random.default_rng(3)
        mdp = random_mdp(rng)
        pol = random_policy(rng, mdp)
        p_pi = np.einsum("sax,sa->sx", mdp.transition, pol.probs)
        rho = mdp.initial_dist.copy()
        acc = np.zeros((mdp.n_states, mdp.n_actions))
        scale = 1.0 - mdp.discount
        for _ in range(2000):
            acc += scale * rho[:, None] * pol.probs
            rho = p_pi.T @ rho
            scale *= mdp.discount
        d = stationary_distribution(mdp, pol)
        assert np.abs(d.d_sa - acc).max() <= 1e-8

    def test_flow_residual_small(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            mdp = random_mdp(rng)
            pol = random_policy(rng, mdp)
            d = stationary_distribution(mdp, pol)
            assert np.abs(flow_residual(mdp, d.d_sa)).max() <= 1e-9

    def test_pair_marginal_consistent(self):
        rng = np.random.default_rng(5)
        mdp = random_mdp(rng)
        pol = random_policy(rng, mdp)
        d = stationary_distribution(mdp, pol)
        pair = np.einsum("sax,sa->sx", mdp.transition, d.d_sa)
        assert np.abs(d.d_ss - pair).max() <= 1e-12


class TestTvDistance:
    def test_identical_distributions(self):
        p = np.array([0.2, 0.3, 0.5])
        assert tv_distance(p, p) == 0.0

    def test_disjoint_supports(self):
        assert tv_distance(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 1.0

    def test_half_overlap(self):
        assert tv_distance(np.array([0.5, 0.5]), np.array([1.0, 0.0])) == 0.5

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            p, q, s = rng.dirichlet(np.ones(6), size=3)
            assert tv_distance(p, q) == tv_distance(q, p)
            assert tv_distance(p, s) <= tv_distance(p, q) + tv_distance(q, s) + 1e-15

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            tv_distance(np.ones(3) / 3, np.ones(4) / 4)
