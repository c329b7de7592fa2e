import numpy as np
import pytest

from lobsdice.baselines import (
    InverseDynamicsModel,
    bc_policy,
    bco_policy,
    fill_actions,
    fit_idm,
)
from lobsdice.datagen import (
    LabeledDataset,
    MdpGenParams,
    StateOnlyDataset,
    build_empirical_model,
    generate_random_mdp,
    make_rng,
    sample_expert_dataset,
    sample_imperfect_dataset,
)
from lobsdice.dice_solvers import extract_policy
from lobsdice.mdp_core import (
    TabularMdp,
    softmax_policy,
    stationary_distribution,
    uniform_policy,
    value_iteration,
)


def injective_mdp():
    """5 states, 2 actions, deterministic moves +1 / +2 (mod 5): the pair
    (s, s') identifies the action uniquely."""
    S, A = 5, 2
    transition = np.zeros((S, A, S))
    for s in range(S):
        transition[s, 0, (s + 1) % S] = 1.0
        transition[s, 1, (s + 2) % S] = 1.0
    reward = np.zeros((S, A))
    reward[3, :] = 1.0
    p0 = np.zeros(S)
    p0[0] = 1.0
    return TabularMdp(S, A, transition, reward, p0, 0.95)


class TestBcPolicy:
    def test_single_observed_action_is_one_hot(self):
        data = LabeledDataset(np.array([[0, 1, 0]] * 4), 2, 3)
        pol = bc_policy(data)
        assert np.allclose(pol.probs[0], [0.0, 1.0, 0.0])

    def test_counts_become_frequencies(self):
        triples = [[0, 0, 1]] * 3 + [[0, 1, 1]]
        pol = bc_policy(LabeledDataset(np.array(triples), 2, 2))
        assert np.allclose(pol.probs[0], [0.75, 0.25])

    def test_unvisited_state_is_uniform(self):
        data = LabeledDataset(np.array([[0, 0, 1]]), 3, 2)
        pol = bc_policy(data)
        assert np.allclose(pol.probs[1], 0.5)
        assert np.allclose(pol.probs[2], 0.5)

    def test_agrees_with_unit_weight_extraction(self):
        rng = np.random.default_rng(0)
        triples = rng.integers(0, 4, size=(500, 3))
        data = LabeledDataset(triples, 4, 4)
        model = build_empirical_model(data, 4, 4, 0.95, np.array([1.0, 0, 0, 0]))
        pol = extract_policy(model, np.ones((4, 4)))
        assert np.abs(bc_policy(data).probs - pol.probs).max() <= 1e-12


class TestFitIdm:
    def test_injective_dynamics_give_exact_inverse(self):
        mdp = injective_mdp()
        data = sample_imperfect_dataset(mdp, uniform_policy(mdp), 3000, seed=1)
        idm = fit_idm(data)
        s, a, x = data.triples.T
        assert np.all(idm.probs[s, x, a] == 1.0)

    def test_even_counts_split_evenly(self):
        triples = np.array([[0, 0, 1], [0, 0, 1], [0, 1, 1], [0, 1, 1]])
        idm = fit_idm(LabeledDataset(triples, 2, 2))
        assert np.allclose(idm.probs[0, 1], [0.5, 0.5])
        assert idm.support[0, 1]

    def test_unobserved_pair_is_uniform_off_support(self):
        idm = fit_idm(LabeledDataset(np.array([[0, 0, 1]]), 3, 4))
        assert not idm.support[2, 0]
        assert np.allclose(idm.probs[2, 0], 0.25)

    def test_order_of_triples_is_irrelevant(self):
        rng = np.random.default_rng(2)
        triples = rng.integers(0, 3, size=(200, 3))
        a = fit_idm(LabeledDataset(triples, 3, 3))
        b = fit_idm(LabeledDataset(triples[::-1], 3, 3))
        assert np.array_equal(a.probs, b.probs)
        assert np.array_equal(a.support, b.support)

    def test_converges_to_true_posterior(self):
        # P(a|s,s') follows from the agent's visitation and the dynamics
        mdp = generate_random_mdp(MdpGenParams(beta=1.0, seed=3))
        agent = uniform_policy(mdp)
        d = stationary_distribution(mdp, agent)
        data = sample_imperfect_dataset(mdp, agent, 1_000_000, seed=4)
        idm = fit_idm(data)
        joint = d.d_sa[:, :, None] * mdp.transition  # (s, a, s')
        post = joint.transpose(0, 2, 1)  # (s, s', a)
        totals = post.sum(axis=2, keepdims=True)
        dense = (totals[:, :, 0] >= 1e-3) & idm.support
        post = np.where(totals > 0, post / np.where(totals > 0, totals, 1.0), 0.0)
        tv_rows = 0.5 * np.abs(idm.probs - post).sum(axis=2)
        assert tv_rows[dense].max() < 0.02


class TestFillActions:
    def one_hot_idm(self):
        mdp = injective_mdp()
        probs = np.zeros((5, 5, 2))
        support = np.zeros((5, 5), dtype=bool)
        for s in range(5):
            for a in range(2):
                x = np.argmax(mdp.transition[s, a])
                probs[s, x, a] = 1.0
                support[s, x] = True
        probs[~support] = 0.5
        return InverseDynamicsModel(probs, support), mdp

    def test_one_hot_model_recovers_actions_in_both_modes(self):
        idm, mdp = self.one_hot_idm()
        expert = softmax_policy(value_iteration(mdp), 0.01)
        pairs = sample_expert_dataset(mdp, expert, 500, seed=5)
        truth = np.array([np.argmax(idm.probs[s, x]) for s, x in pairs.pairs])
        for mode, rng in (("argmax", None), ("sample", make_rng(6))):
            filled = fill_actions(idm, pairs, mode=mode, rng=rng)
            assert np.array_equal(filled.triples[:, 1], truth)
            assert np.array_equal(filled.triples[:, [0, 2]], pairs.pairs)

    def test_same_seed_same_fill(self):
        rng = np.random.default_rng(7)
        triples = rng.integers(0, 3, size=(300, 3))
        idm = fit_idm(LabeledDataset(triples, 3, 3))
        pairs = StateOnlyDataset(rng.integers(0, 3, size=(300, 2)), 3)
        a = fill_actions(idm, pairs, mode="sample", rng=make_rng(8))
        b = fill_actions(idm, pairs, mode="sample", rng=make_rng(8))
        assert np.array_equal(a.triples, b.triples)

    def test_sampled_split_tracks_posterior(self):
        # a 50/50 row filled 1e5 times should split within 1% (6 sigma)
        probs = np.zeros((2, 2, 2))
        probs[:, :, :] = 0.5
        idm = InverseDynamicsModel(probs, np.ones((2, 2), dtype=bool))
        pairs = StateOnlyDataset(np.tile([0, 1], (100_000, 1)), 2)
        filled = fill_actions(idm, pairs, mode="sample", rng=make_rng(9))
        frac = filled.triples[:, 1].mean()
        assert abs(frac - 0.5) < 0.01

    def test_argmax_needs_no_generator_and_is_stable(self):
        rng = np.random.default_rng(10)
        triples = rng.integers(0, 3, size=(100, 3))
        idm = fit_idm(LabeledDataset(triples, 3, 3))
        pairs = StateOnlyDataset(rng.integers(0, 3, size=(50, 2)), 3)
        a = fill_actions(idm, pairs, mode="argmax")
        b = fill_actions(idm, pairs, mode="argmax")
        assert np.array_equal(a.triples, b.triples)

    def test_off_support_argmax_uses_first_action(self):
        idm = fit_idm(LabeledDataset(np.array([[0, 1, 1]]), 3, 2))
        pairs = StateOnlyDataset(np.array([[2, 2]]), 3)
        filled = fill_actions(idm, pairs, mode="argmax")
        assert filled.triples[0, 1] == 0

    def test_unknown_mode_rejected(self):
        idm = fit_idm(LabeledDataset(np.array([[0, 0, 1]]), 2, 2))
        pairs = StateOnlyDataset(np.array([[0, 1]]), 2)
        with pytest.raises(ValueError):
            fill_actions(idm, pairs, mode="modal")


class TestBcoPolicy:
    def test_perfect_inverse_recovers_true_actions(self):
        # injective dynamics let the labels be reconstructed exactly, so the
        # cloned-from-observations policy must equal cloning the true actions
        mdp = injective_mdp()
        expert = softmax_policy(value_iteration(mdp), 0.01)
        pairs = sample_expert_dataset(mdp, expert, 2000, seed=11)
        data = sample_imperfect_dataset(mdp, uniform_policy(mdp), 5000, seed=12)
        pol = bco_policy(pairs, fit_idm(data))
        s, x = pairs.pairs.T
        truth = mdp.transition[s, :, x].argmax(axis=1)
        bc = bc_policy(LabeledDataset(np.stack([s, truth, x], axis=1), 5, 2))
        visited = np.unique(s)
        assert np.abs(pol.probs[visited] - bc.probs[visited]).max() <= 1e-12

    def test_uniform_inverse_gives_uniform_policy(self):
        probs = np.full((3, 3, 4), 0.25)
        idm = InverseDynamicsModel(probs, np.ones((3, 3), dtype=bool))
        pairs = StateOnlyDataset(np.array([[0, 1], [0, 2], [1, 0]]), 3)
        pol = bco_policy(pairs, idm)
        assert np.allclose(pol.probs, 0.25)

    def test_unseen_state_is_uniform(self):
        probs = np.zeros((3, 3, 2))
        probs[:, :, 0] = 1.0
        idm = InverseDynamicsModel(probs, np.ones((3, 3), dtype=bool))
        pairs = StateOnlyDataset(np.array([[0, 1]]), 3)
        pol = bco_policy(pairs, idm)
        assert np.allclose(pol.probs[0], [1.0, 0.0])
        assert np.allclose(pol.probs[2], 0.5)
