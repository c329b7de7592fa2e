"""Tabular MDP primitives: exact planning, exact stationary distributions, metrics.

Everything here is dense numpy on small tables (the benchmark uses 20 states,
4 actions), so exact linear solves are preferred over iterative schemes.
"""

from dataclasses import dataclass

import numpy as np

ROW_TOL = 1e-12
FLOW_TOL = 1e-9


@dataclass(frozen=True)
class TabularMdp:
    """Finite MDP: transition tensor T[s,a,s'], reward R[s,a], initial p0, discount."""

    n_states: int
    n_actions: int
    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    discount: float

    def __post_init__(self):
        T, p0 = self.transition, self.initial_dist
        assert T.shape == (self.n_states, self.n_actions, self.n_states)
        assert np.all(T >= 0) and np.all(p0 >= 0)
        assert np.max(np.abs(T.sum(axis=2) - 1.0)) < ROW_TOL
        assert abs(p0.sum() - 1.0) < ROW_TOL
        assert 0.0 < self.discount < 1.0


@dataclass(frozen=True)
class Policy:
    """Row-stochastic table pi[s,a]."""

    probs: np.ndarray

    def __post_init__(self):
        assert np.all(self.probs >= 0)
        assert np.max(np.abs(self.probs.sum(axis=1) - 1.0)) < ROW_TOL


@dataclass(frozen=True)
class StationaryDistribution:
    """Discounted occupancies: d_sa[s,a] over state-actions, d_ss[s,s'] over state pairs."""

    d_sa: np.ndarray
    d_ss: np.ndarray

    def __post_init__(self):
        assert np.all(self.d_sa >= -0.0) and np.all(self.d_ss >= -0.0)
        assert abs(self.d_sa.sum() - 1.0) < FLOW_TOL
        assert abs(self.d_ss.sum() - 1.0) < FLOW_TOL


def value_iteration(mdp, tol=1e-10):
    """Optimal Q table, iterated until the Bellman backup moves Q by < tol (sup norm)."""
    assert tol > 0
    q = np.zeros((mdp.n_states, mdp.n_actions))
    while True:
        v = q.max(axis=1)
        q_next = mdp.reward + mdp.discount * mdp.transition @ v
        if np.max(np.abs(q_next - q)) < tol:
            return q_next
        q = q_next


def softmax_policy(q, temperature):
    """Policy with pi[s,a] proportional to exp(q[s,a]/temperature), max-subtracted."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    z = q / temperature
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return Policy(e / e.sum(axis=1, keepdims=True))


def uniform_policy(mdp):
    """Uniform-random policy over actions."""
    return Policy(np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions))


def flow_residual(mdp, d_sa):
    """Residual of the Bellman flow balance sum_a d[s,a] = (1-g)p0[s] + g sum T[.,.,s]d[.,.]."""
    into = np.einsum("xas,xa->s", mdp.transition, d_sa)
    return d_sa.sum(axis=1) - (1.0 - mdp.discount) * mdp.initial_dist - mdp.discount * into


def stationary_distribution(mdp, policy):
    """Exact discounted occupancy of a policy, by direct linear solve.

    Solves rho = (1-g) p0 + g P_pi^T rho where P_pi[s,s'] = sum_a pi[s,a] T[s,a,s'],
    then d_sa = rho[:,None]*pi and d_ss[s,s'] = sum_a T[s,a,s'] d_sa[s,a].
    """
    g = mdp.discount
    p_pi = np.einsum("sa,sax->sx", policy.probs, mdp.transition)
    rho = np.linalg.solve(np.eye(mdp.n_states) - g * p_pi.T, (1.0 - g) * mdp.initial_dist)
    # the solve can leave -1e-18 style dust on unreachable states
    rho = np.maximum(rho, 0.0)
    d_sa = rho[:, None] * policy.probs
    d_ss = np.einsum("sax,sa->sx", mdp.transition, d_sa)
    res = np.max(np.abs(flow_residual(mdp, d_sa)))
    if res > FLOW_TOL:
        raise ArithmeticError(f"stationary distribution flow residual {res:.3e} exceeds {FLOW_TOL}")
    return StationaryDistribution(d_sa, d_ss)


def tv_distance(p, q):
    """Total variation distance 0.5 * sum |p - q| between two distribution tables."""
    p = np.asarray(p)
    q = np.asarray(q)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())
