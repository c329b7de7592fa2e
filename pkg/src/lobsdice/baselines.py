"""Action-recovery baselines: behavior cloning and inverse-dynamics labeling."""

from dataclasses import dataclass

import numpy as np

from .datagen import LabeledDataset
from .mdp_core import Policy


def _rows_or_uniform(scores, n_actions):
    probs = np.full((scores.shape[0], n_actions), 1.0 / n_actions)
    totals = scores.sum(axis=1)
    rows = totals > 0
    probs[rows] = scores[rows] / totals[rows, None]
    return Policy(probs)


def bc_policy(data):
    """Behavior cloning on labeled triples: pi(a|s) proportional to count(s,a);
    states never visited get a uniform row."""
    return _rows_or_uniform(data.counts.sum(axis=2).astype(float), data.n_actions)


@dataclass(frozen=True)
class InverseDynamicsModel:
    """Estimated P(a | s, s'), plus a mask of (s, s') pairs backed by data."""

    probs: np.ndarray  # (S, S, A), indexed [s, s_next, a]
    support: np.ndarray  # (S, S) bool

    def __post_init__(self):
        assert np.max(np.abs(self.probs.sum(axis=2) - 1.0)) < 1e-9


def fit_idm(data, smoothing=0.0):
    """Count-based inverse dynamics from labeled triples.

    Rows with no observations of (s, s') fall back to uniform; the support
    mask records which rows are real estimates.
    """
    assert smoothing >= 0
    m = np.transpose(data.counts, (0, 2, 1)).astype(float)  # [s, s', a]
    totals = m.sum(axis=2)
    support = totals > 0
    den = totals + smoothing * data.n_actions
    probs = np.where(
        den[:, :, None] > 0,
        (m + smoothing) / np.where(den > 0, den, 1.0)[:, :, None],
        1.0 / data.n_actions,
    )
    return InverseDynamicsModel(probs=probs, support=support)


def fill_actions(idm, pairs, mode="sample", rng=None):
    """Label observation pairs with actions inferred by an inverse dynamics model.

    sample: draw from P(a|s,s') per pair (uniform where off support);
    argmax: lowest-index maximizer, action 0 where off support.
    """
    n_actions = idm.probs.shape[2]
    s, s2 = pairs.pairs[:, 0], pairs.pairs[:, 1]
    rows = idm.probs[s, s2]
    if mode == "argmax":
        a = np.where(idm.support[s, s2], np.argmax(rows, axis=1), 0)
    elif mode == "sample":
        assert rng is not None, "sample mode needs a generator"
        u = rng.random(len(s))
        a = np.minimum((u[:, None] >= np.cumsum(rows, axis=1)).sum(axis=1), n_actions - 1)
    else:
        raise ValueError(f"unknown fill mode {mode!r}")
    return LabeledDataset(np.stack([s, a, s2], axis=1), pairs.n_states, n_actions)


def bco_policy(pairs, idm):
    """Behavior cloning over observations: pi(a|s) proportional to
    sum_{s'} count(s,s') * P(a|s,s'), uniform where the state was never seen."""
    scores = np.einsum("st,sta->sa", pairs.counts.astype(float), idm.probs)
    return _rows_or_uniform(scores, idm.probs.shape[2])
