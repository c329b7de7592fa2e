"""Random MDP generation, offline dataset sampling, count-based empirical estimates.

Sampling draws i.i.d. from exact discounted stationary distributions (the
generator knows the true MDP), so dataset sizes behave like transition counts
with no horizon bookkeeping. All randomness flows through counter-based Philox
streams derived from explicit seeds; same seed, same bytes.
"""

from dataclasses import dataclass, field

import numpy as np

from .mdp_core import TabularMdp, stationary_distribution

DEFAULT_SMOOTHING = 1e-3
DEFAULT_CLIP = 20.0


def make_rng(seed):
    """Philox generator from an integer seed or a pre-split SeedSequence."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.Philox(seed))


def subseed(master_seed, *key):
    """Derive an independent 64-bit subseed from a master seed and an integer key path."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class MdpGenParams:
    beta: float
    seed: int
    n_states: int = 20
    n_actions: int = 4
    connectivity: int = 4
    gamma: float = 0.95

    def __post_init__(self):
        assert 0.0 <= self.beta <= 1.0
        assert self.connectivity <= self.n_states


@dataclass(frozen=True)
class StateOnlyDataset:
    """Expert demonstrations: (s, s') pairs plus their count table."""

    pairs: np.ndarray
    n_states: int
    counts: np.ndarray = field(init=False)

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "pairs", pairs)
        assert pairs.size == 0 or (pairs.min() >= 0 and pairs.max() < self.n_states)
        c = np.zeros((self.n_states, self.n_states))
        np.add.at(c, (pairs[:, 0], pairs[:, 1]), 1.0)
        object.__setattr__(self, "counts", c)
        assert c.sum() == len(pairs)

    def __len__(self):
        return len(self.pairs)


@dataclass(frozen=True)
class LabeledDataset:
    """Imperfect demonstrations: (s, a, s') triples plus their count table."""

    triples: np.ndarray
    n_states: int
    n_actions: int
    counts: np.ndarray = field(init=False)

    def __post_init__(self):
        triples = np.asarray(self.triples, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "triples", triples)
        if triples.size:
            assert triples.min() >= 0
            assert triples[:, 0].max() < self.n_states and triples[:, 2].max() < self.n_states
            assert triples[:, 1].max() < self.n_actions
        c = np.zeros((self.n_states, self.n_actions, self.n_states))
        np.add.at(c, (triples[:, 0], triples[:, 1], triples[:, 2]), 1.0)
        object.__setattr__(self, "counts", c)
        assert c.sum() == len(triples)

    def __len__(self):
        return len(self.triples)


@dataclass(frozen=True)
class EmpiricalModel:
    """Count-based model: kernel t_hat, distributions of the labeled data, known p0.

    d_i_sas is the raw triple distribution counts/N; it equals
    d_i_sa[s,a] * t_hat[s,a,s'] by construction and is the weighting measure for
    every per-transition-sample objective, so it is stored exactly rather than
    recomputed as a product.
    """

    n_states: int
    n_actions: int
    gamma: float
    t_hat: np.ndarray
    d_i_sa: np.ndarray
    d_i_ss: np.ndarray
    d_i_sas: np.ndarray
    p0: np.ndarray
    support_sa: np.ndarray
    n_samples: int = 0

    def __post_init__(self):
        assert np.max(np.abs(self.t_hat.sum(axis=2) - 1.0)) < 1e-12
        assert abs(self.d_i_sa.sum() - 1.0) < 1e-12
        assert abs(self.d_i_ss.sum() - 1.0) < 1e-12


@dataclass(frozen=True)
class LogRatioTable:
    """Clamped table r[s,s'] of log pair-density ratios (expert over imperfect)."""

    r: np.ndarray
    clip_bound: float

    def __post_init__(self):
        assert np.all(np.abs(self.r) <= self.clip_bound)


def generate_random_mdp(params):
    """Random MDP with `connectivity` successors per (s,a) and stochasticity knob beta.

    Each transition row sits on `connectivity` distinct successor states and
    equals (1-beta) * one-hot + beta * Dirichlet(1,..,1); beta=0 gives a
    deterministic MDP, beta=1 a fully random row. p0 is a point mass on state 0
    and reward 1 sits on a single uniformly drawn non-initial state.
    """
    rng = make_rng(params.seed)
    S, A, k = params.n_states, params.n_actions, params.connectivity
    reward_state = 1 + int(rng.integers(S - 1)) if S > 1 else 0
    T = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            succ = rng.choice(S, size=k, replace=False)
            row = np.zeros(k)
            row[int(rng.integers(k))] = 1.0 - params.beta
            row += params.beta * rng.dirichlet(np.ones(k))
            T[s, a, succ] = row
    # renormalize away accumulated rounding so rows sum to 1 exactly enough
    T /= T.sum(axis=2, keepdims=True)
    R = np.zeros((S, A))
    R[reward_state, :] = 1.0
    p0 = np.zeros(S)
    p0[0] = 1.0
    return TabularMdp(S, A, T, R, p0, params.gamma)


def sample_expert_dataset(mdp, expert, n, seed):
    """n i.i.d. state pairs from the expert's exact pair occupancy."""
    assert n >= 1
    rng = make_rng(seed)
    d_ss = stationary_distribution(mdp, expert).d_ss
    flat = d_ss.ravel() / d_ss.sum()
    idx = rng.choice(flat.size, size=n, p=flat)
    pairs = np.stack(np.divmod(idx, mdp.n_states), axis=1)
    return StateOnlyDataset(pairs, mdp.n_states)


def sample_imperfect_dataset(mdp, agent, n, seed):
    """n i.i.d. triples: (s,a) from the agent's exact occupancy, then s' from the true kernel."""
    assert n >= 1
    rng = make_rng(seed)
    d_sa = stationary_distribution(mdp, agent).d_sa
    flat = d_sa.ravel() / d_sa.sum()
    idx = rng.choice(flat.size, size=n, p=flat)
    s, a = np.divmod(idx, mdp.n_actions)
    cum = np.cumsum(mdp.transition[s, a], axis=1)
    u = rng.random(n)
    s2 = np.minimum((u[:, None] >= cum).sum(axis=1), mdp.n_states - 1)
    return LabeledDataset(np.stack([s, a, s2], axis=1), mdp.n_states, mdp.n_actions)


def build_empirical_model(data, n_states, n_actions, gamma, p0):
    """Count-based empirical model; unobserved (s,a) rows become self-loops.

    Self-loops keep the kernel valid without inventing unseen successors; those
    rows carry zero weight in the objectives because d_i_sa is zero there.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    assert data.n_states == n_states and data.n_actions == n_actions
    c = data.counts
    n = float(len(data))
    c_sa = c.sum(axis=2)
    support = c_sa > 0
    t_hat = np.where(support[:, :, None], c / np.maximum(c_sa, 1.0)[:, :, None], 0.0)
    for s in range(n_states):
        for a in range(n_actions):
            if not support[s, a]:
                t_hat[s, a, s] = 1.0
    return EmpiricalModel(
        n_states=n_states,
        n_actions=n_actions,
        gamma=gamma,
        t_hat=t_hat,
        d_i_sa=c_sa / n,
        d_i_ss=c.sum(axis=1) / n,
        d_i_sas=c / n,
        p0=np.asarray(p0, dtype=float),
        support_sa=support,
        n_samples=len(data),
    )


def exact_model(mdp, agent):
    """Model whose estimates are the agent's exact occupancies and the true kernel."""
    occ = stationary_distribution(mdp, agent)
    d_sas = occ.d_sa[:, :, None] * mdp.transition
    return EmpiricalModel(
        n_states=mdp.n_states,
        n_actions=mdp.n_actions,
        gamma=mdp.discount,
        t_hat=mdp.transition.copy(),
        d_i_sa=occ.d_sa,
        d_i_ss=d_sas.sum(axis=1),
        d_i_sas=d_sas,
        p0=mdp.initial_dist.copy(),
        support_sa=occ.d_sa > 0,
    )


def clamped_log_ratio(num, den, clip):
    """log(num/den) with 0/0 -> 0, then clamped to [-clip, clip]."""
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.log(num) - np.log(den)
    r = np.where(np.isnan(r), 0.0, r)
    return np.clip(r, -clip, clip)


def empirical_log_ratio(expert, imperfect, smoothing=DEFAULT_SMOOTHING, clip=DEFAULT_CLIP):
    """Smoothed empirical log ratio of expert to imperfect pair frequencies."""
    assert smoothing >= 0 and clip > 0
    n_e, n_i = float(len(expert)), float(len(imperfect))
    if n_e == 0 and n_i == 0:
        raise ValueError("both datasets empty")
    S = expert.n_states
    cells = float(S * S)
    p_e = (expert.counts + smoothing) / (n_e + smoothing * cells)
    p_i = (imperfect.counts.sum(axis=1) + smoothing) / (n_i + smoothing * cells)
    return LogRatioTable(clamped_log_ratio(p_e, p_i, clip), clip)


def exact_log_ratio(d_e_ss, d_i_ss, clip=DEFAULT_CLIP):
    """Log ratio of two exact pair occupancies, clamped like the empirical one."""
    return LogRatioTable(clamped_log_ratio(d_e_ss, d_i_ss, clip), clip)


def save_dataset(ds, path):
    """Write a dataset in the line-oriented text format (header, then one record per line)."""
    lines = []
    if isinstance(ds, StateOnlyDataset):
        lines.append(f"# ifo-dataset v1 states={ds.n_states} actions=0 kind=expert")
        for s, s2 in ds.pairs:
            lines.append(f"{s} {s2}")
    elif isinstance(ds, LabeledDataset):
        lines.append(f"# ifo-dataset v1 states={ds.n_states} actions={ds.n_actions} kind=imperfect")
        for s, a, s2 in ds.triples:
            lines.append(f"{s} {a} {s2}")
    else:
        raise TypeError(f"not a dataset: {type(ds)!r}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_dataset(path):
    """Read a dataset written by save_dataset; bit-exact round trip."""
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or not lines[0].startswith("# ifo-dataset v1 "):
        raise ValueError(f"{path}: missing ifo-dataset v1 header")
    fields = dict(tok.split("=") for tok in lines[0].split()[3:])
    n_states, n_actions, kind = int(fields["states"]), int(fields["actions"]), fields["kind"]
    rows = [[int(tok) for tok in ln.split()] for ln in lines[1:]]
    if kind == "expert":
        return StateOnlyDataset(np.array(rows, dtype=np.int64).reshape(-1, 2), n_states)
    if kind == "imperfect":
        return LabeledDataset(np.array(rows, dtype=np.int64).reshape(-1, 3), n_states, n_actions)
    raise ValueError(f"{path}: unknown dataset kind {kind!r}")
