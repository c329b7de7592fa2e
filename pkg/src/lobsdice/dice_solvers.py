"""Convex dual objectives for occupancy matching and their deterministic minimizers.

Naming scheme, used consistently below:

* ``ld`` objectives carry the exponential penalties linearly (unnormalized
  exponential cone form); ``fd`` objectives wrap each expectation in a log,
  giving self-normalized log-sum-exp terms that cannot overflow and are
  invariant to constant shifts of the dual variables.
* The plain functions weight every (s,a,s') term by the empirical triple
  distribution counts/N, i.e. the per-transition-sample estimator.  The
  ``_model`` variants instead take the inner expectation over the model kernel
  t_hat before exponentiating; both families agree on deterministic kernels
  and differ by a Jensen gap on stochastic ones.  The solvers used for
  cross-validation are per-sample; the benchmark's main algorithm minimizes
  the model form, whose stationarity conditions are exactly the flow and
  pair-marginalization constraints under t_hat.

All minimizers are full batch and deterministic: zero initialization and
Barzilai-Borwein steps with Armijo backtracking for the per-sample family,
damped Newton for the stiffer model form (curvature grows like 1/alpha).
"""

from dataclasses import dataclass, field

import numpy as np

from .datagen import DEFAULT_CLIP, DEFAULT_SMOOTHING, clamped_log_ratio
from .mdp_core import Policy

EXP_GUARD = 700.0
DIVERGE_NORM = 1e6


@dataclass(frozen=True)
class SolverOptions:
    alpha: float = 0.01
    max_iters: int = 200_000
    grad_tol: float = 1e-8
    step_rule: str = "armijo"
    init: str = "zeros"

    def __post_init__(self):
        assert self.alpha > 0 and self.grad_tol > 0
        assert self.step_rule == "armijo" and self.init == "zeros"


@dataclass(frozen=True)
class DualSolution:
    """Minimizer output: dual variables, recovered weights, diagnostics."""

    nu: np.ndarray
    mu: np.ndarray | None
    w_sa: np.ndarray
    w_ss: np.ndarray
    w_tilde: np.ndarray
    loss: float
    grad_inf_norm: float
    iterations: int
    converged: bool
    message: str = ""

    def __post_init__(self):
        for w in (self.w_sa, self.w_ss, self.w_tilde):
            assert np.all(w[np.isfinite(w)] >= 0) and not np.any(np.isnan(w))

    def to_text(self):
        """Key-value debug record (not load-bearing for the benchmark)."""
        lines = [
            f"converged: {str(self.converged).lower()}",
            f"iterations: {self.iterations}",
            f"loss: {self.loss:.17g}",
            f"grad_inf_norm: {self.grad_inf_norm:.6e}",
            "nu: " + " ".join(f"{v:.17g}" for v in self.nu),
        ]
        if self.message:
            lines.append(f"message: {self.message}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# shared tensor pieces


def _ehat(mu, nu, gamma):
    """Per-triple multiplier combination -mu(s,s') + g*nu(s') - nu(s), shape (S,A,S)."""
    return -mu[:, None, :] + gamma * nu[None, None, :] - nu[:, None, None]


def _advantage(r, nu, gamma):
    """Per-triple log-ratio advantage r(s,s') + g*nu(s') - nu(s), shape (S,A,S)."""
    return r[:, None, :] + gamma * nu[None, None, :] - nu[:, None, None]


def _wexp(weights, z, guard):
    """weights * exp(z) with off-support z ignored; guard 'raise' rejects exponents > 700."""
    z = np.broadcast_to(z, weights.shape)
    support = weights > 0
    if np.any(support):
        zmax = z[support].max()
        if guard == "raise" and zmax > EXP_GUARD:
            raise ValueError(f"exponent {zmax:.3g} exceeds overflow guard {EXP_GUARD}")
    with np.errstate(over="ignore"):
        return np.where(support, weights * np.exp(np.where(support, z, -np.inf)), 0.0)


def _lse(weights, z):
    """log sum weights*exp(z) over the support of weights, max-subtracted; also the softmax table."""
    z = np.broadcast_to(z, weights.shape)
    support = weights > 0
    m = z[support].max()
    q = np.where(support, weights * np.exp(np.where(support, z - m, -np.inf)), 0.0)
    total = q.sum()
    return m + np.log(total), q / total


def _in_out(q3):
    """State in-flow and out-flow marginals of a triple table."""
    return q3.sum(axis=(0, 1)), q3.sum(axis=(1, 2))


def _e_model(model, mu, nu):
    """Model-kernel inner expectation e(s,a) = E_{s'~t_hat}[-mu + g*nu'] - nu(s)."""
    inner = np.einsum("sax,x->sa", model.t_hat, model.gamma * nu) - np.einsum(
        "sax,sx->sa", model.t_hat, mu
    )
    return inner - nu[:, None]


# ---------------------------------------------------------------------------
# per-sample objectives


def _ld_double_parts(model, r, alpha, mu, nu, guard):
    g = model.gamma
    pair_q = _wexp(model.d_i_ss, r + mu - 1.0, guard)
    trip_q = _wexp(model.d_i_sas, _ehat(mu, nu, g) / alpha - 1.0, guard)
    loss = (1.0 - g) * model.p0 @ nu + pair_q.sum() + alpha * trip_q.sum()
    return loss, pair_q, trip_q


def loss_ld_double(model, r, alpha, mu, nu):
    """Exponential-form dual in (mu, nu), per-transition-sample weighting.

    (1-g)<p0,nu> + E_pairs[exp(r+mu-1)] + alpha * E_triples[exp(ehat/alpha - 1)]
    with ehat(s,a,s') = -mu(s,s') + g*nu(s') - nu(s).  Exponents above 700 raise.
    """
    return _ld_double_parts(model, r.r, alpha, mu, nu, "raise")[0]


def _ld_double_fg(model, r, alpha, x, guard="inf"):
    S = model.n_states
    mu, nu = x[: S * S].reshape(S, S), x[S * S :]
    loss, pair_q, trip_q = _ld_double_parts(model, r, alpha, mu, nu, guard)
    if not np.isfinite(loss):
        return np.inf, None
    g_mu = pair_q - trip_q.sum(axis=1)
    inflow, outflow = _in_out(trip_q)
    g_nu = (1.0 - model.gamma) * model.p0 + model.gamma * inflow - outflow
    return loss, np.concatenate([g_mu.ravel(), g_nu])


def grad_ld_double(model, r, alpha, mu, nu):
    """Analytic gradient of loss_ld_double, returned as (d_mu, d_nu)."""
    S = model.n_states
    x = np.concatenate([mu.ravel(), nu])
    _, g = _ld_double_fg(model, r.r, alpha, x, guard="raise")
    return g[: S * S].reshape(S, S), g[S * S :]


def loss_ld_single(model, r, alpha, nu):
    """Exponential-form dual in nu alone, after substituting the closed-form mu.

    (1-g)<p0,nu> + (1+alpha) * E_triples[exp(advantage/(1+alpha) - 1)]
    with advantage(s,a,s') = r(s,s') + g*nu(s') - nu(s).
    """
    z = _advantage(r.r, nu, model.gamma) / (1.0 + alpha) - 1.0
    q = _wexp(model.d_i_sas, z, "raise")
    return (1.0 - model.gamma) * model.p0 @ nu + (1.0 + alpha) * q.sum()


def grad_ld_single(model, r, alpha, nu):
    """Analytic nu-gradient of loss_ld_single."""
    z = _advantage(r.r, nu, model.gamma) / (1.0 + alpha) - 1.0
    q = _wexp(model.d_i_sas, z, "raise")
    inflow, outflow = _in_out(q)
    return (1.0 - model.gamma) * model.p0 + model.gamma * inflow - outflow


def _weighted_fd_fg(model, reward3, tau, nu):
    """Loss and gradient of the generic log-partition matching dual.

    (1-g)<p0,nu> + tau * log E_triples[exp((reward3 + g*nu' - nu)/tau)];
    the gradient uses softmax-normalized weights, so it never overflows.
    """
    g = model.gamma
    z = (reward3 + g * nu[None, None, :] - nu[:, None, None]) / tau
    lse, w = _lse(model.d_i_sas, z)
    loss = (1.0 - g) * model.p0 @ nu + tau * lse
    inflow, outflow = _in_out(w)
    grad = (1.0 - g) * model.p0 + g * inflow - outflow
    return loss, grad


def loss_fd_single(model, r, alpha, nu):
    """Log-sum-exp form of loss_ld_single; shift-invariant and overflow-free."""
    return _weighted_fd_fg(model, r.r[:, None, :] * np.ones((1, model.n_actions, 1)), 1.0 + alpha, nu)[0]


def grad_fd_single(model, r, alpha, nu):
    """Analytic nu-gradient of loss_fd_single."""
    return _weighted_fd_fg(model, r.r[:, None, :] * np.ones((1, model.n_actions, 1)), 1.0 + alpha, nu)[1]


def _fd_double_parts(model, r, alpha, mu, nu):
    g = model.gamma
    lse1, w1 = _lse(model.d_i_ss, r + mu)
    lse2, w2 = _lse(model.d_i_sas, _ehat(mu, nu, g) / alpha)
    loss = (1.0 - g) * model.p0 @ nu + lse1 + alpha * lse2
    return loss, w1, w2


def loss_fd_double(model, r, alpha, mu, nu):
    """Log-sum-exp dual in (mu, nu), per-transition-sample weighting.

    (1-g)<p0,nu> + log E_pairs[exp(r+mu)] + alpha * log E_triples[exp(ehat/alpha)];
    invariant to mu -> mu + C and nu -> nu + C' separately.
    """
    return _fd_double_parts(model, r.r, alpha, mu, nu)[0]


def _fd_double_fg(model, r, alpha, x):
    S = model.n_states
    mu, nu = x[: S * S].reshape(S, S), x[S * S :]
    loss, w1, w2 = _fd_double_parts(model, r, alpha, mu, nu)
    g_mu = w1 - w2.sum(axis=1)
    inflow, outflow = _in_out(w2)
    g_nu = (1.0 - model.gamma) * model.p0 + model.gamma * inflow - outflow
    return loss, np.concatenate([g_mu.ravel(), g_nu])


# ---------------------------------------------------------------------------
# model-kernel objectives


def _ld_double_model_parts(model, r, alpha, mu, nu, guard):
    g = model.gamma
    pair_q = _wexp(model.d_i_ss, r + mu - 1.0, guard)
    sa_q = _wexp(model.d_i_sa, _e_model(model, mu, nu) / alpha - 1.0, guard)
    loss = (1.0 - g) * model.p0 @ nu + pair_q.sum() + alpha * sa_q.sum()
    return loss, pair_q, sa_q


def loss_ld_double_model(model, r, alpha, mu, nu):
    """Exponential-form dual with the inner expectation taken under t_hat.

    Same shape as loss_ld_double but the triple term is
    alpha * E_{d_i_sa}[exp(e(s,a)/alpha - 1)] with e(s,a) the t_hat-average of
    -mu + g*nu' minus nu(s).  Its stationary point satisfies the flow and
    pair-marginalization balance of d_i_sa * w under t_hat exactly.
    """
    return _ld_double_model_parts(model, r.r, alpha, mu, nu, "raise")[0]


def grad_ld_double_model(model, r, alpha, mu, nu):
    """Analytic gradient of loss_ld_double_model as (d_mu, d_nu)."""
    loss, pair_q, sa_q = _ld_double_model_parts(model, r.r, alpha, mu, nu, "raise")
    g_mu = pair_q - np.einsum("sa,sax->sx", sa_q, model.t_hat)
    pushed = np.einsum("sa,sax->x", sa_q, model.t_hat)
    g_nu = (1.0 - model.gamma) * model.p0 + model.gamma * pushed - sa_q.sum(axis=1)
    return g_mu, g_nu


def _fd_double_model_fg(model, r, alpha, x):
    S = model.n_states
    mu, nu = x[: S * S].reshape(S, S), x[S * S :]
    g = model.gamma
    lse1, w1 = _lse(model.d_i_ss, r + mu)
    lse2, w2 = _lse(model.d_i_sa, _e_model(model, mu, nu) / alpha)
    loss = (1.0 - g) * model.p0 @ nu + lse1 + alpha * lse2
    g_mu = w1 - np.einsum("sa,sax->sx", w2, model.t_hat)
    pushed = np.einsum("sa,sax->x", w2, model.t_hat)
    g_nu = (1.0 - g) * model.p0 + g * pushed - w2.sum(axis=1)
    return loss, np.concatenate([g_mu.ravel(), g_nu])


def loss_fd_double_model(model, r, alpha, mu, nu):
    """Log-sum-exp version of loss_ld_double_model (the benchmark's main objective)."""
    x = np.concatenate([mu.ravel(), nu])
    return _fd_double_model_fg(model, r.r, alpha, x)[0]


# ---------------------------------------------------------------------------
# minimizers


def _loss_floor(reward):
    """Certification level for unbounded duals.

    Every feasible primal point has value >= -max|reward| (the divergence
    terms are nonnegative), and the dual minimum equals the primal value, so
    a dual loss this far below is only reachable when the data cannot carry
    the required initial-state flow and the dual is unbounded below.
    """
    return -100.0 * (1.0 + float(np.max(np.abs(reward))))


def _descend(fg, x0, opts, loss_floor=-np.inf):
    """Deterministic gradient descent: Barzilai-Borwein trial steps, Armijo acceptance.

    The acceptance test is nonmonotone (reference is the worst of the last 10
    values, c=1e-4, shrink 0.5) because BB steps are intentionally jumpy.
    Stops at grad_tol (inf norm), max_iters, a stalled line search, or a
    certified-unbounded dual (loss through the floor, or a runaway iterate;
    see the caller's converged flag).
    """
    x = x0.copy()
    f, g = fg(x)
    assert np.isfinite(f), "objective not finite at the zero initialization"
    fhist = [f]
    x_prev = g_prev = None
    t = 1.0
    iters = 0
    while True:
        ginf = float(np.max(np.abs(g)))
        if ginf <= opts.grad_tol:
            return x, f, ginf, iters, True, "gradient tolerance reached"
        if iters >= opts.max_iters:
            return x, f, ginf, iters, False, "max iterations reached"
        if f < loss_floor:
            message = "loss fell through the feasibility floor; dual appears unbounded below"
            return x, f, ginf, iters, False, message
        if np.max(np.abs(x)) > DIVERGE_NORM:
            message = f"iterate inf-norm exceeded {DIVERGE_NORM:.0e}; dual appears unbounded below"
            return x, f, ginf, iters, False, message
        if x_prev is not None:
            dx = x - x_prev
            dg = g - g_prev
            denom = float(dx @ dg)
            if denom > 0:
                t = min(max(float(dx @ dx) / denom, 1e-12), 1e6)
            else:
                # flat or concave stretch along the move: unbounded direction, run it out fast
                t = min(t * 2.0, 1e6)
        fref = max(fhist[-10:])
        descent = -float(g @ g)
        while True:
            xn = x - t * g
            fn, gn = fg(xn)
            if np.isfinite(fn) and fn <= fref + 1e-4 * t * descent + 1e-12:
                break
            t *= 0.5
            if t < 1e-18:
                ginf = float(np.max(np.abs(g)))
                return x, f, ginf, iters, ginf <= opts.grad_tol, "line search stalled"
        x_prev, g_prev = x, g
        x, f, g = xn, fn, gn
        fhist.append(f)
        iters += 1


def _model_affine_rows(model):
    """Rows of the linear map x = (mu.ravel(), nu) -> e(s,a), one row per (s,a)."""
    S, A = model.n_states, model.n_actions
    t = model.t_hat.reshape(S * A, S)
    rows = np.zeros((S * A, S * S + S))
    i = np.arange(S * A)
    s_of = np.repeat(np.arange(S), A)
    cols = s_of[:, None] * S + np.arange(S)[None, :]
    rows[i[:, None], cols] = -t
    rows[:, S * S :] += model.gamma * t
    rows[i, S * S + s_of] -= 1.0
    return rows


def _advantage_nu_rows(model):
    """Rows of the linear map nu -> g*E_{s'~t_hat}[nu(s')] - nu(s), one per (s,a)."""
    S, A = model.n_states, model.n_actions
    rows = model.gamma * model.t_hat.reshape(S * A, S).copy()
    rows[np.arange(S * A), np.repeat(np.arange(S), A)] -= 1.0
    return rows


def _fd_double_model_hess(model, r, alpha, x, e_rows):
    """Exact Hessian of the model-form log-sum-exp dual: two softmax covariances."""
    S = model.n_states
    mu, nu = _split(x, S)
    _, w1 = _lse(model.d_i_ss, r + mu)
    _, w2 = _lse(model.d_i_sa, _e_model(model, mu, nu) / alpha)
    w1v, w2v = w1.ravel(), w2.ravel()
    hess = np.zeros((S * S + S, S * S + S))
    hess[: S * S, : S * S] -= np.outer(w1v, w1v)
    diag = np.arange(S * S)
    hess[diag, diag] += w1v
    mean_row = e_rows.T @ w2v
    hess += ((e_rows * w2v[:, None]).T @ e_rows - np.outer(mean_row, mean_row)) / alpha
    return hess


def _newton(model, r, alpha, opts):
    """Levenberg-Marquardt damped Newton on the model-form log-sum-exp dual.

    The softmax curvature spans from ~w_min/alpha to ~w_max/alpha across
    support cells, far too wide for first-order steps, but the problem is only
    (S^2+S)-dimensional so exact Hessian solves are cheap.  Steps are accepted
    on a plain decrease with a small absolute slack (near the optimum
    f-differences fall below float resolution) or on a 0.9x drop of the
    gradient inf-norm; the damping lam shrinks or grows with the gain ratio.
    The objective is invariant under constant shifts of mu and of nu, so the
    shift means are projected out of every step.  A loss through the
    feasibility floor stops the loop early as a certified unbounded dual.
    """
    S = model.n_states
    e_rows = _model_affine_rows(model)
    n = S * S + S
    eye = np.eye(n)
    loss_floor = _loss_floor(r)
    x = np.zeros(n)
    f, g = _fd_double_model_fg(model, r, alpha, x)
    lam = 1e-6
    growth = 2.0
    max_iters = int(min(opts.max_iters, 1000))
    iters = 0
    while True:
        ginf = float(np.max(np.abs(g)))
        if ginf <= opts.grad_tol:
            return x, f, ginf, iters, True, "gradient tolerance reached"
        if f < loss_floor or np.max(np.abs(x)) > DIVERGE_NORM:
            message = "loss fell through the feasibility floor; dual appears unbounded below"
            return x, f, ginf, iters, False, message
        if iters >= max_iters:
            return x, f, ginf, iters, False, "max iterations reached"
        hess = _fd_double_model_hess(model, r, alpha, x, e_rows)
        accepted = False
        for _ in range(80):
            try:
                step = np.linalg.solve(hess + lam * eye, -g)
            except np.linalg.LinAlgError:
                lam *= growth
                growth *= 2.0
                continue
            if not np.all(np.isfinite(step)):
                lam *= growth
                growth *= 2.0
                continue
            step[: S * S] -= step[: S * S].mean()
            step[S * S :] -= step[S * S :].mean()
            descent = float(g @ step)
            if descent >= 0.0:
                lam *= growth
                growth *= 2.0
                continue
            fn, gn = _fd_double_model_fg(model, r, alpha, x + step)
            if np.isfinite(fn) and (fn <= f + 1e-12 or float(np.max(np.abs(gn))) <= 0.9 * ginf):
                predicted = 0.5 * float(step @ (lam * step - g))
                ratio = (f - fn) / predicted if predicted > 0.0 else 1.0
                x = x + step
                f, g = fn, gn
                if ratio > 0.75:
                    lam = max(lam / 3.0, 1e-14)
                elif ratio < 0.25:
                    lam = min(lam * 2.0, 1e12)
                growth = 2.0
                accepted = True
                break
            lam *= growth
            growth *= 2.0
        if not accepted:
            return x, f, ginf, iters, False, "line search stalled"
        iters += 1


def _split(x, n_states):
    return x[: n_states * n_states].reshape(n_states, n_states), x[n_states * n_states :]


def _per_sample_weights(model, z3):
    """Support-masked exp(z3), its t_hat-average per (s,a), and the induced pair weights."""
    with np.errstate(over="ignore"):
        w_tilde = np.where(model.d_i_sas > 0, np.exp(z3), 0.0)
    w_tilde = np.where(np.isnan(w_tilde), 0.0, w_tilde)
    w_sa = np.einsum("sax,sax->sa", model.t_hat, w_tilde)
    q_pair = np.einsum("sax,sax->sx", model.d_i_sas, w_tilde)
    total = float((model.d_i_sa * w_sa).sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        w_ss = np.where(model.d_i_ss > 0, q_pair / (model.d_i_ss * total), 0.0)
    w_ss = np.where(np.isnan(w_ss), 0.0, w_ss)
    return w_tilde, w_sa, w_ss, total


def solve_ld_double(model, r, opts):
    """Minimize loss_ld_double over (mu, nu) from zeros; fill weights from the closed forms.

    w_tilde is exp(ehat/alpha - 1) per triple, w_sa its t_hat-average (the
    empirical estimate of the closed-form state-action weight), and w_ss the
    closed-form pair weight exp(r + mu - 1).  At the optimum d_i_sa * w_sa is
    the state-action marginal of the optimal triple occupancy, so its flow
    residual equals the final nu-gradient.
    """
    S = model.n_states
    alpha = opts.alpha
    x0 = np.zeros(S * S + S)
    x, f, ginf, iters, ok, msg = _descend(
        lambda x: _ld_double_fg(model, r.r, alpha, x), x0, opts, _loss_floor(r.r)
    )
    mu, nu = _split(x, S)
    w_tilde, w_sa, _, _ = _per_sample_weights(model, _ehat(mu, nu, model.gamma) / alpha - 1.0)
    w_ss = np.where(model.d_i_ss > 0, np.exp(np.minimum(r.r + mu - 1.0, EXP_GUARD)), 0.0)
    return DualSolution(nu, mu, w_sa, w_ss, w_tilde, f, ginf, iters, ok, msg)


def _solve_weighted_fd(model, reward3, tau, opts):
    """Shared nu-only minimizer for the log-partition matching duals."""
    x0 = np.zeros(model.n_states)
    fg = lambda nu: _weighted_fd_fg(model, reward3, tau, nu)
    nu, f, ginf, iters, ok, msg = _descend(fg, x0, opts, _loss_floor(reward3))
    w_tilde, w_sa, w_ss, total = _per_sample_weights(
        model, (reward3 + model.gamma * nu[None, None, :] - nu[:, None, None]) / tau
    )
    if total > 0 and np.isfinite(total):
        w_sa = w_sa / total
    return DualSolution(nu, None, w_sa, w_ss, w_tilde, f, ginf, iters, ok, msg)


def solve_fd_single(model, r, opts):
    """Minimize loss_fd_single over nu; weights are self-normalized.

    w_tilde(s,a,s') = exp(advantage/(1+alpha)) and
    w_sa = E_{s'~t_hat}[w_tilde] / E_triples[w_tilde].
    """
    reward3 = np.broadcast_to(r.r[:, None, :], model.d_i_sas.shape)
    return _solve_weighted_fd(model, reward3, 1.0 + opts.alpha, opts)


def solve_fd_double(model, r, opts):
    """Minimize loss_fd_double over (mu, nu); used as a cross-check solver."""
    S = model.n_states
    alpha = opts.alpha
    x0 = np.zeros(S * S + S)
    x, f, ginf, iters, ok, msg = _descend(
        lambda x: _fd_double_fg(model, r.r, alpha, x), x0, opts, _loss_floor(r.r)
    )
    mu, nu = _split(x, S)
    w_tilde, w_sa, w_ss, total = _per_sample_weights(model, _ehat(mu, nu, model.gamma) / alpha)
    if total > 0 and np.isfinite(total):
        w_sa = w_sa / total
    return DualSolution(nu, mu, w_sa, w_ss, w_tilde, f, ginf, iters, ok, msg)


def solve_fd_double_model(model, r, opts):
    """Minimize the model-kernel log-sum-exp dual over (mu, nu) by damped Newton.

    This is the production path for the benchmark's main algorithm.  The
    log-sum-exp objective pins (mu, nu) only up to constant shifts, so the
    returned weights are the exponential closed forms normalized to unit mass
    under their base distributions (which is exactly what holds at any shift
    representative of the optimum; raw exponentials would carry an arbitrary
    shift-dependent scale).
    """
    S = model.n_states
    alpha = opts.alpha
    x, f, ginf, iters, ok, msg = _newton(model, r.r, alpha, opts)
    mu, nu = _split(x, S)
    z_sa = _e_model(model, mu, nu) / alpha
    z_sa = z_sa - _lse(model.d_i_sa, z_sa)[0]
    z_ss = r.r + mu
    z_ss = z_ss - _lse(model.d_i_ss, z_ss)[0]
    z_tilde = np.broadcast_to(_ehat(mu, nu, model.gamma) / alpha, model.d_i_sas.shape)
    z_tilde = z_tilde - _lse(model.d_i_sas, z_tilde)[0]
    with np.errstate(over="ignore"):
        w_sa = np.exp(np.minimum(z_sa, EXP_GUARD))
        w_ss = np.exp(np.minimum(z_ss, EXP_GUARD))
        w_tilde = np.exp(np.minimum(z_tilde, EXP_GUARD))
    return DualSolution(nu, mu, w_sa, w_ss, w_tilde, f, ginf, iters, ok, msg)


# ---------------------------------------------------------------------------
# closed forms and policy extraction


def closed_form_w(mu, nu, model, r, alpha):
    """Closed-form maximizers of the inner Lagrangian at fixed (mu, nu).

    w(s,a) = exp(e(s,a)/alpha - 1) with e the t_hat-inner expectation, and
    w_bar(s,s') = exp(r + mu - 1).  Exponents above 700 raise.
    """
    z_sa = _e_model(model, mu, nu) / alpha - 1.0
    z_ss = r.r + mu - 1.0
    for z in (z_sa, z_ss):
        if z.max() > EXP_GUARD:
            raise ValueError(f"exponent {z.max():.3g} exceeds overflow guard {EXP_GUARD}")
    return np.exp(z_sa), np.exp(z_ss)


def mu_closed_form(nu, r, alpha, gamma):
    """Optimal mu at fixed nu: (-alpha*r(s,s') + g*nu(s') - nu(s)) / (1+alpha)."""
    return (-alpha * r.r + gamma * nu[None, :] - nu[:, None]) / (1.0 + alpha)


def extract_policy(model, w_sa):
    """Policy proportional to d_i_sa * w_sa per state; uniform on empty or broken rows."""
    assert np.all(w_sa[np.isfinite(w_sa)] >= 0)
    scores = model.d_i_sa * w_sa
    probs = np.full((model.n_states, model.n_actions), 1.0 / model.n_actions)
    finite = np.all(np.isfinite(scores), axis=1)
    totals = scores.sum(axis=1)
    rows = finite & (totals > 0)
    probs[rows] = scores[rows] / totals[rows, None]
    return Policy(probs)


def extract_policy_weighted_bc(data, w_tilde):
    """Self-normalized weighted behavior cloning: pi(a|s) proportional to the
    dataset sum of w_tilde over triples with that (s,a)."""
    assert np.all(w_tilde[np.isfinite(w_tilde)] >= 0)
    scores = np.einsum("sax,sax->sa", data.counts, w_tilde)
    probs = np.full((data.n_states, data.n_actions), 1.0 / data.n_actions)
    finite = np.all(np.isfinite(scores), axis=1)
    totals = scores.sum(axis=1)
    rows = finite & (totals > 0)
    probs[rows] = scores[rows] / totals[rows, None]
    return Policy(probs)


# ---------------------------------------------------------------------------
# DICE-style baselines


def demodicefo_solve(model, filled_expert, opts, smoothing=DEFAULT_SMOOTHING, clip=DEFAULT_CLIP):
    """State-action matching dual on an action-filled expert dataset.

    The log ratio is taken between the filled expert's and the imperfect
    data's (s,a) frequencies (same smoothing and clamping as the pair ratio),
    then the generic log-partition dual with temper 1+alpha is minimized and
    weights recovered as in solve_fd_single.
    """
    cells = float(model.n_states * model.n_actions)
    n_e = float(len(filled_expert))
    p_e = (filled_expert.counts.sum(axis=2) + smoothing) / (n_e + smoothing * cells)
    if model.n_samples > 0:
        c_i = model.d_i_sa * model.n_samples
        p_i = (c_i + smoothing) / (model.n_samples + smoothing * cells)
    else:
        p_i = model.d_i_sa
    r_sa = clamped_log_ratio(p_e, p_i, clip)
    reward3 = np.broadcast_to(r_sa[:, :, None], model.d_i_sas.shape)
    return _solve_weighted_fd(model, reward3, 1.0 + opts.alpha, opts)


def _opolo_fg(model, rbar, e_rows, nu):
    """Loss and gradient of the model-kernel upper-bound dual in nu alone.

    (1-g)<p0,nu> + log E_{d_i_sa}[exp(rbar + g*E_{t_hat}[nu'] - nu)]; the
    t_hat expectation stays inside the exponent because the bounded program
    scores whole state-action pairs, not individual sampled successors.
    """
    z = rbar + (e_rows @ nu).reshape(rbar.shape)
    lse, w = _lse(model.d_i_sa, z)
    loss = (1.0 - model.gamma) * model.p0 @ nu + lse
    grad = (1.0 - model.gamma) * model.p0 + e_rows.T @ w.ravel()
    return loss, grad


def opolo_tabular_solve(model, r, opts):
    """Pair-ratio upper-bound baseline: state-action matching dual with temper 1.

    The program rewards (s,a) by the model-average log ratio
    rbar = E_{s'~t_hat}[r(s,s')] and penalizes KL to d_i_sa under the flow
    constraint.  Spreading the exponent over sampled successors instead would
    collapse the optimum onto the inverse-dynamics reweighting that cloning
    observed expert pairs already computes, erasing the method.  w_sa is the
    softmax mass over (s,a) divided by its base probability (unit mass under
    d_i_sa by construction); w_tilde and w_ss are the per-sample advantage
    exponentials, self-normalized as in solve_fd_single.
    """
    rbar = np.einsum("sax,sx->sa", model.t_hat, r.r)
    e_rows = _advantage_nu_rows(model)
    fg = lambda nu: _opolo_fg(model, rbar, e_rows, nu)
    nu, f, ginf, iters, ok, msg = _descend(fg, np.zeros(model.n_states), opts, _loss_floor(rbar))
    _, w = _lse(model.d_i_sa, rbar + (e_rows @ nu).reshape(rbar.shape))
    with np.errstate(divide="ignore", invalid="ignore"):
        w_sa = np.where(model.d_i_sa > 0, w / model.d_i_sa, 0.0)
    w_tilde, _, w_ss, _ = _per_sample_weights(model, _advantage(r.r, nu, model.gamma))
    return DualSolution(nu, None, w_sa, w_ss, w_tilde, f, ginf, iters, ok, msg)
