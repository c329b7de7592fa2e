"""Random-MDP benchmark harness: seeded grid runs, aggregation, CSV/JSON emission, CLI.

Determinism contract: a grid run is a pure function of its config.  Every cell
derives its streams from (master_seed, seed, purpose) subseeds, cells are
emitted in canonical grid order regardless of scheduling, and wall-clock
timing is zeroed out by default so two runs of the same config produce
byte-identical output even across thread counts.
"""

import argparse
import concurrent.futures
import itertools
import json
import sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .baselines import bc_policy, bco_policy, fill_actions, fit_idm
from .datagen import (
    MdpGenParams,
    build_empirical_model,
    empirical_log_ratio,
    generate_random_mdp,
    make_rng,
    sample_expert_dataset,
    sample_imperfect_dataset,
    subseed,
)
from .dice_solvers import (
    SolverOptions,
    demodicefo_solve,
    extract_policy,
    opolo_tabular_solve,
    solve_fd_double_model,
)
from .mdp_core import (
    softmax_policy,
    stationary_distribution,
    tv_distance,
    uniform_policy,
    value_iteration,
)

ALGORITHMS = ("bc", "bco", "demodicefo", "opolo", "lobsdice")

# subseed purposes, keyed under (master_seed, seed)
_MDP, _EXPERT, _IMPERFECT, _FILL = 0, 1, 2, 3

RAW_COLUMNS = "beta,n_e,n_i,algorithm,seed,tv,wall_time_ms,solver_iterations,converged"
SUMMARY_COLUMNS = "beta,n_e,n_i,algorithm,mean_tv,stderr_tv,n"


@dataclass(frozen=True)
class ExperimentConfig:
    betas: tuple = (0.01, 0.1, 1.0)
    n_expert: tuple = (10, 100, 1000, 10_000)
    n_imperfect: tuple = (1, 3, 10, 30, 100, 300, 1000, 3000, 10_000)
    algorithms: tuple = ALGORITHMS
    n_seeds: int = 100
    master_seed: int = 0
    n_states: int = 20
    n_actions: int = 4
    connectivity: int = 4
    gamma: float = 0.95
    alpha: float = 0.01
    expert_temperature: float = 0.01
    smoothing: float = 1e-3
    clip: float = 20.0
    threads: int = 1
    timing: str = "zero"  # zero | wall

    def __post_init__(self):
        # these fields come straight from config files and CLI flags
        if self.timing not in ("zero", "wall"):
            raise ValueError(f"timing must be zero or wall, got {self.timing!r}")
        if self.threads < 1 or self.n_seeds < 1:
            raise ValueError("threads and n_seeds must be positive")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")


@dataclass(frozen=True)
class RunRecord:
    beta: float
    n_e: int
    n_i: int
    algorithm: str
    seed: int
    tv: float
    wall_time_ms: float
    solver_iterations: int
    converged: bool


@dataclass(frozen=True)
class SummaryRecord:
    beta: float
    n_e: int
    n_i: int
    algorithm: str
    mean_tv: float
    stderr_tv: float
    n: int


def run_cell(config, beta, n_e, n_i, algorithm, seed):
    """One benchmark cell: build instance and data, run the algorithm, score it.

    The score is the total-variation distance between the extracted policy's
    state-pair occupancy and the expert's, both computed under the true MDP.
    Non-convergent solves still get scored and are flagged in the record.
    """
    ms = config.master_seed
    params = MdpGenParams(
        beta=beta,
        seed=subseed(ms, seed, _MDP),
        n_states=config.n_states,
        n_actions=config.n_actions,
        connectivity=config.connectivity,
        gamma=config.gamma,
    )
    mdp = generate_random_mdp(params)
    q = value_iteration(mdp)
    expert = softmax_policy(q, config.expert_temperature)
    agent = uniform_policy(mdp)
    d_expert = stationary_distribution(mdp, expert)

    expert_data = sample_expert_dataset(mdp, expert, n_e, subseed(ms, seed, _EXPERT))
    imperfect_data = sample_imperfect_dataset(mdp, agent, n_i, subseed(ms, seed, _IMPERFECT))
    model = build_empirical_model(
        imperfect_data, config.n_states, config.n_actions, config.gamma, mdp.initial_dist
    )
    r = empirical_log_ratio(expert_data, imperfect_data, config.smoothing, config.clip)
    opts = SolverOptions(alpha=config.alpha)

    t0 = time.perf_counter()
    iterations, converged = 0, True
    if algorithm == "bc":
        policy = bc_policy(imperfect_data)
    elif algorithm == "bco":
        policy = bco_policy(expert_data, fit_idm(imperfect_data))
    elif algorithm == "demodicefo":
        filled = fill_actions(
            fit_idm(imperfect_data), expert_data, "sample", make_rng(subseed(ms, seed, _FILL))
        )
        sol = demodicefo_solve(model, filled, opts, config.smoothing, config.clip)
        policy = extract_policy(model, sol.w_sa)
        iterations, converged = sol.iterations, sol.converged
    elif algorithm == "opolo":
        sol = opolo_tabular_solve(model, r, opts)
        policy = extract_policy(model, sol.w_sa)
        iterations, converged = sol.iterations, sol.converged
    elif algorithm == "lobsdice":
        sol = solve_fd_double_model(model, r, opts)
        policy = extract_policy(model, sol.w_sa)
        iterations, converged = sol.iterations, sol.converged
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    elapsed_ms = (time.perf_counter() - t0) * 1e3

    d_pi = stationary_distribution(mdp, policy)
    tv = tv_distance(d_pi.d_ss.ravel(), d_expert.d_ss.ravel())
    return RunRecord(
        beta=beta,
        n_e=n_e,
        n_i=n_i,
        algorithm=algorithm,
        seed=seed,
        tv=tv,
        wall_time_ms=elapsed_ms if config.timing == "wall" else 0.0,
        solver_iterations=iterations,
        converged=converged,
    )


def grid_cells(config):
    """Canonical cell order: beta, n_e, n_i, algorithm, seed, nested in that order."""
    return list(
        itertools.product(
            config.betas,
            config.n_expert,
            config.n_imperfect,
            config.algorithms,
            range(config.n_seeds),
        )
    )


def run_grid(config, progress=None):
    """Run every cell of the grid; records come back in canonical order.

    A cell that raises is recorded with tv=nan and converged=False rather than
    aborting the grid; the error goes to stderr.
    """
    cells = grid_cells(config)

    def one(cell):
        beta, n_e, n_i, algorithm, seed = cell
        try:
            return run_cell(config, beta, n_e, n_i, algorithm, seed)
        except Exception as exc:  # pragma: no cover - defensive path
            print(f"cell {cell} failed: {exc!r}", file=sys.stderr)
            return RunRecord(beta, n_e, n_i, algorithm, seed, float("nan"), 0.0, 0, False)

    if config.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.threads) as pool:
            records = list(pool.map(one, cells))
    else:
        records = []
        for i, cell in enumerate(cells):
            records.append(one(cell))
            if progress and (i + 1) % progress == 0:
                print(f"  {i + 1}/{len(cells)} cells done", file=sys.stderr)
    return records


def aggregate(records):
    """Mean and standard error of tv per (beta, n_e, n_i, algorithm) group.

    Groups keep first-appearance order; stderr uses the ddof=1 sample standard
    deviation over seeds and is 0 for singleton groups.
    """
    groups = {}
    for rec in records:
        groups.setdefault((rec.beta, rec.n_e, rec.n_i, rec.algorithm), []).append(rec.tv)
    out = []
    for (beta, n_e, n_i, algorithm), tvs in groups.items():
        arr = np.asarray(tvs)
        stderr = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        out.append(SummaryRecord(beta, n_e, n_i, algorithm, float(arr.mean()), stderr, arr.size))
    return out


# ---------------------------------------------------------------------------
# serialization


def _format_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def emit_results(records, fmt="csv"):
    """Render raw records; csv uses 10 significant digits and \\n newlines."""
    if fmt == "json":
        rows = [
            {f.name: getattr(rec, f.name) for f in fields(RunRecord)} for rec in records
        ]
        return json.dumps(rows, indent=2) + "\n"
    assert fmt == "csv", f"unknown format {fmt!r}"
    lines = [RAW_COLUMNS]
    for rec in records:
        lines.append(",".join(_format_value(getattr(rec, f.name)) for f in fields(RunRecord)))
    return "\n".join(lines) + "\n"


def parse_results(text):
    """Inverse of emit_results for the csv format; malformed input raises ValueError."""
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or lines[0] != RAW_COLUMNS:
        raise ValueError("unexpected results header")
    records = []
    for ln in lines[1:]:
        beta, n_e, n_i, algorithm, seed, tv, wall, iters, conv = ln.split(",")
        if conv not in ("true", "false"):
            raise ValueError(f"bad converged flag {conv!r}")
        records.append(
            RunRecord(
                beta=float(beta),
                n_e=int(n_e),
                n_i=int(n_i),
                algorithm=algorithm,
                seed=int(seed),
                tv=float(tv),
                wall_time_ms=float(wall),
                solver_iterations=int(iters),
                converged=conv == "true",
            )
        )
    return records


def emit_summary(summaries, fmt="csv"):
    """Render aggregated records in the same style as emit_results."""
    if fmt == "json":
        rows = [
            {f.name: getattr(rec, f.name) for f in fields(SummaryRecord)} for rec in summaries
        ]
        return json.dumps(rows, indent=2) + "\n"
    assert fmt == "csv", f"unknown format {fmt!r}"
    lines = [SUMMARY_COLUMNS]
    for rec in summaries:
        lines.append(",".join(_format_value(getattr(rec, f.name)) for f in fields(SummaryRecord)))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# config files: "key = value" lines, [a, b, c] lists, # comments


def _parse_scalar(tok):
    tok = tok.strip()
    if tok in ("true", "false"):
        return tok == "true"
    try:
        return int(tok)
    except ValueError:
        pass
    try:
        return float(tok)
    except ValueError:
        pass
    return tok


def parse_config_text(text):
    """Config from text; unknown keys and malformed lines raise ValueError."""
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, rhs = line.partition("=")
        key, rhs = key.strip(), rhs.strip()
        if key not in known:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if rhs.startswith("[") and rhs.endswith("]"):
            inner = rhs[1:-1].strip()
            values[key] = tuple(_parse_scalar(t) for t in inner.split(",")) if inner else ()
        else:
            values[key] = _parse_scalar(rhs)
    return ExperimentConfig(**values)


def parse_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


# ---------------------------------------------------------------------------
# command line


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1, not argparse's default 2 (2 means acceptance failure here)
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _write_out(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def main(argv=None):
    parser = _Parser(prog="bench", description="random-MDP imitation benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark grid")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--beta", type=float, nargs="+")
    p_run.add_argument("--n-seeds", type=int)
    p_run.add_argument("--algorithms", nargs="+")
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--format", choices=("csv", "json"), default="csv")

    p_agg = sub.add_parser("aggregate", help="summarize raw csv results")
    p_agg.add_argument("--in", dest="in_path", required=True)
    p_agg.add_argument("--out", default=None)

    sub.add_parser("verify", help="run the acceptance checks")

    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            config = parse_config(args.config)
            overrides = {}
            if args.beta is not None:
                overrides["betas"] = tuple(args.beta)
            if args.n_seeds is not None:
                overrides["n_seeds"] = args.n_seeds
            if args.algorithms is not None:
                overrides["algorithms"] = tuple(args.algorithms)
            if args.threads is not None:
                overrides["threads"] = args.threads
            if overrides:
                config = replace(config, **overrides)
            records = run_grid(config)
            _write_out(emit_results(records, args.format), args.out)
        elif args.command == "aggregate":
            with open(args.in_path) as fh:
                records = parse_results(fh.read())
            _write_out(emit_summary(aggregate(records)), args.out)
        elif args.command == "verify":
            from .verify import run_all

            ok = run_all(stream=sys.stdout)
            return 0 if ok else 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
