"""Tabular offline imitation from observation via occupancy-matching duals."""

from .baselines import InverseDynamicsModel, bc_policy, bco_policy, fill_actions, fit_idm
from .bench import (
    ExperimentConfig,
    RunRecord,
    SummaryRecord,
    aggregate,
    emit_results,
    emit_summary,
    parse_config,
    parse_results,
    run_cell,
    run_grid,
)
from .datagen import (
    EmpiricalModel,
    LabeledDataset,
    LogRatioTable,
    MdpGenParams,
    StateOnlyDataset,
    build_empirical_model,
    empirical_log_ratio,
    exact_log_ratio,
    exact_model,
    generate_random_mdp,
    load_dataset,
    make_rng,
    sample_expert_dataset,
    sample_imperfect_dataset,
    save_dataset,
    subseed,
)
from .dice_solvers import (
    DualSolution,
    SolverOptions,
    closed_form_w,
    demodicefo_solve,
    extract_policy,
    extract_policy_weighted_bc,
    loss_fd_double,
    loss_fd_double_model,
    loss_fd_single,
    loss_ld_double,
    loss_ld_double_model,
    loss_ld_single,
    mu_closed_form,
    opolo_tabular_solve,
    solve_fd_double,
    solve_fd_double_model,
    solve_fd_single,
    solve_ld_double,
)
from .mdp_core import (
    Policy,
    StationaryDistribution,
    TabularMdp,
    flow_residual,
    softmax_policy,
    stationary_distribution,
    tv_distance,
    uniform_policy,
    value_iteration,
)

__version__ = "0.1.0"
