//! Consistency-condition solver and decentralized strategy synthesis.
//!
//! The limiting system couples the conditional-mean pair (xhat, p_hat,
//! beta0_hat), the dual triple (h, y, z) with its diffusion g2, and the
//! representative agent's costate (k_i, zeta0, zeta_i) through the strategy
//! map. Everything is closed with an affine ansatz in the common-noise state
//! (xhat, h) (plus the agent's own state for agent-level objects): the
//! time-discretized system then reduces to per-step linear solves and a
//! terminal-value backward recursion, which the affine method performs
//! exactly; the Picard method reaches the same fixed point iteratively.

mod agent;
mod residual;
mod solution;
mod solve;
mod subsystems;
mod tree_adapt;

pub use agent::{
    agent_bsde, aux_cost_exact, aux_cost_monte_carlo, simulate_agent, AgentBackwardPath,
    ControlPerturbation,
};
pub use residual::evaluate as evaluate_residuals;
pub use solution::{
    simulate_meanfield, worst_case_volatility, AffineInAgent, AffineInMean, CoeffNode,
    ConsistencySolution, MeanFieldPath, ResidualSummary, SolveMethod, ValueNode,
    WorstCaseVolatility,
};
pub use solve::{solve_consistency, PicardOptions};
pub use subsystems::{
    decoupled_y_closed_form, solve_hyz, solve_limit_pair, HyzSolution, LimitPair, MeanControl,
};
pub use tree_adapt::strategy_tree_policies;
