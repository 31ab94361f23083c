//! Pre-flight feasibility from the closed-form bounds.
//!
//! `T_l = λ_min(P)·ln(V(x(0)) / (λ_min(P)(N−1)ε²))` is the termination-time
//! bound and `E_{i_l}` the per-agent energy bound. The mission is declared
//! feasible when the deadline and every budget clear them.

use serde::Serialize;
use thiserror::Error;

use crate::formation::{lyapunov_values, FormationError, Scenario};
use crate::output::serialize_sig9;
use crate::riccati::{solve_pare, ControlParams, PareSolution, RiccatiError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeasibilityError {
    #[error("sigma = {sigma} must satisfy 0 < sigma < λ₂ = {lambda2}")]
    SigmaOutOfRange { sigma: f64, lambda2: f64 },
    #[error(transparent)]
    Params(#[from] RiccatiError),
    #[error(transparent)]
    Formation(#[from] FormationError),
}

/// `T_l`, clamped at zero when the logarithm's argument is at most one.
pub fn termination_bound(pare: &PareSolution, v0: f64, agents: usize, eps: f64) -> f64 {
    let lambda_min = pare.lambda_min();
    let argument = v0 / (lambda_min * (agents as f64 - 1.0) * eps * eps);
    if argument <= 1.0 {
        0.0
    } else {
        lambda_min * argument.ln()
    }
}

/// `λ_N(α + 1/σ)(α + β + 2√(α/σ)) + β`, times `√(1 + β/α + 2/√(ασ))`.
fn energy_prefactor(params: &ControlParams, lambda_max: f64) -> f64 {
    let ControlParams { alpha, sigma, beta } = *params;
    let bracket = lambda_max * (alpha + 1.0 / sigma) * (alpha + beta + 2.0 * (alpha / sigma).sqrt()) + beta;
    bracket * params.damping_radicand().sqrt()
}

/// Decay exponent `λ_N·√((α/σ)(1 + β/α + 2/√(ασ)))` of the finite-horizon factor.
pub fn energy_decay_rate(params: &ControlParams, lambda_max: f64) -> f64 {
    lambda_max * (params.alpha / params.sigma * params.damping_radicand()).sqrt()
}

/// `E_{i_l}` for a deadline `T`.
pub fn energy_bound(params: &ControlParams, vl0: f64, lambda_max: f64, deadline: f64) -> f64 {
    let horizon_factor = -(-energy_decay_rate(params, lambda_max) * deadline).exp_m1();
    0.5 * vl0 * energy_prefactor(params, lambda_max) * horizon_factor
}

/// `E_{i_l}` with the time constraint removed (`T → ∞`).
pub fn energy_bound_infinite_horizon(params: &ControlParams, vl0: f64, lambda_max: f64) -> f64 {
    0.5 * vl0 * energy_prefactor(params, lambda_max)
}

/// Parameter inequality under which the energy bound grows with α.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Assumption2 {
    pub holds: bool,
    #[serde(serialize_with = "serialize_sig9")]
    pub value: f64,
}

pub fn assumption2_check(params: &ControlParams, lambda_max: f64) -> Assumption2 {
    let ControlParams { alpha, sigma, beta } = *params;
    let inner =
        1.5 * alpha + 0.5 * beta + 2.0 * (alpha / sigma).sqrt() + 1.0 / (2.0 * sigma) - beta / (2.0 * alpha * sigma);
    let value = lambda_max * inner - beta / (2.0 * alpha);
    Assumption2 {
        holds: value >= 0.0,
        value,
    }
}

/// Full pre-flight report; serialized as the `check` command's output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    #[serde(rename = "T_l", serialize_with = "serialize_sig9")]
    pub termination_bound: f64,
    #[serde(rename = "E_l_per_agent", serialize_with = "serialize_sig9")]
    pub energy_bound_per_agent: f64,
    #[serde(rename = "E_l_total", serialize_with = "serialize_sig9")]
    pub energy_bound_total: f64,
    pub assumption2: Assumption2,
    pub time_feasible: bool,
    pub energy_feasible: bool,
    pub feasible: bool,
    pub inputs: ReportInputs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportInputs {
    #[serde(serialize_with = "serialize_sig9")]
    pub alpha: f64,
    #[serde(serialize_with = "serialize_sig9")]
    pub sigma: f64,
    #[serde(serialize_with = "serialize_sig9")]
    pub beta: f64,
    #[serde(rename = "T", serialize_with = "serialize_sig9")]
    pub deadline: f64,
    #[serde(rename = "epsilon", serialize_with = "serialize_sig9")]
    pub tolerance: f64,
    pub agents: usize,
    #[serde(serialize_with = "serialize_sig9")]
    pub lambda_2: f64,
    #[serde(rename = "lambda_N", serialize_with = "serialize_sig9")]
    pub lambda_max: f64,
    #[serde(rename = "V0", serialize_with = "serialize_sig9")]
    pub v0: f64,
    #[serde(rename = "VL0", serialize_with = "serialize_sig9")]
    pub vl0: f64,
    #[serde(rename = "lambda_min_P", serialize_with = "serialize_sig9")]
    pub lambda_min_p: f64,
    #[serde(rename = "min_initial_energy", serialize_with = "serialize_sig9")]
    pub min_initial_energy: f64,
}

/// Checks σ against λ₂ for a scenario's graph.
pub fn check_sigma(scenario: &Scenario, params: &ControlParams) -> Result<(), FeasibilityError> {
    let lambda2 = scenario.graph().second_eigenvalue();
    if params.sigma <= 0.0 || params.sigma >= lambda2 {
        return Err(FeasibilityError::SigmaOutOfRange {
            sigma: params.sigma,
            lambda2,
        });
    }
    Ok(())
}

pub fn preflight(scenario: &Scenario, params: &ControlParams) -> Result<FeasibilityReport, FeasibilityError> {
    params.validate()?;
    check_sigma(scenario, params)?;
    let pare = solve_pare(params, scenario.dimension())?;
    let values = lyapunov_values(scenario, &pare)?;
    let graph = scenario.graph();
    let agents = scenario.agent_count();
    let lambda_max = graph.largest_eigenvalue();

    let t_l = termination_bound(&pare, values.v0, agents, scenario.tolerance());
    let e_l = energy_bound(params, values.vl0, lambda_max, scenario.deadline());
    let min_energy = scenario.initial_energy().iter().copied().fold(f64::INFINITY, f64::min);
    let time_feasible = scenario.deadline() >= t_l;
    let energy_feasible = min_energy >= e_l;

    Ok(FeasibilityReport {
        termination_bound: t_l,
        energy_bound_per_agent: e_l,
        energy_bound_total: agents as f64 * e_l,
        assumption2: assumption2_check(params, lambda_max),
        time_feasible,
        energy_feasible,
        feasible: time_feasible && energy_feasible,
        inputs: ReportInputs {
            alpha: params.alpha,
            sigma: params.sigma,
            beta: params.beta,
            deadline: scenario.deadline(),
            tolerance: scenario.tolerance(),
            agents,
            lambda_2: graph.second_eigenvalue(),
            lambda_max,
            v0: values.v0,
            vl0: values.vl0,
            lambda_min_p: pare.lambda_min(),
            min_initial_energy: min_energy,
        },
    })
}
