//! Closed-loop simulation of the agents together with their energy ledger.
//!
//! States and consumed energy `J_E^i` are advanced through the same RK4
//! stages. Remaining energy is reported as `E_i(0) − J_E^i(t)`, so the ledger
//! identity holds by construction.

use std::io::{self, Write};

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::controller::{mode_closed_loop_matrix, FeedbackLaw, StackedView};
use crate::formation::{
    formation_error_with, lyapunov_value, realize_desired_state, DesiredState, ErrorMetric, Gauge, Scenario,
    StackedLayout,
};
use crate::graph::GraphModel;
use crate::integrator::{step_grid, Rk4};
use crate::linalg::spectral_radius;
use crate::output::sig9;
use crate::riccati::{solve_pare, ControlParams, PareSolution, RiccatiError};

/// Upper limit on `h · ρ(A − λ_N α B BᵀP)`.
pub const MAX_STEP_RADIUS: f64 = 0.5;

/// Relative slack allowed by [`decay_bound_check`].
pub const DECAY_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Params(#[from] RiccatiError),
    #[error("sigma = {sigma} must be below the algebraic connectivity λ₂ = {lambda2}")]
    SigmaOutOfRange { sigma: f64, lambda2: f64 },
    #[error("step {step} is unstable: h·ρ = {product:.3} exceeds {MAX_STEP_RADIUS}")]
    UnstableStep { step: f64, product: f64 },
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("record stride must be at least 1")]
    InvalidStride,
    #[error("state became non-finite at t = {0}")]
    NonFiniteState(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Nominal RK4 step in seconds; shrunk slightly so the grid ends at T.
    pub step: f64,
    /// Record every k-th step (the final step is always recorded).
    pub record_stride: usize,
    pub metric: ErrorMetric,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            record_stride: 1,
            metric: ErrorMetric::AllPairs,
        }
    }
}

impl SimConfig {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }
}

/// First time an agent's remaining energy reaches zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exhaustion {
    pub agent: usize,
    pub time: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub layout: StackedLayout,
    pub desired: DesiredState,
    pub step: f64,
    pub tolerance: f64,
    pub initial_energy: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub energies: Vec<Vec<f64>>,
    pub per_agent_consumed: Vec<Vec<f64>>,
    pub cumulative_consumed: Vec<f64>,
    pub formation_errors: Vec<f64>,
    pub lyapunov: Vec<f64>,
    /// First time the formation error reaches the tolerance.
    pub formation_time: Option<f64>,
    /// Whether the error stayed within tolerance from `formation_time` to T.
    pub formation_held: bool,
    /// Per-agent exhaustion events in time order.
    pub exhaustions: Vec<Exhaustion>,
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("trajectory has samples")
    }

    /// Earliest exhaustion event, if any.
    pub fn exhausted_agent(&self) -> Option<Exhaustion> {
        self.exhaustions.first().copied()
    }

    pub fn final_energies(&self) -> &[f64] {
        self.energies.last().expect("trajectory has samples")
    }

    pub fn final_consumed(&self) -> &[f64] {
        self.per_agent_consumed.last().expect("trajectory has samples")
    }

    pub fn final_formation_error(&self) -> f64 {
        *self.formation_errors.last().expect("trajectory has samples")
    }

    /// Formation reached by `deadline` and held, and every agent ends with
    /// `J_E^i(T) < E_i(0)`.
    pub fn mission_succeeded(&self, deadline: f64) -> bool {
        let formed = self.formation_time.is_some_and(|t| t <= deadline) && self.formation_held;
        let budget_ok = self
            .final_consumed()
            .iter()
            .zip(&self.initial_energy)
            .all(|(used, budget)| used < budget);
        formed && budget_ok && self.exhaustions.is_empty()
    }

    /// One row per agent per recorded time:
    /// `t,agent,p…,v…,u…,E,ferr,V` with one-based agent ids.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.layout.dimension;
        let axes = axis_names(n);
        let mut header = vec!["t".to_owned(), "agent".to_owned()];
        for prefix in ["p", "v", "u"] {
            header.extend(axes.iter().map(|a| format!("{prefix}{a}")));
        }
        header.extend(["E", "ferr", "V"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        for (k, &t) in self.times.iter().enumerate() {
            let x = &self.states[k];
            let u = &self.inputs[k];
            for i in 0..self.layout.agents {
                let mut row = vec![sig9(t).to_string(), (i + 1).to_string()];
                let (p, v) = (self.layout.position(i), self.layout.velocity(i));
                row.extend(x[p..p + n].iter().map(|c| sig9(*c).to_string()));
                row.extend(x[v..v + n].iter().map(|c| sig9(*c).to_string()));
                row.extend(u[i * n..(i + 1) * n].iter().map(|c| sig9(*c).to_string()));
                row.push(sig9(self.energies[k][i]).to_string());
                row.push(sig9(self.formation_errors[k]).to_string());
                row.push(sig9(self.lyapunov[k]).to_string());
                writeln!(out, "{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

fn axis_names(n: usize) -> Vec<String> {
    if n <= 3 {
        ["x", "y", "z"][..n].iter().map(|s| s.to_string()).collect()
    } else {
        (1..=n).map(|k| k.to_string()).collect()
    }
}

fn check_config(config: &SimConfig) -> Result<(), SimError> {
    if !(config.step.is_finite() && config.step > 0.0) {
        return Err(SimError::InvalidStep(config.step));
    }
    if config.record_stride == 0 {
        return Err(SimError::InvalidStride);
    }
    Ok(())
}

fn prepare(scenario: &Scenario, params: &ControlParams, config: &SimConfig) -> Result<PareSolution, SimError> {
    check_config(config)?;
    params.validate()?;
    let lambda2 = scenario.graph().second_eigenvalue();
    if params.sigma >= lambda2 {
        return Err(SimError::SigmaOutOfRange {
            sigma: params.sigma,
            lambda2,
        });
    }
    let pare = solve_pare(params, scenario.dimension())?;
    let stiffest = mode_closed_loop_matrix(scenario.graph().largest_eigenvalue(), params, &pare);
    let (_, h) = step_grid(scenario.deadline(), config.step);
    let product = h * spectral_radius(&stiffest);
    if product >= MAX_STEP_RADIUS {
        return Err(SimError::UnstableStep { step: h, product });
    }
    Ok(pare)
}

/// Closed-loop vector field over `[x, J_E^1..J_E^N]`.
struct ClosedLoop<'a> {
    law: FeedbackLaw,
    graph: &'a GraphModel,
    layout: StackedLayout,
    beta: f64,
    inputs: Vec<f64>,
}

impl ClosedLoop<'_> {
    fn eval(&mut self, y: &[f64], dy: &mut [f64]) {
        let layout = self.layout;
        let n = layout.dimension;
        let len = layout.len();
        let (x, _) = y.split_at(len);
        let view = StackedView::new(layout, x);
        self.law.control_inputs(&view, &mut self.inputs);
        for i in 0..layout.agents {
            let (p, v) = (layout.position(i), layout.velocity(i));
            dy[p..p + n].copy_from_slice(&x[v..v + n]);
            dy[v..v + n].copy_from_slice(&self.inputs[i * n..(i + 1) * n]);
            let effort: f64 = self.inputs[i * n..(i + 1) * n].iter().map(|u| u * u).sum();
            let drag: f64 = self
                .graph
                .neighbors(i)
                .iter()
                .map(|&j| {
                    let vj = layout.velocity(j);
                    (0..n).map(|k| (x[v + k] - x[vj + k]).powi(2)).sum::<f64>()
                })
                .sum();
            dy[len + i] = effort + 0.5 * self.beta * drag;
        }
    }
}

pub fn simulate(scenario: &Scenario, params: &ControlParams, config: &SimConfig) -> Result<Trajectory, SimError> {
    let pare = prepare(scenario, params, config)?;
    let layout = scenario.layout();
    let agents = layout.agents;
    let len = layout.len();
    let graph = scenario.graph();
    let desired = realize_desired_state(scenario, Gauge::Centroid);
    let (steps, h) = step_grid(scenario.deadline(), config.step);
    let eps = scenario.tolerance();
    let e0 = scenario.initial_energy().to_vec();

    let mut field = ClosedLoop {
        law: FeedbackLaw::new(scenario, &pare),
        graph,
        layout,
        beta: params.beta,
        inputs: vec![0.0; agents * layout.dimension],
    };
    let error_of = |x: &[f64]| formation_error_with(x, &desired, graph, config.metric);

    let mut traj = Trajectory {
        layout,
        desired: desired.clone(),
        step: h,
        tolerance: eps,
        initial_energy: e0.clone(),
        times: Vec::new(),
        states: Vec::new(),
        inputs: Vec::new(),
        energies: Vec::new(),
        per_agent_consumed: Vec::new(),
        cumulative_consumed: Vec::new(),
        formation_errors: Vec::new(),
        lyapunov: Vec::new(),
        formation_time: None,
        formation_held: false,
        exhaustions: Vec::new(),
    };

    let mut y = vec![0.0; len + agents];
    y[..len].copy_from_slice(scenario.initial_stacked().as_slice());

    let mut err = error_of(&y[..len]);
    if err <= eps {
        traj.formation_time = Some(0.0);
        traj.formation_held = true;
    }
    push_sample(&mut traj, &field.law, &pare, 0.0, &y, err);

    let mut rk = Rk4::new(y.len());
    let mut previous = y.clone();
    let mut exhausted = vec![false; agents];
    for step in 1..=steps {
        previous.copy_from_slice(&y);
        rk.step(|s, d| field.eval(s, d), &mut y, h);
        let t = step as f64 * h;
        let t_prev = (step - 1) as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFiniteState(t));
        }
        let prev_err = err;
        err = error_of(&y[..len]);

        match traj.formation_time {
            None if err <= eps => {
                let frac = refine_crossing(&previous[..len], &y[..len], eps, prev_err, &error_of);
                traj.formation_time = Some(t_prev + frac * h);
                traj.formation_held = true;
            }
            Some(_) if err > eps => traj.formation_held = false,
            _ => {}
        }

        for i in 0..agents {
            let used = y[len + i];
            if !exhausted[i] && used >= e0[i] {
                exhausted[i] = true;
                let before = previous[len + i];
                let frac = if used > before {
                    (e0[i] - before) / (used - before)
                } else {
                    1.0
                };
                traj.exhaustions.push(Exhaustion {
                    agent: i,
                    time: t_prev + frac.clamp(0.0, 1.0) * h,
                });
            }
        }

        if step % config.record_stride == 0 || step == steps {
            push_sample(&mut traj, &field.law, &pare, t, &y, err);
        }
    }
    traj.exhaustions
        .sort_by(|a, b| a.time.total_cmp(&b.time).then(a.agent.cmp(&b.agent)));
    Ok(traj)
}

fn push_sample(traj: &mut Trajectory, law: &FeedbackLaw, pare: &PareSolution, t: f64, y: &[f64], err: f64) {
    let layout = traj.layout;
    let len = layout.len();
    let x = &y[..len];
    let mut inputs = vec![0.0; layout.agents * layout.dimension];
    law.control_inputs(&StackedView::new(layout, x), &mut inputs);
    let consumed = y[len..].to_vec();
    let energies = traj.initial_energy.iter().zip(&consumed).map(|(e, j)| e - j).collect();
    let v = lyapunov_value(x, &traj.desired, pare);
    traj.times.push(t);
    traj.states.push(x.to_vec());
    traj.inputs.push(inputs);
    traj.energies.push(energies);
    traj.cumulative_consumed.push(consumed.iter().sum());
    traj.per_agent_consumed.push(consumed);
    traj.formation_errors.push(err);
    traj.lyapunov.push(v);
}

/// Fraction of the step at which the linearly interpolated state first
/// meets the tolerance, bisected to a tenth of a step.
fn refine_crossing<F: Fn(&[f64]) -> f64>(
    before: &[f64],
    after: &[f64],
    eps: f64,
    err_before: f64,
    error_of: &F,
) -> f64 {
    if err_before <= eps {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut buf = vec![0.0; before.len()];
    while hi - lo > 0.1 {
        let mid = 0.5 * (lo + hi);
        for ((b, x0), x1) in buf.iter_mut().zip(before).zip(after) {
            *b = x0 + mid * (x1 - x0);
        }
        if error_of(&buf) <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Per-mode trajectories `x̃_k(t)` integrated independently.
#[derive(Debug, Clone)]
pub struct ModeTrajectory {
    pub lambdas: Vec<f64>,
    pub times: Vec<f64>,
    /// `modes[record][k]`.
    pub modes: Vec<Vec<DVector<f64>>>,
}

impl ModeTrajectory {
    /// `x − x^d` at a recorded index.
    pub fn reconstruct(&self, record: usize, graph: &GraphModel) -> DVector<f64> {
        crate::controller::mode_reconstruct(&self.modes[record], graph)
    }

    /// Largest absolute difference between the reconstructed modes and a
    /// coupled trajectory recorded on the same grid.
    pub fn max_deviation(&self, coupled: &Trajectory, graph: &GraphModel) -> f64 {
        assert_eq!(
            self.times.len(),
            coupled.times.len(),
            "trajectories use different grids"
        );
        let xd = coupled.desired.stacked();
        (0..self.times.len())
            .map(|r| {
                let rebuilt = self.reconstruct(r, graph);
                coupled.states[r]
                    .iter()
                    .zip(xd.iter())
                    .zip(rebuilt.iter())
                    .map(|((x, d), e)| (x - d - e).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

pub fn simulate_modes(
    scenario: &Scenario,
    params: &ControlParams,
    config: &SimConfig,
) -> Result<ModeTrajectory, SimError> {
    let pare = prepare(scenario, params, config)?;
    let graph = scenario.graph();
    let desired = realize_desired_state(scenario, Gauge::Centroid);
    let initial = crate::controller::mode_decompose(scenario.initial_stacked().as_slice(), &desired, graph)
        .expect("scenario and desired state share a layout");
    let lambdas = graph.eigenvalues().to_vec();
    let matrices: Vec<_> = lambdas
        .iter()
        .map(|&l| mode_closed_loop_matrix(l, params, &pare))
        .collect();
    let (steps, h) = step_grid(scenario.deadline(), config.step);
    let block = 2 * scenario.dimension();

    let mut states: Vec<Vec<f64>> = initial.iter().map(|m| m.as_slice().to_vec()).collect();
    let to_record = |states: &[Vec<f64>]| states.iter().map(|s| DVector::from_column_slice(s)).collect::<Vec<_>>();
    let mut out = ModeTrajectory {
        lambdas,
        times: vec![0.0],
        modes: vec![to_record(&states)],
    };
    let mut rk = Rk4::new(block);
    for step in 1..=steps {
        for (state, m) in states.iter_mut().zip(&matrices) {
            rk.step(
                |y, dy| {
                    for (r, d) in dy.iter_mut().enumerate() {
                        *d = (0..block).map(|c| m[(r, c)] * y[c]).sum();
                    }
                },
                state,
                h,
            );
        }
        let t = step as f64 * h;
        if states.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SimError::NonFiniteState(t));
        }
        if step % config.record_stride == 0 || step == steps {
            out.times.push(t);
            out.modes.push(to_record(&states));
        }
    }
    Ok(out)
}

/// Worst pointwise gap between `V(x(t))` and `e^{−t/λ_min(P)}·V(x(0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayReport {
    pub max_margin: f64,
    pub worst_time: f64,
    pub allowed: f64,
    pub holds: bool,
}

pub fn decay_bound_check(traj: &Trajectory, pare: &PareSolution, v0: f64) -> DecayReport {
    let rate = 1.0 / pare.lambda_min();
    let (mut max_margin, mut worst_time) = (f64::NEG_INFINITY, 0.0);
    for (&t, &v) in traj.times.iter().zip(&traj.lyapunov) {
        let margin = v - (-rate * t).exp() * v0;
        if margin > max_margin {
            max_margin = margin;
            worst_time = t;
        }
    }
    let allowed = DECAY_SLACK * v0;
    DecayReport {
        max_margin,
        worst_time,
        allowed,
        holds: max_margin <= allowed,
    }
}

/// Trapezoidal re-integration of the energy cost compared with the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureReport {
    pub max_abs: f64,
    /// `max_abs / J_E(T)`; equal to `max_abs` when nothing was consumed.
    pub relative: f64,
}

pub fn energy_quadrature_check(traj: &Trajectory, scenario: &Scenario, params: &ControlParams) -> QuadratureReport {
    let layout = traj.layout;
    let n = layout.dimension;
    let graph = scenario.graph();
    let integrand = |k: usize| -> f64 {
        let effort: f64 = traj.inputs[k].iter().map(|u| u * u).sum();
        let x = &traj.states[k];
        let drag: f64 = graph
            .edges()
            .iter()
            .map(|&(i, j)| {
                let (vi, vj) = (layout.velocity(i), layout.velocity(j));
                (0..n).map(|c| (x[vi + c] - x[vj + c]).powi(2)).sum::<f64>()
            })
            .sum();
        effort + params.beta * drag
    };
    let mut quad = 0.0;
    let mut max_abs = (traj.cumulative_consumed[0] - quad).abs();
    let mut f_prev = integrand(0);
    for k in 1..traj.times.len() {
        let f_k = integrand(k);
        quad += 0.5 * (traj.times[k] - traj.times[k - 1]) * (f_prev + f_k);
        max_abs = max_abs.max((traj.cumulative_consumed[k] - quad).abs());
        f_prev = f_k;
    }
    let total = *traj.cumulative_consumed.last().expect("trajectory has samples");
    let relative = if total > 0.0 { max_abs / total } else { max_abs };
    QuadratureReport { max_abs, relative }
}
