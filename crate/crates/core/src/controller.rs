//! Distributed optimal feedback
//!
//! ```text
//! u_i = −α Σ_j a_ij BᵀP (x_i − x_j − d_ij)
//! ```
//!
//! evaluated from neighbor states and completed edge offsets only, plus the
//! Laplacian mode decomposition that turns the closed loop into `N`
//! independent `2n`-dimensional systems.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::formation::{CompletedOffsets, DesiredState, Scenario, StackedLayout};
use crate::graph::GraphModel;
use crate::riccati::{ControlParams, PareSolution, SystemMatrices};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("state of agent {0} is not available")]
    MissingNeighborState(usize),
    #[error("agent index {0} out of range")]
    UnknownAgent(usize),
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Read access to whatever agent states a controller can see.
pub trait AgentStates {
    /// `(position, velocity)` of `agent`, if known.
    fn agent_state(&self, agent: usize) -> Option<(&[f64], &[f64])>;
}

/// A stacked state vector viewed per agent.
#[derive(Debug, Clone, Copy)]
pub struct StackedView<'a> {
    pub layout: StackedLayout,
    pub data: &'a [f64],
}

impl<'a> StackedView<'a> {
    pub fn new(layout: StackedLayout, data: &'a [f64]) -> Self {
        debug_assert_eq!(layout.len(), data.len());
        Self { layout, data }
    }
}

impl AgentStates for StackedView<'_> {
    fn agent_state(&self, agent: usize) -> Option<(&[f64], &[f64])> {
        if agent >= self.layout.agents {
            return None;
        }
        let n = self.layout.dimension;
        let p = self.layout.position(agent);
        let v = self.layout.velocity(agent);
        Some((&self.data[p..p + n], &self.data[v..v + n]))
    }
}

impl AgentStates for HashMap<usize, crate::formation::AgentState> {
    fn agent_state(&self, agent: usize) -> Option<(&[f64], &[f64])> {
        self.get(&agent).map(|s| (s.position.as_slice(), s.velocity.as_slice()))
    }
}

/// Per-agent feedback law with cached scalar gains.
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    alpha: f64,
    position_gain: f64,
    velocity_gain: f64,
    dimension: usize,
    neighbors: Vec<Vec<usize>>,
    offsets: CompletedOffsets,
}

impl FeedbackLaw {
    pub fn new(scenario: &Scenario, pare: &PareSolution) -> Self {
        let graph = scenario.graph();
        let alpha = pare.params().alpha;
        let (bp_position, bp_velocity) = pare.input_row();
        Self {
            alpha,
            position_gain: alpha * bp_position,
            velocity_gain: alpha * bp_velocity,
            dimension: scenario.dimension(),
            neighbors: (0..graph.node_count()).map(|i| graph.neighbors(i).to_vec()).collect(),
            offsets: scenario.completed_offsets().clone(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `k_p = α·(BᵀP)₁`, applied per spatial axis.
    pub fn position_gain(&self) -> f64 {
        self.position_gain
    }

    /// `k_v = α·(BᵀP)₂`, applied per spatial axis.
    pub fn velocity_gain(&self) -> f64 {
        self.velocity_gain
    }

    pub fn agent_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Input of agent `i`; reads only `i` and its neighbors.
    pub fn control_input<S: AgentStates + ?Sized>(
        &self,
        states: &S,
        agent: usize,
    ) -> Result<DVector<f64>, ControllerError> {
        let mut u = DVector::zeros(self.dimension);
        self.control_input_into(states, agent, u.as_mut_slice())?;
        Ok(u)
    }

    pub(crate) fn control_input_into<S: AgentStates + ?Sized>(
        &self,
        states: &S,
        agent: usize,
        out: &mut [f64],
    ) -> Result<(), ControllerError> {
        let neighbors = self.neighbors.get(agent).ok_or(ControllerError::UnknownAgent(agent))?;
        let (pi, vi) = states
            .agent_state(agent)
            .ok_or(ControllerError::MissingNeighborState(agent))?;
        let n = self.dimension;
        if pi.len() != n || vi.len() != n {
            return Err(ControllerError::DimensionMismatch {
                what: "agent state",
                expected: n,
                got: pi.len(),
            });
        }
        out.iter_mut().for_each(|u| *u = 0.0);
        for &j in neighbors {
            let (pj, vj) = states.agent_state(j).ok_or(ControllerError::MissingNeighborState(j))?;
            let d = self
                .offsets
                .get(agent, j)
                .expect("offsets are completed for every edge");
            for k in 0..n {
                // x_i − x_j − (x_i^d − x_j^d) with d = p_j^d − p_i^d
                let position_error = pi[k] - pj[k] + d[k];
                let velocity_error = vi[k] - vj[k];
                out[k] -= self.position_gain * position_error + self.velocity_gain * velocity_error;
            }
        }
        Ok(())
    }

    /// All inputs for a stacked state, written into `u` (length `N·n`).
    pub fn control_inputs(&self, view: &StackedView<'_>, u: &mut [f64]) {
        let n = self.dimension;
        for i in 0..self.agent_count() {
            self.control_input_into(view, i, &mut u[i * n..(i + 1) * n])
                .expect("stacked view exposes every agent");
        }
    }
}

/// `x̃ = (W ⊗ I_{2n})(x − x^d)`, one `2n` vector per Laplacian mode.
pub fn mode_decompose(
    state: &[f64],
    desired: &DesiredState,
    graph: &GraphModel,
) -> Result<Vec<DVector<f64>>, ControllerError> {
    let layout = desired.layout();
    check_stacked(state.len(), layout, graph)?;
    let block = layout.block();
    let w = graph.eigenvectors();
    let xd = desired.stacked();
    let mut modes = vec![DVector::zeros(block); layout.agents];
    for (k, mode) in modes.iter_mut().enumerate() {
        for i in 0..layout.agents {
            let s = layout.start(i);
            for c in 0..block {
                mode[c] += w[(k, i)] * (state[s + c] - xd[s + c]);
            }
        }
    }
    Ok(modes)
}

/// Inverse of [`mode_decompose`]: `(Wᵀ ⊗ I_{2n}) x̃`, i.e. `x − x^d`.
pub fn mode_reconstruct(modes: &[DVector<f64>], graph: &GraphModel) -> DVector<f64> {
    let agents = modes.len();
    let block = modes.first().map_or(0, |m| m.len());
    let w = graph.eigenvectors();
    let mut out = DVector::zeros(agents * block);
    for i in 0..agents {
        for (k, mode) in modes.iter().enumerate() {
            for c in 0..block {
                out[i * block + c] += w[(k, i)] * mode[c];
            }
        }
    }
    out
}

fn check_stacked(len: usize, layout: StackedLayout, graph: &GraphModel) -> Result<(), ControllerError> {
    if layout.agents != graph.node_count() {
        return Err(ControllerError::DimensionMismatch {
            what: "agents in desired state",
            expected: graph.node_count(),
            got: layout.agents,
        });
    }
    if len != layout.len() {
        return Err(ControllerError::DimensionMismatch {
            what: "stacked state",
            expected: layout.len(),
            got: len,
        });
    }
    Ok(())
}

/// `A − λ α B Bᵀ P`, the closed-loop matrix of the mode with Laplacian
/// eigenvalue `λ`.
pub fn mode_closed_loop_matrix(lambda: f64, params: &ControlParams, pare: &PareSolution) -> DMatrix<f64> {
    let sys = SystemMatrices::new(pare.dimension());
    let bbt_p = &sys.b * (sys.b.transpose() * pare.p());
    sys.a - bbt_p * (lambda * params.alpha)
}

/// Largest (real) eigenvalue of the mode matrix from the closed form
/// `½(−λg + √(λ²g² − 4λ√(α/σ)))` with `g = √((α/σ)(1 + β/α + 2/√(σα)))`.
/// `None` when the discriminant is negative (complex pair).
pub fn mode_max_eigenvalue(lambda: f64, params: &ControlParams) -> Option<f64> {
    let ratio = (params.alpha / params.sigma).sqrt();
    let g = (params.alpha / params.sigma * params.damping_radicand()).sqrt();
    let disc = lambda * lambda * g * g - 4.0 * lambda * ratio;
    (disc >= 0.0).then(|| 0.5 * (-lambda * g + disc.sqrt()))
}
