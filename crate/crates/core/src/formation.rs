//! Mission model: initial agent states, energy budgets, relative position
//! offsets, deadline and tolerance, plus the quadratic forms `V(x)` and
//! `V_L` that drive the feasibility bounds.
//!
//! Offsets follow the `j-minus-i` convention: the offset stored for the
//! ordered pair `(i, j)` is `p_j^d − p_i^d`. Desired velocities are zero, so
//! only the position part of an offset is stored.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphModel;
use crate::riccati::PareSolution;

/// Largest accepted signed cycle sum when checking offset consistency.
pub const CYCLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormationError {
    #[error("a formation needs at least two agents, got {0}")]
    TooFewAgents(usize),
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("{field} must be {requirement}, got {value}")]
    InvalidValue {
        field: String,
        requirement: &'static str,
        value: f64,
    },
    #[error("offset ({from}, {to}) references an agent outside 0..{agents}")]
    OffsetIndex { from: usize, to: usize, agents: usize },
    #[error("offset from agent {0} to itself")]
    SelfOffset(usize),
    #[error("offset ({from}, {to}) closes a cycle with signed sum norm {discrepancy:.3e}")]
    InconsistentCycle { from: usize, to: usize, discrepancy: f64 },
    #[error("offsets do not connect agent {0} to agent 0")]
    OffsetGraphDisconnected(usize),
}

/// Position and velocity of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl AgentState {
    pub fn at_rest(position: Vec<f64>) -> Self {
        let velocity = vec![0.0; position.len()];
        Self { position, velocity }
    }
}

/// Desired relative position `p_to^d − p_from^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offset {
    pub from: usize,
    pub to: usize,
    pub dp: Vec<f64>,
}

impl Offset {
    pub fn new(from: usize, to: usize, dp: Vec<f64>) -> Self {
        Self { from, to, dp }
    }
}

/// Offsets for every communication edge, both orientations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompletedOffsets {
    map: BTreeMap<(usize, usize), Vec<f64>>,
}

impl CompletedOffsets {
    /// `p_j^d − p_i^d` for an edge `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> Option<&[f64]> {
        self.map.get(&(i, j)).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &[f64])> {
        self.map.iter().map(|(&k, v)| (k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Validated mission description.
#[derive(Debug, Clone)]
pub struct Scenario {
    graph: GraphModel,
    dimension: usize,
    initial_states: Vec<AgentState>,
    initial_energy: Vec<f64>,
    offsets: Vec<Offset>,
    deadline: f64,
    tolerance: f64,
    relative_positions: Vec<Vec<f64>>,
    completed: CompletedOffsets,
}

impl Scenario {
    pub fn new(
        graph: GraphModel,
        dimension: usize,
        initial_states: Vec<AgentState>,
        initial_energy: Vec<f64>,
        offsets: Vec<Offset>,
        deadline: f64,
        tolerance: f64,
    ) -> Result<Self, FormationError> {
        let agents = graph.node_count();
        if agents < 2 {
            return Err(FormationError::TooFewAgents(agents));
        }
        if dimension == 0 {
            return Err(FormationError::DimensionMismatch {
                what: "spatial dimension".into(),
                expected: 1,
                got: 0,
            });
        }
        check_len("initial states", agents, initial_states.len())?;
        check_len("initial energies", agents, initial_energy.len())?;
        for (i, s) in initial_states.iter().enumerate() {
            check_len(&format!("position of agent {i}"), dimension, s.position.len())?;
            check_len(&format!("velocity of agent {i}"), dimension, s.velocity.len())?;
            for &v in s.position.iter().chain(&s.velocity) {
                check_finite(&format!("state of agent {i}"), v)?;
            }
        }
        for (i, &e) in initial_energy.iter().enumerate() {
            check_positive(&format!("energy of agent {i}"), e)?;
        }
        check_positive("deadline", deadline)?;
        check_positive("tolerance", tolerance)?;
        for o in &offsets {
            if o.from >= agents || o.to >= agents {
                return Err(FormationError::OffsetIndex {
                    from: o.from,
                    to: o.to,
                    agents,
                });
            }
            if o.from == o.to {
                return Err(FormationError::SelfOffset(o.from));
            }
            check_len(&format!("offset ({}, {})", o.from, o.to), dimension, o.dp.len())?;
            for &v in &o.dp {
                check_finite(&format!("offset ({}, {})", o.from, o.to), v)?;
            }
        }

        let relative_positions = path_sum_positions(agents, dimension, &offsets)?;
        let completed = complete_edges(&graph, &offsets, &relative_positions);

        Ok(Self {
            graph,
            dimension,
            initial_states,
            initial_energy,
            offsets,
            deadline,
            tolerance,
            relative_positions,
            completed,
        })
    }

    pub fn graph(&self) -> &GraphModel {
        &self.graph
    }

    pub fn agent_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn initial_states(&self) -> &[AgentState] {
        &self.initial_states
    }

    pub fn initial_energy(&self) -> &[f64] {
        &self.initial_energy
    }

    /// Offsets exactly as supplied.
    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn deadline(&self) -> f64 {
        self.deadline
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn completed_offsets(&self) -> &CompletedOffsets {
        &self.completed
    }

    pub fn layout(&self) -> StackedLayout {
        StackedLayout::new(self.agent_count(), self.dimension)
    }

    /// `x(0)` stacked per agent as `[p_1, v_1, …, p_N, v_N]`.
    pub fn initial_stacked(&self) -> DVector<f64> {
        let layout = self.layout();
        let mut x = DVector::zeros(layout.len());
        for (i, s) in self.initial_states.iter().enumerate() {
            x.rows_mut(layout.position(i), self.dimension)
                .copy_from_slice(&s.position);
            x.rows_mut(layout.velocity(i), self.dimension)
                .copy_from_slice(&s.velocity);
        }
        x
    }

    /// Copy of this scenario with a different energy budget.
    pub fn with_initial_energy(&self, energy: Vec<f64>) -> Result<Self, FormationError> {
        Self::new(
            self.graph.clone(),
            self.dimension,
            self.initial_states.clone(),
            energy,
            self.offsets.clone(),
            self.deadline,
            self.tolerance,
        )
    }
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), FormationError> {
    if expected == got {
        Ok(())
    } else {
        Err(FormationError::DimensionMismatch {
            what: what.to_owned(),
            expected,
            got,
        })
    }
}

fn check_finite(field: &str, value: f64) -> Result<(), FormationError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(FormationError::InvalidValue {
            field: field.to_owned(),
            requirement: "finite",
            value,
        })
    }
}

fn check_positive(field: &str, value: f64) -> Result<(), FormationError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(FormationError::InvalidValue {
            field: field.to_owned(),
            requirement: "finite and > 0",
            value,
        })
    }
}

/// Index arithmetic for the per-agent stacked state `[p_1, v_1, …, p_N, v_N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackedLayout {
    pub agents: usize,
    pub dimension: usize,
}

impl StackedLayout {
    pub fn new(agents: usize, dimension: usize) -> Self {
        Self { agents, dimension }
    }

    /// Length of one agent block, `2n`.
    pub fn block(&self) -> usize {
        2 * self.dimension
    }

    pub fn len(&self) -> usize {
        self.agents * self.block()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start(&self, agent: usize) -> usize {
        agent * self.block()
    }

    pub fn position(&self, agent: usize) -> usize {
        self.start(agent)
    }

    pub fn velocity(&self, agent: usize) -> usize {
        self.start(agent) + self.dimension
    }
}

/// Breadth-first path sums over the offset graph with agent 0 at the origin.
fn path_sum_positions(agents: usize, dimension: usize, offsets: &[Offset]) -> Result<Vec<Vec<f64>>, FormationError> {
    // (neighbor, sign) pairs so that p_neighbor = p_self + sign·dp
    let mut adjacency: Vec<Vec<(usize, f64, usize)>> = vec![Vec::new(); agents];
    for (k, o) in offsets.iter().enumerate() {
        adjacency[o.from].push((o.to, 1.0, k));
        adjacency[o.to].push((o.from, -1.0, k));
    }
    let mut positions: Vec<Option<Vec<f64>>> = vec![None; agents];
    positions[0] = Some(vec![0.0; dimension]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let base = positions[i].clone().expect("queued agents are placed");
        for &(j, sign, k) in &adjacency[i] {
            if positions[j].is_none() {
                let p = base.iter().zip(&offsets[k].dp).map(|(b, d)| b + sign * d).collect();
                positions[j] = Some(p);
                queue.push_back(j);
            }
        }
    }
    let positions: Vec<Vec<f64>> = positions
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.ok_or(FormationError::OffsetGraphDisconnected(i)))
        .collect::<Result<_, _>>()?;

    for o in offsets {
        let discrepancy = positions[o.to]
            .iter()
            .zip(&positions[o.from])
            .zip(&o.dp)
            .map(|((pt, pf), d)| (pt - pf - d).powi(2))
            .sum::<f64>()
            .sqrt();
        if discrepancy > CYCLE_TOL {
            return Err(FormationError::InconsistentCycle {
                from: o.from,
                to: o.to,
                discrepancy,
            });
        }
    }
    Ok(positions)
}

fn complete_edges(graph: &GraphModel, offsets: &[Offset], positions: &[Vec<f64>]) -> CompletedOffsets {
    let mut map = BTreeMap::new();
    for &(i, j) in graph.edges() {
        let forward: Vec<f64> = offsets
            .iter()
            .find_map(|o| {
                if (o.from, o.to) == (i, j) {
                    Some(o.dp.clone())
                } else if (o.from, o.to) == (j, i) {
                    Some(o.dp.iter().map(|d| -d).collect())
                } else {
                    None
                }
            })
            .unwrap_or_else(|| positions[j].iter().zip(&positions[i]).map(|(a, b)| a - b).collect());
        let backward = forward.iter().map(|d| -d).collect();
        map.insert((i, j), forward);
        map.insert((j, i), backward);
    }
    CompletedOffsets { map }
}

/// Offsets for every communication edge, derived by path summation where the
/// scenario does not supply them. Supplied offsets are kept verbatim.
pub fn complete_offsets(scenario: &Scenario) -> CompletedOffsets {
    scenario.completed.clone()
}

/// Fixes the free common translation when turning offsets into absolute
/// desired positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gauge {
    /// Agent 0 sits at the origin.
    Origin,
    /// The given agent's desired position equals its initial position.
    Anchor(usize),
    /// Mean desired position equals the mean initial position.
    Centroid,
}

/// One realization `x^d` of the offsets; velocity part is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredState {
    layout: StackedLayout,
    positions: Vec<Vec<f64>>,
    stacked: DVector<f64>,
}

impl DesiredState {
    pub fn from_positions(positions: Vec<Vec<f64>>) -> Self {
        let dimension = positions.first().map_or(0, Vec::len);
        let layout = StackedLayout::new(positions.len(), dimension);
        let mut stacked = DVector::zeros(layout.len());
        for (i, p) in positions.iter().enumerate() {
            stacked.rows_mut(layout.position(i), dimension).copy_from_slice(p);
        }
        Self {
            layout,
            positions,
            stacked,
        }
    }

    pub fn layout(&self) -> StackedLayout {
        self.layout
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn stacked(&self) -> &DVector<f64> {
        &self.stacked
    }
}

pub fn realize_desired_state(scenario: &Scenario, gauge: Gauge) -> DesiredState {
    let n = scenario.dimension;
    let rel = &scenario.relative_positions;
    let shift: Vec<f64> = match gauge {
        Gauge::Origin => vec![0.0; n],
        Gauge::Anchor(agent) => {
            let p0 = &scenario.initial_states[agent].position;
            (0..n).map(|k| p0[k] - rel[agent][k]).collect()
        }
        Gauge::Centroid => {
            let count = scenario.agent_count() as f64;
            (0..n)
                .map(|k| {
                    let initial: f64 = scenario.initial_states.iter().map(|s| s.position[k]).sum();
                    let desired: f64 = rel.iter().map(|p| p[k]).sum();
                    (initial - desired) / count
                })
                .collect()
        }
    };
    let positions = rel
        .iter()
        .map(|p| p.iter().zip(&shift).map(|(a, b)| a + b).collect())
        .collect();
    DesiredState::from_positions(positions)
}

/// Which agent pairs the formation error ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMetric {
    #[default]
    AllPairs,
    EdgesOnly,
}

/// `max ‖x_i − x_j − (x_i^d − x_j^d)‖` over all ordered pairs.
pub fn formation_error(state: &[f64], desired: &DesiredState) -> f64 {
    let layout = desired.layout;
    let mut worst: f64 = 0.0;
    for i in 0..layout.agents {
        for j in i + 1..layout.agents {
            worst = worst.max(pair_error(state, desired, i, j));
        }
    }
    worst
}

/// Like [`formation_error`], restricted to communication edges for
/// [`ErrorMetric::EdgesOnly`].
pub fn formation_error_with(state: &[f64], desired: &DesiredState, graph: &GraphModel, metric: ErrorMetric) -> f64 {
    match metric {
        ErrorMetric::AllPairs => formation_error(state, desired),
        ErrorMetric::EdgesOnly => graph
            .edges()
            .iter()
            .map(|&(i, j)| pair_error(state, desired, i, j))
            .fold(0.0, f64::max),
    }
}

fn pair_error(state: &[f64], desired: &DesiredState, i: usize, j: usize) -> f64 {
    let layout = desired.layout;
    let xd = desired.stacked.as_slice();
    let (si, sj) = (layout.start(i), layout.start(j));
    (0..layout.block())
        .map(|k| {
            let e = (state[si + k] - xd[si + k]) - (state[sj + k] - xd[sj + k]);
            e * e
        })
        .sum::<f64>()
        .sqrt()
}

/// `V(x(0))` and `V_L(0)` evaluated with the same `x^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovValues {
    pub v0: f64,
    pub vl0: f64,
}

/// `V(x) = (x − x^d)ᵀ[(I_N − 11ᵀ/N) ⊗ P](x − x^d)`.
pub fn lyapunov_value(state: &[f64], desired: &DesiredState, pare: &PareSolution) -> f64 {
    let layout = desired.layout;
    let block = layout.block();
    let xd = desired.stacked.as_slice();
    let mut mean = vec![0.0; block];
    for i in 0..layout.agents {
        for k in 0..block {
            mean[k] += state[layout.start(i) + k] - xd[layout.start(i) + k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= layout.agents as f64);
    let p = pare.p();
    let mut total = 0.0;
    let mut centered = vec![0.0; block];
    for i in 0..layout.agents {
        let s = layout.start(i);
        for k in 0..block {
            centered[k] = state[s + k] - xd[s + k] - mean[k];
        }
        for r in 0..block {
            for c in 0..block {
                total += centered[r] * p[(r, c)] * centered[c];
            }
        }
    }
    total
}

/// `V_L(x) = (x − x^d)ᵀ(L ⊗ I_{2n})(x − x^d)`, a sum over edges.
pub fn laplacian_value(state: &[f64], desired: &DesiredState, graph: &GraphModel) -> f64 {
    graph
        .edges()
        .iter()
        .map(|&(i, j)| pair_error(state, desired, i, j).powi(2))
        .sum()
}

pub fn lyapunov_values(scenario: &Scenario, pare: &PareSolution) -> Result<LyapunovValues, FormationError> {
    let desired = realize_desired_state(scenario, Gauge::Centroid);
    lyapunov_values_with(scenario, &desired, pare)
}

pub fn lyapunov_values_with(
    scenario: &Scenario,
    desired: &DesiredState,
    pare: &PareSolution,
) -> Result<LyapunovValues, FormationError> {
    check_len("PARE solution dimension", scenario.dimension, pare.dimension())?;
    check_len("desired state", scenario.layout().len(), desired.stacked.len())?;
    let x0 = scenario.initial_stacked();
    Ok(LyapunovValues {
        v0: lyapunov_value(x0.as_slice(), desired, pare),
        vl0: laplacian_value(x0.as_slice(), desired, &scenario.graph),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::{solve_pare, ControlParams};
    use crate::scenarios;
    use nalgebra::DMatrix;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    #[test]
    fn bundled_offsets_complete_edge_45() {
        let s = scenarios::sim_one();
        let d45 = s.completed_offsets().get(3, 4).unwrap();
        assert!(close(d45, &[0.0, -2.5]));
        assert!(close(s.completed_offsets().get(4, 3).unwrap(), &[0.0, 2.5]));
        // five pentagon edges, both orientations
        assert_eq!(s.completed_offsets().len(), 10);
    }

    #[test]
    fn bundled_offsets_realize() {
        let s = scenarios::sim_one();
        let d = realize_desired_state(&s, Gauge::Origin);
        let expected = [[0.0, 0.0], [5.0, -2.5], [10.0, 0.0], [5.0, 2.5], [5.0, 0.0]];
        for (p, e) in d.positions().iter().zip(expected) {
            assert!(close(p, &e), "{p:?} vs {e:?}");
        }
        assert!(d.stacked().rows(2, 2).iter().all(|&v| v == 0.0));
    }

    fn three_agents(offsets: Vec<Offset>) -> Result<Scenario, FormationError> {
        let graph = GraphModel::complete(3).unwrap();
        let states = (0..3).map(|k| AgentState::at_rest(vec![k as f64])).collect();
        Scenario::new(graph, 1, states, vec![1.0; 3], offsets, 1.0, 0.1)
    }

    #[test]
    fn chain_completion() {
        let s = three_agents(vec![Offset::new(0, 1, vec![1.5]), Offset::new(1, 2, vec![1.5])]).unwrap();
        assert_eq!(s.completed_offsets().get(0, 2).unwrap(), &[3.0]);
        assert_eq!(s.completed_offsets().get(2, 0).unwrap(), &[-3.0]);
    }

    #[test]
    fn antisymmetric_duplicate_accepted() {
        let s = three_agents(vec![
            Offset::new(0, 1, vec![2.0]),
            Offset::new(1, 0, vec![-2.0]),
            Offset::new(1, 2, vec![0.5]),
        ])
        .unwrap();
        assert_eq!(s.completed_offsets().get(0, 1).unwrap(), &[2.0]);
    }

    #[test]
    fn inconsistent_and_disconnected_offsets() {
        let err = three_agents(vec![
            Offset::new(0, 1, vec![1.0]),
            Offset::new(1, 2, vec![1.0]),
            Offset::new(0, 2, vec![1.0]),
        ])
        .unwrap_err();
        assert!(matches!(err, FormationError::InconsistentCycle { from: 1, to: 2, .. }));

        let err = three_agents(vec![
            Offset::new(0, 1, vec![1.0]),
            Offset::new(1, 0, vec![1.0]),
            Offset::new(1, 2, vec![1.0]),
        ])
        .unwrap_err();
        assert!(matches!(err, FormationError::InconsistentCycle { .. }));

        let err = three_agents(vec![Offset::new(0, 1, vec![1.0])]).unwrap_err();
        assert_eq!(err, FormationError::OffsetGraphDisconnected(2));
    }

    #[test]
    fn scenario_validation() {
        assert!(matches!(
            three_agents(vec![Offset::new(0, 0, vec![1.0])]),
            Err(FormationError::SelfOffset(0))
        ));
        assert!(matches!(
            three_agents(vec![Offset::new(0, 5, vec![1.0])]),
            Err(FormationError::OffsetIndex { .. })
        ));
        assert!(matches!(
            three_agents(vec![Offset::new(0, 1, vec![1.0, 2.0])]),
            Err(FormationError::DimensionMismatch { .. })
        ));
        let graph = GraphModel::path(2).unwrap();
        let states = vec![AgentState::at_rest(vec![0.0]); 2];
        let offsets = vec![Offset::new(0, 1, vec![1.0])];
        let bad_deadline = Scenario::new(
            graph.clone(),
            1,
            states.clone(),
            vec![1.0; 2],
            offsets.clone(),
            0.0,
            0.1,
        );
        assert!(matches!(bad_deadline, Err(FormationError::InvalidValue { .. })));
        let bad_energy = Scenario::new(graph, 1, states, vec![1.0, -1.0], offsets, 1.0, 0.1);
        assert!(matches!(bad_energy, Err(FormationError::InvalidValue { .. })));
    }

    #[test]
    fn zero_offsets_give_rendezvous() {
        let s = three_agents(vec![Offset::new(0, 1, vec![0.0]), Offset::new(1, 2, vec![0.0])]).unwrap();
        let d = realize_desired_state(&s, Gauge::Anchor(2));
        assert!(d.positions().iter().all(|p| p == &vec![2.0]));
    }

    #[test]
    fn gauges() {
        let s = scenarios::sim_one();
        let anchor = realize_desired_state(&s, Gauge::Anchor(1));
        assert!(close(&anchor.positions()[1], &s.initial_states()[1].position));
        let centroid = realize_desired_state(&s, Gauge::Centroid);
        for k in 0..2 {
            let want: f64 = s.initial_states().iter().map(|a| a.position[k]).sum();
            let got: f64 = centroid.positions().iter().map(|p| p[k]).sum();
            assert!((want - got).abs() < 1e-12);
        }
        let pare = solve_pare(&ControlParams::new(450.0, 1.3, 0.2).unwrap(), 2).unwrap();
        let a = lyapunov_values_with(&s, &anchor, &pare).unwrap();
        let c = lyapunov_values_with(&s, &centroid, &pare).unwrap();
        assert!((a.v0 - c.v0).abs() <= 1e-9 * c.v0);
        assert!((a.vl0 - c.vl0).abs() <= 1e-9 * c.vl0);
    }

    #[test]
    fn formation_error_examples() {
        let s = scenarios::sim_one();
        let d = realize_desired_state(&s, Gauge::Centroid);
        assert_eq!(formation_error(d.stacked().as_slice(), &d), 0.0);
        assert!(formation_error(s.initial_stacked().as_slice(), &d) > s.tolerance());

        let two = DesiredState::from_positions(vec![vec![0.0], vec![0.0]]);
        assert_eq!(formation_error(&[1.0, 0.0, 0.0, 0.0], &two), 1.0);
    }

    #[test]
    fn edges_only_metric_never_exceeds_all_pairs() {
        let s = scenarios::sim_one();
        let d = realize_desired_state(&s, Gauge::Centroid);
        let x0 = s.initial_stacked();
        let all = formation_error_with(x0.as_slice(), &d, s.graph(), ErrorMetric::AllPairs);
        let edges = formation_error_with(x0.as_slice(), &d, s.graph(), ErrorMetric::EdgesOnly);
        assert!(edges <= all && edges > 0.0);
    }

    /// Dense `(x − x^d)ᵀ M (x − x^d)` with the Kronecker matrices built explicitly.
    fn dense_forms(s: &Scenario, d: &DesiredState, pare: &PareSolution) -> (f64, f64) {
        let n_agents = s.agent_count();
        let e = s.initial_stacked() - d.stacked();
        let proj = DMatrix::<f64>::identity(n_agents, n_agents)
            - DMatrix::from_element(n_agents, n_agents, 1.0 / n_agents as f64);
        let v = (e.transpose() * proj.kronecker(pare.p()) * &e)[(0, 0)];
        let block = 2 * s.dimension();
        let vl = (e.transpose() * s.graph().laplacian().kronecker(&DMatrix::identity(block, block)) * &e)[(0, 0)];
        (v, vl)
    }

    #[test]
    fn lyapunov_values_match_dense_quadratic_forms() {
        let s = scenarios::sim_one();
        let pare = solve_pare(&ControlParams::new(450.0, 1.3, 0.2).unwrap(), 2).unwrap();
        let d = realize_desired_state(&s, Gauge::Centroid);
        let values = lyapunov_values(&s, &pare).unwrap();
        let (v, vl) = dense_forms(&s, &d, &pare);
        assert!(values.v0 > 0.0 && values.v0.is_finite());
        assert!(values.vl0 > 0.0 && values.vl0.is_finite());
        assert!((values.v0 - v).abs() < 1e-10 * v);
        assert!((values.vl0 - vl).abs() < 1e-10 * vl);
    }

    #[test]
    fn lyapunov_values_vanish_on_translation() {
        let s = scenarios::sim_one();
        let pare = solve_pare(&ControlParams::new(5.0, 1.3, 0.3).unwrap(), 2).unwrap();
        let d = realize_desired_state(&s, Gauge::Origin);
        let mut shifted = d.stacked().clone();
        for i in 0..5 {
            shifted[4 * i] += 3.0;
            shifted[4 * i + 1] -= 7.0;
            shifted[4 * i + 2] += 0.5;
        }
        assert!(lyapunov_value(d.stacked().as_slice(), &d, &pare).abs() < 1e-20);
        assert!(lyapunov_value(shifted.as_slice(), &d, &pare).abs() < 1e-10);
        assert!(laplacian_value(shifted.as_slice(), &d, s.graph()).abs() < 1e-20);
        assert_eq!(formation_error(shifted.as_slice(), &d), 0.0);
    }

    #[test]
    fn lyapunov_dimension_mismatch() {
        let s = scenarios::sim_one();
        let pare = solve_pare(&ControlParams::new(5.0, 1.3, 0.3).unwrap(), 3).unwrap();
        assert!(matches!(
            lyapunov_values(&s, &pare),
            Err(FormationError::DimensionMismatch { .. })
        ));
    }
}
