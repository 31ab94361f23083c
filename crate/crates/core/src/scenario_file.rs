//! JSON scenario documents.
//!
//! Agent ids and edge endpoints are one-based in files and zero-based in the
//! library. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formation::{AgentState, FormationError, Offset, Scenario};
use crate::graph::{GraphError, GraphModel};
use crate::riccati::{ControlParams, RiccatiError};
use crate::simulator::SimConfig;

/// The only accepted value of the `convention` key: offsets are `p_to − p_from`.
pub const OFFSET_CONVENTION: &str = "j-minus-i";

#[derive(Debug, Error)]
pub enum ScenarioFileError {
    #[error("{path}: {message} (line {line}, column {column})")]
    Syntax {
        path: String,
        message: String,
        line: usize,
        column: usize,
    },
    #[error("convention must be \"{OFFSET_CONVENTION}\", got \"{0}\"")]
    Convention(String),
    #[error("agents: {0}")]
    AgentIds(String),
    #[error("edges: {0}")]
    Graph(#[from] GraphError),
    #[error("params: {0}")]
    Params(#[from] RiccatiError),
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error("sim: {0}")]
    Sim(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub id: usize,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffsetEntry {
    pub from: usize,
    pub to: usize,
    pub dp: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub convention: String,
    pub dimension: usize,
    pub agents: Vec<AgentEntry>,
    pub edges: Vec<[usize; 2]>,
    pub offsets: Vec<OffsetEntry>,
    pub deadline: f64,
    pub tolerance: f64,
    pub params: ControlParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioFileError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|err| {
            let path = err.path().to_string();
            let inner = err.into_inner();
            ScenarioFileError::Syntax {
                path,
                message: strip_position(&inner.to_string()),
                line: inner.line(),
                column: inner.column(),
            }
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario files always serialize")
    }

    /// Validated scenario, parameters and simulation settings.
    pub fn build(&self) -> Result<(Scenario, ControlParams, SimConfig), ScenarioFileError> {
        if self.convention != OFFSET_CONVENTION {
            return Err(ScenarioFileError::Convention(self.convention.clone()));
        }
        let agents = self.agents.len();
        let mut by_id: Vec<Option<&AgentEntry>> = vec![None; agents];
        for a in &self.agents {
            if a.id == 0 || a.id > agents {
                return Err(ScenarioFileError::AgentIds(format!("id {} outside 1..={agents}", a.id)));
            }
            if by_id[a.id - 1].replace(a).is_some() {
                return Err(ScenarioFileError::AgentIds(format!("duplicate id {}", a.id)));
            }
        }
        let ordered: Vec<&AgentEntry> = by_id.into_iter().map(|a| a.expect("ids are a permutation")).collect();

        let edges = self
            .edges
            .iter()
            .map(|&[i, j]| one_based_pair(i, j, agents).map_err(ScenarioFileError::from))
            .collect::<Result<Vec<_>, _>>()?;
        let graph = GraphModel::new(agents, &edges)?;

        let offsets = self
            .offsets
            .iter()
            .map(|o| {
                if o.from == 0 || o.to == 0 {
                    return Err(FormationError::OffsetIndex {
                        from: o.from,
                        to: o.to,
                        agents,
                    });
                }
                Ok(Offset::new(o.from - 1, o.to - 1, o.dp.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;

        let scenario = Scenario::new(
            graph,
            self.dimension,
            ordered
                .iter()
                .map(|a| AgentState {
                    position: a.position.clone(),
                    velocity: a.velocity.clone(),
                })
                .collect(),
            ordered.iter().map(|a| a.energy).collect(),
            offsets,
            self.deadline,
            self.tolerance,
        )?;
        let params = ControlParams::new(self.params.alpha, self.params.sigma, self.params.beta)?;

        let mut sim = SimConfig::default();
        if let Some(section) = self.sim {
            if let Some(step) = section.step {
                if !(step.is_finite() && step > 0.0) {
                    return Err(ScenarioFileError::Sim(format!("step must be positive, got {step}")));
                }
                sim.step = step;
            }
            if let Some(stride) = section.record_stride {
                if stride == 0 {
                    return Err(ScenarioFileError::Sim("record_stride must be at least 1".into()));
                }
                sim.record_stride = stride;
            }
        }
        Ok((scenario, params, sim))
    }

    /// Inverse of [`ScenarioFile::build`].
    pub fn from_parts(scenario: &Scenario, params: &ControlParams, sim: Option<SimSection>) -> Self {
        Self {
            convention: OFFSET_CONVENTION.to_owned(),
            dimension: scenario.dimension(),
            agents: scenario
                .initial_states()
                .iter()
                .zip(scenario.initial_energy())
                .enumerate()
                .map(|(i, (s, &energy))| AgentEntry {
                    id: i + 1,
                    position: s.position.clone(),
                    velocity: s.velocity.clone(),
                    energy,
                })
                .collect(),
            edges: scenario.graph().edges().iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            offsets: scenario
                .offsets()
                .iter()
                .map(|o| OffsetEntry {
                    from: o.from + 1,
                    to: o.to + 1,
                    dp: o.dp.clone(),
                })
                .collect(),
            deadline: scenario.deadline(),
            tolerance: scenario.tolerance(),
            params: *params,
            sim,
        }
    }
}

fn one_based_pair(i: usize, j: usize, agents: usize) -> Result<(usize, usize), GraphError> {
    if i == 0 || j == 0 || i > agents || j > agents {
        return Err(GraphError::IndexOutOfRange(i, j, agents + 1));
    }
    Ok((i - 1, j - 1))
}

/// serde_json appends " at line L column C"; the position is reported separately.
fn strip_position(message: &str) -> String {
    match message.rfind(" at line ") {
        Some(idx) => message[..idx].to_owned(),
        None => message.to_owned(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn bundled_files_parse() {
        for text in [
            scenarios::SIM_ONE_JSON,
            scenarios::SIM_TWO_JSON,
            scenarios::SIM_THREE_JSON,
        ] {
            let file = ScenarioFile::parse(text).unwrap();
            let (s, _, sim) = file.build().unwrap();
            assert_eq!(s.agent_count(), 5);
            assert_eq!(sim.step, 1e-4);
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let text = scenarios::SIM_ONE_JSON.replacen("\"energy\": 1000", "\"energy\": 1000, \"mass\": 2", 1);
        match ScenarioFile::parse(&text).unwrap_err() {
            ScenarioFileError::Syntax {
                path, message, line, ..
            } => {
                assert!(path.starts_with("agents[0]"), "{path}");
                assert!(message.contains("mass"), "{message}");
                assert!(line > 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_errors_report_field() {
        let text = scenarios::SIM_ONE_JSON.replacen("\"deadline\": 3", "\"deadline\": \"soon\"", 1);
        match ScenarioFile::parse(&text).unwrap_err() {
            ScenarioFileError::Syntax { path, .. } => assert_eq!(path, "deadline"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_errors() {
        let mut file = ScenarioFile::parse(scenarios::SIM_ONE_JSON).unwrap();
        file.convention = "i-minus-j".into();
        assert!(matches!(file.build(), Err(ScenarioFileError::Convention(_))));

        let mut file = ScenarioFile::parse(scenarios::SIM_ONE_JSON).unwrap();
        file.agents[1].id = 1;
        assert!(matches!(file.build(), Err(ScenarioFileError::AgentIds(_))));

        let mut file = ScenarioFile::parse(scenarios::SIM_ONE_JSON).unwrap();
        file.edges.push([3, 3]);
        assert!(matches!(
            file.build(),
            Err(ScenarioFileError::Graph(GraphError::SelfLoop(2)))
        ));

        let mut file = ScenarioFile::parse(scenarios::SIM_ONE_JSON).unwrap();
        file.offsets[3].from = 1;
        file.offsets[3].to = 4;
        assert!(matches!(
            file.build(),
            Err(ScenarioFileError::Formation(FormationError::InconsistentCycle { .. }))
        ));

        let mut file = ScenarioFile::parse(scenarios::SIM_ONE_JSON).unwrap();
        file.params.alpha = -1.0;
        assert!(matches!(file.build(), Err(ScenarioFileError::Params(_))));
    }

    #[test]
    fn agents_may_be_listed_out_of_order() {
        let mut file = ScenarioFile::parse(scenarios::SIM_ONE_JSON).unwrap();
        file.agents.reverse();
        let (s, _, _) = file.build().unwrap();
        assert_eq!(s.initial_states()[0].position, vec![0.0, 4.0]);
    }
}
