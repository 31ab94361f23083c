//! Command implementations behind the `formctl` binary.
//!
//! Each command returns its exit code; input problems come back as
//! [`CliError`] and map to [`exit::INPUT`].

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::controller::{mode_closed_loop_matrix, mode_decompose};
use crate::feasibility::{preflight, FeasibilityError};
use crate::formation::{realize_desired_state, Gauge, Scenario};
use crate::linalg::eigenvalues;
use crate::output::{serialize_sig9, serialize_sig9_opt, sig9};
use crate::riccati::{solve_pare, ControlParams, Param};
use crate::scenario_file::{ScenarioFile, ScenarioFileError};
use crate::simulator::{simulate, simulate_modes, SimConfig, SimError, Trajectory};
use crate::sweep::{default_grid, parse_grid, run_sweep_with_threads, Quantity, SweepError, SweepSpec, Verdict};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const INPUT: u8 = 1;
    pub const INFEASIBLE: u8 = 2;
    pub const MISSION_FAILED: u8 = 3;
    pub const NOT_MONOTONE: u8 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Scenario {
        path: PathBuf,
        #[source]
        source: ScenarioFileError,
    },
    #[error(transparent)]
    Feasibility(#[from] FeasibilityError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("writing output: {0}")]
    Output(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        exit::INPUT
    }
}

pub struct Loaded {
    pub scenario: Scenario,
    pub params: ControlParams,
    pub sim: SimConfig,
}

pub fn load_scenario(path: &Path) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })?;
    let wrap = |source| CliError::Scenario {
        path: path.to_owned(),
        source,
    };
    let (scenario, params, sim) = ScenarioFile::parse(&text).and_then(|f| f.build()).map_err(wrap)?;
    Ok(Loaded { scenario, params, sim })
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Prints the feasibility report as JSON; exit 0 when feasible, 2 otherwise.
pub fn cmd_check<W: Write>(path: &Path, out: W) -> Result<u8, CliError> {
    let loaded = load_scenario(path)?;
    let report = preflight(&loaded.scenario, &loaded.params)?;
    write_json(out, &report)?;
    Ok(if report.feasible { exit::OK } else { exit::INFEASIBLE })
}

#[derive(Debug, Clone, Default)]
pub struct SimulateOptions {
    /// Trajectory CSV destination.
    pub out: Option<PathBuf>,
    /// Summary JSON destination; printed to the command's writer when absent.
    pub summary: Option<PathBuf>,
    /// Overrides the file's step.
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentSummary {
    pub id: usize,
    #[serde(serialize_with = "serialize_sig9")]
    pub initial_energy: f64,
    #[serde(serialize_with = "serialize_sig9")]
    pub consumed: f64,
    #[serde(serialize_with = "serialize_sig9")]
    pub remaining: f64,
    #[serde(serialize_with = "serialize_sig9_opt", skip_serializing_if = "Option::is_none")]
    pub exhausted_at: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExhaustionSummary {
    pub id: usize,
    #[serde(serialize_with = "serialize_sig9")]
    pub time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    #[serde(serialize_with = "serialize_sig9_opt", skip_serializing_if = "Option::is_none")]
    pub t_f: Option<f64>,
    pub formation_held: bool,
    pub mission_succeeded: bool,
    #[serde(rename = "T", serialize_with = "serialize_sig9")]
    pub deadline: f64,
    #[serde(rename = "epsilon", serialize_with = "serialize_sig9")]
    pub tolerance: f64,
    #[serde(serialize_with = "serialize_sig9")]
    pub step: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exhausted_agent: Option<ExhaustionSummary>,
    #[serde(serialize_with = "serialize_sig9")]
    pub final_formation_error: f64,
    #[serde(serialize_with = "serialize_sig9")]
    pub total_consumed: f64,
    #[serde(serialize_with = "serialize_sig9")]
    pub total_remaining: f64,
    pub agents: Vec<AgentSummary>,
}

impl SimulationSummary {
    pub fn from_trajectory(traj: &Trajectory, deadline: f64) -> Self {
        let agents: Vec<AgentSummary> = traj
            .initial_energy
            .iter()
            .zip(traj.final_consumed())
            .zip(traj.final_energies())
            .enumerate()
            .map(|(i, ((&initial_energy, &consumed), &remaining))| AgentSummary {
                id: i + 1,
                initial_energy,
                consumed,
                remaining,
                exhausted_at: traj.exhaustions.iter().find(|e| e.agent == i).map(|e| e.time),
            })
            .collect();
        Self {
            t_f: traj.formation_time,
            formation_held: traj.formation_held,
            mission_succeeded: traj.mission_succeeded(deadline),
            deadline,
            tolerance: traj.tolerance,
            step: traj.step,
            exhausted_agent: traj.exhausted_agent().map(|e| ExhaustionSummary {
                id: e.agent + 1,
                time: e.time,
            }),
            final_formation_error: traj.final_formation_error(),
            total_consumed: agents.iter().map(|a| a.consumed).sum(),
            total_remaining: agents.iter().map(|a| a.remaining).sum(),
            agents,
        }
    }
}

/// Runs the closed loop; exit 0 when the mission succeeds, 3 otherwise.
pub fn cmd_simulate<W: Write>(path: &Path, options: &SimulateOptions, out: W) -> Result<u8, CliError> {
    let Loaded {
        scenario,
        params,
        mut sim,
    } = load_scenario(path)?;
    if let Some(step) = options.step {
        sim.step = step;
    }
    let traj = simulate(&scenario, &params, &sim)?;
    if let Some(csv) = &options.out {
        let mut file = create(csv)?;
        traj.write_csv(&mut file)?;
        file.flush()?;
    }
    let summary = SimulationSummary::from_trajectory(&traj, scenario.deadline());
    match &options.summary {
        Some(p) => write_json(create(p)?, &summary)?,
        None => write_json(out, &summary)?,
    }
    Ok(if summary.mission_succeeded {
        exit::OK
    } else {
        exit::MISSION_FAILED
    })
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub vary: Param,
    pub quantity: Quantity,
    /// `start:stop:count` or `log:start:stop:count`; a default grid otherwise.
    pub grid: Option<String>,
    /// CSV destination; the CSV goes to the command's writer when absent.
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

#[derive(Debug, Serialize)]
struct SweepVerdictOutput {
    varied: Param,
    quantity: Quantity,
    expected: crate::sweep::Direction,
    verdict: Verdict,
    points: usize,
}

/// Exit 0 when the sweep follows the predicted direction, 4 otherwise.
pub fn cmd_sweep<W: Write>(path: &Path, options: &SweepOptions, mut out: W) -> Result<u8, CliError> {
    let Loaded { scenario, params, .. } = load_scenario(path)?;
    let grid = match &options.grid {
        Some(spec) => parse_grid(spec)?,
        None => default_grid(options.vary, &scenario),
    };
    let spec = SweepSpec {
        scenario: &scenario,
        varied: options.vary,
        grid,
        base: params,
        quantity: options.quantity,
    };
    let threads = options.threads.unwrap_or_else(rayon::current_num_threads);
    let result = run_sweep_with_threads(&spec, threads)?;
    match &options.out {
        Some(p) => {
            let mut file = create(p)?;
            result.write_csv(&mut file)?;
            file.flush()?;
            let verdict = SweepVerdictOutput {
                varied: result.varied,
                quantity: result.quantity,
                expected: result.expected,
                verdict: result.verdict,
                points: result.rows.len(),
            };
            write_json(out, &verdict)?;
        }
        None => {
            result.write_csv(&mut out)?;
            out.flush()?;
        }
    }
    Ok(if result.verdict.is_monotone() {
        exit::OK
    } else {
        exit::NOT_MONOTONE
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Complex {
    #[serde(serialize_with = "serialize_sig9")]
    pub re: f64,
    #[serde(serialize_with = "serialize_sig9")]
    pub im: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeEntry {
    pub index: usize,
    #[serde(serialize_with = "serialize_sig9")]
    pub lambda: f64,
    pub eigenvalues: Vec<Complex>,
    #[serde(serialize_with = "serialize_sig9")]
    pub initial_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModesReport {
    pub modes: Vec<ModeEntry>,
    /// Max-abs gap between the coupled simulation and the recombined modes.
    #[serde(serialize_with = "serialize_sig9")]
    pub residual: f64,
}

pub fn modes_report(scenario: &Scenario, params: &ControlParams, sim: &SimConfig) -> Result<ModesReport, CliError> {
    let pare = solve_pare(params, scenario.dimension()).map_err(SimError::from)?;
    let graph = scenario.graph();
    let desired = realize_desired_state(scenario, Gauge::Centroid);
    let initial = mode_decompose(scenario.initial_stacked().as_slice(), &desired, graph)
        .expect("scenario and desired state share a layout");
    let coupled = simulate(scenario, params, sim)?;
    let modes = simulate_modes(scenario, params, sim)?;
    let entries = graph
        .eigenvalues()
        .iter()
        .zip(&initial)
        .enumerate()
        .map(|(index, (&lambda, x0))| {
            let mut eig: Vec<Complex> = eigenvalues(&mode_closed_loop_matrix(lambda, params, &pare))
                .iter()
                .map(|z| Complex {
                    re: sig9(z.re),
                    im: sig9(z.im),
                })
                .collect();
            eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            ModeEntry {
                index,
                lambda,
                eigenvalues: eig,
                initial_norm: x0.norm(),
            }
        })
        .collect();
    Ok(ModesReport {
        modes: entries,
        residual: modes.max_deviation(&coupled, graph),
    })
}

/// Per-mode spectrum, initial norms and reconstruction residual as JSON.
pub fn cmd_modes<W: Write>(path: &Path, step: Option<f64>, out: W) -> Result<u8, CliError> {
    let Loaded {
        scenario,
        params,
        mut sim,
    } = load_scenario(path)?;
    if let Some(step) = step {
        sim.step = step;
    }
    let report = modes_report(&scenario, &params, &sim)?;
    write_json(out, &report)?;
    Ok(exit::OK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn fixture(name: &str, text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(name);
        fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn check_exit_codes() {
        let (_d, two) = fixture("simII.json", scenarios::SIM_TWO_JSON);
        let mut buf = Vec::new();
        assert_eq!(cmd_check(&two, &mut buf).unwrap(), exit::INFEASIBLE);
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["time_feasible"], false);

        let (_d, bad) = fixture("bad.json", "{ \"dimension\": ");
        let err = cmd_check(&bad, io::sink()).unwrap_err();
        assert_eq!(err.exit_code(), exit::INPUT);
        assert!(err.to_string().contains("bad.json"));
    }

    #[test]
    fn sweep_rejects_sigma_beyond_lambda2() {
        let (_d, one) = fixture("simI.json", scenarios::SIM_ONE_JSON);
        let options = SweepOptions {
            vary: Param::Sigma,
            quantity: Quantity::TerminationBound,
            grid: Some("0.5:2.0:10".into()),
            out: None,
            threads: Some(1),
        };
        let err = cmd_sweep(&one, &options, io::sink()).unwrap_err();
        assert!(matches!(err, CliError::Sweep(SweepError::SigmaExceedsLambda2 { .. })));
    }

    #[test]
    fn sweep_csv_to_writer() {
        let (_d, one) = fixture("simI.json", scenarios::SIM_ONE_JSON);
        let options = SweepOptions {
            vary: Param::Beta,
            quantity: Quantity::EnergyBoundTotal,
            grid: Some("0:4:5".into()),
            out: None,
            threads: Some(2),
        };
        let mut buf = Vec::new();
        assert_eq!(cmd_sweep(&one, &options, &mut buf).unwrap(), exit::OK);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.starts_with("varied_param,value,quantity,assumption2_ok\nbeta,0,"));
    }
}
