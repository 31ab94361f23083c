//! One-parameter sweeps of `T_l`, `E_l` and `λ_min(P)` with a check of the
//! predicted monotonicity direction.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::feasibility::{assumption2_check, energy_bound, termination_bound};
use crate::formation::{lyapunov_values_with, realize_desired_state, DesiredState, Gauge, Scenario};
use crate::output::sig9;
use crate::riccati::{solve_pare, ControlParams, Param, RiccatiError};

/// Adjacent differences smaller than this (relative) count as ties.
pub const TIE_RTOL: f64 = 1e-9;

/// Default σ grids stop at this fraction of λ₂.
pub const SIGMA_CAP: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("sigma grid value {value} is not below λ₂ = {lambda2}")]
    SigmaExceedsLambda2 { value: f64, lambda2: f64 },
    #[error("grid is empty")]
    EmptyGrid,
    #[error("grid must be strictly increasing (index {0})")]
    GridNotIncreasing(usize),
    #[error("bad grid spec `{0}`: expected start:stop:count or log:start:stop:count")]
    BadGridSpec(String),
    #[error(transparent)]
    Params(#[from] RiccatiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quantity {
    /// Termination-time bound `T_l`.
    #[serde(rename = "Tl")]
    TerminationBound,
    /// Total energy bound `E_l = N·E_{i_l}`.
    #[serde(rename = "El")]
    EnergyBoundTotal,
    #[serde(rename = "lambda_min_P")]
    LambdaMinP,
}

impl FromStr for Quantity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Tl" | "T_l" => Ok(Quantity::TerminationBound),
            "El" | "E_l" => Ok(Quantity::EnergyBoundTotal),
            "lambda_min_P" | "lmin" => Ok(Quantity::LambdaMinP),
            other => Err(format!("unknown quantity `{other}` (expected Tl, El or lambda_min_P)")),
        }
    }
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quantity::TerminationBound => "Tl",
            Quantity::EnergyBoundTotal => "El",
            Quantity::LambdaMinP => "lambda_min_P",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    NonIncreasing,
    NonDecreasing,
}

/// Direction predicted for a quantity as one parameter grows.
pub fn expected_direction(quantity: Quantity, varied: Param) -> Direction {
    use Direction::*;
    match (quantity, varied) {
        (Quantity::TerminationBound, Param::Alpha | Param::Sigma) => NonIncreasing,
        (Quantity::TerminationBound, Param::Beta) => NonDecreasing,
        (Quantity::EnergyBoundTotal, Param::Alpha | Param::Beta) => NonDecreasing,
        (Quantity::EnergyBoundTotal, Param::Sigma) => NonIncreasing,
        (Quantity::LambdaMinP, Param::Alpha | Param::Sigma) => NonIncreasing,
        (Quantity::LambdaMinP, Param::Beta) => NonDecreasing,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Verdict {
    Monotone { direction: Direction },
    Violated { index: usize },
}

impl Verdict {
    pub fn is_monotone(&self) -> bool {
        matches!(self, Verdict::Monotone { .. })
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec<'a> {
    pub scenario: &'a Scenario,
    pub varied: Param,
    pub grid: Vec<f64>,
    /// Values of the two fixed parameters; the varied one is overwritten.
    pub base: ControlParams,
    pub quantity: Quantity,
}

impl SweepSpec<'_> {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.grid.is_empty() {
            return Err(SweepError::EmptyGrid);
        }
        if let Some(k) = self
            .grid
            .windows(2)
            .position(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(SweepError::GridNotIncreasing(k + 1));
        }
        for &value in &self.grid {
            self.base.with(self.varied, value).validate()?;
        }
        if self.varied == Param::Sigma {
            let lambda2 = self.scenario.graph().second_eigenvalue();
            if let Some(&value) = self.grid.iter().find(|&&v| v >= lambda2) {
                return Err(SweepError::SigmaExceedsLambda2 { value, lambda2 });
            }
        } else {
            let lambda2 = self.scenario.graph().second_eigenvalue();
            if self.base.sigma >= lambda2 {
                return Err(SweepError::SigmaExceedsLambda2 {
                    value: self.base.sigma,
                    lambda2,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub quantity: f64,
    pub assumption2_ok: bool,
    /// Left out of the verdict (α sweeps of `E_l` where the α-monotonicity
    /// premise fails).
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub varied: Param,
    pub quantity: Quantity,
    pub expected: Direction,
    pub verdict: Verdict,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// `varied_param,value,quantity,assumption2_ok`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "varied_param,value,quantity,assumption2_ok")?;
        for row in &self.rows {
            writeln!(
                out,
                "{},{},{},{}",
                self.varied,
                sig9(row.value),
                sig9(row.quantity),
                row.assumption2_ok
            )?;
        }
        Ok(())
    }
}

fn evaluate(spec: &SweepSpec<'_>, desired: &DesiredState, value: f64) -> Result<SweepRow, SweepError> {
    let params = spec.base.with(spec.varied, value);
    let scenario = spec.scenario;
    let lambda_max = scenario.graph().largest_eigenvalue();
    let pare = solve_pare(&params, scenario.dimension())?;
    let quantity = match spec.quantity {
        Quantity::LambdaMinP => pare.lambda_min(),
        Quantity::TerminationBound => {
            let values = lyapunov_values_with(scenario, desired, &pare).expect("layouts agree");
            termination_bound(&pare, values.v0, scenario.agent_count(), scenario.tolerance())
        }
        Quantity::EnergyBoundTotal => {
            let values = lyapunov_values_with(scenario, desired, &pare).expect("layouts agree");
            scenario.agent_count() as f64 * energy_bound(&params, values.vl0, lambda_max, scenario.deadline())
        }
    };
    let assumption2_ok = assumption2_check(&params, lambda_max).holds;
    let excluded = spec.quantity == Quantity::EnergyBoundTotal && spec.varied == Param::Alpha && !assumption2_ok;
    Ok(SweepRow {
        value,
        quantity,
        assumption2_ok,
        excluded,
    })
}

/// Evaluates the sweep on the current rayon pool. Row order follows the grid.
pub fn run_sweep(spec: &SweepSpec<'_>) -> Result<SweepResult, SweepError> {
    spec.validate()?;
    let desired = realize_desired_state(spec.scenario, Gauge::Centroid);
    let rows = spec
        .grid
        .par_iter()
        .map(|&v| evaluate(spec, &desired, v))
        .collect::<Result<Vec<_>, _>>()?;
    let expected = expected_direction(spec.quantity, spec.varied);
    let verdict = monotonicity_verdict(&rows, expected);
    Ok(SweepResult {
        varied: spec.varied,
        quantity: spec.quantity,
        expected,
        verdict,
        rows,
    })
}

/// Runs the sweep on a dedicated pool capped at `threads` workers.
pub fn run_sweep_with_threads(spec: &SweepSpec<'_>, threads: usize) -> Result<SweepResult, SweepError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("thread pool builds");
    pool.install(|| run_sweep(spec))
}

fn monotonicity_verdict(rows: &[SweepRow], expected: Direction) -> Verdict {
    let mut previous: Option<&SweepRow> = None;
    for (index, row) in rows.iter().enumerate() {
        if row.excluded {
            continue;
        }
        if let Some(prev) = previous {
            let scale = prev.quantity.abs().max(row.quantity.abs());
            let step = row.quantity - prev.quantity;
            let violated = match expected {
                Direction::NonIncreasing => step > TIE_RTOL * scale,
                Direction::NonDecreasing => step < -TIE_RTOL * scale,
            };
            if violated {
                return Verdict::Violated { index };
            }
        }
        previous = Some(row);
    }
    Verdict::Monotone { direction: expected }
}

pub fn linspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..count)
            .map(|k| start + (stop - start) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

pub fn logspace(start: f64, stop: f64, count: usize) -> Vec<f64> {
    linspace(start.ln(), stop.ln(), count)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Parses `start:stop:count` (linear) or `log:start:stop:count`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, SweepError> {
    let bad = || SweepError::BadGridSpec(spec.to_owned());
    let (log, rest) = match spec.strip_prefix("log:") {
        Some(rest) => (true, rest),
        None => (false, spec),
    };
    let parts: Vec<&str> = rest.split(':').collect();
    let [start, stop, count] = parts.as_slice() else {
        return Err(bad());
    };
    let start: f64 = start.trim().parse().map_err(|_| bad())?;
    let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
    let count: usize = count.trim().parse().map_err(|_| bad())?;
    if count == 0 || !start.is_finite() || !stop.is_finite() || (log && (start <= 0.0 || stop <= 0.0)) {
        return Err(bad());
    }
    Ok(if log {
        logspace(start, stop, count)
    } else {
        linspace(start, stop, count)
    })
}

/// Default 50-point grid spanning the bundled parameter sets.
pub fn default_grid(varied: Param, scenario: &Scenario) -> Vec<f64> {
    match varied {
        Param::Alpha => logspace(1.0, 1000.0, 50),
        Param::Sigma => {
            let cap = SIGMA_CAP * scenario.graph().second_eigenvalue();
            linspace(0.02 * cap, cap, 50)
        }
        Param::Beta => linspace(0.0, 10.0, 50),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    fn spec(s: &Scenario, varied: Param, quantity: Quantity, grid: Vec<f64>) -> SweepSpec<'_> {
        SweepSpec {
            scenario: s,
            varied,
            grid,
            base: scenarios::SIM_ONE_PARAMS,
            quantity,
        }
    }

    #[test]
    fn termination_bound_falls_with_alpha() {
        let s = scenarios::sim_one();
        let r = run_sweep(&spec(
            &s,
            Param::Alpha,
            Quantity::TerminationBound,
            logspace(1.0, 1000.0, 30),
        ))
        .unwrap();
        assert_eq!(
            r.verdict,
            Verdict::Monotone {
                direction: Direction::NonIncreasing
            }
        );
        assert_eq!(r.rows.len(), 30);
    }

    #[test]
    fn energy_bound_falls_with_sigma() {
        let s = scenarios::sim_one();
        let r = run_sweep(&spec(
            &s,
            Param::Sigma,
            Quantity::EnergyBoundTotal,
            linspace(0.01, 1.38, 30),
        ))
        .unwrap();
        assert!(r.verdict.is_monotone());
    }

    #[test]
    fn single_point_is_monotone() {
        let s = scenarios::sim_one();
        let r = run_sweep(&spec(&s, Param::Beta, Quantity::LambdaMinP, vec![0.5])).unwrap();
        assert!(r.verdict.is_monotone());
    }

    #[test]
    fn grid_validation() {
        let s = scenarios::sim_one();
        assert_eq!(
            run_sweep(&spec(&s, Param::Beta, Quantity::TerminationBound, vec![])).unwrap_err(),
            SweepError::EmptyGrid
        );
        assert_eq!(
            run_sweep(&spec(&s, Param::Beta, Quantity::TerminationBound, vec![1.0, 1.0])).unwrap_err(),
            SweepError::GridNotIncreasing(1)
        );
        assert!(matches!(
            run_sweep(&spec(
                &s,
                Param::Sigma,
                Quantity::TerminationBound,
                linspace(0.5, 2.0, 10)
            )),
            Err(SweepError::SigmaExceedsLambda2 { .. })
        ));
        assert!(matches!(
            run_sweep(&spec(&s, Param::Alpha, Quantity::TerminationBound, vec![-1.0, 2.0])),
            Err(SweepError::Params(_))
        ));
    }

    #[test]
    fn verdict_detects_violation_and_ties() {
        let row = |q| SweepRow {
            value: 0.0,
            quantity: q,
            assumption2_ok: true,
            excluded: false,
        };
        let rows = [row(3.0), row(2.0), row(2.0 + 1e-12), row(2.5)];
        assert_eq!(
            monotonicity_verdict(&rows, Direction::NonIncreasing),
            Verdict::Violated { index: 3 }
        );
        assert!(monotonicity_verdict(&rows[..3], Direction::NonIncreasing).is_monotone());
        let mut skipped = rows;
        skipped[3].excluded = true;
        assert!(monotonicity_verdict(&skipped, Direction::NonIncreasing).is_monotone());
    }

    #[test]
    fn grid_specs() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        let g = parse_grid("log:1:100:3").unwrap();
        assert!((g[1] - 10.0).abs() < 1e-12);
        for bad in ["1:2", "a:1:2", "log:0:1:3", "0:1:0"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn default_sigma_grid_respects_cap() {
        let s = scenarios::sim_one();
        let g = default_grid(Param::Sigma, &s);
        assert_eq!(g.len(), 50);
        assert!(*g.last().unwrap() < s.graph().second_eigenvalue());
    }

    #[test]
    fn parallel_and_serial_agree() {
        let s = scenarios::sim_one();
        let sp = spec(&s, Param::Beta, Quantity::EnergyBoundTotal, linspace(0.0, 5.0, 20));
        let one = run_sweep_with_threads(&sp, 1).unwrap();
        let many = run_sweep_with_threads(&sp, 4).unwrap();
        assert_eq!(one, many);
    }
}
