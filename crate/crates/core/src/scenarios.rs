//! The three five-agent pentagon missions, bundled as scenario files.
//!
//! All share the initial states, budgets, offsets, `T = 3 s` and `ε = 0.1`.
//! Only `(α, σ, β)` differs.

use crate::formation::Scenario;
use crate::riccati::ControlParams;
use crate::scenario_file::ScenarioFile;

pub const SIM_ONE_JSON: &str = include_str!("../scenarios/simI.json");
pub const SIM_TWO_JSON: &str = include_str!("../scenarios/simII.json");
pub const SIM_THREE_JSON: &str = include_str!("../scenarios/simIII.json");

pub const SIM_ONE_PARAMS: ControlParams = ControlParams {
    alpha: 450.0,
    sigma: 1.3,
    beta: 0.2,
};
pub const SIM_TWO_PARAMS: ControlParams = ControlParams {
    alpha: 5.0,
    sigma: 1.3,
    beta: 0.3,
};
pub const SIM_THREE_PARAMS: ControlParams = ControlParams {
    alpha: 853.0,
    sigma: 1.3,
    beta: 0.7,
};

fn load(text: &str) -> Scenario {
    let file = ScenarioFile::parse(text).expect("bundled scenario parses");
    file.build().expect("bundled scenario is valid").0
}

pub fn sim_one() -> Scenario {
    load(SIM_ONE_JSON)
}

pub fn sim_two() -> Scenario {
    load(SIM_TWO_JSON)
}

pub fn sim_three() -> Scenario {
    load(SIM_THREE_JSON)
}
