//! Scenario files, result bundles and the command-line driver.

mod command;
pub mod output;
pub mod scenario;

pub use command::{run_command, CliError};
pub use scenario::{parse_scenario, render_scenario, ParseError, ScenarioConfig, ScenarioDocument};
