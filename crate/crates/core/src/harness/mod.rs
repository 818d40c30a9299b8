//! Scenario assembly, the fixed-step closed loop and its metrics.

pub mod config;
mod metrics;
mod sim;

pub use config::{
    BarrierConfig, BarrierKind, BoundsConfig, ConfigError, ControllerConfig, FilterConfig, PitchParams, PlantKind,
    ReferenceConfig, ReferenceKind, ScenarioConfig, SensorConfig, SisoParams,
};
pub use metrics::{compute_metrics, Metrics, UltimateBoundCheck};
pub use sim::{
    angle_scale, run_pitch_scenario, run_scenario, scenario_barriers, scenario_bounds, simulate,
    siso_controller_gains, SimError, SimTrace, StepRecord,
};
