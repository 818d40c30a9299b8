//! Flat `key = value` configuration text, bundled presets and layering.
//!
//! Layers apply in order defaults < preset < file < command-line overrides.

use std::collections::BTreeMap;
use std::path::Path;

use super::CliError;
use crate::harness::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

const SISO_BODY: &str = "\
plant.kind = siso
plant.a = -1
plant.b = 1
plant.c = 1
plant.lambda = 0.6
plant.x0 = 0
sensor.gamma = 0.1
sensor.xi = 10
limits.u_min = -0.8
limits.u_max = 0.8
controller.q = 3
controller.r = 0.2
filter.kind = mricbf
filter.margin = additive
bounds.sigma_bar = 0.01
bounds.kappa1 = 1.1
bounds.kappa2 = 0
bounds.kappa3 = 0
bounds.kappa4 = 2.2
barrier.1.kind = upper
barrier.1.limit = 0.5
barrier.1.gamma = 2
barrier.2.kind = lower
barrier.2.limit = -0.5
barrier.2.gamma = 2
reference.kind = sine
reference.amplitude = 0.7
reference.frequency = 0.2
timing.dt = 0.001
timing.t_end = 30
timing.transient = 5
";

const PITCH_BODY: &str = "\
plant.kind = pitch
plant.iyy = 500
plant.qbar = 50000
plant.s_ref = 1
plant.l_ref = 2
plant.v = 2000
plant.mach = 7
plant.alpha = 2
plant.cm0_alpha = -0.005
plant.cmq = -0.2
plant.bp = -50, -50, 30, 30
plant.mismatch = 0.3
limits.u_min = -30
limits.u_max = 30
controller.rate_gain = 5
sensor.gamma = 0.1
sensor.xi = 10
filter.kind = mricbf
filter.margin = additive
filter.slack_weight = 1e6
bounds.sigma_bar = 0.01
bounds.kappa1 = 0.0143
bounds.kappa2 = 0
bounds.kappa3 = 0
bounds.kappa4 = 2.2
barrier.1.kind = upper
barrier.1.limit = 10
barrier.1.gamma = 2
barrier.2.kind = lower
barrier.2.limit = -10
barrier.2.gamma = 2
reference.kind = step
reference.amplitude = 15
reference.step_time = 0.5
timing.dt = 0.001
timing.t_end = 10
";

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub text: String,
}

pub fn presets() -> Vec<Preset> {
    vec![
        Preset {
            name: "siso-biased",
            description: "uncertain first-order plant, biased sensors, measurement-robust filter",
            text: format!("name = siso-biased\n{SISO_BODY}"),
        },
        Preset {
            name: "siso-biased-lpf",
            description: "siso-biased with a 2 rad/s low-pass filter on the measurement channels",
            text: format!("name = siso-biased-lpf\n{SISO_BODY}sensor.lpf = true\nsensor.cutoff = 2\n"),
        },
        Preset {
            name: "pitch-hgv",
            description: "pitch-rate limits with four redundant flaps and 30% aerodynamic mismatch",
            text: format!("name = pitch-hgv\n{PITCH_BODY}"),
        },
    ]
}

pub fn preset_text(name: &str) -> Result<String, CliError> {
    presets().into_iter().find(|p| p.name == name).map(|p| p.text).ok_or_else(|| {
        let known: Vec<&str> = presets().iter().map(|p| p.name).collect();
        CliError::Usage(format!("unknown preset '{name}' (available: {})", known.join(", ")))
    })
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_entries(text: &str, source: &str) -> Result<Vec<Entry>, CliError> {
    let mut out: Vec<Entry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| CliError::Parse { origin: source.to_string(), line, message };
        let (k, v) = content.split_once('=').ok_or_else(|| err(format!("expected 'key = value', got '{content}'")))?;
        let (key, value) = (k.trim(), v.trim());
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(err(format!("malformed key '{key}'")));
        }
        if value.is_empty() {
            return Err(err(format!("missing value for '{key}'")));
        }
        if let Some(prev) = out.iter().find(|e| e.key == key) {
            return Err(err(format!("duplicate key '{key}' (first set on line {})", prev.line)));
        }
        out.push(Entry { key: key.to_string(), value: value.to_string(), line });
    }
    Ok(out)
}

/// A fully validated scenario from one configuration text over the defaults.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    let entries = parse_entries(text, "<config>")?;
    let map: BTreeMap<String, String> = entries.into_iter().map(|e| (e.key, e.value)).collect();
    Ok(ScenarioConfig::from_entries(&map)?)
}

/// Merges preset, file text and `key=value` overrides, later layers winning.
pub fn layered_config(
    preset: Option<&str>,
    file: Option<(&str, &str)>,
    overrides: &[String],
) -> Result<ScenarioConfig, CliError> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    if let Some(name) = preset {
        for e in parse_entries(&preset_text(name)?, &format!("preset {name}"))? {
            map.insert(e.key, e.value);
        }
    }
    if let Some((source, text)) = file {
        for e in parse_entries(text, source)? {
            map.insert(e.key, e.value);
        }
    }
    for (i, o) in overrides.iter().enumerate() {
        let e = parse_entries(o, &format!("--set #{}", i + 1))?;
        let e = e.into_iter().next().ok_or_else(|| CliError::Parse {
            origin: format!("--set #{}", i + 1),
            line: 1,
            message: "empty override".into(),
        })?;
        map.insert(e.key, e.value);
    }
    Ok(ScenarioConfig::from_entries(&map)?)
}

pub fn load_config(preset: Option<&str>, path: Option<&Path>, overrides: &[String]) -> Result<ScenarioConfig, CliError> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| CliError::ConfigIo {
            path: p.display().to_string(),
            message: e.to_string(),
        })?),
        None => None,
    };
    let source = path.map(|p| p.display().to_string()).unwrap_or_default();
    layered_config(preset, text.as_deref().map(|t| (source.as_str(), t)), overrides)
}

/// Resolved configuration as `key = value` text.
pub fn render_config(cfg: &ScenarioConfig) -> String {
    cfg.to_entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}
