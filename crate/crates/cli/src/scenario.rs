//! Scenario documents and `--override` handling.
//!
//! A scenario is one JSON object. Every section is optional and falls back
//! to the library defaults; unknown keys anywhere are rejected with their
//! path, line and column.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use fdsic_core::blocks::AmpSpec;
use fdsic_core::budget::{sentinel, PlanOverrides, StageAllocation, SystemParams};
use fdsic_core::chain::{ChainConfig, Im3Probe, LinkOptions, MonteCarlo};
use fdsic_core::waveform::OfdmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub params: SystemParams,
    /// Pinned budget intermediates; cleared by `--no-overrides`.
    #[serde(default)]
    pub overrides: PlanOverrides,
    #[serde(default = "link_figure_allocation")]
    pub allocation: StageAllocation,
    #[serde(default)]
    pub ofdm: OfdmConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarlo,
    #[serde(default)]
    pub link: LinkOptions,
    #[serde(default)]
    pub im3_sweep: SweepSection,
    /// Where commands write their files when `--out` is not given,
    /// relative to the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn link_figure_allocation() -> StageAllocation {
    StageAllocation::LINK_FIGURE
}

/// The matched-amplifier IM3 experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub amp: AmpSpec,
    #[serde(with = "sentinel")]
    pub pin_start_dbm: f64,
    #[serde(with = "sentinel")]
    pub pin_stop_dbm: f64,
    #[serde(with = "sentinel")]
    pub pin_step_db: f64,
    pub probe: Im3Probe,
    pub seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            amp: AmpSpec::polynomial(20.0, -7.0),
            pin_start_dbm: -60.0,
            pin_stop_dbm: -35.0,
            pin_step_db: 2.5,
            probe: Im3Probe::Ofdm,
            seed: 1,
        }
    }
}

impl SweepSection {
    /// Input levels from start to stop inclusive. The step must be
    /// non-zero and point from start towards stop.
    pub fn points(&self) -> Result<Vec<f64>> {
        let (a, b, s) = (self.pin_start_dbm, self.pin_stop_dbm, self.pin_step_db);
        if !(a.is_finite() && b.is_finite() && s.is_finite()) {
            bail!("sweep bounds and step must be finite");
        }
        if s == 0.0 {
            bail!("--pin-step must be non-zero");
        }
        if (b - a) * s < 0.0 {
            bail!("--pin-step {s} does not lead from {a} to {b} dBm");
        }
        let n = ((b - a) / s + 1e-9).floor() as usize + 1;
        if n > 10_000 {
            bail!("sweep has {n} points; use a coarser step");
        }
        Ok((0..n).map(|i| a + s * i as f64).collect())
    }
}

impl Scenario {
    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            params: self.params.clone(),
            allocation: self.allocation,
            ofdm: self.ofdm.clone(),
            monte_carlo: self.monte_carlo,
            link: self.link.clone(),
            overrides: self.overrides.clone(),
        }
    }
}

/// Parses a scenario document; errors carry the key path and position.
pub fn parse(text: &str, origin: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        anyhow!("{origin}: at `{path}`: {inner}")
    })
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario {}", path.display()))?;
    parse(&text, &path.display().to_string())
}

/// Parses the right-hand side of `key=value`: JSON when it parses as JSON,
/// otherwise `inf`/`-inf` sentinels, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    match sentinel::parse_db(raw) {
        Some(x) if x.is_infinite() => Value::String(if x > 0.0 { "inf" } else { "-inf" }.into()),
        _ => Value::String(raw.to_owned()),
    }
}

/// Resolves a flat key to its dotted path: budget intermediates go to
/// `overrides`, anything else must be a field of `params`.
fn resolve_key(key: &str, doc: &Value) -> Result<String> {
    if key.contains('.') {
        return Ok(key.to_owned());
    }
    if PlanOverrides::is_key(key) {
        return Ok(format!("overrides.{key}"));
    }
    if doc["params"].get(key).is_some() {
        return Ok(format!("params.{key}"));
    }
    bail!("unknown override key `{key}`: not a system parameter or budget intermediate")
}

/// Applies `key=value` assignments in order and re-validates the result
/// against the schema.
pub fn apply_overrides(scenario: &Scenario, assignments: &[String]) -> Result<Scenario> {
    if assignments.is_empty() {
        return Ok(scenario.clone());
    }
    let mut doc = serde_json::to_value(scenario)?;
    for a in assignments {
        let (key, raw) = a
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{a}` is not of the form key=value"))?;
        let path = resolve_key(key.trim(), &doc)?;
        let mut slot = &mut doc;
        let parts: Vec<&str> = path.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = slot
                .as_object_mut()
                .ok_or_else(|| anyhow!("override `{path}`: `{part}` is not inside an object"))?;
            if i + 1 == parts.len() {
                obj.insert((*part).to_owned(), parse_value(raw.trim()));
                break;
            }
            slot = obj
                .entry((*part).to_owned())
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }
    parse(&doc.to_string(), "--override")
}
