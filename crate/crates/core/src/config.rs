//! Scenario configuration: JSON schema, defaults, and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::markov::OccupancyModel;
use crate::qos::{QosMeasurement, QosParam};
use crate::spectrum::{BandId, Channel, PrimaryUser, Spectrum};

pub const SCENARIO_SCHEMA: &str = "cogmesh-scenario/1";

/// Every violation found in one pass, reported together.
#[derive(Debug, Error, Clone, PartialEq)]
pub struct ValidationError {
    pub violations: Vec<String>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.violations.join("; "))
    }
}

impl ValidationError {
    pub fn single(msg: impl Into<String>) -> Self {
        ValidationError {
            violations: vec![msg.into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionDistribution {
    Fixed,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionLength {
    pub distribution: SessionDistribution,
    /// Seconds of transmission needed to complete a session.
    pub mean: f64,
}

impl Default for SessionLength {
    fn default() -> Self {
        SessionLength {
            distribution: SessionDistribution::Exponential,
            mean: 600.0,
        }
    }
}

/// Independent SU session arrivals; selects the handover-free traffic mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuArrivals {
    /// Sessions per hour.
    pub arrival_rate: f64,
    /// Completions per hour, per session.
    pub service_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuConfig {
    pub sensing_period: f64,
    pub monitor_period: f64,
    pub session_length: SessionLength,
    pub arrivals: Option<SuArrivals>,
}

impl Default for SuConfig {
    fn default() -> Self {
        SuConfig {
            sensing_period: 1.0,
            monitor_period: 5.0,
            session_length: SessionLength::default(),
            arrivals: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningConfig {
    pub enabled: bool,
    pub alpha: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig {
            enabled: true,
            alpha: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    /// Seconds of simulated time.
    pub duration: f64,
    pub channels: Vec<Channel>,
    pub primary_users: Vec<PrimaryUser>,
    #[serde(default)]
    pub su: SuConfig,
    #[serde(default)]
    pub learning: LearningConfig,
    #[serde(default)]
    pub markov: Option<OccupancyModel>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ValidationError> {
        serde_json::from_str(text).map_err(|e| ValidationError::single(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut v = Vec::new();
        let positive = |x: f64| x.is_finite() && x > 0.0;
        let non_negative = |x: f64| x.is_finite() && x >= 0.0;

        if self.schema != SCENARIO_SCHEMA {
            v.push(format!(
                "schema must be {SCENARIO_SCHEMA:?}, got {:?}",
                self.schema
            ));
        }
        if !positive(self.duration) {
            v.push(format!("duration must be positive, got {}", self.duration));
        }
        if self.channels.is_empty() {
            v.push("at least one channel is required".into());
        }

        let mut band_owners: BTreeMap<BandId, usize> = BTreeMap::new();
        let mut pu_ids = BTreeSet::new();
        for pu in &self.primary_users {
            if !pu_ids.insert(pu.id) {
                v.push(format!("primary user id {} is duplicated", pu.id));
            }
            *band_owners.entry(pu.band_id).or_default() += 1;
            if !(0.0..=1.0).contains(&pu.coop_prob) {
                v.push(format!(
                    "primary user {}: coop_prob must be in [0, 1], got {}",
                    pu.id, pu.coop_prob
                ));
            }
            if !non_negative(pu.arrival_rate) {
                v.push(format!(
                    "primary user {}: arrival_rate must be non-negative, got {}",
                    pu.id, pu.arrival_rate
                ));
            }
            if !non_negative(pu.service_rate) {
                v.push(format!(
                    "primary user {}: service_rate must be non-negative, got {}",
                    pu.id, pu.service_rate
                ));
            }
            if pu.arrival_rate > 0.0 && pu.service_rate <= 0.0 {
                v.push(format!(
                    "primary user {}: service_rate must be positive when arrival_rate is",
                    pu.id
                ));
            }
        }

        let mut ch_ids = BTreeSet::new();
        for ch in &self.channels {
            if !ch_ids.insert(ch.id) {
                v.push(format!("channel id {} is duplicated", ch.id));
            }
            match band_owners.get(&ch.band_id).copied().unwrap_or(0) {
                1 => {}
                0 => v.push(format!(
                    "channel {}: band {} has no primary user",
                    ch.id, ch.band_id
                )),
                n => v.push(format!(
                    "channel {}: band {} has {n} primary users",
                    ch.id, ch.band_id
                )),
            }
            if let Err(e) = ch.qos_mean.validate() {
                v.push(format!("channel {}: qos_mean: {e}", ch.id));
            }
            if let Some(Err(e)) = ch.granted_qos.as_ref().map(QosMeasurement::validate) {
                v.push(format!("channel {}: granted_qos: {e}", ch.id));
            }
            for p in QosParam::ALL {
                if !non_negative(ch.qos_spread.get(p)) {
                    v.push(format!(
                        "channel {}: qos_spread {p} must be non-negative",
                        ch.id
                    ));
                }
            }
        }

        if !positive(self.su.sensing_period) {
            v.push(format!(
                "su.sensing_period must be positive, got {}",
                self.su.sensing_period
            ));
        }
        if !positive(self.su.monitor_period) {
            v.push(format!(
                "su.monitor_period must be positive, got {}",
                self.su.monitor_period
            ));
        }
        if !positive(self.su.session_length.mean) {
            v.push(format!(
                "su.session_length.mean must be positive, got {}",
                self.su.session_length.mean
            ));
        }
        if let Some(a) = &self.su.arrivals {
            if !positive(a.arrival_rate) || !positive(a.service_rate) {
                v.push("su.arrivals rates must be positive".into());
            }
        }
        if !positive(self.learning.alpha) {
            v.push(format!(
                "learning.alpha must be positive, got {}",
                self.learning.alpha
            ));
        }
        if let Some(m) = &self.markov {
            if let Err(e) = m.validate() {
                v.push(format!("markov: {e}"));
            }
        }

        if v.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { violations: v })
        }
    }
}

/// A validated scenario with its indexed spectrum.
#[derive(Debug, Clone)]
pub struct Scenario {
    config: ScenarioConfig,
    spectrum: Spectrum,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self, ValidationError> {
        config.validate()?;
        let spectrum = Spectrum::new(config.channels.clone(), config.primary_users.clone());
        Ok(Scenario { config, spectrum })
    }

    pub fn from_json(text: &str) -> Result<Self, ValidationError> {
        Scenario::new(ScenarioConfig::from_json(text)?)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// Same scenario with learning switched on or off.
    pub fn with_learning(&self, enabled: bool) -> Scenario {
        let mut s = self.clone();
        s.config.learning.enabled = enabled;
        s
    }
}
