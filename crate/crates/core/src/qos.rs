//! Video-conference QoS measurements and the three-class table.
//!
//! A channel is graded per parameter, then the overall class is the worst of
//! the four grades. Boundary values belong to the middle class `C2`, so `C1`
//! and `C3` are strict inequalities.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bandwidth above this (kb/s) is ideal.
pub const BANDWIDTH_IDEAL_KBPS: f64 = 384.0;
/// Bandwidth below this (kb/s) is unusable.
pub const BANDWIDTH_UNUSABLE_KBPS: f64 = 162.0;
pub const DELAY_IDEAL_MS: f64 = 200.0;
pub const DELAY_UNUSABLE_MS: f64 = 400.0;
pub const JITTER_IDEAL_MS: f64 = 30.0;
pub const JITTER_UNUSABLE_MS: f64 = 60.0;
/// The middle error-rate row is the single value 1 %.
pub const ERROR_RATE_PCT: f64 = 1.0;
/// Half-width of the band around [`ERROR_RATE_PCT`] that counts as `C2`.
pub const ERROR_RATE_TOLERANCE_PCT: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QosError {
    #[error("{param} must be finite and non-negative, got {value}")]
    Domain { param: QosParam, value: f64 },
    #[error("error rate must not exceed 100 %, got {0}")]
    ErrorRateAbove100(f64),
}

/// One of the four graded QoS parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QosParam {
    Bandwidth,
    Delay,
    Jitter,
    ErrorRate,
}

impl QosParam {
    pub const ALL: [QosParam; 4] = [
        QosParam::Bandwidth,
        QosParam::Delay,
        QosParam::Jitter,
        QosParam::ErrorRate,
    ];
}

impl fmt::Display for QosParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QosParam::Bandwidth => "bandwidth",
            QosParam::Delay => "delay",
            QosParam::Jitter => "jitter",
            QosParam::ErrorRate => "error rate",
        })
    }
}

/// QoS tier, ordered by severity: `C1 < C2 < C3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QosClass {
    /// Ideal for video conferencing.
    C1,
    /// Average; usable only after negotiation.
    C2,
    /// Unusable.
    C3,
}

impl QosClass {
    pub const ALL: [QosClass; 3] = [QosClass::C1, QosClass::C2, QosClass::C3];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for QosClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Observed channel quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosMeasurement {
    pub bandwidth_kbps: f64,
    pub delay_ms: f64,
    pub jitter_ms: f64,
    pub error_rate_pct: f64,
}

impl QosMeasurement {
    /// Builds a validated measurement.
    pub fn new(
        bandwidth_kbps: f64,
        delay_ms: f64,
        jitter_ms: f64,
        error_rate_pct: f64,
    ) -> Result<Self, QosError> {
        let m = QosMeasurement {
            bandwidth_kbps,
            delay_ms,
            jitter_ms,
            error_rate_pct,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn get(&self, param: QosParam) -> f64 {
        match param {
            QosParam::Bandwidth => self.bandwidth_kbps,
            QosParam::Delay => self.delay_ms,
            QosParam::Jitter => self.jitter_ms,
            QosParam::ErrorRate => self.error_rate_pct,
        }
    }

    pub fn set(&mut self, param: QosParam, value: f64) {
        match param {
            QosParam::Bandwidth => self.bandwidth_kbps = value,
            QosParam::Delay => self.delay_ms = value,
            QosParam::Jitter => self.jitter_ms = value,
            QosParam::ErrorRate => self.error_rate_pct = value,
        }
    }

    pub fn validate(&self) -> Result<(), QosError> {
        for param in QosParam::ALL {
            check_domain(param, self.get(param))?;
        }
        Ok(())
    }
}

fn check_domain(param: QosParam, value: f64) -> Result<(), QosError> {
    if !value.is_finite() || value < 0.0 {
        return Err(QosError::Domain { param, value });
    }
    if param == QosParam::ErrorRate && value > 100.0 {
        return Err(QosError::ErrorRateAbove100(value));
    }
    Ok(())
}

/// Grades a single parameter value.
pub fn classify_parameter(param: QosParam, value: f64) -> Result<QosClass, QosError> {
    check_domain(param, value)?;
    let class = match param {
        QosParam::Bandwidth => {
            if value > BANDWIDTH_IDEAL_KBPS {
                QosClass::C1
            } else if value >= BANDWIDTH_UNUSABLE_KBPS {
                QosClass::C2
            } else {
                QosClass::C3
            }
        }
        QosParam::Delay => grade_upper(value, DELAY_IDEAL_MS, DELAY_UNUSABLE_MS),
        QosParam::Jitter => grade_upper(value, JITTER_IDEAL_MS, JITTER_UNUSABLE_MS),
        QosParam::ErrorRate => {
            // The tolerance band wins over the strict comparisons.
            if (value - ERROR_RATE_PCT).abs() <= ERROR_RATE_TOLERANCE_PCT {
                QosClass::C2
            } else if value < ERROR_RATE_PCT {
                QosClass::C1
            } else {
                QosClass::C3
            }
        }
    };
    Ok(class)
}

/// Lower-is-better parameters: `[ideal, unusable]` is the closed C2 interval.
fn grade_upper(value: f64, ideal: f64, unusable: f64) -> QosClass {
    if value < ideal {
        QosClass::C1
    } else if value <= unusable {
        QosClass::C2
    } else {
        QosClass::C3
    }
}

/// Overall class: the worst of the four per-parameter classes.
pub fn classify(m: &QosMeasurement) -> Result<QosClass, QosError> {
    let mut worst = QosClass::C1;
    for param in QosParam::ALL {
        worst = worst.max(classify_parameter(param, m.get(param))?);
    }
    Ok(worst)
}
