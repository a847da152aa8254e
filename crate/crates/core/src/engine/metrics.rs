//! Run metrics, computed purely from a trace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{EventKind, EventRecord, NegotiationOutcome};
use crate::selfmgmt::SuMode;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("record {index} at t={time} precedes the previous record at t={previous}")]
    OutOfOrder {
        index: usize,
        time: f64,
        previous: f64,
    },
    #[error("record {index} at t={time} lies beyond the run duration {duration}")]
    BeyondDuration {
        index: usize,
        time: f64,
        duration: f64,
    },
    #[error("run duration must be finite and non-negative, got {0}")]
    BadDuration(f64),
}

/// Seconds spent in each self-management mode.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModeOccupancy {
    pub sensing: f64,
    pub normal: f64,
    pub warning: f64,
    pub failure: f64,
}

impl ModeOccupancy {
    pub fn get(&self, mode: SuMode) -> f64 {
        match mode {
            SuMode::Sensing => self.sensing,
            SuMode::Normal => self.normal,
            SuMode::Warning => self.warning,
            SuMode::Failure => self.failure,
        }
    }

    fn add(&mut self, mode: SuMode, dt: f64) {
        match mode {
            SuMode::Sensing => self.sensing += dt,
            SuMode::Normal => self.normal += dt,
            SuMode::Warning => self.warning += dt,
            SuMode::Failure => self.failure += dt,
        }
    }

    pub fn total(&self) -> f64 {
        self.sensing + self.normal + self.warning + self.failure
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub duration: f64,
    pub negotiations: u64,
    pub refusals: u64,
    /// Refusals over negotiations; `None` when nothing was negotiated.
    pub negotiation_failure_rate: Option<f64>,
    pub handovers: u64,
    pub mode_occupancy: ModeOccupancy,
    pub sessions_completed: u64,
    pub sessions_aborted: u64,
    /// Mean length of a stay in Normal; `None` when Normal was never entered.
    pub mean_time_in_c1: Option<f64>,
}

pub const CSV_HEADER: &str = "duration,negotiations,refusals,negotiation_failure_rate,handovers,\
occupancy_sensing,occupancy_normal,occupancy_warning,occupancy_failure,\
sessions_completed,sessions_aborted,mean_time_in_c1";

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl RunMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// Header plus one data row.
    pub fn to_csv(&self) -> String {
        let o = &self.mode_occupancy;
        format!(
            "{CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{},{},{}\n",
            self.duration,
            self.negotiations,
            self.refusals,
            opt(self.negotiation_failure_rate),
            self.handovers,
            o.sensing,
            o.normal,
            o.warning,
            o.failure,
            self.sessions_completed,
            self.sessions_aborted,
            opt(self.mean_time_in_c1),
        )
    }
}

/// Metrics of a run of length `duration` whose events are `records`. The
/// SU starts in Sensing at time zero.
pub fn compute_metrics(records: &[EventRecord], duration: f64) -> Result<RunMetrics, MetricsError> {
    if !duration.is_finite() || duration < 0.0 {
        return Err(MetricsError::BadDuration(duration));
    }
    let mut negotiations = 0;
    let mut refusals = 0;
    let mut handovers = 0;
    let mut completed = 0;
    let mut aborted = 0;
    let mut normal_entries = 0u64;
    let mut occupancy = ModeOccupancy::default();
    let mut mode = SuMode::Sensing;
    let mut since = 0.0;
    let mut previous = 0.0;

    for (index, r) in records.iter().enumerate() {
        if r.time < previous {
            return Err(MetricsError::OutOfOrder {
                index,
                time: r.time,
                previous,
            });
        }
        if r.time > duration {
            return Err(MetricsError::BeyondDuration {
                index,
                time: r.time,
                duration,
            });
        }
        previous = r.time;
        match &r.kind {
            EventKind::NegotiationEnd { outcome, .. } => {
                negotiations += 1;
                if *outcome == NegotiationOutcome::Refuse {
                    refusals += 1;
                }
            }
            EventKind::Handover { .. } => handovers += 1,
            EventKind::SessionEnd {
                completed: true, ..
            } => completed += 1,
            EventKind::SessionEnd {
                completed: false, ..
            } => aborted += 1,
            EventKind::ModeChange { to, .. } => {
                occupancy.add(mode, r.time - since);
                mode = *to;
                since = r.time;
                if *to == SuMode::Normal {
                    normal_entries += 1;
                }
            }
            _ => {}
        }
    }
    occupancy.add(mode, duration - since);

    Ok(RunMetrics {
        duration,
        negotiations,
        refusals,
        negotiation_failure_rate: (negotiations > 0).then(|| refusals as f64 / negotiations as f64),
        handovers,
        mode_occupancy: occupancy,
        sessions_completed: completed,
        sessions_aborted: aborted,
        mean_time_in_c1: (normal_entries > 0).then(|| occupancy.normal / normal_entries as f64),
    })
}
