//! Simulation event records and the JSON Lines trace format.
//!
//! A trace file starts with a header line carrying the schema version, seed
//! and run duration, followed by one [`EventRecord`] per line. Every float in
//! a record is rounded to 9 significant digits when the record is built, so a
//! trace read back from disk is identical to the one held in memory.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qos::{QosClass, QosMeasurement, QosParam};
use crate::selfmgmt::SuMode;
use crate::spectrum::{ChannelId, PuId};

pub const TRACE_SCHEMA: &str = "cogmesh-trace/1";

/// Rounds to 9 significant decimal digits.
pub fn quantize(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

pub fn quantize_measurement(m: &QosMeasurement) -> QosMeasurement {
    let mut q = *m;
    for p in QosParam::ALL {
        q.set(p, quantize(m.get(p)));
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NegotiationOutcome {
    Cooperate,
    Refuse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum EventKind {
    /// A sensing attempt; `channel` is absent when no channel was free.
    Sense {
        channel: Option<ChannelId>,
    },
    Offer {
        channel: ChannelId,
        pu: PuId,
        class: QosClass,
        measured: QosMeasurement,
    },
    ModeChange {
        from: SuMode,
        to: SuMode,
    },
    NegotiationStart {
        channel: ChannelId,
        pu: PuId,
    },
    NegotiationEnd {
        channel: ChannelId,
        pu: PuId,
        outcome: NegotiationOutcome,
    },
    /// `to` is absent when no candidate channel remained.
    Handover {
        from: Option<ChannelId>,
        to: Option<ChannelId>,
    },
    SessionStart {
        session: u64,
        length: f64,
    },
    SessionEnd {
        session: u64,
        completed: bool,
    },
    /// `channel` is absent when the PU call was blocked.
    PuArrival {
        pu: PuId,
        channel: Option<ChannelId>,
        preempted_su: bool,
    },
    PuDeparture {
        pu: PuId,
        channel: ChannelId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl EventRecord {
    /// Builds a record with all floats quantized.
    pub fn new(time: f64, kind: EventKind) -> Self {
        let kind = match kind {
            EventKind::Offer {
                channel,
                pu,
                class,
                measured,
            } => EventKind::Offer {
                channel,
                pu,
                class,
                measured: quantize_measurement(&measured),
            },
            EventKind::SessionStart { session, length } => EventKind::SessionStart {
                session,
                length: quantize(length),
            },
            other => other,
        };
        EventRecord {
            time: quantize(time),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub schema: String,
    pub seed: u64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub seed: u64,
    pub duration: f64,
    pub records: Vec<EventRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace is empty (missing header line)")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Trace {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header = TraceHeader {
            schema: TRACE_SCHEMA.to_string(),
            seed: self.seed,
            duration: self.duration,
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Trace, TraceError> {
        let mut lines = r.lines().enumerate();
        let header: TraceHeader = loop {
            match lines.next() {
                None => return Err(TraceError::MissingHeader),
                Some((_, l)) if l.as_ref().is_ok_and(|s| s.trim().is_empty()) => continue,
                Some((i, l)) => {
                    break serde_json::from_str(&l?).map_err(|e| TraceError::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })?
                }
            }
        };
        if header.schema != TRACE_SCHEMA {
            return Err(TraceError::Parse {
                line: 1,
                message: format!("unsupported schema {:?}", header.schema),
            });
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EventRecord = serde_json::from_str(&line).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Ok(Trace {
            seed: header.seed,
            duration: header.duration,
            records,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantize_keeps_nine_digits() {
        assert_eq!(quantize(1.0 / 3.0), 0.333333333);
        assert_eq!(quantize(123456789.4), 123456789.0);
        assert_eq!(quantize(0.0), 0.0);
        assert_eq!(quantize(2.5), 2.5);
    }

    #[test]
    fn record_json_shape() {
        let r = EventRecord::new(
            1.0,
            EventKind::NegotiationEnd {
                channel: ChannelId(2),
                pu: PuId(7),
                outcome: NegotiationOutcome::Refuse,
            },
        );
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"time":1.0,"kind":"NegotiationEnd","channel":2,"pu":7,"outcome":"Refuse"}"#
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = format!(
            "{{\"schema\":\"{TRACE_SCHEMA}\",\"seed\":1,\"duration\":10.0}}\n\
             {{\"time\":0.0,\"kind\":\"Sense\",\"channel\":1}}\n\
             {{\"time\":1.0,\"kind\":\"Bogus\"}}\n"
        );
        match Trace::read_jsonl(text.as_bytes()) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            Trace::read_jsonl(&b""[..]),
            Err(TraceError::MissingHeader)
        ));
    }

    proptest! {
        #[test]
        fn quantized_floats_survive_jsonl(times in proptest::collection::vec(0.0..1e7f64, 0..20), seed: u64) {
            let mut ts = times;
            ts.sort_by(f64::total_cmp);
            let trace = Trace {
                seed,
                duration: 1e7,
                records: ts.iter().map(|&t| EventRecord::new(t, EventKind::SessionStart { session: 1, length: t / 3.0 })).collect(),
            };
            let back = Trace::read_jsonl(trace.to_jsonl().as_bytes()).unwrap();
            prop_assert_eq!(back, trace);
        }
    }
}
