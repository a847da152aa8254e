//! Handover-free secondary traffic for checking the engine against the
//! Markov occupancy model.
//!
//! Secondary sessions arrive as a Poisson stream; each takes the first free
//! channel or is blocked, holds it for an exponential time, and ends early
//! if a primary call reclaims the channel. Primary traffic uses the same
//! admission rules as the autonomic run.

use rand_distr::{Distribution, Exp};
use serde::Serialize;

use super::pool::{ChannelPool, Occupant, PuAdmission};
use super::queue::EventQueue;
use super::{EngineError, SECONDS_PER_HOUR};
use crate::config::{Scenario, ValidationError};
use crate::markov::{ratio_standard_error, OccupancyModel};
use crate::rng::{streams, substream, SimRng};
use crate::spectrum::ChannelId;

const BATCHES: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficReport {
    pub simulated_time: f64,
    pub su_arrivals: u64,
    pub su_blocked: u64,
    pub su_accepted: u64,
    pub su_preempted: u64,
    pub blocking: f64,
    pub blocking_se: f64,
    pub noncompletion: Option<f64>,
    pub noncompletion_se: Option<f64>,
}

/// The occupancy model this scenario's traffic realizes, when one primary
/// user owns every channel and secondary arrivals are configured.
pub fn matched_model(scenario: &Scenario) -> Option<OccupancyModel> {
    let cfg = scenario.config();
    let arrivals = cfg.su.arrivals?;
    let [pu] = cfg.primary_users.as_slice() else {
        return None;
    };
    if cfg.channels.iter().any(|c| c.band_id != pu.band_id) {
        return None;
    }
    OccupancyModel::new(
        cfg.channels.len() as u32,
        pu.arrival_rate,
        pu.service_rate,
        arrivals.arrival_rate,
        arrivals.service_rate,
    )
    .ok()
}

#[derive(Debug)]
enum Ev {
    SuArrival,
    SuDeparture(u64, ChannelId),
    PuArrival(usize),
    PuDeparture(ChannelId),
}

#[derive(Default, Clone, Copy)]
struct Batch {
    arrivals: u64,
    blocked: u64,
    accepted: u64,
    preempted: u64,
}

/// Simulates until `target_arrivals` secondary arrivals have been seen.
pub fn run_su_traffic(
    scenario: &Scenario,
    seed: u64,
    target_arrivals: u64,
) -> Result<TrafficReport, EngineError> {
    let cfg = scenario.config();
    let arrivals = cfg.su.arrivals.ok_or_else(|| {
        ValidationError::single("su.arrivals is required for secondary traffic runs")
    })?;
    if target_arrivals < BATCHES {
        return Err(
            ValidationError::single(format!("need at least {BATCHES} secondary arrivals")).into(),
        );
    }
    let spectrum = scenario.spectrum();
    let pus = spectrum.primary_users();
    let mut su_rng = substream(seed, streams::SU_TRAFFIC);
    let mut pu_rngs: Vec<SimRng> = pus
        .iter()
        .map(|p| substream(seed, &streams::pu_traffic(p.id.0)))
        .collect();
    let exp = |rate_per_hour: f64, rng: &mut SimRng| {
        Exp::new(rate_per_hour / SECONDS_PER_HOUR)
            .expect("positive rate")
            .sample(rng)
    };

    let mut queue = EventQueue::new();
    let mut pool = ChannelPool::default();
    queue.push(exp(arrivals.arrival_rate, &mut su_rng), Ev::SuArrival);
    for (k, p) in pus.iter().enumerate() {
        if p.arrival_rate > 0.0 {
            queue.push(exp(p.arrival_rate, &mut pu_rngs[k]), Ev::PuArrival(k));
        }
    }

    let per_batch = target_arrivals / BATCHES;
    let mut batches = vec![Batch::default(); BATCHES as usize];
    let mut seen = 0u64;
    let mut next_session = 0u64;
    let mut now = 0.0;
    while let Some((t, ev)) = queue.pop() {
        now = t;
        let b = &mut batches[((seen.saturating_sub(1)) / per_batch).min(BATCHES - 1) as usize];
        match ev {
            Ev::SuArrival => {
                if seen == target_arrivals {
                    break;
                }
                seen += 1;
                let b = &mut batches[((seen - 1) / per_batch).min(BATCHES - 1) as usize];
                b.arrivals += 1;
                match pool.first_free(spectrum) {
                    Some(ch) => {
                        b.accepted += 1;
                        next_session += 1;
                        pool.occupy(ch, Occupant::Su(next_session));
                        let dt = exp(arrivals.service_rate, &mut su_rng);
                        queue.push(now + dt, Ev::SuDeparture(next_session, ch));
                    }
                    None => b.blocked += 1,
                }
                queue.push(now + exp(arrivals.arrival_rate, &mut su_rng), Ev::SuArrival);
            }
            Ev::SuDeparture(session, ch) => {
                // Preempted sessions have already lost the channel.
                if pool.occupant(ch) == Some(Occupant::Su(session)) {
                    pool.release(ch);
                }
            }
            Ev::PuArrival(k) => {
                let p = &pus[k];
                queue.push(now + exp(p.arrival_rate, &mut pu_rngs[k]), Ev::PuArrival(k));
                match pool.admit_pu(spectrum, p.band_id, p.id) {
                    PuAdmission::Free(ch) => {
                        queue.push(
                            now + exp(p.service_rate, &mut pu_rngs[k]),
                            Ev::PuDeparture(ch),
                        );
                    }
                    PuAdmission::Preempt { channel, .. } => {
                        b.preempted += 1;
                        queue.push(
                            now + exp(p.service_rate, &mut pu_rngs[k]),
                            Ev::PuDeparture(channel),
                        );
                    }
                    PuAdmission::Blocked => {}
                }
            }
            Ev::PuDeparture(ch) => {
                pool.release(ch);
            }
        }
    }

    let total = batches.iter().fold(Batch::default(), |a, b| Batch {
        arrivals: a.arrivals + b.arrivals,
        blocked: a.blocked + b.blocked,
        accepted: a.accepted + b.accepted,
        preempted: a.preempted + b.preempted,
    });
    let col = |f: fn(&Batch) -> u64| batches.iter().map(|b| f(b) as f64).collect::<Vec<_>>();
    let accepted = total.accepted > 0;
    Ok(TrafficReport {
        simulated_time: now,
        su_arrivals: total.arrivals,
        su_blocked: total.blocked,
        su_accepted: total.accepted,
        su_preempted: total.preempted,
        blocking: total.blocked as f64 / total.arrivals.max(1) as f64,
        blocking_se: ratio_standard_error(&col(|b| b.blocked), &col(|b| b.arrivals)),
        noncompletion: accepted.then(|| total.preempted as f64 / total.accepted as f64),
        noncompletion_se: accepted
            .then(|| ratio_standard_error(&col(|b| b.preempted), &col(|b| b.accepted))),
    })
}
