//! Seeded discrete-event kernel.
//!
//! One secondary user runs back-to-back video-conference sessions against
//! the scenario's primary users. Each session needs `length` seconds of
//! transmission in Normal mode; the SU senses every `sensing_period` while in
//! Sensing and re-measures its channel every `monitor_period` while in
//! Normal. Primary calls arrive and depart as Poisson processes and may
//! reclaim the SU's channel. A session is aborted when a healing episode runs
//! out of candidate channels.
//!
//! The loop is single-threaded; equal timestamps are processed in insertion
//! order. All randomness comes from named substreams of the run seed.

mod experiments;
pub mod metrics;
mod pool;
pub mod queue;
pub mod traffic;

use std::collections::BTreeSet;

use log::debug;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use thiserror::Error;

use crate::config::{Scenario, SessionDistribution, ValidationError};
use crate::events::{quantize, EventKind, EventRecord, NegotiationOutcome, Trace};
use crate::knowledge::{KnowledgeBase, KnowledgeError};
use crate::rng::{streams, substream, SimRng};
use crate::selfmgmt::{Action, SelfMgmtError, SuMode, SuState};
use crate::spectrum::{sense, ChannelId, PuId, Spectrum, SpectrumOffer};

pub use experiments::{compare_learning, sweep, LearningComparison};
pub use metrics::{compute_metrics, MetricsError, ModeOccupancy, RunMetrics};
pub use pool::{ChannelPool, Occupant, PuAdmission};
pub use queue::EventQueue;
pub use traffic::{run_su_traffic, TrafficReport};

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    StateMachine(#[from] SelfMgmtError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub metrics: RunMetrics,
    pub knowledge: KnowledgeBase,
}

#[derive(Debug)]
enum Ev {
    Sense(u64),
    Monitor(u64),
    SessionDone(u64),
    PuArrival(usize),
    PuDeparture(usize, ChannelId),
}

/// Runs `scenario` for `duration` seconds.
pub fn run(scenario: &Scenario, seed: u64, duration: f64) -> Result<RunOutput, EngineError> {
    run_with_knowledge(scenario, seed, duration, None)
}

/// As [`run`], starting from a previously learned knowledge base.
pub fn run_with_knowledge(
    scenario: &Scenario,
    seed: u64,
    duration: f64,
    initial: Option<KnowledgeBase>,
) -> Result<RunOutput, EngineError> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(
            ValidationError::single(format!("duration must be positive, got {duration}")).into(),
        );
    }
    let cfg = scenario.config();
    let kb = initial.unwrap_or_else(|| KnowledgeBase::new(cfg.learning.alpha, scenario.spectrum()));
    let mut k = Kernel::new(scenario, seed, kb);
    k.start()?;
    while let Some((t, ev)) = k.queue.pop() {
        if t > duration {
            break;
        }
        k.now = t;
        k.handle(ev)?;
    }
    let metrics = compute_metrics(&k.records, duration)?;
    debug!(
        "seed {seed}: {} records, {} negotiations, {} handovers",
        k.records.len(),
        metrics.negotiations,
        metrics.handovers
    );
    Ok(RunOutput {
        trace: Trace {
            seed,
            duration,
            records: k.records,
        },
        metrics,
        knowledge: k.kb,
    })
}

struct Kernel<'a> {
    scenario: &'a Scenario,
    spectrum: &'a Spectrum,
    learning: bool,
    queue: EventQueue<Ev>,
    records: Vec<EventRecord>,
    kb: KnowledgeBase,
    su: SuState,
    pool: ChannelPool,
    now: f64,
    /// Bumped on every mode change; timers from older epochs are stale.
    epoch: u64,
    normal_since: f64,
    session: u64,
    /// Channel whose owner agreed to deliver its granted QoS.
    granted: Option<ChannelId>,
    last_offer: Option<ChannelId>,
    failed: Option<ChannelId>,
    sensing_rng: SimRng,
    negotiation_rng: SimRng,
    session_rng: SimRng,
    pu_rngs: Vec<SimRng>,
}

impl<'a> Kernel<'a> {
    fn new(scenario: &'a Scenario, seed: u64, kb: KnowledgeBase) -> Self {
        let spectrum = scenario.spectrum();
        Kernel {
            scenario,
            spectrum,
            learning: scenario.config().learning.enabled,
            queue: EventQueue::new(),
            records: Vec::new(),
            kb,
            su: SuState::new(0.0),
            pool: ChannelPool::default(),
            now: 0.0,
            epoch: 0,
            normal_since: 0.0,
            session: 0,
            granted: None,
            last_offer: None,
            failed: None,
            sensing_rng: substream(seed, streams::SENSING),
            negotiation_rng: substream(seed, streams::NEGOTIATION),
            session_rng: substream(seed, streams::SESSION),
            pu_rngs: spectrum
                .primary_users()
                .iter()
                .map(|p| substream(seed, &streams::pu_traffic(p.id.0)))
                .collect(),
        }
    }

    fn start(&mut self) -> Result<(), EngineError> {
        for k in 0..self.spectrum.primary_users().len() {
            self.schedule_pu_arrival(k);
        }
        self.start_session(0.0)
    }

    fn emit(&mut self, kind: EventKind) -> Result<(), EngineError> {
        let rec = EventRecord::new(self.now, kind);
        self.kb.record(&rec)?;
        self.records.push(rec);
        Ok(())
    }

    fn sensing_period(&self) -> f64 {
        self.scenario.config().su.sensing_period
    }

    fn owner(&self, ch: ChannelId) -> PuId {
        self.spectrum
            .owner_of(ch)
            .expect("validated scenarios give every channel an owner")
    }

    fn draw_session_length(&mut self) -> f64 {
        let length = self.scenario.config().su.session_length;
        match length.distribution {
            SessionDistribution::Fixed => length.mean,
            SessionDistribution::Exponential => Exp::new(1.0 / length.mean)
                .expect("positive mean")
                .sample(&mut self.session_rng),
        }
    }

    fn start_session(&mut self, sense_delay: f64) -> Result<(), EngineError> {
        self.session += 1;
        let length = quantize(self.draw_session_length());
        self.su.set_session_clock(length);
        self.emit(EventKind::SessionStart {
            session: self.session,
            length,
        })?;
        self.queue
            .push(self.now + sense_delay, Ev::Sense(self.epoch));
        Ok(())
    }

    /// Free channels outside `exclude`, best first.
    fn candidates(&self, exclude: &BTreeSet<ChannelId>) -> Vec<ChannelId> {
        let kb = self.learning.then_some(&self.kb);
        self.spectrum
            .candidate_channels(exclude, kb)
            .into_iter()
            .map(|c| c.id)
            .filter(|&id| self.pool.is_free(id))
            .collect()
    }

    fn sense_offer(&mut self, ch: ChannelId) -> Result<SpectrumOffer, EngineError> {
        let channel = self
            .spectrum
            .channel(ch)
            .expect("candidate ids come from the spectrum");
        let offer = if self.granted == Some(ch) {
            sense(&channel.granted(), self.now, &mut self.sensing_rng)
        } else {
            sense(channel, self.now, &mut self.sensing_rng)
        }
        .map_measurement(quantize);
        self.emit(EventKind::Offer {
            channel: ch,
            pu: self.owner(ch),
            class: offer.offered_class(),
            measured: *offer.measured(),
        })?;
        self.last_offer = Some(ch);
        Ok(offer)
    }

    /// Installs `next` and carries out `action`.
    fn transition(&mut self, next: SuState, action: Action) -> Result<(), EngineError> {
        let prev = std::mem::replace(&mut self.su, next);
        if prev.mode() != self.su.mode() {
            self.epoch += 1;
            if prev.mode() == SuMode::Normal {
                let left = prev.session_clock() - (self.now - self.normal_since);
                self.su.set_session_clock(left);
                if let Some(ch) = prev.bound_channel() {
                    if self.pool.release(ch) != Some(Occupant::Su(self.session)) {
                        // Preempted: the channel already belongs to the PU.
                        self.pool.occupy(ch, Occupant::Pu(self.owner(ch)));
                    }
                }
                self.granted = None;
            }
            self.emit(EventKind::ModeChange {
                from: prev.mode(),
                to: self.su.mode(),
            })?;
        }
        if self.su.mode() == SuMode::Failure {
            self.failed = prev
                .bound_channel()
                .or(prev.negotiation_channel())
                .or(self.last_offer);
        }
        self.act(action)
    }

    fn act(&mut self, action: Action) -> Result<(), EngineError> {
        match action {
            Action::UseSpectrum(ch) => {
                self.pool.occupy(ch, Occupant::Su(self.session));
                self.normal_since = self.now;
                let cfg = &self.scenario.config().su;
                self.queue
                    .push(self.now + cfg.monitor_period, Ev::Monitor(self.epoch));
                self.queue.push(
                    self.now + self.su.session_clock(),
                    Ev::SessionDone(self.epoch),
                );
                Ok(())
            }
            Action::Negotiate(ch) => {
                let pu = self.owner(ch);
                self.emit(EventKind::NegotiationStart { channel: ch, pu })?;
                let coop = self.spectrum.primary_user(pu).map_or(0.0, |p| p.coop_prob);
                let outcome = if self.negotiation_rng.random::<f64>() < coop {
                    NegotiationOutcome::Cooperate
                } else {
                    NegotiationOutcome::Refuse
                };
                self.emit(EventKind::NegotiationEnd {
                    channel: ch,
                    pu,
                    outcome,
                })?;
                if outcome == NegotiationOutcome::Cooperate {
                    self.granted = Some(ch);
                }
                let (next, a) = self.su.on_negotiation_result(outcome)?;
                self.transition(next, a)
            }
            Action::Handover => self.handover(),
            Action::Idle => Ok(()),
        }
    }

    fn handover(&mut self) -> Result<(), EngineError> {
        let from = self.failed;
        let target = self.candidates(self.su.excluded()).first().copied();
        match target {
            Some(ch) => {
                self.emit(EventKind::Sense { channel: Some(ch) })?;
                let offer = self.sense_offer(ch)?;
                let (next, a) = self.su.on_handover(Some(&offer))?;
                self.emit(EventKind::Handover { from, to: Some(ch) })?;
                self.transition(next, a)
            }
            None => {
                let (next, a) = self.su.on_handover(None)?;
                self.emit(EventKind::Handover { from, to: None })?;
                self.transition(next, a)?;
                self.emit(EventKind::SessionEnd {
                    session: self.session,
                    completed: false,
                })?;
                let delay = self.sensing_period() * f64::from(self.su.backoff_multiplier());
                self.start_session(delay)
            }
        }
    }

    fn schedule_pu_arrival(&mut self, k: usize) {
        let pu = &self.spectrum.primary_users()[k];
        if pu.arrival_rate > 0.0 {
            let dt = Exp::new(pu.arrival_rate / SECONDS_PER_HOUR)
                .expect("positive rate")
                .sample(&mut self.pu_rngs[k]);
            self.queue.push(self.now + dt, Ev::PuArrival(k));
        }
    }

    fn handle(&mut self, ev: Ev) -> Result<(), EngineError> {
        match ev {
            Ev::Sense(e) => {
                if e != self.epoch || self.su.mode() != SuMode::Sensing {
                    return Ok(());
                }
                match self.candidates(&BTreeSet::new()).first().copied() {
                    None => {
                        self.emit(EventKind::Sense { channel: None })?;
                        let delay = self.sensing_period() * f64::from(self.su.backoff_multiplier());
                        self.queue.push(self.now + delay, Ev::Sense(self.epoch));
                        Ok(())
                    }
                    Some(ch) => {
                        self.emit(EventKind::Sense { channel: Some(ch) })?;
                        let offer = self.sense_offer(ch)?;
                        let (next, a) = self.su.on_offer(&offer)?;
                        self.transition(next, a)
                    }
                }
            }
            Ev::Monitor(e) => {
                if e != self.epoch {
                    return Ok(());
                }
                let ch = self
                    .su
                    .bound_channel()
                    .expect("monitor timers only live in Normal");
                let offer = self.sense_offer(ch)?;
                let (next, a) = self.su.on_degradation(offer.measured())?;
                if a == Action::Idle {
                    let period = self.scenario.config().su.monitor_period;
                    self.queue.push(self.now + period, Ev::Monitor(self.epoch));
                    self.su = next;
                    Ok(())
                } else {
                    self.transition(next, a)
                }
            }
            Ev::SessionDone(e) => {
                if e != self.epoch {
                    return Ok(());
                }
                self.emit(EventKind::SessionEnd {
                    session: self.session,
                    completed: true,
                })?;
                let (next, a) = self.su.on_session_end()?;
                self.transition(next, a)?;
                self.start_session(0.0)
            }
            Ev::PuArrival(k) => {
                self.schedule_pu_arrival(k);
                let pu = self.spectrum.primary_users()[k].clone();
                match self.pool.admit_pu(self.spectrum, pu.band_id, pu.id) {
                    PuAdmission::Free(ch) => {
                        self.emit(EventKind::PuArrival {
                            pu: pu.id,
                            channel: Some(ch),
                            preempted_su: false,
                        })?;
                        self.schedule_pu_departure(k, ch);
                        Ok(())
                    }
                    PuAdmission::Preempt { channel, .. } => {
                        self.emit(EventKind::PuArrival {
                            pu: pu.id,
                            channel: Some(channel),
                            preempted_su: true,
                        })?;
                        self.schedule_pu_departure(k, channel);
                        let (next, a) = self.su.on_preemption()?;
                        self.transition(next, a)
                    }
                    PuAdmission::Blocked => self.emit(EventKind::PuArrival {
                        pu: pu.id,
                        channel: None,
                        preempted_su: false,
                    }),
                }
            }
            Ev::PuDeparture(k, ch) => {
                self.pool.release(ch);
                let pu = self.spectrum.primary_users()[k].id;
                self.emit(EventKind::PuDeparture { pu, channel: ch })
            }
        }
    }

    fn schedule_pu_departure(&mut self, k: usize, ch: ChannelId) {
        let rate = self.spectrum.primary_users()[k].service_rate / SECONDS_PER_HOUR;
        let dt = Exp::new(rate)
            .expect("positive rate")
            .sample(&mut self.pu_rngs[k]);
        self.queue.push(self.now + dt, Ev::PuDeparture(k, ch));
    }
}
