//! Self-management state machine of the secondary user.
//!
//! ```text
//!            offer C1                      negotiation Cooperate
//! Sensing ─────────────► Normal ◄──────────────────────────────┐
//!    │  offer C2                                               │
//!    ├──────────────────────────────────────────────► Warning ─┤
//!    │  offer C3                                               │ Refuse
//!    └──────────────────────────────────────────────► Failure ◄┘
//!                                                        │ handover
//!                                       re-sensed offer ─┴─► (as from Sensing)
//! ```
//!
//! Warning is auto-protection (one negotiation with the channel's owner);
//! Failure is auto-healing (spectral handover to another channel). Channels
//! that failed during one healing episode are excluded until the episode ends,
//! either by reaching Normal or by running out of candidates.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::NegotiationOutcome;
use crate::qos::{classify, QosClass, QosError, QosMeasurement};
use crate::spectrum::{ChannelId, SpectrumOffer};

/// Handover retries back off by doubling the sensing period up to this factor.
pub const MAX_BACKOFF_MULTIPLIER: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SuMode {
    Sensing,
    Normal,
    Warning,
    Failure,
}

impl SuMode {
    pub const ALL: [SuMode; 4] = [
        SuMode::Sensing,
        SuMode::Normal,
        SuMode::Warning,
        SuMode::Failure,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SuMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    UseSpectrum(ChannelId),
    Negotiate(ChannelId),
    Handover,
    Idle,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelfMgmtError {
    #[error("protocol violation: {input} is not accepted in {mode} mode")]
    Protocol { input: &'static str, mode: SuMode },
    #[error(transparent)]
    Qos(#[from] QosError),
}

/// Every input the machine reacts to, used to drive it generically.
#[derive(Debug, Clone, PartialEq)]
pub enum SuInput {
    Offer(SpectrumOffer),
    Negotiation(NegotiationOutcome),
    Measurement(QosMeasurement),
    Preempted,
    SessionEnd,
    Handover(Option<SpectrumOffer>),
}

impl SuInput {
    pub fn name(&self) -> &'static str {
        match self {
            SuInput::Offer(_) => "offer",
            SuInput::Negotiation(_) => "negotiation result",
            SuInput::Measurement(_) => "in-session measurement",
            SuInput::Preempted => "preemption",
            SuInput::SessionEnd => "session end",
            SuInput::Handover(_) => "handover",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuState {
    mode: SuMode,
    bound_channel: Option<ChannelId>,
    negotiation_channel: Option<ChannelId>,
    negotiation_attempts: u64,
    handover_count: u64,
    session_clock: f64,
    excluded: BTreeSet<ChannelId>,
    backoff_exp: u32,
}

type Step = Result<(SuState, Action), SelfMgmtError>;

impl SuState {
    /// A fresh SU in Sensing with `session_clock` seconds of conference to carry.
    pub fn new(session_clock: f64) -> Self {
        SuState {
            mode: SuMode::Sensing,
            bound_channel: None,
            negotiation_channel: None,
            negotiation_attempts: 0,
            handover_count: 0,
            session_clock,
            excluded: BTreeSet::new(),
            backoff_exp: 0,
        }
    }

    pub fn mode(&self) -> SuMode {
        self.mode
    }

    /// Present iff the mode is Normal.
    pub fn bound_channel(&self) -> Option<ChannelId> {
        self.bound_channel
    }

    /// The channel under negotiation while in Warning.
    pub fn negotiation_channel(&self) -> Option<ChannelId> {
        self.negotiation_channel
    }

    pub fn negotiation_attempts(&self) -> u64 {
        self.negotiation_attempts
    }

    pub fn handover_count(&self) -> u64 {
        self.handover_count
    }

    pub fn session_clock(&self) -> f64 {
        self.session_clock
    }

    pub fn set_session_clock(&mut self, seconds: f64) {
        self.session_clock = seconds.max(0.0);
    }

    /// Channels ruled out in the current healing episode.
    pub fn excluded(&self) -> &BTreeSet<ChannelId> {
        &self.excluded
    }

    /// Multiplier applied to the sensing period before the next sense.
    pub fn backoff_multiplier(&self) -> u32 {
        (1u32 << self.backoff_exp).min(MAX_BACKOFF_MULTIPLIER)
    }

    fn violation(&self, input: &'static str) -> SelfMgmtError {
        SelfMgmtError::Protocol {
            input,
            mode: self.mode,
        }
    }

    fn enter(&self, mode: SuMode) -> SuState {
        let mut next = self.clone();
        next.mode = mode;
        next.bound_channel = None;
        next.negotiation_channel = None;
        next
    }

    fn bind(&self, channel: ChannelId) -> (SuState, Action) {
        let mut next = self.enter(SuMode::Normal);
        next.bound_channel = Some(channel);
        next.excluded.clear();
        next.backoff_exp = 0;
        (next, Action::UseSpectrum(channel))
    }

    fn fail(&self, channel: ChannelId) -> (SuState, Action) {
        let mut next = self.enter(SuMode::Failure);
        next.excluded.insert(channel);
        (next, Action::Handover)
    }

    fn warn(&self, channel: ChannelId) -> (SuState, Action) {
        let mut next = self.enter(SuMode::Warning);
        next.negotiation_channel = Some(channel);
        (next, Action::Negotiate(channel))
    }

    fn route(&self, class: QosClass, channel: ChannelId) -> (SuState, Action) {
        match class {
            QosClass::C1 => self.bind(channel),
            QosClass::C2 => self.warn(channel),
            QosClass::C3 => self.fail(channel),
        }
    }

    /// Reacts to a sensed offer while Sensing.
    pub fn on_offer(&self, offer: &SpectrumOffer) -> Step {
        if self.mode != SuMode::Sensing {
            return Err(self.violation("offer"));
        }
        Ok(self.route(offer.offered_class(), offer.channel_id()))
    }

    /// Applies the owner's answer to the single negotiation of a Warning episode.
    pub fn on_negotiation_result(&self, outcome: NegotiationOutcome) -> Step {
        let channel = match (self.mode, self.negotiation_channel) {
            (SuMode::Warning, Some(ch)) => ch,
            _ => return Err(self.violation("negotiation result")),
        };
        let (mut next, action) = match outcome {
            NegotiationOutcome::Cooperate => self.bind(channel),
            NegotiationOutcome::Refuse => self.fail(channel),
        };
        next.negotiation_attempts += 1;
        Ok((next, action))
    }

    /// Periodic re-measurement of the bound channel while Normal.
    pub fn on_degradation(&self, fresh: &QosMeasurement) -> Step {
        let channel = match (self.mode, self.bound_channel) {
            (SuMode::Normal, Some(ch)) => ch,
            _ => return Err(self.violation("in-session measurement")),
        };
        match classify(fresh)? {
            QosClass::C1 => Ok((self.clone(), Action::Idle)),
            class => Ok(self.route(class, channel)),
        }
    }

    /// The bound channel was reclaimed by its primary user.
    pub fn on_preemption(&self) -> Step {
        match (self.mode, self.bound_channel) {
            (SuMode::Normal, Some(ch)) => Ok(self.fail(ch)),
            _ => Err(self.violation("preemption")),
        }
    }

    /// The session finished; the channel is released.
    pub fn on_session_end(&self) -> Step {
        if self.mode != SuMode::Normal {
            return Err(self.violation("session end"));
        }
        Ok((self.enter(SuMode::Sensing), Action::Idle))
    }

    /// Completes a handover with the best re-sensed candidate, if any.
    pub fn on_handover(&self, next: Option<&SpectrumOffer>) -> Step {
        if self.mode != SuMode::Failure {
            return Err(self.violation("handover"));
        }
        let mut sensing = self.enter(SuMode::Sensing);
        sensing.handover_count += 1;
        match next {
            Some(offer) => sensing.on_offer(offer),
            None => {
                sensing.excluded.clear();
                if sensing.backoff_multiplier() < MAX_BACKOFF_MULTIPLIER {
                    sensing.backoff_exp += 1;
                }
                Ok((sensing, Action::Idle))
            }
        }
    }

    /// Dispatches any input to its handler.
    pub fn step(&self, input: &SuInput) -> Step {
        match input {
            SuInput::Offer(o) => self.on_offer(o),
            SuInput::Negotiation(outcome) => self.on_negotiation_result(*outcome),
            SuInput::Measurement(m) => self.on_degradation(m),
            SuInput::Preempted => self.on_preemption(),
            SuInput::SessionEnd => self.on_session_end(),
            SuInput::Handover(o) => self.on_handover(o.as_ref()),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn measurement(class: QosClass) -> QosMeasurement {
        match class {
            QosClass::C1 => QosMeasurement::new(500.0, 100.0, 20.0, 0.5),
            QosClass::C2 => QosMeasurement::new(200.0, 300.0, 45.0, 1.0),
            QosClass::C3 => QosMeasurement::new(100.0, 500.0, 90.0, 3.0),
        }
        .unwrap()
    }

    pub(crate) fn offer(class: QosClass, ch: u32) -> SpectrumOffer {
        SpectrumOffer::new(ChannelId(ch), measurement(class), 0.0)
    }

    fn sensing() -> SuState {
        SuState::new(60.0)
    }

    #[test]
    fn offer_routing() {
        let (s, a) = sensing().on_offer(&offer(QosClass::C1, 5)).unwrap();
        assert_eq!(
            (s.mode(), s.bound_channel(), a),
            (
                SuMode::Normal,
                Some(ChannelId(5)),
                Action::UseSpectrum(ChannelId(5))
            )
        );
        let (s, a) = sensing().on_offer(&offer(QosClass::C2, 5)).unwrap();
        assert_eq!(
            (s.mode(), a),
            (SuMode::Warning, Action::Negotiate(ChannelId(5)))
        );
        assert_eq!(s.bound_channel(), None);
        let (s, a) = sensing().on_offer(&offer(QosClass::C3, 5)).unwrap();
        assert_eq!((s.mode(), a), (SuMode::Failure, Action::Handover));
        assert!(s.excluded().contains(&ChannelId(5)));
    }

    #[test]
    fn negotiation_outcomes() {
        let (warn, _) = sensing().on_offer(&offer(QosClass::C2, 2)).unwrap();
        let (s, a) = warn
            .on_negotiation_result(NegotiationOutcome::Cooperate)
            .unwrap();
        assert_eq!(
            (s.mode(), s.bound_channel(), a),
            (
                SuMode::Normal,
                Some(ChannelId(2)),
                Action::UseSpectrum(ChannelId(2))
            )
        );
        assert_eq!(s.negotiation_attempts(), 1);
        let (s, a) = warn
            .on_negotiation_result(NegotiationOutcome::Refuse)
            .unwrap();
        assert_eq!((s.mode(), a), (SuMode::Failure, Action::Handover));
        assert!(s.excluded().contains(&ChannelId(2)));
    }

    #[test]
    fn negotiation_attempts_accumulate_across_sessions() {
        let mut s = sensing();
        for _ in 0..2 {
            let (w, _) = s.on_offer(&offer(QosClass::C2, 1)).unwrap();
            let (f, _) = w.on_negotiation_result(NegotiationOutcome::Refuse).unwrap();
            let (n, _) = f.on_handover(Some(&offer(QosClass::C1, 2))).unwrap();
            let (done, _) = n.on_session_end().unwrap();
            s = done;
        }
        assert_eq!(s.negotiation_attempts(), 2);
        assert_eq!(s.handover_count(), 2);
    }

    #[test]
    fn degradation_routing() {
        let (normal, _) = sensing().on_offer(&offer(QosClass::C1, 4)).unwrap();
        let (s, a) = normal.on_degradation(&measurement(QosClass::C1)).unwrap();
        assert_eq!((s, a), (normal.clone(), Action::Idle));
        let (s, a) = normal.on_degradation(&measurement(QosClass::C2)).unwrap();
        assert_eq!(
            (s.mode(), s.bound_channel(), a),
            (SuMode::Warning, None, Action::Negotiate(ChannelId(4)))
        );
        let (s, a) = normal.on_degradation(&measurement(QosClass::C3)).unwrap();
        assert_eq!(
            (s.mode(), s.bound_channel(), a),
            (SuMode::Failure, None, Action::Handover)
        );
    }

    #[test]
    fn handover_paths() {
        let (fail, _) = sensing().on_offer(&offer(QosClass::C3, 1)).unwrap();
        let (s, a) = fail.on_handover(Some(&offer(QosClass::C1, 7))).unwrap();
        assert_eq!(
            (s.mode(), a),
            (SuMode::Normal, Action::UseSpectrum(ChannelId(7)))
        );
        assert_eq!(s.handover_count(), 1);
        assert!(s.excluded().is_empty());

        let (s, a) = fail.on_handover(None).unwrap();
        assert_eq!((s.mode(), a), (SuMode::Sensing, Action::Idle));
        assert_eq!(s.backoff_multiplier(), 2);

        let (s, a) = fail.on_handover(Some(&offer(QosClass::C3, 2))).unwrap();
        assert_eq!((s.mode(), a), (SuMode::Failure, Action::Handover));
        assert_eq!(
            s.excluded().iter().map(|c| c.0).collect::<Vec<_>>(),
            vec![1, 2]
        );
    }

    #[test]
    fn backoff_caps_at_eight() {
        let mut s = sensing();
        let mut seen = Vec::new();
        for ch in 0..6 {
            let (f, _) = s.on_offer(&offer(QosClass::C3, ch)).unwrap();
            let (next, _) = f.on_handover(None).unwrap();
            seen.push(next.backoff_multiplier());
            s = next;
        }
        assert_eq!(seen, vec![2, 4, 8, 8, 8, 8]);
        let (n, _) = s.on_offer(&offer(QosClass::C1, 1)).unwrap();
        assert_eq!(n.backoff_multiplier(), 1);
    }

    #[test]
    fn wrong_mode_is_a_protocol_violation() {
        let (normal, _) = sensing().on_offer(&offer(QosClass::C1, 1)).unwrap();
        assert!(matches!(
            normal.on_offer(&offer(QosClass::C1, 1)),
            Err(SelfMgmtError::Protocol { .. })
        ));
        assert!(sensing()
            .on_negotiation_result(NegotiationOutcome::Cooperate)
            .is_err());
        assert!(sensing()
            .on_degradation(&measurement(QosClass::C1))
            .is_err());
        assert!(sensing().on_handover(None).is_err());
        assert!(sensing().on_preemption().is_err());
    }

    #[test]
    fn healing_episode_exclusions_grow_until_exhausted() {
        // Every channel is C3: each handover excludes one more, then gives up.
        let channels = 5u32;
        let (mut s, _) = sensing().on_offer(&offer(QosClass::C3, 0)).unwrap();
        let mut handovers = 0;
        loop {
            let remaining: Vec<u32> = (0..channels)
                .filter(|c| !s.excluded().contains(&ChannelId(*c)))
                .collect();
            let before = s.excluded().len();
            let next = remaining.first().map(|&c| offer(QosClass::C3, c));
            let (n, _) = s.on_handover(next.as_ref()).unwrap();
            handovers += 1;
            if n.mode() == SuMode::Sensing {
                break;
            }
            assert!(n.excluded().len() > before);
            s = n;
        }
        assert!(handovers <= channels);
    }
}
