//! Knowledge base learned from negotiation outcomes and offer history.
//!
//! Cooperation is estimated per primary user as a Laplace-smoothed frequency,
//! and channels are ranked by `P(owner cooperates) * P(offer is C1)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{EventKind, EventRecord, NegotiationOutcome};
use crate::qos::QosClass;
use crate::spectrum::{Channel, ChannelId, PuId, Spectrum};

pub const KB_SCHEMA: &str = "cogmesh-kb/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnowledgeError {
    #[error("unknown primary user {0}")]
    UnknownPu(PuId),
    #[error("unknown channel {0}")]
    UnknownChannel(ChannelId),
    #[error("smoothing constant must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("knowledge base: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PuStats {
    pub negotiations: u64,
    pub cooperations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub owner: Option<PuId>,
    /// Offers seen, indexed by class `[C1, C2, C3]`.
    pub offers: [u64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnowledgeBase {
    schema: String,
    alpha: f64,
    pus: BTreeMap<PuId, PuStats>,
    channels: BTreeMap<ChannelId, ChannelStats>,
}

impl KnowledgeBase {
    /// An empty base over the scenario's primary users and channels.
    pub fn new(alpha: f64, spectrum: &Spectrum) -> Self {
        KnowledgeBase {
            schema: KB_SCHEMA.to_string(),
            alpha,
            pus: spectrum
                .primary_users()
                .iter()
                .map(|p| (p.id, PuStats::default()))
                .collect(),
            channels: spectrum
                .channels()
                .iter()
                .map(|c| {
                    (
                        c.id,
                        ChannelStats {
                            owner: spectrum.owner_of(c.id),
                            offers: [0; 3],
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pu_stats(&self, pu: PuId) -> Option<&PuStats> {
        self.pus.get(&pu)
    }

    pub fn channel_stats(&self, ch: ChannelId) -> Option<&ChannelStats> {
        self.channels.get(&ch)
    }

    /// Learns from one event. Events that carry nothing to learn are ignored.
    pub fn record(&mut self, event: &EventRecord) -> Result<(), KnowledgeError> {
        match &event.kind {
            EventKind::NegotiationEnd { pu, outcome, .. } => {
                let stats = self.pus.get_mut(pu).ok_or(KnowledgeError::UnknownPu(*pu))?;
                stats.negotiations += 1;
                if *outcome == NegotiationOutcome::Cooperate {
                    stats.cooperations += 1;
                }
            }
            EventKind::Offer { channel, class, .. } => {
                let stats = self
                    .channels
                    .get_mut(channel)
                    .ok_or(KnowledgeError::UnknownChannel(*channel))?;
                stats.offers[class.index()] += 1;
            }
            EventKind::NegotiationStart { pu, channel } => {
                if !self.pus.contains_key(pu) {
                    return Err(KnowledgeError::UnknownPu(*pu));
                }
                if !self.channels.contains_key(channel) {
                    return Err(KnowledgeError::UnknownChannel(*channel));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// `(cooperations + alpha) / (negotiations + 2 alpha)`, always in (0, 1).
    pub fn cooperation_estimate(&self, pu: PuId) -> Result<f64, KnowledgeError> {
        let s = self.pus.get(&pu).ok_or(KnowledgeError::UnknownPu(pu))?;
        Ok((s.cooperations as f64 + self.alpha) / (s.negotiations as f64 + 2.0 * self.alpha))
    }

    /// Smoothed probability that the next offer on `ch` is C1.
    pub fn c1_likelihood(&self, ch: ChannelId) -> Result<f64, KnowledgeError> {
        let s = self
            .channels
            .get(&ch)
            .ok_or(KnowledgeError::UnknownChannel(ch))?;
        let total: u64 = s.offers.iter().sum();
        Ok(
            (s.offers[QosClass::C1.index()] as f64 + self.alpha)
                / (total as f64 + 3.0 * self.alpha),
        )
    }

    /// Ranking score; unknown ids fall back to the uninformed prior.
    pub fn score(&self, ch: ChannelId) -> f64 {
        let coop = self
            .channels
            .get(&ch)
            .and_then(|s| s.owner)
            .and_then(|pu| self.cooperation_estimate(pu).ok())
            .unwrap_or(0.5);
        let c1 = self.c1_likelihood(ch).unwrap_or(1.0 / 3.0);
        coop * c1
    }

    /// Sorts `candidates` by descending score, ties by ascending id.
    pub fn rank_channels<'a>(&self, candidates: &[&'a Channel]) -> Vec<&'a Channel> {
        let mut scored: Vec<(f64, &Channel)> =
            candidates.iter().map(|c| (self.score(c.id), *c)).collect();
        scored.sort_by(|(sa, a), (sb, b)| sb.total_cmp(sa).then(a.id.cmp(&b.id)));
        scored.into_iter().map(|(_, c)| c).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("knowledge base serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, KnowledgeError> {
        let kb: KnowledgeBase =
            serde_json::from_str(text).map_err(|e| KnowledgeError::Format(e.to_string()))?;
        if kb.schema != KB_SCHEMA {
            return Err(KnowledgeError::Format(format!(
                "unsupported schema {:?}",
                kb.schema
            )));
        }
        if !(kb.alpha.is_finite() && kb.alpha > 0.0) {
            return Err(KnowledgeError::BadAlpha(kb.alpha));
        }
        if let Some((pu, _)) = kb.pus.iter().find(|(_, s)| s.cooperations > s.negotiations) {
            return Err(KnowledgeError::Format(format!(
                "primary user {pu} has more cooperations than negotiations"
            )));
        }
        Ok(kb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qos::QosMeasurement;
    use crate::rng::substream;
    use crate::spectrum::{BandId, PrimaryUser, QosSpread};
    use proptest::prelude::*;
    use rand::Rng;

    fn spectrum(n: u32) -> Spectrum {
        let channels = (1..=n)
            .map(|i| Channel {
                id: ChannelId(i),
                band_id: BandId(i),
                qos_mean: QosMeasurement::new(500.0, 100.0, 20.0, 0.5).unwrap(),
                qos_spread: QosSpread::default(),
                granted_qos: None,
            })
            .collect();
        let pus = (1..=n)
            .map(|i| PrimaryUser {
                id: PuId(i),
                band_id: BandId(i),
                coop_prob: 0.5,
                arrival_rate: 0.0,
                service_rate: 1.0,
            })
            .collect();
        Spectrum::new(channels, pus)
    }

    fn negotiation(pu: u32, outcome: NegotiationOutcome) -> EventRecord {
        EventRecord::new(
            0.0,
            EventKind::NegotiationEnd {
                channel: ChannelId(pu),
                pu: PuId(pu),
                outcome,
            },
        )
    }

    fn offer(ch: u32, class: QosClass) -> EventRecord {
        EventRecord::new(
            0.0,
            EventKind::Offer {
                channel: ChannelId(ch),
                pu: PuId(ch),
                class,
                measured: QosMeasurement::new(500.0, 100.0, 20.0, 0.5).unwrap(),
            },
        )
    }

    #[test]
    fn counters_update() {
        let mut kb = KnowledgeBase::new(1.0, &spectrum(5));
        kb.record(&negotiation(3, NegotiationOutcome::Cooperate))
            .unwrap();
        assert_eq!(
            *kb.pu_stats(PuId(3)).unwrap(),
            PuStats {
                negotiations: 1,
                cooperations: 1
            }
        );
        kb.record(&negotiation(3, NegotiationOutcome::Refuse))
            .unwrap();
        assert_eq!(
            *kb.pu_stats(PuId(3)).unwrap(),
            PuStats {
                negotiations: 2,
                cooperations: 1
            }
        );
        assert_eq!(*kb.pu_stats(PuId(2)).unwrap(), PuStats::default());
        kb.record(&offer(5, QosClass::C2)).unwrap();
        assert_eq!(kb.channel_stats(ChannelId(5)).unwrap().offers, [0, 1, 0]);
    }

    #[test]
    fn unknown_ids_are_referential_errors() {
        let mut kb = KnowledgeBase::new(1.0, &spectrum(2));
        assert_eq!(
            kb.record(&negotiation(9, NegotiationOutcome::Refuse)),
            Err(KnowledgeError::UnknownPu(PuId(9)))
        );
        assert_eq!(
            kb.record(&offer(9, QosClass::C1)),
            Err(KnowledgeError::UnknownChannel(ChannelId(9)))
        );
        assert!(kb.cooperation_estimate(PuId(9)).is_err());
    }

    #[test]
    fn estimate_examples() {
        let mut kb = KnowledgeBase::new(1.0, &spectrum(2));
        assert_eq!(kb.cooperation_estimate(PuId(1)).unwrap(), 0.5);
        for o in [
            NegotiationOutcome::Cooperate,
            NegotiationOutcome::Cooperate,
            NegotiationOutcome::Cooperate,
            NegotiationOutcome::Refuse,
        ] {
            kb.record(&negotiation(1, o)).unwrap();
        }
        assert!((kb.cooperation_estimate(PuId(1)).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        for _ in 0..10 {
            kb.record(&negotiation(2, NegotiationOutcome::Refuse))
                .unwrap();
        }
        assert!((kb.cooperation_estimate(PuId(2)).unwrap() - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn ranking() {
        let s = spectrum(3);
        let all: Vec<&Channel> = s.channels().iter().collect();
        let mut kb = KnowledgeBase::new(1.0, &s);
        let ids = |v: Vec<&Channel>| v.iter().map(|c| c.id.0).collect::<Vec<_>>();
        assert_eq!(ids(kb.rank_channels(&all)), vec![1, 2, 3]);
        // PU 3 cooperative (est 0.9), PU 1 not (est 0.1)
        for _ in 0..8 {
            kb.record(&negotiation(3, NegotiationOutcome::Cooperate))
                .unwrap();
            kb.record(&negotiation(1, NegotiationOutcome::Refuse))
                .unwrap();
        }
        assert!((kb.cooperation_estimate(PuId(3)).unwrap() - 0.9).abs() < 1e-12);
        assert!((kb.cooperation_estimate(PuId(1)).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(ids(kb.rank_channels(&all)), vec![3, 2, 1]);
    }

    #[test]
    fn estimate_converges() {
        let mut kb = KnowledgeBase::new(1.0, &spectrum(1));
        let mut rng = substream(2024, "kb-consistency");
        let p = 0.3;
        for _ in 0..10_000 {
            let o = if rng.random::<f64>() < p {
                NegotiationOutcome::Cooperate
            } else {
                NegotiationOutcome::Refuse
            };
            kb.record(&negotiation(1, o)).unwrap();
        }
        assert!((kb.cooperation_estimate(PuId(1)).unwrap() - p).abs() < 0.02);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let mut kb = KnowledgeBase::new(2.0, &spectrum(2));
        kb.record(&negotiation(1, NegotiationOutcome::Cooperate))
            .unwrap();
        assert_eq!(KnowledgeBase::from_json(&kb.to_json()).unwrap(), kb);
        let broken = kb
            .to_json()
            .replace("\"cooperations\": 1", "\"cooperations\": 5");
        assert!(KnowledgeBase::from_json(&broken).is_err());
    }

    proptest! {
        #[test]
        fn estimate_strictly_inside_unit_interval(coops in 0u64..200, extra in 0u64..200, alpha in 0.01..10.0f64) {
            let mut kb = KnowledgeBase::new(alpha, &spectrum(1));
            for i in 0..(coops + extra) {
                let o = if i < coops { NegotiationOutcome::Cooperate } else { NegotiationOutcome::Refuse };
                kb.record(&negotiation(1, o)).unwrap();
            }
            let e = kb.cooperation_estimate(PuId(1)).unwrap();
            prop_assert!(e > 0.0 && e < 1.0);
        }

        #[test]
        fn ranking_is_a_deterministic_permutation(history in proptest::collection::vec((1u32..=6, 0usize..3, any::<bool>()), 0..60)) {
            let s = spectrum(6);
            let mut kb = KnowledgeBase::new(1.0, &s);
            for (ch, class, coop) in history {
                kb.record(&offer(ch, QosClass::ALL[class])).unwrap();
                let o = if coop { NegotiationOutcome::Cooperate } else { NegotiationOutcome::Refuse };
                kb.record(&negotiation(ch, o)).unwrap();
            }
            let all: Vec<&Channel> = s.channels().iter().collect();
            let a = kb.rank_channels(&all);
            let b = kb.rank_channels(&all);
            prop_assert_eq!(&a, &b);
            let mut ids: Vec<u32> = a.iter().map(|c| c.id.0).collect();
            ids.sort();
            prop_assert_eq!(ids, vec![1, 2, 3, 4, 5, 6]);
        }
    }
}
