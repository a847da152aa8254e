//! Licensed bands, their primary users, and channel sensing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::knowledge::KnowledgeBase;
use crate::qos::{classify, QosClass, QosMeasurement, QosParam};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }
    };
}

id_type!(ChannelId);
id_type!(BandId);
id_type!(
    /// Primary-user identifier.
    PuId
);

/// Per-field half-width of the uniform sensing noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QosSpread {
    pub bandwidth_kbps: f64,
    pub delay_ms: f64,
    pub jitter_ms: f64,
    pub error_rate_pct: f64,
}

impl QosSpread {
    pub fn get(&self, param: QosParam) -> f64 {
        match param {
            QosParam::Bandwidth => self.bandwidth_kbps,
            QosParam::Delay => self.delay_ms,
            QosParam::Jitter => self.jitter_ms,
            QosParam::ErrorRate => self.error_rate_pct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub id: ChannelId,
    pub band_id: BandId,
    /// Center of the sensed QoS distribution.
    pub qos_mean: QosMeasurement,
    #[serde(default)]
    pub qos_spread: QosSpread,
    /// Center of the sensed QoS after the owner agrees to a negotiation.
    /// Defaults to [`DEFAULT_GRANTED_QOS`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granted_qos: Option<QosMeasurement>,
}

/// QoS a cooperating owner delivers when the channel declares none.
pub const DEFAULT_GRANTED_QOS: QosMeasurement = QosMeasurement {
    bandwidth_kbps: 512.0,
    delay_ms: 150.0,
    jitter_ms: 20.0,
    error_rate_pct: 0.5,
};

impl Channel {
    /// The channel as it behaves while a negotiated grant holds.
    pub fn granted(&self) -> Channel {
        Channel {
            qos_mean: self.granted_qos.unwrap_or(DEFAULT_GRANTED_QOS),
            ..self.clone()
        }
    }
}

/// License holder of one band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrimaryUser {
    pub id: PuId,
    pub band_id: BandId,
    /// Probability of accepting a negotiation.
    pub coop_prob: f64,
    /// Call arrivals per hour.
    #[serde(default)]
    pub arrival_rate: f64,
    /// Call completions per hour, per active call.
    #[serde(default = "default_service_rate")]
    pub service_rate: f64,
}

fn default_service_rate() -> f64 {
    1.0
}

/// A sensed channel together with its class. The class is always derived
/// from the measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumOffer {
    channel_id: ChannelId,
    measured: QosMeasurement,
    offered_class: QosClass,
    time: f64,
}

impl SpectrumOffer {
    /// Panics if `measured` violates the measurement invariants.
    pub fn new(channel_id: ChannelId, measured: QosMeasurement, time: f64) -> Self {
        let offered_class = classify(&measured).expect("offer measurement out of domain");
        SpectrumOffer {
            channel_id,
            measured,
            offered_class,
            time,
        }
    }

    pub fn channel_id(&self) -> ChannelId {
        self.channel_id
    }

    pub fn measured(&self) -> &QosMeasurement {
        &self.measured
    }

    pub fn offered_class(&self) -> QosClass {
        self.offered_class
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Re-derives the offer with `f` applied to every measured field.
    pub fn map_measurement(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut m = self.measured;
        for p in QosParam::ALL {
            m.set(p, f(m.get(p)));
        }
        SpectrumOffer::new(self.channel_id, m, self.time)
    }
}

/// Senses `channel` at `time`: each field is the mean plus a uniform draw in
/// `±spread`, clamped to the field's domain. Always consumes four draws.
pub fn sense<R: Rng + ?Sized>(channel: &Channel, time: f64, rng: &mut R) -> SpectrumOffer {
    let mut measured = channel.qos_mean;
    for param in QosParam::ALL {
        let u: f64 = rng.random();
        let noise = channel.qos_spread.get(param) * (2.0 * u - 1.0);
        let mut v = (channel.qos_mean.get(param) + noise).max(0.0);
        if param == QosParam::ErrorRate {
            v = v.min(100.0);
        }
        measured.set(param, v);
    }
    SpectrumOffer::new(channel.id, measured, time)
}

/// The scenario's channels and primary users, indexed for lookup.
#[derive(Debug, Clone)]
pub struct Spectrum {
    channels: Vec<Channel>,
    pus: Vec<PrimaryUser>,
    owner: BTreeMap<ChannelId, PuId>,
}

impl Spectrum {
    /// Callers validate uniqueness and ownership first (see `config`).
    pub fn new(mut channels: Vec<Channel>, pus: Vec<PrimaryUser>) -> Self {
        channels.sort_by_key(|c| c.id);
        let band_owner: BTreeMap<BandId, PuId> = pus.iter().map(|p| (p.band_id, p.id)).collect();
        let owner = channels
            .iter()
            .filter_map(|c| band_owner.get(&c.band_id).map(|pu| (c.id, *pu)))
            .collect();
        Spectrum {
            channels,
            pus,
            owner,
        }
    }

    /// Channels in ascending id order.
    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn primary_users(&self) -> &[PrimaryUser] {
        &self.pus
    }

    pub fn channel(&self, id: ChannelId) -> Option<&Channel> {
        self.channels
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.channels[i])
    }

    pub fn owner_of(&self, channel: ChannelId) -> Option<PuId> {
        self.owner.get(&channel).copied()
    }

    pub fn primary_user(&self, id: PuId) -> Option<&PrimaryUser> {
        self.pus.iter().find(|p| p.id == id)
    }

    pub fn channels_in_band(&self, band: BandId) -> impl Iterator<Item = &Channel> {
        self.channels.iter().filter(move |c| c.band_id == band)
    }

    /// Handover targets: every channel outside `exclude`, best first. Without
    /// a knowledge base the order is ascending id.
    pub fn candidate_channels(
        &self,
        exclude: &BTreeSet<ChannelId>,
        knowledge: Option<&KnowledgeBase>,
    ) -> Vec<&Channel> {
        let candidates: Vec<&Channel> = self
            .channels
            .iter()
            .filter(|c| !exclude.contains(&c.id))
            .collect();
        match knowledge {
            Some(kb) => kb.rank_channels(&candidates),
            None => candidates,
        }
    }
}
