//! Channel occupancy shared by primary calls and secondary sessions.

use std::collections::BTreeMap;

use crate::spectrum::{BandId, ChannelId, PuId, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occupant {
    Pu(PuId),
    Su(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PuAdmission {
    Free(ChannelId),
    /// The channel was taken from the secondary session it carried.
    Preempt {
        channel: ChannelId,
        session: u64,
    },
    Blocked,
}

#[derive(Debug, Default, Clone)]
pub struct ChannelPool {
    occupied: BTreeMap<ChannelId, Occupant>,
}

impl ChannelPool {
    pub fn is_free(&self, ch: ChannelId) -> bool {
        !self.occupied.contains_key(&ch)
    }

    pub fn occupant(&self, ch: ChannelId) -> Option<Occupant> {
        self.occupied.get(&ch).copied()
    }

    pub fn occupy(&mut self, ch: ChannelId, who: Occupant) {
        let prev = self.occupied.insert(ch, who);
        debug_assert!(prev.is_none(), "channel {ch} double-booked");
    }

    pub fn release(&mut self, ch: ChannelId) -> Option<Occupant> {
        self.occupied.remove(&ch)
    }

    /// First free channel in id order among `spectrum`'s channels.
    pub fn first_free(&self, spectrum: &Spectrum) -> Option<ChannelId> {
        spectrum
            .channels()
            .iter()
            .map(|c| c.id)
            .find(|&id| self.is_free(id))
    }

    /// Places a primary call in `band`: a free channel if any, else the
    /// lowest channel held by a secondary session, else blocked.
    pub fn admit_pu(&mut self, spectrum: &Spectrum, band: BandId, pu: PuId) -> PuAdmission {
        let mut victim = None;
        for ch in spectrum.channels_in_band(band) {
            match self.occupied.get(&ch.id) {
                None => {
                    self.occupied.insert(ch.id, Occupant::Pu(pu));
                    return PuAdmission::Free(ch.id);
                }
                Some(Occupant::Su(session)) if victim.is_none() => victim = Some((ch.id, *session)),
                Some(_) => {}
            }
        }
        match victim {
            Some((channel, session)) => {
                self.occupied.insert(channel, Occupant::Pu(pu));
                PuAdmission::Preempt { channel, session }
            }
            None => PuAdmission::Blocked,
        }
    }
}
