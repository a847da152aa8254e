//! Layer-2 TDMA auto-configuration timing.
//!
//! Time is split into rounds of frames of `N` equal slots; node `i` owns
//! slot `i` of every frame and all other nodes listen. A Phase-1 round has
//! `m` frames, a Phase-2 round one frame.
//!
//! [`discover`] replays Phase-1 rounds for neighbor and common-channel
//! discovery: in global frame `g` each node broadcasts its identity and
//! channel set on the `g`-th entry of its sorted channel list (silent when
//! the list is shorter), and a neighbor hears it iff that channel is in its
//! own set.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;
pub type L2Channel = u32;

pub const TOPOLOGY_SCHEMA: &str = "cogmesh-topology/1";
pub const DISCOVERY_SCHEMA: &str = "cogmesh-discovery/1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum L2Error {
    #[error("layout needs at least one node and one channel")]
    EmptyLayout,
    #[error("node {node} is outside [0, {n_nodes})")]
    NodeOutOfRange { node: NodeId, n_nodes: u32 },
    #[error("node {0} is listed twice")]
    DuplicateNode(NodeId),
    #[error("node {0} has no channels")]
    NoChannels(NodeId),
    #[error("neighbor relation is asymmetric: {from} lists {to} but not the reverse")]
    Asymmetric { from: NodeId, to: NodeId },
    #[error("node {0} lists itself as a neighbor")]
    SelfNeighbor(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Phase1,
    Phase2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdmaLayout {
    pub n_nodes: u32,
    pub m_channels: u32,
    pub phase: Phase,
}

impl TdmaLayout {
    pub fn new(n_nodes: u32, m_channels: u32, phase: Phase) -> Result<Self, L2Error> {
        if n_nodes == 0 || m_channels == 0 {
            return Err(L2Error::EmptyLayout);
        }
        Ok(TdmaLayout {
            n_nodes,
            m_channels,
            phase,
        })
    }

    pub fn frame_length(&self) -> u64 {
        u64::from(self.n_nodes)
    }

    pub fn frames_per_round(&self) -> u64 {
        match self.phase {
            Phase::Phase1 => u64::from(self.m_channels),
            Phase::Phase2 => 1,
        }
    }
}

/// The node transmitting in `global_slot`.
pub fn slot_owner(layout: &TdmaLayout, global_slot: u64) -> NodeId {
    (global_slot % layout.frame_length()) as NodeId
}

/// Slots per round.
pub fn round_length(layout: &TdmaLayout) -> u64 {
    layout.frames_per_round() * layout.frame_length()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeChannels {
    pub node: NodeId,
    pub channels: BTreeSet<L2Channel>,
    pub neighbors: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transmission {
    pub slot: u64,
    pub node: NodeId,
    pub channel: L2Channel,
}

/// Node -> heard neighbor -> common channels.
pub type DiscoveryMap = BTreeMap<NodeId, BTreeMap<NodeId, BTreeSet<L2Channel>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoveryReport {
    pub map: DiscoveryMap,
    pub transmissions: Vec<Transmission>,
    pub slots_elapsed: u64,
}

impl DiscoveryReport {
    /// Number of slots carrying more than one transmission.
    pub fn collisions(&self) -> usize {
        let mut per_slot: BTreeMap<u64, usize> = BTreeMap::new();
        for t in &self.transmissions {
            *per_slot.entry(t.slot).or_default() += 1;
        }
        per_slot.values().filter(|&&n| n > 1).count()
    }
}

fn check_nodes(nodes: &[NodeChannels], layout: &TdmaLayout) -> Result<(), L2Error> {
    let mut seen = BTreeSet::new();
    for n in nodes {
        if n.node >= layout.n_nodes {
            return Err(L2Error::NodeOutOfRange {
                node: n.node,
                n_nodes: layout.n_nodes,
            });
        }
        if !seen.insert(n.node) {
            return Err(L2Error::DuplicateNode(n.node));
        }
        if n.channels.is_empty() {
            return Err(L2Error::NoChannels(n.node));
        }
        if n.neighbors.contains(&n.node) {
            return Err(L2Error::SelfNeighbor(n.node));
        }
    }
    let by_id: BTreeMap<NodeId, &NodeChannels> = nodes.iter().map(|n| (n.node, n)).collect();
    for n in nodes {
        for nb in &n.neighbors {
            let symmetric = by_id.get(nb).is_some_and(|o| o.neighbors.contains(&n.node));
            if !symmetric {
                return Err(L2Error::Asymmetric {
                    from: n.node,
                    to: *nb,
                });
            }
        }
    }
    Ok(())
}

/// One Phase-1 round of discovery.
pub fn discover(nodes: &[NodeChannels], layout: &TdmaLayout) -> Result<DiscoveryReport, L2Error> {
    discover_rounds(nodes, layout, 1)
}

/// `rounds` consecutive Phase-1 rounds; the layout's phase is ignored.
pub fn discover_rounds(
    nodes: &[NodeChannels],
    layout: &TdmaLayout,
    rounds: u32,
) -> Result<DiscoveryReport, L2Error> {
    check_nodes(nodes, layout)?;
    let phase1 = TdmaLayout {
        phase: Phase::Phase1,
        ..*layout
    };
    let by_id: BTreeMap<NodeId, &NodeChannels> = nodes.iter().map(|n| (n.node, n)).collect();
    let hop_lists: BTreeMap<NodeId, Vec<L2Channel>> = nodes
        .iter()
        .map(|n| (n.node, n.channels.iter().copied().collect()))
        .collect();

    let mut map: DiscoveryMap = nodes.iter().map(|n| (n.node, BTreeMap::new())).collect();
    let mut transmissions = Vec::new();
    let total = round_length(&phase1) * u64::from(rounds);
    for slot in 0..total {
        let frame = slot / phase1.frame_length();
        let owner = slot_owner(&phase1, slot);
        let Some(sender) = by_id.get(&owner) else {
            continue;
        };
        let Some(&channel) = usize::try_from(frame)
            .ok()
            .and_then(|f| hop_lists[&owner].get(f))
        else {
            continue;
        };
        transmissions.push(Transmission {
            slot,
            node: owner,
            channel,
        });
        for nb in &sender.neighbors {
            let receiver = by_id[nb];
            if receiver.channels.contains(&channel) {
                let common = receiver
                    .channels
                    .intersection(&sender.channels)
                    .copied()
                    .collect();
                map.get_mut(nb)
                    .expect("every node has an entry")
                    .insert(owner, common);
            }
        }
    }
    Ok(DiscoveryReport {
        map,
        transmissions,
        slots_elapsed: total,
    })
}

/// Input description for the `l2sim` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub schema: String,
    /// Defaults to one more than the largest node id.
    #[serde(default)]
    pub n_nodes: Option<u32>,
    /// Defaults to the largest channel-set size.
    #[serde(default)]
    pub m_channels: Option<u32>,
    #[serde(default = "one")]
    pub rounds: u32,
    pub nodes: Vec<NodeChannels>,
}

fn one() -> u32 {
    1
}

impl Topology {
    pub fn layout(&self) -> Result<TdmaLayout, L2Error> {
        let n = self
            .n_nodes
            .unwrap_or_else(|| self.nodes.iter().map(|n| n.node + 1).max().unwrap_or(0));
        let m = self.m_channels.unwrap_or_else(|| {
            self.nodes
                .iter()
                .map(|n| n.channels.len() as u32)
                .max()
                .unwrap_or(0)
        });
        TdmaLayout::new(n, m, Phase::Phase1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscoveryOutput {
    pub schema: &'static str,
    pub layout: TdmaLayout,
    pub rounds: u32,
    pub slots_elapsed: u64,
    pub transmissions: usize,
    pub collisions: usize,
    pub discovered: DiscoveryMap,
}

pub fn run_topology(topo: &Topology) -> Result<DiscoveryOutput, L2Error> {
    let layout = topo.layout()?;
    let report = discover_rounds(&topo.nodes, &layout, topo.rounds)?;
    Ok(DiscoveryOutput {
        schema: DISCOVERY_SCHEMA,
        layout,
        rounds: topo.rounds,
        slots_elapsed: report.slots_elapsed,
        transmissions: report.transmissions.len(),
        collisions: report.collisions(),
        discovered: report.map,
    })
}
