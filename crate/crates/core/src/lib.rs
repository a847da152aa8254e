//! Autonomic spectrum management for cognitive radio mesh nodes.
//!
//! A secondary user senses licensed channels, classifies what it finds
//! against video-conference QoS thresholds, negotiates with the channel
//! owner when the offer falls short, and hands over when a channel
//! degrades or is reclaimed. Around that core sit a knowledge base that
//! learns which owners cooperate, a continuous-time Markov model of channel
//! occupancy, a TDMA control-channel scheduler, and a deterministic
//! discrete-event engine that ties them together.

pub mod cli;
pub mod config;
pub mod engine;
pub mod events;
pub mod knowledge;
pub mod l2conf;
pub mod markov;
pub mod qos;
pub mod rng;
pub mod selfmgmt;
pub mod spectrum;

pub use config::{Scenario, ScenarioConfig, ValidationError};
pub use qos::{classify, QosClass, QosMeasurement};
