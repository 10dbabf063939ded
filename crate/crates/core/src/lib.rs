//! Link scheduling for base-station coordinated device-to-device networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`topology`] generates transmitter/receiver geometry and long-term path loss.
//! * [`channel`] samples block fading, computes SINR-based rates and one-bit ACK feedback.
//! * [`ergodic`] evaluates fading-averaged rates in closed form (semi-infinite
//!   quadrature) and by Monte Carlo, and runs exhaustive action search.
//! * [`clustering`] partitions links by path loss, by one-bit INR/SNR feedback, or at random.
//! * [`schedulers`] holds every scheduling policy behind the [`schedulers::Scheduler`] trait.
//! * [`simulator`] runs the fading-block experiment loop and replication.
//! * [`config`] and [`trace`] are the file formats consumed and produced by the CLI.

pub mod action;
pub mod channel;
pub mod clustering;
pub mod config;
pub mod ergodic;
pub mod error;
pub mod quadrature;
pub mod rng;
pub mod schedulers;
pub mod simulator;
pub mod special;
pub mod topology;
pub mod trace;
pub mod validation;

pub use action::SchedulingAction;
pub use channel::{AckVector, FadingBlock, LinkBudget};
pub use clustering::{ClusterPartition, PairwiseDissimilarity};
pub use error::{Error, Result};
pub use topology::{MobilityConfig, NetworkTopology, PathGains};
