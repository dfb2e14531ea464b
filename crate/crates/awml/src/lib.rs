//! Active world-model learning in a two-dimensional playroom.
//!
//! A gaze-controlled agent sits at the center of a room whose four quadrants
//! each contain an external agent running a fixed behavior program. The agent
//! learns a predictive world model of what it sees, and a DQN controller is
//! trained online to maximize a curiosity reward computed from that model.
//! The flagship reward is gamma-progress: the loss of a slow exponential
//! moving average of the world model minus the loss of the live model, which
//! estimates learning progress without the memory cost of old snapshots.
//!
//! Crate layout:
//!
//! * [`numcore`]: f64 tensors, reverse-mode autodiff, LSTM/MLP layers, Adam,
//!   checkpointing. Everything downstream trains through this.
//! * [`env`]: the quadrant room, behavior programs, and the oracle encoder
//!   that masks out-of-view agents.
//! * [`worldmodel`]: the ensembled per-group LSTM+MLP predictor and its
//!   masked coordinate/visibility loss.
//! * [`curiosity`]: the six intrinsic reward signals under one interface.
//! * [`controller`]: n-step DQN over gaze actions with a ring replay buffer.
//! * [`harness`]: the interleaved collect/train loop, validation protocols,
//!   attention metrics, failure-mode classification, and the early-indicator
//!   analysis.
//! * [`config`] and [`cli`]: TOML run configuration and the `awml` binary's
//!   subcommands (`run`, `sweep`, `analyze`, `replay`).

pub mod cli;
pub mod config;
pub mod controller;
pub mod curiosity;
pub mod env;
pub mod harness;
pub mod numcore;
pub mod worldmodel;
