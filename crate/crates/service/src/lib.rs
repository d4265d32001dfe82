//! Command-line workflows and the live streaming session built on the
//! `thermotwin` library.
//!
//! * [`config`] – the TOML session file.
//! * [`workflows`] – identify, gap, tune, simulate and export as functions.
//! * [`protocol`] – wire messages shared by TCP and WebSocket clients.
//! * [`server`] – the real-time session that streams frames and takes commands.
//! * [`output`] – all-or-nothing output directories.

pub mod config;
pub mod output;
pub mod protocol;
pub mod server;
pub mod workflows;
