//! HTTP correction service, latency harness and configuration for the
//! `typofix` command-line tool.

pub mod bench;
pub mod config;
pub mod service;
