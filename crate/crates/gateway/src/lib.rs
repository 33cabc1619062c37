// SPDX-License-Identifier: Apache-2.0

//! Network front-ends for the tracking service: the HTTP API, the TCP frame
//! ingest port, and blocking clients used by the command-line tools.

pub mod client;
pub mod config;
pub mod http;
pub mod server;
pub mod tcp;
