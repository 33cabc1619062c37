// SPDX-License-Identifier: Apache-2.0

//! Visitor counting and tracking for buildings with checkpoint readers at
//! room entrances.

pub mod engine;
pub mod evac;
pub mod graph;
pub mod model;
pub mod node;
pub mod service;
pub mod sim;
pub mod store;
pub mod wire;
