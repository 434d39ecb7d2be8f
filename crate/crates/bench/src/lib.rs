//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use stokes_qopr::experiments::Level;
use stokes_qopr::MeshFamily;

/// Refinement levels exercised by the benchmarks.
pub const LEVELS: [u32; 3] = [2, 3, 4];

/// A fully assembled crisscross level.
pub fn level(n: u32) -> Arc<Level> {
    Arc::new(Level::new(MeshFamily::Crisscross, n).expect("benchmark level builds"))
}
