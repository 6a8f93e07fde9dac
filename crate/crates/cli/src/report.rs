//! Serializable run report.
//!
//! Field order is fixed by the struct definitions and all maps are
//! ordered, so identical analyses serialize to identical bytes; the
//! `timings_ms` block is the only nondeterministic part and consumers
//! comparing reports are expected to ignore it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::ConfigEcho;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub version: u32,
    pub config: ConfigEcho,
    pub timings_ms: BTreeMap<String, u64>,
    pub grid: GridInfo,
    pub cells: CellStats,
    /// SHA-256 of the serialized combinatorial map.
    pub map_hash: String,
    pub morse_sets: Vec<MorseSetInfo>,
    pub census: CensusInfo,
    /// Absent when the decomposition exceeds the reachability budget.
    pub morse_graph: Option<GraphInfo>,
    /// Absent unless verification was requested.
    pub verification: Option<VerificationInfo>,
    /// Absent unless index computation was requested; one entry per set.
    pub conley: Option<Vec<ConleyInfo>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GridInfo {
    pub dim: usize,
    pub divisions: Vec<u32>,
    pub n_cells: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CellStats {
    pub total: u64,
    pub failed: u64,
    pub exiting: u64,
    pub failed_fraction: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MorseSetInfo {
    pub index: usize,
    pub size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<Vec<u64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CensusInfo {
    pub n_sets: usize,
    pub n_singleton: usize,
    pub largest: usize,
    pub size_histogram: Vec<(usize, usize)>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GraphInfo {
    pub edges: Vec<(usize, usize)>,
    pub reaches: Vec<Vec<bool>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerificationInfo {
    pub mode: String,
    pub certified: bool,
    pub reasons: Vec<String>,
    pub per_set: Vec<SetCheckInfo>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SetCheckInfo {
    pub set: usize,
    pub stays_in_domain: bool,
    pub failed_cells: usize,
    pub disjoint_from: Vec<(usize, bool)>,
    /// Cells swept by the set's orbit tubes; present when cell lists are
    /// enabled so the renderer can shade the collar.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reach_cells: Option<Vec<u64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConleyInfo {
    pub set: usize,
    /// Collar width the pipeline settled on for this set's neighborhood.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collar: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neighborhood_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub touches_boundary: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p1_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p2_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub betti: Option<Vec<usize>>,
    /// Torsion coefficients per dimension, as decimal strings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torsion: Option<Vec<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}
