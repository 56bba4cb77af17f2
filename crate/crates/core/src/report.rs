//! Machine-readable run reports, digests and CSV tables.

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::algorithms::{IterationTrace, RunOutcome};
use crate::config::RunConfig;
use crate::costmodel::CostReport;
use crate::fixed::Fx16;
use crate::preprocess::TilingParams;
use crate::program::Program;

pub const REPORT_VERSION: u32 = 1;

/// Per-vertex values are written out only up to this many vertices; larger
/// runs carry just the digest.
pub const VALUES_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub vertices: usize,
    pub edges: usize,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub config: RunConfig,
    pub graph: GraphSummary,
    pub tiling: TilingParams,
    pub program: Program,
    pub iterations: u64,
    pub converged: bool,
    pub total_subgraphs: u64,
    pub nonempty_subgraphs: u64,
    /// Non-empty subgraphs over all subgraphs of the padded matrix.
    pub nonempty_fraction: f64,
    /// Edges over the cells of the non-empty subgraphs.
    pub cell_utilization: f64,
    pub clamped_cells: u64,
    pub clamped_inputs: u64,
    pub cost: CostReport,
    pub energy_per_edge_j: f64,
    /// Decoded properties; `null` for unreachable vertices of min programs.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub values: Option<Vec<Option<f64>>>,
    pub result_digest: String,
    pub report_hash: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub trace: Vec<IterationTrace>,
}

/// SHA-256 over the program name and the raw 16-bit property of every real
/// vertex.
pub fn result_digest(program: Program, raw: &[Fx16]) -> String {
    let mut h = Sha256::new();
    h.update(program.name().as_bytes());
    h.update((raw.len() as u64).to_le_bytes());
    for v in raw {
        h.update(v.raw().to_le_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Serialize)]
struct HashInput<'a> {
    config: &'a RunConfig,
    graph: &'a GraphSummary,
    tiling: &'a TilingParams,
    iterations: u64,
    converged: bool,
    result_digest: &'a str,
}

/// Hash of everything that determines the result. Worker count and
/// empty-tile skipping are execution choices that cannot change vertex
/// states, so they are normalized away; cost figures are left out for the
/// same reason (skipping changes them).
pub fn report_hash(
    config: &RunConfig,
    graph: &GraphSummary,
    tiling: &TilingParams,
    iterations: u64,
    converged: bool,
    result_digest: &str,
) -> String {
    let mut normalized = config.clone();
    normalized.workers = 1;
    normalized.skip_empty = true;
    let input = HashInput {
        config: &normalized,
        graph,
        tiling,
        iterations,
        converged,
        result_digest,
    };
    let bytes = serde_json::to_vec(&input).expect("report fields serialize");
    hex::encode(Sha256::digest(bytes))
}

impl RunReport {
    pub fn new(
        config: &RunConfig,
        graph: GraphSummary,
        outcome: &RunOutcome,
        cost: CostReport,
        keep_trace: bool,
    ) -> Self {
        let tiling = outcome.params;
        let total = tiling.total_subgraphs();
        let nonempty = outcome.nonempty_tiles as u64;
        let cells = nonempty as f64 * (tiling.c * tiling.stripe()) as f64;
        let digest = result_digest(outcome.program, outcome.raw());
        let hash = report_hash(
            config,
            &graph,
            &tiling,
            outcome.iterations,
            outcome.converged,
            &digest,
        );
        let fmt = outcome.state.format;
        let values = (graph.vertices <= VALUES_LIMIT).then(|| {
            outcome
                .raw()
                .iter()
                .map(|v| Some(v.decode(fmt)).filter(|x| x.is_finite()))
                .collect()
        });
        RunReport {
            version: REPORT_VERSION,
            config: config.clone(),
            graph,
            tiling,
            program: outcome.program,
            iterations: outcome.iterations,
            converged: outcome.converged,
            total_subgraphs: total,
            nonempty_subgraphs: nonempty,
            nonempty_fraction: nonempty as f64 / total as f64,
            cell_utilization: if cells > 0.0 { graph.edges as f64 / cells } else { 0.0 },
            clamped_cells: outcome.clamped_cells,
            clamped_inputs: outcome.clamped_inputs,
            energy_per_edge_j: if graph.edges > 0 {
                cost.total_energy_j / graph.edges as f64
            } else {
                0.0
            },
            cost,
            values,
            result_digest: digest,
            report_hash: hash,
            trace: if keep_trace { outcome.trace.clone() } else { Vec::new() },
        }
    }
}

pub const CSV_HEADER: [&str; 27] = [
    "program",
    "dataset",
    "vertices",
    "edges",
    "density",
    "C",
    "N",
    "G",
    "B",
    "workers",
    "skip_empty",
    "iterations",
    "converged",
    "nonempty_fraction",
    "cell_utilization",
    "tiles_processed",
    "tiles_skipped",
    "programming_time_s",
    "compute_time_s",
    "writeback_time_s",
    "total_time_s",
    "energy_programming_j",
    "energy_compute_j",
    "energy_adc_j",
    "energy_registers_j",
    "total_energy_j",
    "energy_per_edge_j",
];

fn csv_row(r: &RunReport) -> Vec<String> {
    let c = &r.cost;
    vec![
        r.program.to_string(),
        r.config.dataset.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        r.graph.vertices.to_string(),
        r.graph.edges.to_string(),
        r.graph.density.to_string(),
        r.tiling.c.to_string(),
        r.tiling.n.to_string(),
        r.tiling.g.to_string(),
        r.tiling.b.to_string(),
        r.config.workers.to_string(),
        r.config.skip_empty.to_string(),
        r.iterations.to_string(),
        r.converged.to_string(),
        r.nonempty_fraction.to_string(),
        r.cell_utilization.to_string(),
        c.counters.tiles_processed.to_string(),
        c.counters.tiles_skipped.to_string(),
        c.programming_time_s.to_string(),
        c.compute_time_s.to_string(),
        c.writeback_time_s.to_string(),
        c.total_time_s.to_string(),
        c.energy.programming_j.to_string(),
        c.energy.compute_j.to_string(),
        c.energy.adc_j.to_string(),
        c.energy.registers_j.to_string(),
        c.total_energy_j.to_string(),
        r.energy_per_edge_j.to_string(),
    ]
}

/// One row per report, sorted by graph density (stable for ties).
pub fn write_csv<W: Write>(reports: &[RunReport], w: W) -> csv::Result<()> {
    let mut sorted: Vec<&RunReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.graph.density.total_cmp(&b.graph.density));
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in sorted {
        out.write_record(csv_row(r))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(trace: &[IterationTrace], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["iteration", "max_delta", "active", "tiles_processed", "tiles_skipped"])?;
    for t in trace {
        out.write_record([
            t.iteration.to_string(),
            t.max_delta.to_string(),
            t.active.to_string(),
            t.tiles_processed.to_string(),
            t.tiles_skipped.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
