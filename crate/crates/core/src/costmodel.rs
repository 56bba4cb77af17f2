//! Latency and energy estimates from engine event counters.
//!
//! Units: times in nanoseconds, energies in picojoules internally; the
//! report also carries seconds and joules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::SLICES;
use crate::engine::EngineCounters;
use crate::preprocess::TilingParams;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("cost parameter {name} must be positive and finite, got {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("unknown cost parameter {0:?}")]
    UnknownParam(String),
    #[error("counter arithmetic overflowed while computing {0}")]
    Overflow(&'static str),
    #[error("tile counters are inconsistent: {processed} processed + {skipped} skipped")]
    Inconsistent { processed: u64, skipped: u64 },
}

/// Device constants. Per-cell read/write figures are for one cell access.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub t_read_ns: f64,
    pub t_write_ns: f64,
    pub e_read_pj: f64,
    pub e_write_pj: f64,
    pub t_ge_cycle_ns: f64,
    pub adc_rate_gsps: f64,
    /// Not a device figure; a placeholder for a typical low-resolution ADC.
    pub e_adc_pj: f64,
    /// Energy of one register-file read or write (RegI, RegO).
    pub e_reg_pj: f64,
    /// Energy of one sALU operation.
    pub e_salu_pj: f64,
    /// Latency of writing one destination chunk back from RegO.
    pub t_writeback_ns: f64,
    /// ADCs shared by the crossbars of one graph engine; `None` gives one per
    /// eight crossbars.
    pub adcs_per_ge: Option<u32>,
    /// Overlap programming of the next tile with compute of the current one.
    pub overlap_programming: bool,
    /// Bit slices time-share a crossbar instead of living in separate ones.
    pub slices_serialized: bool,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            t_read_ns: 29.31,
            t_write_ns: 50.88,
            e_read_pj: 1.08,
            e_write_pj: 3910.0,
            t_ge_cycle_ns: 64.0,
            adc_rate_gsps: 1.0,
            e_adc_pj: 2.0,
            e_reg_pj: 0.1,
            e_salu_pj: 0.1,
            t_writeback_ns: 1.0,
            adcs_per_ge: None,
            overlap_programming: false,
            slices_serialized: false,
        }
    }
}

impl CostParams {
    pub const KEYS: [&'static str; 13] = [
        "t_read_ns",
        "t_write_ns",
        "e_read_pj",
        "e_write_pj",
        "t_ge_cycle_ns",
        "adc_rate_gsps",
        "e_adc_pj",
        "e_reg_pj",
        "e_salu_pj",
        "t_writeback_ns",
        "adcs_per_ge",
        "overlap_programming",
        "slices_serialized",
    ];

    pub fn validate(&self) -> Result<(), CostError> {
        let fields = [
            ("t_read_ns", self.t_read_ns),
            ("t_write_ns", self.t_write_ns),
            ("e_read_pj", self.e_read_pj),
            ("e_write_pj", self.e_write_pj),
            ("t_ge_cycle_ns", self.t_ge_cycle_ns),
            ("adc_rate_gsps", self.adc_rate_gsps),
            ("e_adc_pj", self.e_adc_pj),
            ("e_reg_pj", self.e_reg_pj),
            ("e_salu_pj", self.e_salu_pj),
            ("t_writeback_ns", self.t_writeback_ns),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CostError::InvalidParam { name, value });
            }
        }
        if self.adcs_per_ge == Some(0) {
            return Err(CostError::InvalidParam {
                name: "adcs_per_ge",
                value: 0.0,
            });
        }
        Ok(())
    }

    /// Set one field by name from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let num = || value.parse::<f64>().map_err(|e| format!("{key}: {e}"));
        let flag = || value.parse::<bool>().map_err(|e| format!("{key}: {e}"));
        match key {
            "t_read_ns" => self.t_read_ns = num()?,
            "t_write_ns" => self.t_write_ns = num()?,
            "e_read_pj" => self.e_read_pj = num()?,
            "e_write_pj" => self.e_write_pj = num()?,
            "t_ge_cycle_ns" => self.t_ge_cycle_ns = num()?,
            "adc_rate_gsps" => self.adc_rate_gsps = num()?,
            "e_adc_pj" => self.e_adc_pj = num()?,
            "e_reg_pj" => self.e_reg_pj = num()?,
            "e_salu_pj" => self.e_salu_pj = num()?,
            "t_writeback_ns" => self.t_writeback_ns = num()?,
            "adcs_per_ge" => {
                self.adcs_per_ge = match value {
                    "auto" => None,
                    v => Some(v.parse().map_err(|e| format!("{key}: {e}"))?),
                }
            }
            "overlap_programming" => self.overlap_programming = flag()?,
            "slices_serialized" => self.slices_serialized = flag()?,
            _ => return Err(CostError::UnknownParam(key.to_string()).to_string()),
        }
        Ok(())
    }

    pub fn adcs_for(&self, n: usize) -> u64 {
        match self.adcs_per_ge {
            Some(a) => a as u64,
            None => (n as u64).div_ceil(8).max(1),
        }
    }
}

/// Whether the ADCs of one graph engine keep up with its crossbars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcBudget {
    /// Bitline outputs that must be converted each GE cycle.
    pub conversions_per_cycle: u64,
    /// Conversions the engine's ADCs can perform in one GE cycle.
    pub capacity_per_cycle: f64,
    pub adcs: u64,
    pub feasible: bool,
    /// `capacity - demand` when feasible, else 0.
    pub headroom: f64,
    /// `demand - capacity` when infeasible, else 0.
    pub deficit: f64,
}

impl AdcBudget {
    /// GE cycle stretched so the ADCs can finish.
    pub fn effective_cycle_ns(&self, t_ge_cycle_ns: f64) -> f64 {
        if self.feasible {
            t_ge_cycle_ns
        } else {
            t_ge_cycle_ns * self.conversions_per_cycle as f64 / self.capacity_per_cycle
        }
    }
}

pub fn ge_cycle_budget(params: &CostParams, c: usize, n: usize) -> AdcBudget {
    let slices = if params.slices_serialized { SLICES as u64 } else { 1 };
    let demand = c as u64 * n as u64 * slices;
    let adcs = params.adcs_for(n);
    let capacity = adcs as f64 * params.adc_rate_gsps * params.t_ge_cycle_ns;
    let feasible = demand as f64 <= capacity;
    AdcBudget {
        conversions_per_cycle: demand,
        capacity_per_cycle: capacity,
        adcs,
        feasible,
        headroom: if feasible { capacity - demand as f64 } else { 0.0 },
        deficit: if feasible { 0.0 } else { demand as f64 - capacity },
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub programming_j: f64,
    pub compute_j: f64,
    pub adc_j: f64,
    pub registers_j: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.programming_j + self.compute_j + self.adc_j + self.registers_j
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub programming_time_s: f64,
    pub compute_time_s: f64,
    pub writeback_time_s: f64,
    pub total_time_s: f64,
    pub energy: EnergyBreakdown,
    pub total_energy_j: f64,
    pub ge_cycle_ns: f64,
    pub adc_budget: AdcBudget,
    pub counters: EngineCounters,
}

fn mul(a: u64, b: u64, what: &'static str) -> Result<u64, CostError> {
    a.checked_mul(b).ok_or(CostError::Overflow(what))
}

fn add(a: u64, b: u64, what: &'static str) -> Result<u64, CostError> {
    a.checked_add(b).ok_or(CostError::Overflow(what))
}

fn finite(x: f64, what: &'static str) -> Result<f64, CostError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CostError::Overflow(what))
    }
}

/// Price a run. Each programmed tile costs one write latency per crossbar
/// row (bias row included); each MAC evaluation or row activation costs one
/// GE cycle, stretched if the ADCs are oversubscribed.
pub fn tally_costs(
    counters: &EngineCounters,
    tiling: &TilingParams,
    cost: &CostParams,
) -> Result<CostReport, CostError> {
    cost.validate()?;
    let processed = counters.tiles_processed;
    let skipped = counters.tiles_skipped;
    let total_tiles = mul(counters.iterations, tiling.total_subgraphs(), "tile total")?;
    if add(processed, skipped, "tile total")? != total_tiles {
        return Err(CostError::Inconsistent { processed, skipped });
    }
    let xb = &counters.crossbar;
    let rows = tiling.c as u64 + 1;
    let write_slots = mul(xb.tiles_programmed, rows, "programming time")?;
    let cycles = add(xb.mac_cycles, xb.row_activations, "compute cycles")?;
    let budget = ge_cycle_budget(cost, tiling.c, tiling.n);
    let cycle_ns = budget.effective_cycle_ns(cost.t_ge_cycle_ns);

    let programming_ns = write_slots as f64 * cost.t_write_ns;
    let compute_ns = cycles as f64 * cycle_ns;
    let writeback_ns = counters.dst_chunk_writes as f64 * cost.t_writeback_ns;
    let busy_ns = if cost.overlap_programming {
        programming_ns.max(compute_ns)
    } else {
        programming_ns + compute_ns
    };
    let total_ns = finite(busy_ns + writeback_ns, "total time")?;

    let reg_accesses = [
        counters.reg_i_reads,
        counters.reg_i_writes,
        counters.reg_o_reads,
        counters.reg_o_writes,
    ]
    .into_iter()
    .try_fold(0u64, |acc, x| add(acc, x, "register accesses"))?;
    let pj = 1e-12;
    let energy = EnergyBreakdown {
        programming_j: xb.cell_writes as f64 * cost.e_write_pj * pj,
        compute_j: xb.cell_reads as f64 * cost.e_read_pj * pj,
        adc_j: xb.adc_conversions as f64 * cost.e_adc_pj * pj,
        registers_j: (reg_accesses as f64 * cost.e_reg_pj + counters.salu_ops as f64 * cost.e_salu_pj) * pj,
    };
    let total_energy = finite(energy.total(), "total energy")?;

    Ok(CostReport {
        programming_time_s: programming_ns * 1e-9,
        compute_time_s: compute_ns * 1e-9,
        writeback_time_s: writeback_ns * 1e-9,
        total_time_s: total_ns * 1e-9,
        energy,
        total_energy_j: total_energy,
        ge_cycle_ns: cycle_ns,
        adc_budget: budget,
        counters: *counters,
    })
}
