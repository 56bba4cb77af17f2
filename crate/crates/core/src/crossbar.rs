//! Bit-exact functional model of a graph engine's ReRAM crossbars.
//!
//! Each 16-bit cell value is split over four crossbars of 4-bit cells
//! (`raw = M3·2^12 + M2·2^8 + M1·2^4 + M0`). A matrix-vector multiply runs on
//! every slice, the per-bitline sums pass through the ADC, and the shift-and-
//! add unit recombines them as `D3≪12 + D2≪8 + D1≪4 + D0`.
//!
//! Every crossbar has `C + 1` wordlines: `C` data rows plus one bias row.
//! In MAC mode the bias row injects an additive term; in ADD mode it holds
//! the constant 1 so that the bias wordline input is added to the selected
//! data row.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed::{rescale_rne, saturate_u16, Fx16};
use crate::preprocess::{SubgraphTile, TileCell, TilingParams};

pub const SLICES: usize = 4;
pub const DIGIT_BITS: u32 = 4;
const DIGIT_MASK: u16 = 0xF;
const DIGIT_MAX: u64 = 15;

#[derive(Debug, Error, PartialEq)]
pub enum CrossbarError {
    #[error("tile shape {got:?} does not match the cluster's {expected:?}")]
    DimensionMismatch {
        got: (usize, usize),
        expected: (usize, usize),
    },
    #[error("cell ({row}, {col}) outside the {rows}x{cols} tile")]
    CellOutOfRange {
        row: u32,
        col: u32,
        rows: usize,
        cols: usize,
    },
    #[error("row {row} out of range for crossbar size {c}")]
    RowOutOfRange { row: usize, c: usize },
    #[error("expected {expected} values, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("cluster is programmed for {programmed:?}, operation needs {needed:?}")]
    ModeMismatch {
        programmed: Option<CrossbarMode>,
        needed: CrossbarMode,
    },
}

/// Radix-16 digits of `raw`, most significant first: `[M3, M2, M1, M0]`.
#[inline]
pub fn slice_digits(raw: u16) -> [u8; SLICES] {
    [
        (raw >> 12) as u8,
        ((raw >> 8) & DIGIT_MASK) as u8,
        ((raw >> 4) & DIGIT_MASK) as u8,
        (raw & DIGIT_MASK) as u8,
    ]
}

#[inline]
pub fn recompose(digits: [u8; SLICES]) -> u16 {
    digits
        .iter()
        .fold(0u16, |acc, &d| (acc << DIGIT_BITS) | d as u16)
}

/// Recombine per-slice bitline sums `[D3, D2, D1, D0]`.
#[inline]
pub fn shift_add(d: [u64; SLICES]) -> u64 {
    (d[0] << 12) + (d[1] << 8) + (d[2] << 4) + d[3]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossbarMode {
    /// Parallel multiply-accumulate over every cell.
    Mac,
    /// One-hot row selection plus bias-row addition.
    Add,
}

impl CrossbarMode {
    /// Value of a cell that holds no edge.
    pub fn empty_cell(self) -> Fx16 {
        match self {
            CrossbarMode::Mac => Fx16::ZERO,
            CrossbarMode::Add => Fx16::M,
        }
    }

    fn default_bias(self) -> Fx16 {
        match self {
            CrossbarMode::Mac => Fx16::ZERO,
            CrossbarMode::Add => Fx16(1),
        }
    }
}

/// One significance level of a crossbar: `(C+1) × C` 4-bit digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSlice {
    /// 0 for the least significant digit `M0`, 3 for `M3`.
    pub slice_index: u8,
    rows: usize,
    cols: usize,
    digits: Vec<u8>,
}

impl CellSlice {
    #[inline]
    pub fn digit(&self, row: usize, col: usize) -> u8 {
        self.digits[row * self.cols + col]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

/// A logical 16-bit crossbar realized as four 4-bit slices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Crossbar {
    c: usize,
    slices: [CellSlice; SLICES],
}

impl Crossbar {
    fn filled(c: usize, fill: Fx16, bias: Fx16) -> Self {
        let data = slice_digits(fill.raw());
        let bias = slice_digits(bias.raw());
        let slices = std::array::from_fn(|k| {
            // slice_digits is most-significant first.
            let (d, b) = (data[SLICES - 1 - k], bias[SLICES - 1 - k]);
            let mut digits = vec![d; (c + 1) * c];
            digits[c * c..].fill(b);
            CellSlice {
                slice_index: k as u8,
                rows: c + 1,
                cols: c,
                digits,
            }
        });
        Crossbar { c, slices }
    }

    fn set(&mut self, row: usize, col: usize, value: Fx16) {
        let digits = slice_digits(value.raw());
        for (k, slice) in self.slices.iter_mut().enumerate() {
            slice.digits[row * self.c + col] = digits[SLICES - 1 - k];
        }
    }

    /// Composite value of a cell; row `C` is the bias row.
    pub fn cell(&self, row: usize, col: usize) -> Fx16 {
        let digits = std::array::from_fn(|k| self.slices[SLICES - 1 - k].digit(row, col));
        Fx16(recompose(digits))
    }

    pub fn slice(&self, k: usize) -> &CellSlice {
        &self.slices[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdcResolution {
    Exact,
    Bits(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdcModel {
    pub resolution: AdcResolution,
    /// Conversion rate in giga-samples per second.
    pub rate_gsps: f64,
}

impl Default for AdcModel {
    fn default() -> Self {
        AdcModel {
            resolution: AdcResolution::Exact,
            rate_gsps: 1.0,
        }
    }
}

impl AdcModel {
    /// Digitize a bitline sum in `0..=full_scale`.
    #[inline]
    pub fn convert(&self, value: u64, full_scale: u64) -> u64 {
        match self.resolution {
            AdcResolution::Exact => value,
            AdcResolution::Bits(bits) => {
                let levels = (1u64 << bits.min(63)) - 1;
                let step = full_scale.div_ceil(levels).max(1);
                rescale_div_rne(value, step) * step
            }
        }
    }
}

fn rescale_div_rne(value: u64, step: u64) -> u64 {
    let (q, r) = (value / step, value % step);
    match (2 * r).cmp(&step) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal if q & 1 == 1 => q + 1,
        _ => q,
    }
}

/// Hardware event counters of one cluster.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossbarCounters {
    pub tiles_programmed: u64,
    pub cell_writes: u64,
    pub cell_reads: u64,
    pub adc_conversions: u64,
    pub mac_cycles: u64,
    pub row_activations: u64,
}

impl CrossbarCounters {
    pub fn merge(&mut self, o: &CrossbarCounters) {
        self.tiles_programmed += o.tiles_programmed;
        self.cell_writes += o.cell_writes;
        self.cell_reads += o.cell_reads;
        self.adc_conversions += o.adc_conversions;
        self.mac_cycles += o.mac_cycles;
        self.row_activations += o.row_activations;
    }
}

/// The `N·G` crossbars that together hold one `C × (C·N·G)` subgraph.
/// Crossbar `x` holds tile columns `[x·C, (x+1)·C)`.
///
/// Crossbars whose data rows and bias row hold only the mode's empty value
/// are not materialized; their outputs are known in closed form. Counters
/// still charge every cell.
#[derive(Debug, Clone)]
pub struct GeCluster {
    c: usize,
    crossbar_count: usize,
    adc: AdcModel,
    mode: Option<CrossbarMode>,
    crossbars: Vec<Option<Crossbar>>,
    touched: Vec<usize>,
    counters: CrossbarCounters,
}

impl GeCluster {
    pub fn new(params: &TilingParams, adc: AdcModel) -> Self {
        GeCluster {
            c: params.c,
            crossbar_count: params.crossbars(),
            adc,
            mode: None,
            crossbars: vec![None; params.crossbars()],
            touched: Vec::new(),
            counters: CrossbarCounters::default(),
        }
    }

    pub fn width(&self) -> usize {
        self.c * self.crossbar_count
    }

    pub fn counters(&self) -> &CrossbarCounters {
        &self.counters
    }

    pub fn take_counters(&mut self) -> CrossbarCounters {
        std::mem::take(&mut self.counters)
    }

    pub fn mode(&self) -> Option<CrossbarMode> {
        self.mode
    }

    fn cells_per_pass(&self) -> u64 {
        (self.crossbar_count * (self.c + 1) * self.c * SLICES) as u64
    }

    /// Program a tile given as tile-local cells. Cells not listed hold the
    /// mode's empty value. `bias_row`, when given, must have one value per
    /// tile column; otherwise the mode's default bias is used (0 for MAC,
    /// 1 for ADD).
    pub fn program_cells(
        &mut self,
        mode: CrossbarMode,
        cells: &[TileCell],
        bias_row: Option<&[Fx16]>,
    ) -> Result<(), CrossbarError> {
        let width = self.width();
        if let Some(bias) = bias_row {
            if bias.len() != width {
                return Err(CrossbarError::InputLength {
                    expected: width,
                    got: bias.len(),
                });
            }
        }
        for t in self.touched.drain(..) {
            self.crossbars[t] = None;
        }
        self.mode = Some(mode);
        let (c, fill, default_bias) = (self.c, mode.empty_cell(), mode.default_bias());
        for cell in cells {
            let (row, col) = (cell.row as usize, cell.col as usize);
            if row >= c || col >= width {
                return Err(CrossbarError::CellOutOfRange {
                    row: cell.row,
                    col: cell.col,
                    rows: c,
                    cols: width,
                });
            }
            let x = col / c;
            let xb = self.crossbars[x].get_or_insert_with(|| {
                self.touched.push(x);
                Crossbar::filled(c, fill, default_bias)
            });
            xb.set(row, col % c, cell.value);
        }
        if let Some(bias) = bias_row {
            for x in 0..self.crossbar_count {
                let xb = self.crossbars[x].get_or_insert_with(|| {
                    self.touched.push(x);
                    Crossbar::filled(c, fill, default_bias)
                });
                for j in 0..c {
                    xb.set(c, j, bias[x * c + j]);
                }
            }
        }
        self.counters.tiles_programmed += 1;
        self.counters.cell_writes += self.cells_per_pass();
        Ok(())
    }

    /// Program a dense subgraph tile.
    pub fn program_crossbars(
        &mut self,
        mode: CrossbarMode,
        tile: &SubgraphTile,
        bias_row: Option<&[Fx16]>,
    ) -> Result<(), CrossbarError> {
        let expected = (self.c, self.width());
        if tile.shape() != expected {
            return Err(CrossbarError::DimensionMismatch {
                got: tile.shape(),
                expected,
            });
        }
        self.program_cells(mode, tile.cells(), bias_row)
    }

    /// Composite value stored at a tile cell (row `C` is the bias row).
    pub fn cell(&self, row: usize, col: usize) -> Fx16 {
        let mode = self.mode.unwrap_or(CrossbarMode::Mac);
        match &self.crossbars[col / self.c] {
            Some(xb) => xb.cell(row, col % self.c),
            None if row == self.c => mode.default_bias(),
            None => mode.empty_cell(),
        }
    }

    pub fn crossbar(&self, index: usize) -> Option<&Crossbar> {
        self.crossbars[index].as_ref()
    }

    fn require(&self, needed: CrossbarMode) -> Result<(), CrossbarError> {
        if self.mode != Some(needed) {
            return Err(CrossbarError::ModeMismatch {
                programmed: self.mode,
                needed,
            });
        }
        Ok(())
    }

    /// Parallel MAC: `out[j] = rne((Σ_i cell[i][j]·input[i] + bias[j]·bias_input) / 2^16)`,
    /// all operands Q0.16, result saturated to 16 bits.
    pub fn mvm_mac(&mut self, input: &[Fx16], bias_input: Fx16) -> Result<Vec<Fx16>, CrossbarError> {
        let mut out = vec![Fx16::ZERO; self.width()];
        self.mvm_mac_sparse(input, bias_input, |col, v| out[col] = v)?;
        Ok(out)
    }

    /// As [`GeCluster::mvm_mac`], but only reports columns of materialized
    /// crossbars; every other column is zero.
    pub fn mvm_mac_sparse(
        &mut self,
        input: &[Fx16],
        bias_input: Fx16,
        mut emit: impl FnMut(usize, Fx16),
    ) -> Result<(), CrossbarError> {
        self.require(CrossbarMode::Mac)?;
        let c = self.c;
        if input.len() != c {
            return Err(CrossbarError::InputLength {
                expected: c,
                got: input.len(),
            });
        }
        let full_scale = (c as u64 + 1) * DIGIT_MAX * u16::MAX as u64;
        let mut sums = vec![[0u64; SLICES]; c];
        for &x in &self.touched {
            let xb = self.crossbars[x].as_ref().expect("touched crossbar");
            for (k, slice) in xb.slices.iter().enumerate() {
                for (j, s) in sums.iter_mut().enumerate() {
                    let mut d: u64 = (0..c)
                        .map(|i| slice.digit(i, j) as u64 * input[i].raw() as u64)
                        .sum();
                    d += slice.digit(c, j) as u64 * bias_input.raw() as u64;
                    // [D3, D2, D1, D0] ordering for shift_add.
                    s[SLICES - 1 - k] = self.adc.convert(d, full_scale);
                }
            }
            for (j, s) in sums.iter().enumerate() {
                emit(x * c + j, saturate_u16(rescale_rne(shift_add(*s), 16)));
            }
        }
        self.counters.mac_cycles += 1;
        self.counters.cell_reads += self.cells_per_pass();
        self.counters.adc_conversions += (self.crossbar_count * c * SLICES) as u64;
        Ok(())
    }

    /// Parallel add-op: select data row `row` with a one-hot wordline and
    /// drive `dist_u` on the bias wordline. `out[j] = w(row, j) ⊕ dist_u`
    /// with saturation; absent edges (`M`) stay `M`.
    pub fn row_add(&mut self, row: usize, dist_u: Fx16) -> Result<Vec<Fx16>, CrossbarError> {
        let mut out = vec![Fx16::M; self.width()];
        self.row_add_sparse(row, dist_u, |col, v| out[col] = v)?;
        Ok(out)
    }

    /// As [`GeCluster::row_add`], reporting only materialized crossbars;
    /// every other column is `M`.
    pub fn row_add_sparse(
        &mut self,
        row: usize,
        dist_u: Fx16,
        mut emit: impl FnMut(usize, Fx16),
    ) -> Result<(), CrossbarError> {
        self.require(CrossbarMode::Add)?;
        let c = self.c;
        if row >= c {
            return Err(CrossbarError::RowOutOfRange { row, c });
        }
        for &x in &self.touched {
            let xb = self.crossbars[x].as_ref().expect("touched crossbar");
            for j in 0..c {
                let w = xb.cell(row, j);
                let bias = xb.cell(c, j);
                let injected = if dist_u.is_m() {
                    Fx16::M
                } else {
                    saturate_u16(bias.raw() as u64 * dist_u.raw() as u64)
                };
                emit(x * c + j, w.sat_add(injected));
            }
        }
        self.counters.row_activations += 1;
        // The selected row and the bias row are read on every slice.
        self.counters.cell_reads += (self.crossbar_count * 2 * c * SLICES) as u64;
        self.counters.adc_conversions += (self.crossbar_count * c * SLICES) as u64;
        Ok(())
    }
}

/// Slice a dense tile into per-crossbar 4-bit cell arrays. The bias row
/// holds the mode's default bias.
pub fn slice_matrix(
    tile: &SubgraphTile,
    params: &TilingParams,
    mode: CrossbarMode,
) -> Result<Vec<Crossbar>, CrossbarError> {
    let (c, width) = (params.c, params.stripe());
    if tile.shape() != (c, width) {
        return Err(CrossbarError::DimensionMismatch {
            got: tile.shape(),
            expected: (c, width),
        });
    }
    Ok((0..params.crossbars())
        .map(|x| {
            let mut xb = Crossbar::filled(c, mode.empty_cell(), mode.default_bias());
            for i in 0..c {
                for j in 0..c {
                    let v = tile.get(i, x * c + j);
                    if mode == CrossbarMode::Mac || v != Fx16::ZERO {
                        xb.set(i, j, v);
                    }
                }
            }
            // Explicit edges in ADD mode may legitimately carry weight 0.
            if mode == CrossbarMode::Add {
                for cell in tile.cells() {
                    if (cell.col as usize) / c == x {
                        xb.set(cell.row as usize, cell.col as usize % c, cell.value);
                    }
                }
            }
            xb
        })
        .collect())
}
