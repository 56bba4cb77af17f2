//! Column-major streaming-apply execution.
//!
//! Subgraph tiles stream through a graph-engine cluster in global order.
//! All tiles of one subgraph column (same block, same destination range)
//! reduce into the output register `RegO` on the fly; when the column ends,
//! `RegO` is merged into the destination chunk of `dst`. After a full pass,
//! `dst` becomes the next iteration's `src`.
//!
//! Destination chunks are disjoint, so chunks can be spread over worker
//! threads. Within a chunk, columns run in ascending block row and tiles in
//! ascending source range, exactly as in the sequential walk, so the result
//! does not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crossbar::{AdcModel, CrossbarCounters, CrossbarError, CrossbarMode, GeCluster};
use crate::fixed::{saturate_u16, FxFormat, Fx16};
use crate::preprocess::{tile_spans, OrderedEdge, OrderedEdgeList, PreprocessError, TileCell, TilingParams};
use crate::program::{Program, ReduceRule};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Crossbar(#[from] CrossbarError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error("tiles of a column must be in ascending source order ({prev} then {next})")]
    TilesOutOfOrder { prev: usize, next: usize },
    #[error("vertex state has {got} entries, tiling needs {expected}")]
    StateMismatch { got: usize, expected: usize },
    #[error("failed to start worker pool: {0}")]
    Pool(String),
}

/// Reduction performed by the sALU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SaluMode {
    Add,
    Min,
}

impl SaluMode {
    pub fn crossbar_mode(self) -> CrossbarMode {
        match self {
            SaluMode::Add => CrossbarMode::Mac,
            SaluMode::Min => CrossbarMode::Add,
        }
    }

    pub fn format(self) -> FxFormat {
        match self {
            SaluMode::Add => FxFormat::Frac,
            SaluMode::Min => FxFormat::Int,
        }
    }
}

pub fn configure_salu(program: Program) -> SaluMode {
    match program.spec().reduce {
        ReduceRule::Sum => SaluMode::Add,
        ReduceRule::Min => SaluMode::Min,
    }
}

/// Per-vertex state. Its length is the padded vertex count; padding
/// vertices have out-degree 0, identity property and are never active.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexState {
    pub format: FxFormat,
    pub prop: Vec<Fx16>,
    pub active: Vec<bool>,
    pub outdegree: Vec<u32>,
    /// Number of real (non-padding) vertices.
    pub real_vertices: usize,
}

impl VertexState {
    pub fn new(format: FxFormat, padded: usize, real_vertices: usize, identity: Fx16) -> Self {
        VertexState {
            format,
            prop: vec![identity; padded],
            active: vec![false; padded],
            outdegree: vec![0; padded],
            real_vertices,
        }
    }

    pub fn len(&self) -> usize {
        self.prop.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prop.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Decoded properties of the real vertices.
    pub fn values(&self) -> Vec<f64> {
        self.prop[..self.real_vertices]
            .iter()
            .map(|p| p.decode(self.format))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineCounters {
    pub iterations: u64,
    pub tiles_processed: u64,
    pub tiles_skipped: u64,
    pub dst_chunk_writes: u64,
    pub reg_i_reads: u64,
    pub reg_i_writes: u64,
    pub reg_o_reads: u64,
    pub reg_o_writes: u64,
    pub salu_ops: u64,
    pub crossbar: CrossbarCounters,
}

impl EngineCounters {
    pub fn merge(&mut self, o: &EngineCounters) {
        self.iterations += o.iterations;
        self.tiles_processed += o.tiles_processed;
        self.tiles_skipped += o.tiles_skipped;
        self.dst_chunk_writes += o.dst_chunk_writes;
        self.reg_i_reads += o.reg_i_reads;
        self.reg_i_writes += o.reg_i_writes;
        self.reg_o_reads += o.reg_o_reads;
        self.reg_o_writes += o.reg_o_writes;
        self.salu_ops += o.salu_ops;
        self.crossbar.merge(&o.crossbar);
    }
}

/// `RegI` holds the source chunk of the current tile, `RegO` the running
/// reduction for the current column's destination chunk.
#[derive(Debug, Clone)]
pub struct RegFile {
    pub reg_i: Vec<Fx16>,
    /// Wide accumulators: sums in ADD mode, 16-bit values in MIN mode.
    pub reg_o: Vec<u32>,
    /// Columns lowered by a MIN reduction since the last seed.
    pub updated: Vec<bool>,
    pub reads_i: u64,
    pub writes_i: u64,
    pub reads_o: u64,
    pub writes_o: u64,
    pub salu_ops: u64,
}

impl RegFile {
    pub fn new(params: &TilingParams) -> Self {
        RegFile {
            reg_i: vec![Fx16::ZERO; params.c],
            reg_o: vec![0; params.stripe()],
            updated: vec![false; params.stripe()],
            reads_i: 0,
            writes_i: 0,
            reads_o: 0,
            writes_o: 0,
            salu_ops: 0,
        }
    }

    /// Reset `RegO` at the start of a column.
    pub fn seed(&mut self, values: impl IntoIterator<Item = u32>) {
        for (slot, v) in self.reg_o.iter_mut().zip(values) {
            *slot = v;
        }
        self.updated.fill(false);
        self.writes_o += self.reg_o.len() as u64;
    }

    pub fn load_input(&mut self, values: &[Fx16]) {
        self.reg_i.copy_from_slice(values);
        self.writes_i += values.len() as u64;
    }

    pub fn reg_o_fx(&self) -> Vec<Fx16> {
        self.reg_o.iter().map(|&v| saturate_u16(v as u64)).collect()
    }

    fn drain_into(&mut self, c: &mut EngineCounters) {
        c.reg_i_reads += std::mem::take(&mut self.reads_i);
        c.reg_i_writes += std::mem::take(&mut self.writes_i);
        c.reg_o_reads += std::mem::take(&mut self.reads_o);
        c.reg_o_writes += std::mem::take(&mut self.writes_o);
        c.salu_ops += std::mem::take(&mut self.salu_ops);
    }
}

/// One parallel add-op time slot: relax source row `row` with distance
/// `dist_u` and keep the per-column minimum in `RegO`.
pub fn add_op_step(
    ge: &mut GeCluster,
    regs: &mut RegFile,
    row: usize,
    dist_u: Fx16,
) -> Result<(), EngineError> {
    let (reg_o, updated) = (&mut regs.reg_o, &mut regs.updated);
    ge.row_add_sparse(row, dist_u, |col, v| {
        if (v.raw() as u32) < reg_o[col] {
            reg_o[col] = v.raw() as u32;
            updated[col] = true;
        }
    })?;
    // One comparator per bitline; columns of unmaterialized crossbars see M.
    regs.salu_ops += regs.reg_o.len() as u64;
    regs.reads_o += regs.reg_o.len() as u64;
    regs.writes_o += regs.reg_o.len() as u64;
    Ok(())
}

/// Program `cells` into the cluster and reduce the tile into `RegO`.
///
/// `RegI` must already hold the tile's source chunk. In MIN mode, only rows
/// flagged in `active_rows` are relaxed, one per time slot.
pub fn process_subgraph(
    ge: &mut GeCluster,
    cells: &[TileCell],
    mode: SaluMode,
    regs: &mut RegFile,
    active_rows: &[bool],
) -> Result<(), EngineError> {
    ge.program_cells(mode.crossbar_mode(), cells, None)?;
    match mode {
        SaluMode::Add => {
            let reg_o = &mut regs.reg_o;
            let mut touched = 0u64;
            ge.mvm_mac_sparse(&regs.reg_i, Fx16::ZERO, |col, v| {
                reg_o[col] += v.raw() as u32;
                touched += 1;
            })?;
            regs.reads_i += regs.reg_i.len() as u64;
            regs.salu_ops += regs.reg_o.len() as u64;
            regs.reads_o += regs.reg_o.len() as u64;
            regs.writes_o += regs.reg_o.len() as u64;
            debug_assert!(touched as usize <= regs.reg_o.len());
        }
        SaluMode::Min => {
            for (row, &active) in active_rows.iter().enumerate().take(regs.reg_i.len()) {
                if active {
                    let dist = regs.reg_i[row];
                    regs.reads_i += 1;
                    add_op_step(ge, regs, row, dist)?;
                }
            }
        }
    }
    Ok(())
}

/// A non-empty tile, program-mapped and ready to be written to crossbars.
#[derive(Debug, Clone, PartialEq)]
pub struct TileImage {
    pub si: u64,
    pub sub_row: usize,
    pub row_base: usize,
    pub cells: Vec<TileCell>,
}

/// All non-empty tiles of one subgraph column, in ascending source order.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnUnit {
    /// Rank of the column in the global walk (block rank × columns per
    /// block + column in block).
    pub rank: usize,
    pub block_row: usize,
    pub dst_chunk: usize,
    pub dst_base: usize,
    pub tiles: Vec<TileImage>,
}

impl ColumnUnit {
    pub fn new(
        rank: usize,
        block_row: usize,
        dst_chunk: usize,
        dst_base: usize,
        tiles: Vec<TileImage>,
    ) -> Result<Self, EngineError> {
        for w in tiles.windows(2) {
            if w[0].sub_row >= w[1].sub_row {
                return Err(EngineError::TilesOutOfOrder {
                    prev: w[0].sub_row,
                    next: w[1].sub_row,
                });
            }
        }
        Ok(ColumnUnit {
            rank,
            block_row,
            dst_chunk,
            dst_base,
            tiles,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    pub workers: usize,
    pub skip_empty: bool,
    pub adc: AdcModel,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            workers: 1,
            skip_empty: true,
            adc: AdcModel::default(),
        }
    }
}

/// How `dst` is initialized at the start of an iteration.
#[derive(Debug, Clone, PartialEq)]
pub enum DstInit {
    /// Start from a fixed vector (constant terms for sum programs).
    Fixed(Vec<Fx16>),
    /// Start from the current `src` properties (min programs).
    CopySrc,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub src: VertexState,
    /// After an iteration, holds the previous `src`.
    pub dst: VertexState,
    pub iteration: u64,
    pub counters: EngineCounters,
}

impl IterationState {
    pub fn new(src: VertexState) -> Self {
        IterationState {
            dst: src.clone(),
            src,
            iteration: 0,
            counters: EngineCounters::default(),
        }
    }
}

/// Per-worker hardware: one cluster and one register file.
pub struct Worker {
    pub ge: GeCluster,
    pub regs: RegFile,
    pub counters: EngineCounters,
}

impl Worker {
    pub fn new(params: &TilingParams, adc: AdcModel) -> Self {
        Worker {
            ge: GeCluster::new(params, adc),
            regs: RegFile::new(params),
            counters: EngineCounters::default(),
        }
    }

    fn finish(mut self) -> EngineCounters {
        self.regs.drain_into(&mut self.counters);
        self.counters.crossbar.merge(&self.ge.take_counters());
        self.counters
    }
}

/// Preprocessed, program-mapped workload plus the execution schedule.
pub struct Engine {
    params: TilingParams,
    mode: SaluMode,
    options: EngineOptions,
    units: Vec<ColumnUnit>,
    /// Column rank → index into `units`.
    unit_index: Vec<Option<usize>>,
    pool: Option<rayon::ThreadPool>,
}

impl Engine {
    /// Group the ordered edges into column units. `cell_value` maps each
    /// edge to the value programmed into its crossbar cell.
    pub fn new(
        ol: &OrderedEdgeList,
        mode: SaluMode,
        options: EngineOptions,
        mut cell_value: impl FnMut(&OrderedEdge) -> Fx16,
    ) -> Result<Self, EngineError> {
        let params = *ol.params();
        let cols_per_block = params.sub_cols_per_block();
        let mut units: Vec<ColumnUnit> = Vec::new();
        for span in tile_spans(ol)? {
            let loc = params.subgraph_location(span.si);
            let block_rank = loc.block_row + params.blocks_per_side() * loc.block_col;
            let rank = block_rank * cols_per_block + loc.sub_col;
            let row_base = params.row_base(&loc);
            let col_base = params.col_base(&loc);
            let cells = ol.entries()[span.range]
                .iter()
                .map(|e| TileCell {
                    row: (e.src as usize - row_base) as u32,
                    col: (e.dst as usize - col_base) as u32,
                    value: cell_value(e),
                })
                .collect();
            let tile = TileImage {
                si: span.si,
                sub_row: loc.sub_row,
                row_base,
                cells,
            };
            match units.last_mut() {
                Some(u) if u.rank == rank => u.tiles.push(tile),
                _ => units.push(ColumnUnit {
                    rank,
                    block_row: loc.block_row,
                    dst_chunk: params.dst_chunk(&loc),
                    dst_base: col_base,
                    tiles: vec![tile],
                }),
            }
        }
        let total_units = params.blocks_per_side().pow(2) * cols_per_block;
        let mut unit_index = vec![None; total_units];
        for (i, u) in units.iter().enumerate() {
            unit_index[u.rank] = Some(i);
        }
        let pool = if options.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(options.workers)
                    .build()
                    .map_err(|e| EngineError::Pool(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Engine {
            params,
            mode,
            options,
            units,
            unit_index,
            pool,
        })
    }

    pub fn params(&self) -> &TilingParams {
        &self.params
    }

    pub fn mode(&self) -> SaluMode {
        self.mode
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    pub fn units(&self) -> &[ColumnUnit] {
        &self.units
    }

    pub fn nonempty_tiles(&self) -> usize {
        self.units.iter().map(|u| u.tiles.len()).sum()
    }

    fn unit_rank(&self, block_row: usize, block_col: usize, sub_col: usize) -> usize {
        (block_row + self.params.blocks_per_side() * block_col) * self.params.sub_cols_per_block() + sub_col
    }

    /// Run one column: seed `RegO`, reduce every tile, merge into the
    /// destination chunk. With skipping off, every subgraph of the column is
    /// programmed and evaluated, empty or not.
    pub fn streaming_apply_column(
        &self,
        unit: &ColumnUnit,
        src: &VertexState,
        dst_prop: &mut [Fx16],
        dst_active: &mut [bool],
        worker: &mut Worker,
    ) -> Result<(), EngineError> {
        let c = self.params.c;
        let Worker { ge, regs, counters } = worker;
        match self.mode {
            SaluMode::Add => regs.seed(std::iter::repeat(0)),
            SaluMode::Min => regs.seed(dst_prop.iter().map(|v| v.raw() as u32)),
        }
        let empty = TileImage {
            si: 0,
            sub_row: 0,
            row_base: 0,
            cells: Vec::new(),
        };
        let rows = self.params.sub_rows_per_block();
        let mut next = unit.tiles.iter().peekable();
        let mut processed = 0u64;
        let mut active_rows = vec![true; c];
        for sub_row in 0..rows {
            let tile = match next.peek() {
                Some(t) if t.sub_row == sub_row => next.next().unwrap(),
                _ if self.options.skip_empty => continue,
                _ => &empty,
            };
            let row_base = unit.block_row * self.params.b + sub_row * c;
            if self.mode == SaluMode::Min {
                active_rows.copy_from_slice(&src.active[row_base..row_base + c]);
                if self.options.skip_empty && !active_rows.contains(&true) {
                    continue;
                }
            }
            regs.load_input(&src.prop[row_base..row_base + c]);
            process_subgraph(ge, &tile.cells, self.mode, regs, &active_rows)?;
            processed += 1;
        }
        counters.tiles_processed += processed;
        if processed == 0 {
            return Ok(());
        }
        match self.mode {
            SaluMode::Add => {
                for (d, &acc) in dst_prop.iter_mut().zip(&regs.reg_o) {
                    *d = saturate_u16(d.raw() as u64 + acc as u64);
                }
            }
            SaluMode::Min => {
                for ((d, a), (&acc, &up)) in dst_prop
                    .iter_mut()
                    .zip(dst_active.iter_mut())
                    .zip(regs.reg_o.iter().zip(&regs.updated))
                {
                    *d = Fx16(acc as u16);
                    *a |= up;
                }
            }
        }
        regs.reads_o += regs.reg_o.len() as u64;
        counters.dst_chunk_writes += 1;
        Ok(())
    }

    /// Run the columns of one destination chunk in ascending block row.
    fn run_chunk(
        &self,
        chunk: usize,
        src: &VertexState,
        dst_prop: &mut [Fx16],
        dst_active: &mut [bool],
    ) -> Result<EngineCounters, EngineError> {
        let cols_per_block = self.params.sub_cols_per_block();
        let (block_col, sub_col) = (chunk / cols_per_block, chunk % cols_per_block);
        let mut worker = Worker::new(&self.params, self.options.adc);
        for block_row in 0..self.params.blocks_per_side() {
            let placeholder;
            let rank = self.unit_rank(block_row, block_col, sub_col);
            let unit = match self.unit_index[rank] {
                Some(i) => &self.units[i],
                None if self.options.skip_empty => continue,
                None => {
                    placeholder = ColumnUnit {
                        rank,
                        block_row,
                        dst_chunk: chunk,
                        dst_base: chunk * self.params.stripe(),
                        tiles: Vec::new(),
                    };
                    &placeholder
                }
            };
            self.streaming_apply_column(unit, src, dst_prop, dst_active, &mut worker)?;
        }
        Ok(worker.finish())
    }

    /// Walk every column in global order on one worker.
    fn run_sequential(
        &self,
        src: &VertexState,
        dst: &mut VertexState,
    ) -> Result<EngineCounters, EngineError> {
        let stripe = self.params.stripe();
        let mut worker = Worker::new(&self.params, self.options.adc);
        let visit = |unit: &ColumnUnit, dst: &mut VertexState, worker: &mut Worker| {
            let range = unit.dst_base..unit.dst_base + stripe;
            self.streaming_apply_column(
                unit,
                src,
                &mut dst.prop[range.clone()],
                &mut dst.active[range],
                worker,
            )
        };
        if self.options.skip_empty {
            for unit in &self.units {
                visit(unit, dst, &mut worker)?;
            }
        } else {
            let cols_per_block = self.params.sub_cols_per_block();
            for (rank, slot) in self.unit_index.iter().enumerate() {
                match slot {
                    Some(i) => visit(&self.units[*i], dst, &mut worker)?,
                    None => {
                        let block_rank = rank / cols_per_block;
                        let block_row = block_rank % self.params.blocks_per_side();
                        let block_col = block_rank / self.params.blocks_per_side();
                        let dst_base = block_col * self.params.b + (rank % cols_per_block) * stripe;
                        let unit = ColumnUnit {
                            rank,
                            block_row,
                            dst_chunk: dst_base / stripe,
                            dst_base,
                            tiles: Vec::new(),
                        };
                        visit(&unit, dst, &mut worker)?;
                    }
                }
            }
        }
        Ok(worker.finish())
    }

    /// One synchronous iteration: fill `dst`, stream every column, swap.
    pub fn run_iteration(
        &self,
        mut state: IterationState,
        init: &DstInit,
    ) -> Result<IterationState, EngineError> {
        let v = self.params.v;
        if state.src.len() != v {
            return Err(EngineError::StateMismatch {
                got: state.src.len(),
                expected: v,
            });
        }
        let mut dst = state.dst;
        dst.format = state.src.format;
        dst.real_vertices = state.src.real_vertices;
        dst.outdegree.clone_from(&state.src.outdegree);
        match init {
            DstInit::Fixed(values) => {
                if values.len() != v {
                    return Err(EngineError::StateMismatch {
                        got: values.len(),
                        expected: v,
                    });
                }
                dst.prop.clone_from(values);
            }
            DstInit::CopySrc => dst.prop.clone_from(&state.src.prop),
        }
        dst.active.clear();
        dst.active.resize(v, false);

        let src = &state.src;
        let mut counters = match &self.pool {
            None => self.run_sequential(src, &mut dst)?,
            Some(pool) => {
                let stripe = self.params.stripe();
                let results: Vec<Result<EngineCounters, EngineError>> = pool.install(|| {
                    dst.prop
                        .par_chunks_mut(stripe)
                        .zip(dst.active.par_chunks_mut(stripe))
                        .enumerate()
                        .map(|(chunk, (p, a))| self.run_chunk(chunk, src, p, a))
                        .collect()
                });
                let mut total = EngineCounters::default();
                for r in results {
                    total.merge(&r?);
                }
                total
            }
        };
        counters.iterations = 1;
        counters.tiles_skipped = self.params.total_subgraphs() - counters.tiles_processed;
        state.counters.merge(&counters);
        state.iteration += 1;
        state.dst = std::mem::replace(&mut state.src, dst);
        Ok(state)
    }
}

/// Sum programs converge when no property moved by `epsilon` or more; min
/// programs when no vertex is active.
pub fn check_convergence(state: &IterationState, mode: SaluMode, epsilon: f64) -> bool {
    match mode {
        SaluMode::Add => {
            let fmt = state.src.format;
            state
                .src
                .prop
                .iter()
                .zip(&state.dst.prop)
                .all(|(a, b)| (a.decode(fmt) - b.decode(fmt)).abs() < epsilon)
        }
        SaluMode::Min => !state.src.active.contains(&true),
    }
}
